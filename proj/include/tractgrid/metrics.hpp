#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tractgrid/dataio.hpp"
#include "tractgrid/tensor.hpp"

namespace tractgrid {

struct EmbeddingTable {
    std::vector<std::string> subject_ids;
    Tensor mu;  // [n, dim]
    std::vector<int> labels;

    std::size_t size() const { return subject_ids.size(); }
    /// Throws InvalidInput on duplicate ids, misaligned rows or non-finite mu.
    void validate() const;
};

/// Leave-one-out k-NN accuracy in percent. Squared Euclidean distance,
/// neighbours ordered by (distance, row index); a tied vote goes to the
/// label of the nearest neighbour holding one of the tied labels.
double knn_separability(const EmbeddingTable& table, std::size_t k = 3);

/// Majority vote of the k nearest reference rows for every query row, with
/// the same ordering and tie rule as knn_separability.
std::vector<int> knn_predict(const Tensor& reference, std::span<const int> reference_labels, const Tensor& queries,
                             std::size_t k = 3);

/// Equal-frequency bin index per value: stable rank r maps to
/// floor(r * n_bins / n); equal values share the bin of their first rank.
std::vector<int> equal_frequency_bins(std::span<const double> values, std::size_t n_bins);

/// Plug-in estimates from joint counts, in nats.
double mutual_information(std::span<const int> a, std::span<const int> b);
double entropy(std::span<const int> a);

struct MigFactor {
    std::string name;
    bool skipped = false;  // constant factor
    double entropy = 0.0;
    double mi_top = 0.0;
    double mi_second = 0.0;
    std::size_t top_dim = 0;
    double gap = 0.0;      // (mi_top - mi_second) / entropy
};

struct MigResult {
    double mig = 0.0;
    std::vector<MigFactor> factors;
    std::vector<std::string> warnings;
};

/// Mean over non-constant factors of the normalized gap between the two
/// latent dims sharing the most information with the factor.
MigResult mig(const EmbeddingTable& table, const FactorTable& factors, std::size_t n_bins = 20);

struct AccuracyF1 {
    double accuracy = 0.0;  // percent
    double f1 = 0.0;        // percent, positive class = 1
};

AccuracyF1 accuracy_f1(std::span<const int> predictions, std::span<const int> labels);

} // namespace tractgrid
