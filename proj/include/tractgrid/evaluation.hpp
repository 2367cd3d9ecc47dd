#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tractgrid/dataio.hpp"
#include "tractgrid/metrics.hpp"
#include "tractgrid/objectives.hpp"

namespace tractgrid {

struct SplitSpec {
    std::size_t n_splits = 5;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Split {
    std::vector<std::size_t> train;  // ascending
    std::vector<std::size_t> test;   // ascending
};

/// Per class, round(test_fraction * class size) samples go to the test set
/// (at least one when the class has two or more members, never all of them).
Split stratified_split(std::span<const int> labels, double test_fraction, std::uint64_t seed);
/// Repeated stratified holdout: split s is drawn with a seed derived from
/// (spec.seed, s).
Split split_for(std::span<const int> labels, const SplitSpec& spec, std::size_t index);

inline constexpr std::size_t kEncodeChunk = 64;

/// Posterior means [n, 32], encoded in fixed-size chunks so the result does
/// not depend on how callers group their requests.
Tensor encode_mu(VaeModel& model, std::span<const FaImage> images);
/// Mean recon_loss of decode(mu) against the inputs (no sampling).
double reconstruction_mse(VaeModel& model, std::span<const FaImage> images);

Tensor pixel_matrix(std::span<const FaImage> images);
EmbeddingTable embedding_table(const Dataset& dataset, Tensor mu);

struct EvalOptions {
    Variant variant = Variant::aux;
    std::size_t k = 3;
    std::size_t mig_bins = 20;
    bool compute_mig = true;
};

struct FoldMetrics {
    std::size_t fold = 0;
    std::string classifier;     // "aux_head" or "knn"
    double accuracy = 0.0;      // percent, from `classifier`
    double f1 = 0.0;
    double knn_accuracy = 0.0;  // test rows classified from train mu
    double knn_f1 = 0.0;
    double separability = 0.0;      // leave-one-out over the test subjects' mu
    double raw_separability = 0.0;  // same rule on their 81 raw pixels
    double recon_mse = 0.0;     // test subjects
    std::optional<double> mig;  // full embedding table
    bool label_as_factor = false;
    std::vector<std::string> warnings;
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single fold
};

struct MetricsReport {
    std::vector<FoldMetrics> folds;
    MetricSummary accuracy, f1, knn_accuracy, knn_f1, separability, raw_separability, recon_mse;
    std::optional<MetricSummary> mig;
    bool label_as_factor = false;
};

FoldMetrics evaluate_fold(VaeModel& model, const Dataset& dataset, std::span<const FaImage> images, const Split& split,
                          const EvalOptions& options);
MetricsReport summarize(std::vector<FoldMetrics> folds);

/// Evaluates one trained model on split `only_split` of the spec, or on every
/// split when it is empty.
MetricsReport evaluate_model(VaeModel& model, const Dataset& dataset, const SplitSpec& splits,
                             const EvalOptions& options, std::optional<std::size_t> only_split = std::nullopt);

/// Fixed key names: accuracy, f1, separability, recon_mse, mig, folds; each
/// summary also carries a *_std companion.
std::string to_json(const MetricsReport& report);

} // namespace tractgrid
