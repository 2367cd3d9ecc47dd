#pragma once

// Latent-shaping objectives attached to the beta-TCVAE backbone. All of them
// act on the posterior mean mu, never on a sampled z.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tractgrid/vae.hpp"

namespace tractgrid {

enum class Variant { none, aux, triplet, simclr };

std::string to_string(Variant v);
/// Throws InvalidInput for unknown names.
Variant parse_variant(const std::string& name);

struct LossWeights {
    double vae = 1.0;
    double cls = 10.0;
    double triplet = 10.0;
    double simclr = 1.0;

    /// Weight of the variant's own term; zero for Variant::none.
    double for_variant(Variant v) const;
};

struct AugmentConfig {
    double noise_sigma = 0.02;
    double mask_probability = 0.1;
};

struct ObjectiveConfig {
    Variant variant = Variant::aux;
    double beta = 5.0;
    LossWeights weights;
    double triplet_margin = 0.2;
    double temperature = 0.5;
    AugmentConfig augment;

    /// Throws InvalidInput when any value is outside its legal range.
    void validate() const;
};

// --- auxiliary classifier ---------------------------------------------------

/// Logit-space binary cross-entropy: max(x,0) - x*y + log(1 + exp(-|x|)).
double aux_bce(double logit, int label);
double aux_bce(std::span<const double> logits, std::span<const int> labels);

// --- batch-hard triplet -----------------------------------------------------

struct TripletResult {
    double loss = 0.0;
    std::size_t valid_anchors = 0;
    bool degenerate() const { return valid_anchors == 0; }
};

/// mu: [batch, dim]. Squared Euclidean distances; per anchor the farthest
/// same-class and nearest other-class sample (lowest index on ties).
TripletResult batch_hard_triplet(const Tensor& mu, std::span<const int> labels, double margin);
Tensor batch_hard_triplet_backward(const Tensor& mu, std::span<const int> labels, double margin);

// --- SimCLR -----------------------------------------------------------------

using OccupancyMask = std::array<bool, kImagePixels>;

/// Cells holding a tract.
OccupancyMask occupancy(const GridLayout& layout);
/// Nonzero pixels of an image, for callers without a layout.
OccupancyMask occupancy(const FaImage& image);

/// Gaussian noise on occupied pixels, then each occupied pixel is zeroed with
/// the mask probability; clipped to [0,1]. Background stays exactly 0.
FaImage augment(const FaImage& image, std::uint64_t seed, const AugmentConfig& config, const OccupancyMask& occupied);

/// NT-Xent over the 2N views of two aligned batches [N, dim].
double simclr_ntxent(const Tensor& view_a, const Tensor& view_b, double temperature);
std::pair<Tensor, Tensor> simclr_ntxent_backward(const Tensor& view_a, const Tensor& view_b, double temperature);

// --- combined objective -----------------------------------------------------

struct TrainBatch {
    Tensor images;            // [batch, 1, 9, 9]
    std::vector<int> labels;  // needed by aux and triplet
    OccupancyMask occupied{};
    Tensor eps;               // [batch, 32] standard normal draws
    std::uint64_t augment_seed = 0;
    std::size_t dataset_size = 1;
};

struct CombinedLoss {
    TcvaeLossBreakdown tcvae;
    double variant_loss = 0.0;
    double total = 0.0;
};

/// lambda_vae * L_TCVAE + lambda_variant * L_variant. For SimCLR the TCVAE
/// term uses the clean images and the two augmented views only feed the
/// contrastive term. With with_grad, gradients are accumulated into the model
/// (callers zero them first).
CombinedLoss combined_loss(VaeModel& model, const TrainBatch& batch, const ObjectiveConfig& config,
                           bool with_grad = false);

} // namespace tractgrid
