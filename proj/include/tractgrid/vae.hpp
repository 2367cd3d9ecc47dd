#pragma once

// Convolutional VAE over 9x9 FA images with a spatial broadcast decoder and
// the beta-TCVAE objective.
//
// Encoder: conv3x3(1->16) relu, conv3x3(16->32) relu, dense(2592->128) relu,
//          then linear heads for mu and logvar (32 each).
// Decoder: z tiled over the 9x9 grid plus x/y coordinate channels (34 ch),
//          conv3x3(34->32) relu, conv3x3(32->16) relu, conv1x1(16->1), sigmoid.

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "tractgrid/grid_embed.hpp"
#include "tractgrid/layers.hpp"
#include "tractgrid/tensor.hpp"

namespace tractgrid {

inline constexpr std::size_t kLatentDim = 32;
inline constexpr std::size_t kImageSide = kGridSize;
inline constexpr std::size_t kImagePixels = kGridCells;
inline constexpr double kLogvarMin = -8.0;
inline constexpr double kLogvarMax = 8.0;
// mu/logvar heads start at a tenth of the Glorot limit. At full scale the
// shared offset of FA images gives every subject the same sizeable mu, and
// the KL terms remove it by silencing the dense ReLU layer for good.
inline constexpr double kHeadInitGain = 0.1;

/// 9x9 FA image, row-major, values in [0,1].
struct FaImage {
    std::array<double, kImagePixels> pixels{};

    double& at(std::size_t row, std::size_t col) { return pixels[row * kImageSide + col]; }
    double at(std::size_t row, std::size_t col) const { return pixels[row * kImageSide + col]; }

    bool operator==(const FaImage&) const = default;
};

/// Throws InvalidInput on non-finite or out-of-[0,1] pixels.
void validate(const FaImage& image);

/// [batch, 1, 9, 9]
Tensor stack_images(std::span<const FaImage> images);
FaImage image_at(const Tensor& batch, std::size_t index);

struct EncoderOutput {
    Tensor mu;          // [batch, 32]
    Tensor logvar;      // [batch, 32], clamped to [-8, 8]
    Tensor logvar_raw;  // pre-clamp head output
};

struct LatentSample {
    std::vector<double> mu;
    std::vector<double> logvar;
    std::vector<double> eps;
    std::vector<double> z;
};

/// Model parameters plus the per-layer caches of the last forward pass.
/// Not copy-safe while an optimizer holds pointers into it.
class VaeModel {
public:
    /// He-uniform init for layers feeding a ReLU, Glorot-uniform elsewhere
    /// (heads scaled by kHeadInitGain), all drawn from one mt19937_64 stream
    /// seeded with `seed`.
    explicit VaeModel(std::uint64_t seed = 0);

    EncoderOutput encode(const Tensor& images);
    /// Backpropagates head gradients through the encoder (logvar gradients are
    /// masked where the clamp was active).
    void encode_backward(const Tensor& dmu, const Tensor& dlogvar);

    /// z: [batch, 32] -> images [batch, 1, 9, 9]
    Tensor decode(const Tensor& z);
    /// Returns dL/dz.
    Tensor decode_backward(const Tensor& dimages);

    /// Auxiliary classifier logit from mu: [batch, 32] -> [batch, 1].
    Tensor aux_logits(const Tensor& mu);
    Tensor aux_backward(const Tensor& dlogits);

    std::vector<Parameter*> parameters();
    void zero_grad();

    /// Hash of the ReLU and logvar-clamp masks of the last forward pass. Equal
    /// values mean the model was evaluated inside the same linear region.
    std::uint64_t activation_pattern() const;
    /// While on, forward passes keep the current ReLU and clamp masks, which
    /// evaluates the linear piece of the last forward pass.
    void hold_activation_pattern(bool on);

    Conv2d enc_conv1{"encoder.conv1", 1, 16, 3};
    Conv2d enc_conv2{"encoder.conv2", 16, 32, 3};
    Dense enc_fc{"encoder.fc", 32 * kImagePixels, 128};
    Dense mu_head{"encoder.mu", 128, kLatentDim};
    Dense logvar_head{"encoder.logvar", 128, kLatentDim};
    Conv2d dec_conv1{"decoder.conv1", kLatentDim + 2, 32, 3};
    Conv2d dec_conv2{"decoder.conv2", 32, 16, 3};
    Conv2d dec_out{"decoder.out", 16, 1, 1};
    Dense aux_head{"aux.head", kLatentDim, 1};

private:
    Relu enc_act1_, enc_act2_, enc_act3_;
    Relu dec_act1_, dec_act2_;
    Sigmoid dec_sigmoid_;
    Tensor logvar_raw_;
    std::vector<char> clamp_held_;  // -1 low, 1 high, 0 free; empty unless held
    std::size_t decode_batch_ = 0;
};

/// Convenience single-image encoder; logvar is clamped.
std::pair<std::vector<double>, std::vector<double>> encode(VaeModel& model, const FaImage& image);

/// z = mu + exp(logvar / 2) * eps
std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> logvar,
                                   std::span<const double> eps);
Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& eps);

FaImage spatial_broadcast_decode(VaeModel& model, std::span<const double> z);

/// Mean over the 81 pixels of the squared difference.
double recon_loss(const FaImage& x, const FaImage& xhat);
/// Batch mean of per-image recon_loss; images are [batch, 1, 9, 9].
double recon_loss(const Tensor& x, const Tensor& xhat);

struct KlTerms {
    double mi = 0.0;
    double tc = 0.0;
    double dim_kl = 0.0;
    // mean_i[log q(z_i|x_i) - log p(z_i)]
    double single_sample_kl = 0.0;
    // mi - log N, tc - (D-1) log N and dim_kl + D log N, summed without the
    // constants so that their differences keep full precision.
    double mi_var = 0.0;
    double tc_var = 0.0;
    double dim_kl_var = 0.0;
    std::vector<double> log_qzx;
    std::vector<double> log_qz;
    std::vector<double> log_prod_qz;
    std::vector<double> log_pz;
};

/// Minibatch-weighted-sampling estimates of the KL decomposition.
/// mu, logvar, z: [M, D]; dataset_size is N.
KlTerms kl_decomposed(const Tensor& mu, const Tensor& logvar, const Tensor& z, std::size_t dataset_size);

struct KlGradients {
    Tensor dmu;
    Tensor dlogvar;
    Tensor dz;
};

/// Gradients of g_mi*mi + g_tc*tc + g_dim*dim_kl with z held as an
/// independent input (the caller chains dz through the reparameterization).
KlGradients kl_decomposed_backward(const Tensor& mu, const Tensor& logvar, const Tensor& z,
                                   std::size_t dataset_size, double g_mi, double g_tc, double g_dim);

struct TcvaeLossBreakdown {
    double recon = 0.0;
    double mi = 0.0;
    double tc = 0.0;
    double dim_kl = 0.0;
    double beta = 0.0;
    double total = 0.0;
    // Copies of mi, tc and dim_kl without their log N constants.
    double mi_var = 0.0;
    double tc_var = 0.0;
    double dim_kl_var = 0.0;
};

/// Forward state of the beta-TCVAE term for one batch, kept for backward.
struct TcvaePass {
    Tensor x, mu, logvar, eps, z, xhat;
    std::size_t dataset_size = 0;
    TcvaeLossBreakdown loss;
};

/// Decodes z = mu + sigma*eps and evaluates recon + mi + beta*tc + dim_kl.
TcvaePass tcvae_forward(VaeModel& model, const Tensor& x, const Tensor& mu, const Tensor& logvar, const Tensor& eps,
                        double beta, std::size_t dataset_size);

/// Backpropagates scale * total through the decoder (accumulating its
/// parameter gradients) and returns (dL/dmu, dL/dlogvar).
std::pair<Tensor, Tensor> tcvae_backward(VaeModel& model, const TcvaePass& pass, double scale);

/// Full beta-TCVAE loss on a batch. With with_grad, gradients are
/// accumulated into the model's parameters (call zero_grad first).
TcvaeLossBreakdown tcvae_loss(VaeModel& model, const Tensor& x, double beta, const Tensor& eps,
                              std::size_t dataset_size, bool with_grad = false);

struct Traversal {
    std::vector<FaImage> images;
    std::array<double, kImagePixels> variance{};  // per-pixel population variance over images
};

/// Decodes z_base with dimension `dim` swept over `values`.
Traversal latent_traversal(VaeModel& model, std::span<const double> z_base, std::size_t dim,
                           std::span<const double> values);

} // namespace tractgrid
