#include "tractgrid/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "tractgrid/errors.hpp"

namespace tractgrid {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

void check_finite(const Tensor& t, const char* stage, int layer) {
    if (!t.all_finite())
        throw NumericError(std::string(stage) + " layer " + std::to_string(layer) + " produced non-finite activations");
}

double log_sum_exp(std::span<const double> xs) {
    double m = xs[0];
    for (double x : xs) m = std::max(m, x);
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

double log_mean_exp(std::span<const double> xs) {
    double m = xs[0];
    for (double x : xs) m = std::max(m, x);
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s / static_cast<double>(xs.size()));
}

// Neumaier-compensated running sum. The decomposed KL adds many terms of
// similar size into totals near D * log(NM), where plain summation loses the
// low bits that finite-difference checks depend on.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        carry_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + carry_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

void require_latent_batch(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
    require_shape(t, {rows, cols}, what);
}

} // namespace

void validate(const FaImage& image) {
    for (std::size_t i = 0; i < kImagePixels; ++i) {
        const double v = image.pixels[i];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw InvalidInput("FA image pixel " + std::to_string(i) + " = " + std::to_string(v) + " outside [0,1]");
    }
}

Tensor stack_images(std::span<const FaImage> images) {
    Tensor t({images.size(), 1, kImageSide, kImageSide});
    for (std::size_t b = 0; b < images.size(); ++b)
        std::copy(images[b].pixels.begin(), images[b].pixels.end(), t.data() + b * kImagePixels);
    return t;
}

FaImage image_at(const Tensor& batch, std::size_t index) {
    if (batch.size() < (index + 1) * kImagePixels) throw ShapeError("image_at: index out of range");
    FaImage img;
    std::copy(batch.data() + index * kImagePixels, batch.data() + (index + 1) * kImagePixels, img.pixels.begin());
    return img;
}

VaeModel::VaeModel(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    enc_conv1.initialize(Init::he_uniform, rng);
    enc_conv2.initialize(Init::he_uniform, rng);
    enc_fc.initialize(Init::he_uniform, rng);
    mu_head.initialize(Init::glorot_uniform, rng, kHeadInitGain);
    logvar_head.initialize(Init::glorot_uniform, rng, kHeadInitGain);
    dec_conv1.initialize(Init::he_uniform, rng);
    dec_conv2.initialize(Init::he_uniform, rng);
    dec_out.initialize(Init::glorot_uniform, rng);
    aux_head.initialize(Init::glorot_uniform, rng);
}

std::vector<Parameter*> VaeModel::parameters() {
    std::vector<Parameter*> out;
    for (auto* layer : {&enc_conv1, &enc_conv2})
        for (auto* p : layer->parameters()) out.push_back(p);
    for (auto* layer : {&enc_fc, &mu_head, &logvar_head})
        for (auto* p : layer->parameters()) out.push_back(p);
    for (auto* layer : {&dec_conv1, &dec_conv2, &dec_out})
        for (auto* p : layer->parameters()) out.push_back(p);
    for (auto* p : aux_head.parameters()) out.push_back(p);
    return out;
}

void VaeModel::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

std::uint64_t VaeModel::activation_pattern() const {
    // FNV-1a over the masks in layer order.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](unsigned char byte) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    };
    for (const Relu* r : {&enc_act1_, &enc_act2_, &enc_act3_, &dec_act1_, &dec_act2_}) {
        for (char a : r->active()) mix(static_cast<unsigned char>(a));
        mix(0xff);
    }
    for (double v : logvar_raw_.values())
        mix(v < kLogvarMin ? 1 : (v > kLogvarMax ? 2 : 0));
    return h;
}

void VaeModel::hold_activation_pattern(bool on) {
    for (Relu* r : {&enc_act1_, &enc_act2_, &enc_act3_, &dec_act1_, &dec_act2_}) r->hold(on);
    clamp_held_.clear();
    if (on)
        for (double v : logvar_raw_.values())
            clamp_held_.push_back(v < kLogvarMin ? -1 : (v > kLogvarMax ? 1 : 0));
}

EncoderOutput VaeModel::encode(const Tensor& images) {
    if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != kImageSide || images.dim(3) != kImageSide)
        throw ShapeError("encode: expected [batch, 1, 9, 9], got " + shape_string(images.shape()));
    const std::size_t batch = images.dim(0);

    Tensor h = enc_act1_.forward(enc_conv1.forward(images));
    check_finite(h, "encoder", 0);
    h = enc_act2_.forward(enc_conv2.forward(h));
    check_finite(h, "encoder", 1);
    h = enc_act3_.forward(enc_fc.forward(h.reshaped({batch, 32 * kImagePixels})));
    check_finite(h, "encoder", 2);

    EncoderOutput out;
    out.mu = mu_head.forward(h);
    check_finite(out.mu, "encoder", 3);
    out.logvar_raw = logvar_head.forward(h);
    check_finite(out.logvar_raw, "encoder", 4);
    out.logvar = out.logvar_raw;
    if (!clamp_held_.empty()) {
        if (clamp_held_.size() != out.logvar.size()) throw ShapeError("encode: held clamp mask size mismatch");
        for (std::size_t i = 0; i < out.logvar.size(); ++i)
            if (clamp_held_[i] != 0) out.logvar[i] = clamp_held_[i] < 0 ? kLogvarMin : kLogvarMax;
        return out;
    }
    for (auto& v : out.logvar.values()) v = std::clamp(v, kLogvarMin, kLogvarMax);
    logvar_raw_ = out.logvar_raw;
    return out;
}

void VaeModel::encode_backward(const Tensor& dmu, const Tensor& dlogvar) {
    Tensor draw = dlogvar;
    if (draw.size() != logvar_raw_.size()) throw ShapeError("encode_backward: logvar gradient size mismatch");
    for (std::size_t i = 0; i < draw.size(); ++i)
        if (logvar_raw_[i] < kLogvarMin || logvar_raw_[i] > kLogvarMax) draw[i] = 0.0;

    Tensor dh = mu_head.backward(dmu);
    const Tensor dh_lv = logvar_head.backward(draw);
    for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dh_lv[i];

    const std::size_t batch = dh.dim(0);
    dh = enc_fc.backward(enc_act3_.backward(dh));
    dh = enc_conv2.backward(enc_act2_.backward(dh.reshaped({batch, 32, kImageSide, kImageSide})));
    enc_conv1.backward(enc_act1_.backward(dh));
}

Tensor VaeModel::decode(const Tensor& z) {
    if (z.rank() != 2 || z.dim(1) != kLatentDim)
        throw ShapeError("decode: expected [batch, 32], got " + shape_string(z.shape()));
    const std::size_t batch = z.dim(0);
    decode_batch_ = batch;
    constexpr std::size_t channels = kLatentDim + 2;

    Tensor grid({batch, channels, kImageSide, kImageSide});
    for (std::size_t b = 0; b < batch; ++b) {
        double* base = grid.data() + b * channels * kImagePixels;
        for (std::size_t c = 0; c < kLatentDim; ++c)
            std::fill(base + c * kImagePixels, base + (c + 1) * kImagePixels, z.at(b, c));
        double* xs = base + kLatentDim * kImagePixels;
        double* ys = xs + kImagePixels;
        for (std::size_t r = 0; r < kImageSide; ++r)
            for (std::size_t c = 0; c < kImageSide; ++c) {
                xs[r * kImageSide + c] = -1.0 + 2.0 * static_cast<double>(c) / static_cast<double>(kImageSide - 1);
                ys[r * kImageSide + c] = -1.0 + 2.0 * static_cast<double>(r) / static_cast<double>(kImageSide - 1);
            }
    }

    Tensor h = dec_act1_.forward(dec_conv1.forward(grid));
    check_finite(h, "decoder", 0);
    h = dec_act2_.forward(dec_conv2.forward(h));
    check_finite(h, "decoder", 1);
    h = dec_sigmoid_.forward(dec_out.forward(h));
    check_finite(h, "decoder", 2);
    return h;
}

Tensor VaeModel::decode_backward(const Tensor& dimages) {
    Tensor g = dec_out.backward(dec_sigmoid_.backward(dimages));
    g = dec_conv1.backward(dec_act1_.backward(dec_conv2.backward(dec_act2_.backward(g))));

    constexpr std::size_t channels = kLatentDim + 2;
    Tensor dz({decode_batch_, kLatentDim});
    for (std::size_t b = 0; b < decode_batch_; ++b)
        for (std::size_t c = 0; c < kLatentDim; ++c) {
            const double* src = g.data() + (b * channels + c) * kImagePixels;
            double s = 0.0;
            for (std::size_t p = 0; p < kImagePixels; ++p) s += src[p];
            dz.at(b, c) = s;
        }
    return dz;
}

Tensor VaeModel::aux_logits(const Tensor& mu) { return aux_head.forward(mu); }

Tensor VaeModel::aux_backward(const Tensor& dlogits) { return aux_head.backward(dlogits); }

std::pair<std::vector<double>, std::vector<double>> encode(VaeModel& model, const FaImage& image) {
    validate(image);
    const auto out = model.encode(stack_images(std::span<const FaImage>(&image, 1)));
    return {{out.mu.storage().begin(), out.mu.storage().end()}, {out.logvar.storage().begin(), out.logvar.storage().end()}};
}

std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> logvar,
                                   std::span<const double> eps) {
    if (mu.size() != logvar.size() || mu.size() != eps.size()) throw ShapeError("reparameterize: length mismatch");
    std::vector<double> z(mu.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + std::exp(0.5 * logvar[i]) * eps[i];
    return z;
}

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& eps) {
    if (mu.shape() != logvar.shape() || mu.shape() != eps.shape()) throw ShapeError("reparameterize: shape mismatch");
    Tensor z = mu;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + std::exp(0.5 * logvar[i]) * eps[i];
    return z;
}

FaImage spatial_broadcast_decode(VaeModel& model, std::span<const double> z) {
    if (z.size() != kLatentDim) throw ShapeError("spatial_broadcast_decode: z must have 32 entries");
    Tensor zt({1, kLatentDim}, std::vector<double>(z.begin(), z.end()));
    if (!zt.all_finite()) throw NumericError("spatial_broadcast_decode: non-finite latent");
    return image_at(model.decode(zt), 0);
}

double recon_loss(const FaImage& x, const FaImage& xhat) {
    double s = 0.0;
    for (std::size_t i = 0; i < kImagePixels; ++i) {
        const double d = x.pixels[i] - xhat.pixels[i];
        s += d * d;
    }
    return s / static_cast<double>(kImagePixels);
}

double recon_loss(const Tensor& x, const Tensor& xhat) {
    if (x.shape() != xhat.shape()) throw ShapeError("recon_loss: shape mismatch");
    const std::size_t batch = x.size() / kImagePixels;
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        double s = 0.0;
        for (std::size_t p = 0; p < kImagePixels; ++p) {
            const double d = x[b * kImagePixels + p] - xhat[b * kImagePixels + p];
            s += d * d;
        }
        total += s / static_cast<double>(kImagePixels);
    }
    return total / static_cast<double>(batch);
}

namespace {

// a[(i*M + j)*D + d] = log q(z_id | x_j)
std::vector<double> pairwise_log_density(const Tensor& mu, const Tensor& logvar, const Tensor& z) {
    const std::size_t m = mu.dim(0), d = mu.dim(1);
    std::vector<double> a(m * m * d);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = z.at(i, k) - mu.at(j, k);
                const double lv = logvar.at(j, k);
                a[(i * m + j) * d + k] = -0.5 * (kLog2Pi + lv + diff * diff * std::exp(-lv));
            }
    return a;
}

void check_kl_inputs(const Tensor& mu, const Tensor& logvar, const Tensor& z, std::size_t dataset_size) {
    if (mu.rank() != 2 || mu.dim(0) < 1) throw InvalidInput("kl_decomposed: batch must hold at least one sample");
    require_latent_batch(logvar, mu.dim(0), mu.dim(1), "kl_decomposed logvar");
    require_latent_batch(z, mu.dim(0), mu.dim(1), "kl_decomposed z");
    if (dataset_size < 1) throw InvalidInput("kl_decomposed: dataset size must be positive");
}

} // namespace

KlTerms kl_decomposed(const Tensor& mu, const Tensor& logvar, const Tensor& z, std::size_t dataset_size) {
    check_kl_inputs(mu, logvar, z, dataset_size);
    const std::size_t m = mu.dim(0), d = mu.dim(1);
    const auto a = pairwise_log_density(mu, logvar, z);
    const double log_n = std::log(static_cast<double>(dataset_size));

    KlTerms out;
    out.log_qzx.resize(m);
    out.log_qz.resize(m);
    out.log_prod_qz.resize(m);
    out.log_pz.resize(m);
    // Per sample i the densities are taken relative to the own-component term
    // r_k = a[i][i][k]; the shared sum of r_k then cancels exactly between
    // log q(z|x), log q(z) and log prod q(z_d), and every addend stays small.
    const double inv_m = 1.0 / static_cast<double>(m);
    std::vector<double> joint(m), column(m);
    CompensatedSum mi, tc, dim_kl, single;
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = &a[i * m * d];
        const double* self = &ai[i * d];
        for (std::size_t j = 0; j < m; ++j) {
            CompensatedSum s;
            for (std::size_t k = 0; k < d; ++k) s.add(ai[j * d + k] - self[k]);
            joint[j] = s.value();
        }
        const double lse_joint = log_mean_exp(joint);  // log q(z) - log q(z|x) + log N

        CompensatedSum lse_dims;  // log prod q(z_d) - log q(z|x) + D log N
        CompensatedSum excess;    // log q(z|x) - log p(z)
        CompensatedSum qzx, prior;
        for (std::size_t k = 0; k < d; ++k) {
            for (std::size_t j = 0; j < m; ++j) column[j] = ai[j * d + k] - self[k];
            lse_dims.add(log_mean_exp(column));
            const double zk = z.at(i, k);
            const double prior_k = -0.5 * (kLog2Pi + zk * zk);
            excess.add(self[k] - prior_k);
            qzx.add(self[k]);
            prior.add(prior_k);
        }
        const double sum_dims = lse_dims.value();
        const double ex = excess.value();

        out.log_qzx[i] = qzx.value();
        out.log_qz[i] = out.log_qzx[i] + lse_joint - log_n;
        out.log_prod_qz[i] = out.log_qzx[i] + sum_dims - static_cast<double>(d) * log_n;
        out.log_pz[i] = prior.value();

        mi.add(-lse_joint);
        tc.add(lse_joint - sum_dims);
        dim_kl.add(ex + sum_dims);
        single.add(ex);
    }
    out.mi_var = mi.value() * inv_m;
    out.tc_var = tc.value() * inv_m;
    out.dim_kl_var = dim_kl.value() * inv_m;
    out.mi = out.mi_var + log_n;
    out.tc = out.tc_var + static_cast<double>(d - 1) * log_n;
    out.dim_kl = out.dim_kl_var - static_cast<double>(d) * log_n;
    out.single_sample_kl = single.value() * inv_m;
    return out;
}

KlGradients kl_decomposed_backward(const Tensor& mu, const Tensor& logvar, const Tensor& z,
                                   std::size_t dataset_size, double g_mi, double g_tc, double g_dim) {
    check_kl_inputs(mu, logvar, z, dataset_size);
    const std::size_t m = mu.dim(0), d = mu.dim(1);
    const auto a = pairwise_log_density(mu, logvar, z);
    const double inv_m = 1.0 / static_cast<double>(m);

    // Coefficients on log q(z|x), log q(z), log prod q(z_d), log p(z).
    const double c_qzx = g_mi * inv_m;
    const double c_qz = (g_tc - g_mi) * inv_m;
    const double c_prod = (g_dim - g_tc) * inv_m;
    const double c_pz = -g_dim * inv_m;

    KlGradients g{Tensor::zeros_like(mu), Tensor::zeros_like(logvar), Tensor::zeros_like(z)};
    std::vector<double> joint(m), w(m), column(m);
    std::vector<double> r(m * d);  // r[j*d + k]: softmax over j of a_ijk
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += a[(i * m + j) * d + k];
            joint[j] = s;
        }
        const double lse = log_sum_exp(joint);
        for (std::size_t j = 0; j < m; ++j) w[j] = std::exp(joint[j] - lse);
        for (std::size_t k = 0; k < d; ++k) {
            for (std::size_t j = 0; j < m; ++j) column[j] = a[(i * m + j) * d + k];
            const double lse_k = log_sum_exp(column);
            for (std::size_t j = 0; j < m; ++j) r[j * d + k] = std::exp(column[j] - lse_k);
        }

        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t k = 0; k < d; ++k) {
                const double coeff = (i == j ? c_qzx : 0.0) + c_qz * w[j] + c_prod * r[j * d + k];
                if (coeff == 0.0) continue;
                const double inv_var = std::exp(-logvar.at(j, k));
                const double diff = z.at(i, k) - mu.at(j, k);
                const double u = diff * inv_var;
                g.dz.at(i, k) -= coeff * u;
                g.dmu.at(j, k) += coeff * u;
                g.dlogvar.at(j, k) += coeff * (-0.5 + 0.5 * diff * u);
            }
        }
        for (std::size_t k = 0; k < d; ++k) g.dz.at(i, k) += c_pz * (-z.at(i, k));
    }
    return g;
}

TcvaePass tcvae_forward(VaeModel& model, const Tensor& x, const Tensor& mu, const Tensor& logvar, const Tensor& eps,
                        double beta, std::size_t dataset_size) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidInput("tcvae: beta must be finite and >= 0");
    if (x.rank() != 4 || x.dim(0) == 0) throw InvalidInput("tcvae: empty batch");
    require_latent_batch(mu, x.dim(0), kLatentDim, "tcvae mu");
    require_latent_batch(eps, x.dim(0), kLatentDim, "tcvae eps");

    TcvaePass pass;
    pass.x = x;
    pass.mu = mu;
    pass.logvar = logvar;
    pass.eps = eps;
    pass.dataset_size = dataset_size;
    pass.z = reparameterize(mu, logvar, eps);
    pass.xhat = model.decode(pass.z);

    const auto kl = kl_decomposed(mu, logvar, pass.z, dataset_size);
    auto& l = pass.loss;
    l.recon = recon_loss(x, pass.xhat);
    l.mi = kl.mi;
    l.tc = kl.tc;
    l.dim_kl = kl.dim_kl;
    l.mi_var = kl.mi_var;
    l.tc_var = kl.tc_var;
    l.dim_kl_var = kl.dim_kl_var;
    l.beta = beta;
    l.total = l.recon + l.mi + beta * l.tc + l.dim_kl;
    if (!std::isfinite(l.total)) throw NumericError("tcvae: non-finite loss");
    return pass;
}

std::pair<Tensor, Tensor> tcvae_backward(VaeModel& model, const TcvaePass& pass, double scale) {
    const std::size_t batch = pass.x.dim(0);
    Tensor dxhat = pass.xhat;
    const double k = scale * 2.0 / static_cast<double>(kImagePixels * batch);
    for (std::size_t i = 0; i < dxhat.size(); ++i) dxhat[i] = k * (pass.xhat[i] - pass.x[i]);
    Tensor dz = model.decode_backward(dxhat);

    auto kl = kl_decomposed_backward(pass.mu, pass.logvar, pass.z, pass.dataset_size, scale,
                                     scale * pass.loss.beta, scale);
    Tensor dmu = std::move(kl.dmu);
    Tensor dlogvar = std::move(kl.dlogvar);
    for (std::size_t i = 0; i < dz.size(); ++i) {
        const double g = dz[i] + kl.dz[i];
        dmu[i] += g;
        dlogvar[i] += g * 0.5 * std::exp(0.5 * pass.logvar[i]) * pass.eps[i];
    }
    return {std::move(dmu), std::move(dlogvar)};
}

TcvaeLossBreakdown tcvae_loss(VaeModel& model, const Tensor& x, double beta, const Tensor& eps,
                              std::size_t dataset_size, bool with_grad) {
    const auto enc = model.encode(x);
    const auto pass = tcvae_forward(model, x, enc.mu, enc.logvar, eps, beta, dataset_size);
    if (with_grad) {
        const auto [dmu, dlogvar] = tcvae_backward(model, pass, 1.0);
        model.encode_backward(dmu, dlogvar);
    }
    return pass.loss;
}

Traversal latent_traversal(VaeModel& model, std::span<const double> z_base, std::size_t dim,
                           std::span<const double> values) {
    if (z_base.size() != kLatentDim) throw ShapeError("latent_traversal: z_base must have 32 entries");
    if (dim >= kLatentDim) throw InvalidInput("latent_traversal: dimension out of range");
    Traversal out;
    if (values.empty()) return out;

    // One decode per value so each frame matches spatial_broadcast_decode bit for bit.
    out.images.reserve(values.size());
    std::vector<double> z(z_base.begin(), z_base.end());
    for (double v : values) {
        z[dim] = v;
        out.images.push_back(spatial_broadcast_decode(model, z));
    }

    const double n = static_cast<double>(values.size());
    for (std::size_t p = 0; p < kImagePixels; ++p) {
        // Shifted by the first frame so identical frames give exactly zero.
        const double shift = out.images.front().pixels[p];
        double mean = 0.0;
        for (const auto& img : out.images) mean += img.pixels[p] - shift;
        mean /= n;
        double var = 0.0;
        for (const auto& img : out.images) {
            const double d = img.pixels[p] - shift - mean;
            var += d * d;
        }
        out.variance[p] = var / n;
    }
    return out;
}

} // namespace tractgrid
