#include "tractgrid/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "tractgrid/errors.hpp"

namespace tractgrid {

std::string to_string(Variant v) {
    switch (v) {
    case Variant::none: return "none";
    case Variant::aux: return "aux";
    case Variant::triplet: return "triplet";
    case Variant::simclr: return "simclr";
    }
    return "none";
}

Variant parse_variant(const std::string& name) {
    if (name == "none") return Variant::none;
    if (name == "aux") return Variant::aux;
    if (name == "triplet") return Variant::triplet;
    if (name == "simclr") return Variant::simclr;
    throw InvalidInput("unknown variant '" + name + "' (expected aux, triplet, simclr or none)");
}

double LossWeights::for_variant(Variant v) const {
    switch (v) {
    case Variant::aux: return cls;
    case Variant::triplet: return triplet;
    case Variant::simclr: return simclr;
    case Variant::none: return 0.0;
    }
    return 0.0;
}

void ObjectiveConfig::validate() const {
    auto nonneg = [](double x, const char* what) {
        if (!std::isfinite(x) || x < 0.0) throw InvalidInput(std::string(what) + " must be finite and >= 0");
    };
    nonneg(beta, "beta");
    nonneg(weights.vae, "lambda_vae");
    nonneg(weights.cls, "lambda_cls");
    nonneg(weights.triplet, "lambda_triplet");
    nonneg(weights.simclr, "lambda_simclr");
    if (!std::isfinite(triplet_margin) || triplet_margin <= 0.0) throw InvalidInput("margin must be finite and > 0");
    if (!(temperature > 0.0 && temperature <= 10.0)) throw InvalidInput("tau must lie in (0, 10]");
    nonneg(augment.noise_sigma, "aug_sigma");
    if (!(augment.mask_probability >= 0.0 && augment.mask_probability < 1.0))
        throw InvalidInput("aug_mask_p must lie in [0, 1)");
}

double aux_bce(double logit, int label) {
    if (label != 0 && label != 1) throw InvalidInput("aux_bce: label must be 0 or 1");
    const double y = static_cast<double>(label);
    return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

double aux_bce(std::span<const double> logits, std::span<const int> labels) {
    if (logits.size() != labels.size() || logits.empty()) throw InvalidInput("aux_bce: batch size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) s += aux_bce(logits[i], labels[i]);
    return s / static_cast<double>(logits.size());
}

namespace {

double squared_distance(const Tensor& mu, std::size_t a, std::size_t b) {
    const std::size_t d = mu.dim(1);
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double diff = mu.at(a, k) - mu.at(b, k);
        s += diff * diff;
    }
    return s;
}

struct Mined {
    std::size_t positive = 0;
    std::size_t negative = 0;
    double d_pos = 0.0;
    double d_neg = 0.0;
    bool valid = false;
};

std::vector<Mined> mine_hard(const Tensor& mu, std::span<const int> labels) {
    if (mu.rank() != 2 || mu.dim(0) != labels.size()) throw InvalidInput("batch_hard_triplet: label count mismatch");
    const std::size_t n = labels.size();
    std::vector<Mined> out(n);
    for (std::size_t a = 0; a < n; ++a) {
        bool has_pos = false, has_neg = false;
        Mined& m = out[a];
        m.d_neg = std::numeric_limits<double>::infinity();
        m.d_pos = -1.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == a) continue;
            const double d = squared_distance(mu, a, j);
            if (labels[j] == labels[a]) {
                if (d > m.d_pos) {
                    m.d_pos = d;
                    m.positive = j;
                }
                has_pos = true;
            } else {
                if (d < m.d_neg) {
                    m.d_neg = d;
                    m.negative = j;
                }
                has_neg = true;
            }
        }
        m.valid = has_pos && has_neg;
    }
    return out;
}

} // namespace

TripletResult batch_hard_triplet(const Tensor& mu, std::span<const int> labels, double margin) {
    const auto mined = mine_hard(mu, labels);
    TripletResult r;
    for (const auto& m : mined) {
        if (!m.valid) continue;
        r.loss += std::max(0.0, m.d_pos - m.d_neg + margin);
        ++r.valid_anchors;
    }
    if (r.valid_anchors) r.loss /= static_cast<double>(r.valid_anchors);
    return r;
}

Tensor batch_hard_triplet_backward(const Tensor& mu, std::span<const int> labels, double margin) {
    const auto mined = mine_hard(mu, labels);
    Tensor g = Tensor::zeros_like(mu);
    std::size_t valid = 0;
    for (const auto& m : mined) valid += m.valid;
    if (valid == 0) return g;

    const double scale = 1.0 / static_cast<double>(valid);
    const std::size_t d = mu.dim(1);
    for (std::size_t a = 0; a < mined.size(); ++a) {
        const auto& m = mined[a];
        if (!m.valid || m.d_pos - m.d_neg + margin <= 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) {
            const double to_pos = 2.0 * scale * (mu.at(a, k) - mu.at(m.positive, k));
            const double to_neg = 2.0 * scale * (mu.at(a, k) - mu.at(m.negative, k));
            g.at(a, k) += to_pos - to_neg;
            g.at(m.positive, k) -= to_pos;
            g.at(m.negative, k) += to_neg;
        }
    }
    return g;
}

OccupancyMask occupancy(const GridLayout& layout) {
    OccupancyMask mask{};
    for (const auto& c : layout.cells()) mask[cell_index(c)] = true;
    return mask;
}

OccupancyMask occupancy(const FaImage& image) {
    OccupancyMask mask{};
    for (std::size_t i = 0; i < kImagePixels; ++i) mask[i] = image.pixels[i] != 0.0;
    return mask;
}

FaImage augment(const FaImage& image, std::uint64_t seed, const AugmentConfig& config, const OccupancyMask& occupied) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    FaImage out;
    for (std::size_t i = 0; i < kImagePixels; ++i) {
        if (!occupied[i]) continue;
        double v = image.pixels[i] + config.noise_sigma * noise(rng);
        if (unit(rng) < config.mask_probability) v = 0.0;
        out.pixels[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

namespace {

struct NtXentViews {
    std::size_t n = 0;    // pairs
    std::size_t dim = 0;
    std::vector<double> unit;   // [2n, dim]
    std::vector<double> norm;   // [2n]
    std::vector<double> sim;    // [2n, 2n], already divided by temperature
};

NtXentViews ntxent_views(const Tensor& a, const Tensor& b, double temperature) {
    if (a.rank() != 2 || a.shape() != b.shape()) throw ShapeError("simclr_ntxent: views must be aligned [N, dim]");
    if (a.dim(0) < 2) throw InvalidInput("simclr_ntxent: need at least 2 pairs");
    if (!(temperature > 0.0)) throw InvalidInput("simclr_ntxent: temperature must be positive");
    NtXentViews v;
    v.n = a.dim(0);
    v.dim = a.dim(1);
    const std::size_t total = 2 * v.n;
    v.unit.resize(total * v.dim);
    v.norm.resize(total);
    for (std::size_t k = 0; k < total; ++k) {
        const Tensor& src = k < v.n ? a : b;
        const std::size_t row = k < v.n ? k : k - v.n;
        double s = 0.0;
        for (std::size_t d = 0; d < v.dim; ++d) s += src.at(row, d) * src.at(row, d);
        const double nrm = std::sqrt(s);
        if (!(nrm > 0.0) || !std::isfinite(nrm)) throw NumericError("simclr_ntxent: zero-norm or non-finite embedding");
        v.norm[k] = nrm;
        for (std::size_t d = 0; d < v.dim; ++d) v.unit[k * v.dim + d] = src.at(row, d) / nrm;
    }
    v.sim.resize(total * total);
    for (std::size_t k = 0; k < total; ++k)
        for (std::size_t l = 0; l < total; ++l) {
            double s = 0.0;
            for (std::size_t d = 0; d < v.dim; ++d) s += v.unit[k * v.dim + d] * v.unit[l * v.dim + d];
            v.sim[k * total + l] = s / temperature;
        }
    return v;
}

std::size_t partner(std::size_t k, std::size_t n) { return k < n ? k + n : k - n; }

// log sum_{l != k} exp(sim_kl)
double row_lse(const NtXentViews& v, std::size_t k) {
    const std::size_t total = 2 * v.n;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < total; ++l)
        if (l != k) m = std::max(m, v.sim[k * total + l]);
    double s = 0.0;
    for (std::size_t l = 0; l < total; ++l)
        if (l != k) s += std::exp(v.sim[k * total + l] - m);
    return m + std::log(s);
}

} // namespace

double simclr_ntxent(const Tensor& view_a, const Tensor& view_b, double temperature) {
    const auto v = ntxent_views(view_a, view_b, temperature);
    const std::size_t total = 2 * v.n;
    double loss = 0.0;
    for (std::size_t k = 0; k < total; ++k) loss += row_lse(v, k) - v.sim[k * total + partner(k, v.n)];
    return loss / static_cast<double>(total);
}

std::pair<Tensor, Tensor> simclr_ntxent_backward(const Tensor& view_a, const Tensor& view_b, double temperature) {
    const auto v = ntxent_views(view_a, view_b, temperature);
    const std::size_t total = 2 * v.n;
    const double inv_total = 1.0 / static_cast<double>(total);

    std::vector<double> dunit(total * v.dim, 0.0);
    for (std::size_t k = 0; k < total; ++k) {
        const double lse = row_lse(v, k);
        for (std::size_t l = 0; l < total; ++l) {
            if (l == k) continue;
            double g = std::exp(v.sim[k * total + l] - lse);
            if (l == partner(k, v.n)) g -= 1.0;
            g *= inv_total / temperature;
            for (std::size_t d = 0; d < v.dim; ++d) {
                dunit[k * v.dim + d] += g * v.unit[l * v.dim + d];
                dunit[l * v.dim + d] += g * v.unit[k * v.dim + d];
            }
        }
    }

    Tensor da = Tensor::zeros_like(view_a);
    Tensor db = Tensor::zeros_like(view_b);
    for (std::size_t k = 0; k < total; ++k) {
        double dot = 0.0;
        for (std::size_t d = 0; d < v.dim; ++d) dot += v.unit[k * v.dim + d] * dunit[k * v.dim + d];
        Tensor& dst = k < v.n ? da : db;
        const std::size_t row = k < v.n ? k : k - v.n;
        for (std::size_t d = 0; d < v.dim; ++d)
            dst.at(row, d) = (dunit[k * v.dim + d] - v.unit[k * v.dim + d] * dot) / v.norm[k];
    }
    return {std::move(da), std::move(db)};
}

CombinedLoss combined_loss(VaeModel& model, const TrainBatch& batch, const ObjectiveConfig& config, bool with_grad) {
    config.validate();
    const std::size_t n = batch.images.rank() == 4 ? batch.images.dim(0) : 0;
    if (n == 0) throw InvalidInput("combined_loss: empty batch");
    const bool needs_labels = config.variant == Variant::aux || config.variant == Variant::triplet;
    if (needs_labels && batch.labels.size() != n) throw InvalidInput("combined_loss: labels required for this variant");

    Tensor encoder_input = batch.images;
    if (config.variant == Variant::simclr) {
        std::mt19937_64 seeds(batch.augment_seed);
        std::vector<FaImage> view_a(n), view_b(n);
        for (std::size_t i = 0; i < n; ++i) {
            const FaImage img = image_at(batch.images, i);
            const std::uint64_t sa = seeds();
            const std::uint64_t sb = seeds();
            view_a[i] = augment(img, sa, config.augment, batch.occupied);
            view_b[i] = augment(img, sb, config.augment, batch.occupied);
        }
        const Tensor ta = stack_images(view_a);
        const Tensor tb = stack_images(view_b);
        encoder_input = concat_rows({&batch.images, &ta, &tb});
    }

    const EncoderOutput enc = model.encode(encoder_input);
    const Tensor mu = enc.mu.slice_rows(0, n);
    const Tensor logvar = enc.logvar.slice_rows(0, n);
    const TcvaePass pass = tcvae_forward(model, batch.images, mu, logvar, batch.eps, config.beta, batch.dataset_size);

    const double lambda_vae = config.weights.vae;
    const double lambda_variant = config.weights.for_variant(config.variant);

    CombinedLoss out;
    out.tcvae = pass.loss;
    Tensor logits;
    Tensor mu_a, mu_b;
    switch (config.variant) {
    case Variant::none: break;
    case Variant::aux:
        logits = model.aux_logits(mu);
        out.variant_loss = aux_bce(logits.values(), batch.labels);
        break;
    case Variant::triplet: out.variant_loss = batch_hard_triplet(mu, batch.labels, config.triplet_margin).loss; break;
    case Variant::simclr:
        mu_a = enc.mu.slice_rows(n, 2 * n);
        mu_b = enc.mu.slice_rows(2 * n, 3 * n);
        out.variant_loss = simclr_ntxent(mu_a, mu_b, config.temperature);
        break;
    }
    out.total = lambda_vae * pass.loss.total + lambda_variant * out.variant_loss;
    if (!std::isfinite(out.total)) throw NumericError("combined_loss: non-finite total");
    if (!with_grad) return out;

    auto [dmu, dlogvar] = tcvae_backward(model, pass, lambda_vae);
    switch (config.variant) {
    case Variant::none: break;
    case Variant::aux: {
        Tensor dlogits = logits;
        for (std::size_t i = 0; i < n; ++i)
            dlogits[i] = lambda_variant * (sigmoid(logits[i]) - static_cast<double>(batch.labels[i])) /
                         static_cast<double>(n);
        const Tensor d = model.aux_backward(dlogits);
        for (std::size_t i = 0; i < dmu.size(); ++i) dmu[i] += d[i];
        break;
    }
    case Variant::triplet: {
        const Tensor d = batch_hard_triplet_backward(mu, batch.labels, config.triplet_margin);
        for (std::size_t i = 0; i < dmu.size(); ++i) dmu[i] += lambda_variant * d[i];
        break;
    }
    case Variant::simclr: {
        auto [da, db] = simclr_ntxent_backward(mu_a, mu_b, config.temperature);
        for (auto& x : da.values()) x *= lambda_variant;
        for (auto& x : db.values()) x *= lambda_variant;
        const Tensor zeros = Tensor::zeros_like(da);
        dmu = concat_rows({&dmu, &da, &db});
        dlogvar = concat_rows({&dlogvar, &zeros, &zeros});
        break;
    }
    }
    model.encode_backward(dmu, dlogvar);
    return out;
}

} // namespace tractgrid
