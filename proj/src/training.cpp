#include "tractgrid/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tractgrid/dataio.hpp"
#include "tractgrid/errors.hpp"
#include "tractgrid/random.hpp"

namespace tractgrid {

void TrainOptions::validate() const {
    objective.validate();
    if (batch_size == 0 || batch_size > 4096) throw InvalidInput("batch_size must lie in [1, 4096]");
    if (!(adam.learning_rate > 0.0)) throw InvalidInput("lr must be positive");
}

std::uint64_t model_seed(std::uint64_t run_seed) { return derive_seed(run_seed, 10); }

TrainResult train_model(VaeModel& model, std::span<const FaImage> images, std::span<const int> labels,
                        const OccupancyMask& occupied, const TrainOptions& options,
                        const std::function<void(const EpochStats&)>& on_epoch) {
    options.validate();
    if (labels.size() != images.size()) throw InvalidInput("train: label count differs from image count");
    TrainResult result;
    if (options.epochs == 0) return result;
    if (images.empty()) throw InvalidInput("train: no training images");

    const auto params = model.parameters();
    Adam adam(params, options.adam);
    std::mt19937_64 rng(derive_seed(options.seed, 20));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochStats stats;
        stats.epoch = epoch;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            if (options.max_steps != 0 && result.steps >= options.max_steps) break;
            const std::size_t b = std::min(options.batch_size, order.size() - start);
            std::vector<FaImage> batch_images;
            TrainBatch batch;
            for (std::size_t i = 0; i < b; ++i) {
                batch_images.push_back(images[order[start + i]]);
                batch.labels.push_back(labels[order[start + i]]);
            }
            batch.images = stack_images(batch_images);
            batch.occupied = occupied;
            batch.eps = Tensor({b, kLatentDim});
            for (auto& e : batch.eps.storage()) e = normal(rng);
            batch.augment_seed = rng();
            batch.dataset_size = images.size();

            try {
                model.zero_grad();
                const auto loss = combined_loss(model, batch, options.objective, true);
                if (!std::isfinite(loss.total))
                    throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
                adam.step();
                ++result.steps;
                seen += b;
                const double w = static_cast<double>(b);
                stats.recon += w * loss.tcvae.recon;
                stats.mi += w * loss.tcvae.mi;
                stats.tc += w * loss.tcvae.tc;
                stats.dim_kl += w * loss.tcvae.dim_kl;
                stats.variant_loss += w * loss.variant_loss;
                stats.total += w * loss.total;
            } catch (const NumericError& e) {
                result.numeric_failure = true;
                result.failure_message = e.what();
                return result;
            }
        }
        if (seen == 0) break;
        const double n = static_cast<double>(seen);
        for (double* f : {&stats.recon, &stats.mi, &stats.tc, &stats.dim_kl, &stats.variant_loss, &stats.total})
            *f /= n;
        result.curve.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    return result;
}

TrainBatch make_batch(std::span<const FaImage> images, std::span<const int> labels, const OccupancyMask& occupied,
                      std::span<const std::size_t> rows, std::uint64_t seed, std::size_t dataset_size) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<FaImage> batch_images;
    TrainBatch batch;
    for (auto r : rows) {
        batch_images.push_back(images[r]);
        batch.labels.push_back(labels[r]);
    }
    batch.images = stack_images(batch_images);
    batch.occupied = occupied;
    batch.eps = Tensor({rows.size(), kLatentDim});
    for (auto& e : batch.eps.storage()) e = normal(rng);
    batch.augment_seed = rng();
    batch.dataset_size = dataset_size;
    return batch;
}

GradCheckReport check_gradients(VaeModel& model, const TrainBatch& batch, const ObjectiveConfig& config,
                                const GradCheckOptions& options) {
    const double w_vae = config.weights.vae;
    const double w_variant = config.weights.for_variant(config.variant);
    const LossTerms loss = [&](bool with_grad) {
        if (with_grad) model.zero_grad();
        const auto l = combined_loss(model, batch, config, with_grad);
        // The log N constants of mi, tc and dim_kl do not depend on the
        // parameters and are left out.
        return std::vector<double>{w_vae * l.tcvae.recon, w_vae * l.tcvae.mi_var,
                                   w_vae * l.tcvae.beta * l.tcvae.tc_var, w_vae * l.tcvae.dim_kl_var,
                                   w_variant * l.variant_loss};
    };
    GradCheckOptions with_pattern = options;
    if (!with_pattern.pattern) {
        with_pattern.pattern = [&model] { return model.activation_pattern(); };
        with_pattern.hold_pattern = [&model](bool on) { model.hold_activation_pattern(on); };
    }
    return grad_check_terms(loss, model.parameters(), with_pattern);
}

std::string curve_to_csv(const std::vector<EpochStats>& curve) {
    std::string s = "epoch,recon,mi,tc,dim_kl,variant_loss,total\n";
    for (const auto& e : curve)
        s += std::to_string(e.epoch) + ',' + format_double(e.recon) + ',' + format_double(e.mi) + ',' +
             format_double(e.tc) + ',' + format_double(e.dim_kl) + ',' + format_double(e.variant_loss) + ',' +
             format_double(e.total) + '\n';
    return s;
}

MetricsReport run_experiment(const Dataset& dataset, const TrainOptions& options, const SplitSpec& splits,
                             const EvalOptions& eval) {
    dataset.validate();
    splits.validate();
    const auto images = rasterize_all(dataset);
    const auto labels = dataset.labels();
    const auto occupied = occupancy(dataset.layout);

    std::vector<FoldMetrics> folds;
    for (std::size_t s = 0; s < splits.n_splits; ++s) {
        const Split split = split_for(labels, splits, s);
        std::vector<FaImage> train_images;
        std::vector<int> train_labels;
        for (auto i : split.train) {
            train_images.push_back(images[i]);
            train_labels.push_back(labels[i]);
        }
        TrainOptions fold_options = options;
        fold_options.seed = derive_seed(options.seed, 1000 + s);
        VaeModel model(model_seed(fold_options.seed));
        const auto trained = train_model(model, train_images, train_labels, occupied, fold_options);
        if (trained.numeric_failure) throw NumericError("split " + std::to_string(s) + ": " + trained.failure_message);
        auto f = evaluate_fold(model, dataset, images, split, eval);
        f.fold = s;
        folds.push_back(std::move(f));
    }
    return summarize(std::move(folds));
}

} // namespace tractgrid
