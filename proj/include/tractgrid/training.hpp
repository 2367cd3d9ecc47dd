#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tractgrid/evaluation.hpp"
#include "tractgrid/objectives.hpp"
#include "tractgrid/optim.hpp"

namespace tractgrid {

struct TrainOptions {
    ObjectiveConfig objective;
    AdamConfig adam;
    std::size_t batch_size = 16;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    std::uint64_t max_steps = 0;  // stop after this many updates; 0 = no cap

    void validate() const;
};

/// Epoch means weighted by batch size.
struct EpochStats {
    std::size_t epoch = 0;
    double recon = 0.0;
    double mi = 0.0;
    double tc = 0.0;
    double dim_kl = 0.0;
    double variant_loss = 0.0;
    double total = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> curve;
    std::uint64_t steps = 0;
    // Set when a non-finite loss or gradient stopped training; the model then
    // holds the parameters from before the failing step.
    bool numeric_failure = false;
    std::string failure_message;
};

/// Seed of the model initialization for a run seed.
std::uint64_t model_seed(std::uint64_t run_seed);

/// Mini-batch Adam over `images`. Each epoch reshuffles; the last batch may
/// be short. Noise and augmentation seeds come from one stream seeded by
/// options.seed, so identical inputs give identical parameters.
TrainResult train_model(VaeModel& model, std::span<const FaImage> images, std::span<const int> labels,
                        const OccupancyMask& occupied, const TrainOptions& options,
                        const std::function<void(const EpochStats&)>& on_epoch = {});

/// Batch of the given rows with eps and the augmentation seed drawn from `seed`.
TrainBatch make_batch(std::span<const FaImage> images, std::span<const int> labels, const OccupancyMask& occupied,
                      std::span<const std::size_t> rows, std::uint64_t seed, std::size_t dataset_size);

/// Finite-difference check of the combined objective on one fixed batch.
GradCheckReport check_gradients(VaeModel& model, const TrainBatch& batch, const ObjectiveConfig& config,
                                const GradCheckOptions& options);

std::string curve_to_csv(const std::vector<EpochStats>& curve);

/// One fresh model per split: train on the split's training subjects, then
/// evaluate the fold.
MetricsReport run_experiment(const Dataset& dataset, const TrainOptions& options, const SplitSpec& splits,
                             const EvalOptions& eval);

} // namespace tractgrid
