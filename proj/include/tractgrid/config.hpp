#pragma once

// Run configuration shared by the CLI subcommands. The file format is flat
// `key = value` text; '#' starts a comment line.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tractgrid/evaluation.hpp"
#include "tractgrid/training.hpp"

namespace tractgrid {

struct RunConfig {
    ObjectiveConfig objective;
    AdamConfig adam;
    std::size_t batch_size = 16;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    SplitSpec split;
    std::size_t split_index = 0;
    std::size_t mig_bins = 20;
    std::size_t knn_k = 3;

    TrainOptions train_options() const;
    EvalOptions eval_options() const;
    /// Cross-field checks (split_index < n_splits) on top of per-key ranges.
    void validate() const;
};

struct ConfigKey {
    std::string name;
    std::string range;  // human-readable legal range
    std::string help;
    std::function<void(RunConfig&, const std::string&)> set;  // throws ParseError
    std::function<std::string(const RunConfig&)> get;
};

/// Every key in a fixed order; drives --help, the file parser and manifests.
const std::vector<ConfigKey>& config_keys();

void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
/// Applies `key = value` lines on top of `base`. ParseError names the line.
RunConfig parse_config_text(const std::string& text, RunConfig base = {});
/// One `key = value` line per key; parse_config_text inverts it exactly.
std::string config_to_text(const RunConfig& config);

} // namespace tractgrid
