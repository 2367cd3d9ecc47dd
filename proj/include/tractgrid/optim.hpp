#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tractgrid/tensor.hpp"

namespace tractgrid {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are allocated to match the parameter
/// list given at construction; the list must not change afterwards.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig config = {});

    /// Applies one update from each parameter's grad. Throws NumericError,
    /// leaving every parameter untouched, if any gradient is non-finite.
    void step();

    std::uint64_t step_count() const { return step_; }
    const AdamConfig& config() const { return config_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    AdamConfig config_;
    std::uint64_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient verification.

/// Evaluates the scalar loss at the current parameter values. When
/// with_grad is true it must also zero and then fill every Parameter::grad.
using LossFunction = std::function<double(bool with_grad)>;
/// Same contract, returning addends whose sum is the loss. Differences are
/// taken per addend, so a large constant addend does not swamp small slopes.
using LossTerms = std::function<std::vector<double>(bool with_grad)>;

struct GradCheckOptions {
    double step = 1e-4;
    double tolerance = 1e-4;
    // Coordinates checked per parameter tensor; 0 checks all of them.
    std::size_t max_entries_per_param = 0;
    std::uint64_t seed = 0;
    // Optional id of the activation pattern of the last loss evaluation.
    // Coordinates whose +-step evaluations change it straddle a ReLU or clamp
    // kink. With hold_pattern they are re-evaluated on the base point's linear
    // piece (masks frozen); without it they are skipped.
    std::function<std::uint64_t()> pattern;
    std::function<void(bool)> hold_pattern;
};

struct ParamGradCheck {
    std::string name;
    std::size_t entries_checked = 0;
    std::size_t entries_held = 0;  // checked with frozen masks
    std::size_t entries_skipped = 0;
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct GradCheckReport {
    std::vector<ParamGradCheck> params;
    double max_relative_error = 0.0;
    std::size_t entries_held = 0;
    std::size_t entries_skipped = 0;
    bool pass = false;
};

/// |a - f| / max(1e-8, |a| + |f|)
double relative_error(double analytic, double numeric);

/// Compares analytic gradients with central differences. Throws CheckInvalid
/// when repeated evaluations at the same point disagree.
GradCheckReport grad_check(const LossFunction& loss, const std::vector<Parameter*>& params,
                           const GradCheckOptions& options = {});
GradCheckReport grad_check_terms(const LossTerms& loss, const std::vector<Parameter*>& params,
                                 const GradCheckOptions& options = {});

} // namespace tractgrid
