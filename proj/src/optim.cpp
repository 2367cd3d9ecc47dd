#include "tractgrid/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tractgrid/errors.hpp"

namespace tractgrid {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto* p : params_) {
        m_.push_back(Tensor::zeros_like(p->value));
        v_.push_back(Tensor::zeros_like(p->value));
    }
}

void Adam::step() {
    for (const auto* p : params_) {
        if (p->grad.shape() != p->value.shape()) throw ShapeError("adam: gradient shape mismatch for " + p->name);
        for (std::size_t i = 0; i < p->grad.size(); ++i)
            if (!std::isfinite(p->grad[i]))
                throw NumericError("adam: non-finite gradient in " + p->name + " at index " + std::to_string(i) +
                                   " (step " + std::to_string(step_ + 1) + ")");
    }

    ++step_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter& p = *params_[k];
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p.value[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
    }
}

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckReport grad_check(const LossFunction& loss, const std::vector<Parameter*>& params,
                           const GradCheckOptions& options) {
    return grad_check_terms([&loss](bool with_grad) { return std::vector<double>{loss(with_grad)}; }, params,
                            options);
}

GradCheckReport grad_check_terms(const LossTerms& loss, const std::vector<Parameter*>& params,
                                 const GradCheckOptions& options) {
    const std::vector<double> base = loss(true);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const auto* p : params) analytic.push_back(p->grad);

    const std::vector<double> again = loss(false);
    if (again != base) {
        const auto sum = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); };
        throw CheckInvalid("grad_check: loss is not deterministic at fixed parameters (" +
                           std::to_string(sum(base)) + " vs " + std::to_string(sum(again)) + ")");
    }

    const std::uint64_t region = options.pattern ? options.pattern() : 0;
    std::mt19937_64 rng(options.seed);
    GradCheckReport report;
    bool all_covered = true;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        std::vector<std::size_t> idx(p.value.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        const bool sampled = options.max_entries_per_param != 0 && idx.size() > options.max_entries_per_param;
        if (sampled) std::shuffle(idx.begin(), idx.end(), rng);

        ParamGradCheck check;
        check.name = p.name;
        for (std::size_t i : idx) {
            if (sampled && check.entries_checked == options.max_entries_per_param) break;
            const double original = p.value[i];
            p.value[i] = original + options.step;
            std::vector<double> up = loss(false);
            const bool up_same = !options.pattern || options.pattern() == region;
            p.value[i] = original - options.step;
            std::vector<double> down = loss(false);
            const bool down_same = !options.pattern || options.pattern() == region;
            p.value[i] = original;
            if (!up_same || !down_same) {
                if (!options.hold_pattern) {
                    ++check.entries_skipped;
                    continue;
                }
                loss(false);
                struct Release {
                    const std::function<void(bool)>& hold;
                    double& value;
                    double original;
                    ~Release() {
                        value = original;
                        hold(false);
                    }
                } release{options.hold_pattern, p.value[i], original};
                options.hold_pattern(true);
                p.value[i] = original + options.step;
                up = loss(false);
                p.value[i] = original - options.step;
                down = loss(false);
                ++check.entries_held;
            }

            if (up.size() != base.size() || down.size() != base.size())
                throw CheckInvalid("grad_check: loss term count changed between evaluations");
            double diff = 0.0;
            for (std::size_t t = 0; t < up.size(); ++t) diff += up[t] - down[t];
            const double numeric = diff / (2.0 * options.step);
            const double err = relative_error(analytic[k][i], numeric);
            if (err > check.max_relative_error || check.entries_checked == 0) {
                check.max_relative_error = err;
                check.worst_index = i;
                check.worst_analytic = analytic[k][i];
                check.worst_numeric = numeric;
            }
            ++check.entries_checked;
        }
        if (check.entries_checked == 0 && !idx.empty()) all_covered = false;
        report.max_relative_error = std::max(report.max_relative_error, check.max_relative_error);
        report.entries_held += check.entries_held;
        report.entries_skipped += check.entries_skipped;
        report.params.push_back(std::move(check));
    }
    // Leave the analytic gradients in place for the caller.
    for (std::size_t k = 0; k < params.size(); ++k) params[k]->grad = analytic[k];
    report.pass = all_covered && report.max_relative_error <= options.tolerance;
    return report;
}

} // namespace tractgrid
