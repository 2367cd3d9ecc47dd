#pragma once

// Fixed-graph differentiable layers. Each layer caches what its backward pass
// needs from the most recent forward call; backward accumulates into the
// parameter gradients and returns the gradient with respect to the input.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tractgrid/tensor.hpp"

namespace tractgrid {

/// he_uniform is meant for layers feeding a ReLU and also sets their biases to
/// kReluBiasInit, keeping all-zero input patches off the ReLU kink; the other
/// schemes zero the bias.
enum class Init { he_uniform, glorot_uniform, zeros };

inline constexpr double kReluBiasInit = 0.01;

class Dense {
public:
    Dense() = default;
    Dense(std::string name, std::size_t in_features, std::size_t out_features);

    /// x: [batch, in] -> [batch, out], y = x W^T + b.
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& upstream);

    // `gain` scales the uniform limit.
    void initialize(Init scheme, std::mt19937_64& rng, double gain = 1.0);
    std::vector<Parameter*> parameters() { return {&weight, &bias}; }

    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }

    Parameter weight;  // [out, in]
    Parameter bias;    // [out]

private:
    std::size_t in_ = 0;
    std::size_t out_ = 0;
    Tensor input_;
};

/// Stride-1 cross-correlation with zero "same" padding; kernel size must be odd.
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel);

    /// x: [batch, in_ch, H, W] -> [batch, out_ch, H, W].
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& upstream);

    // `gain` scales the uniform limit.
    void initialize(Init scheme, std::mt19937_64& rng, double gain = 1.0);
    std::vector<Parameter*> parameters() { return {&weight, &bias}; }

    std::size_t in_channels() const { return in_; }
    std::size_t out_channels() const { return out_; }
    std::size_t kernel() const { return k_; }

    Parameter weight;  // [out, in, k, k]
    Parameter bias;    // [out]

private:
    std::size_t in_ = 0;
    std::size_t out_ = 0;
    std::size_t k_ = 1;
    Shape input_shape_;
    Storage columns_;  // [in*k*k, batch*H*W]
};

class Relu {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& upstream) const;
    const std::vector<char>& active() const { return active_; }
    // While held, forward reuses the current mask instead of recomputing it.
    void hold(bool on) { held_ = on; }

private:
    std::vector<char> active_;
    bool held_ = false;
};

class Sigmoid {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& upstream) const;

private:
    Tensor output_;
};

double relu(double x);
/// Branch-stable logistic function; never overflows.
double sigmoid(double x);

} // namespace tractgrid
