#include "tractgrid/layers.hpp"

#include <cmath>

#include <Eigen/Core>

#include "tractgrid/errors.hpp"

namespace tractgrid {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void fill_uniform(Tensor& t, double limit, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : t.values()) v = dist(rng);
}

void init_weights(Parameter& w, Parameter& b, Init scheme, double fan_in, double fan_out, double gain,
                  std::mt19937_64& rng) {
    b.value.fill(0.0);
    switch (scheme) {
    case Init::he_uniform:
        fill_uniform(w.value, gain * std::sqrt(6.0 / fan_in), rng);
        b.value.fill(kReluBiasInit);
        break;
    case Init::glorot_uniform: fill_uniform(w.value, gain * std::sqrt(6.0 / (fan_in + fan_out)), rng); break;
    case Init::zeros: w.value.fill(0.0); break;
    }
}

} // namespace

double relu(double x) { return x > 0.0 ? x : 0.0; }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Dense::Dense(std::string name, std::size_t in_features, std::size_t out_features)
    : weight(name + ".weight", {out_features, in_features}), bias(name + ".bias", {out_features}),
      in_(in_features), out_(out_features) {}

void Dense::initialize(Init scheme, std::mt19937_64& rng, double gain) {
    init_weights(weight, bias, scheme, static_cast<double>(in_), static_cast<double>(out_), gain, rng);
}

Tensor Dense::forward(const Tensor& x) {
    if (x.rank() != 2 || x.dim(1) != in_)
        throw ShapeError(weight.name + ": expected input [batch, " + std::to_string(in_) + "], got " +
                         shape_string(x.shape()));
    input_ = x;
    const std::size_t batch = x.dim(0);
    Tensor y({batch, out_});
    MatMap ym(y.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(out_));
    ConstMatMap xm(x.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(in_));
    ConstMatMap wm(weight.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    ym.noalias() = xm * wm.transpose();
    Eigen::Map<const Eigen::RowVectorXd> bm(bias.value.data(), static_cast<Eigen::Index>(out_));
    ym.rowwise() += bm;
    return y;
}

Tensor Dense::backward(const Tensor& upstream) {
    const std::size_t batch = input_.dim(0);
    require_shape(upstream, {batch, out_}, weight.name + " backward");
    ConstMatMap gm(upstream.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(out_));
    ConstMatMap xm(input_.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(in_));
    ConstMatMap wm(weight.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    MatMap dw(weight.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    Eigen::Map<Eigen::RowVectorXd> db(bias.grad.data(), static_cast<Eigen::Index>(out_));

    dw.noalias() += gm.transpose() * xm;
    db += gm.colwise().sum();

    Tensor dx({batch, in_});
    MatMap dxm(dx.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(in_));
    dxm.noalias() = gm * wm;
    return dx;
}

Conv2d::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
    : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}), bias(name + ".bias", {out_channels}),
      in_(in_channels), out_(out_channels), k_(kernel) {
    if (kernel % 2 == 0) throw ShapeError(name + ": kernel size must be odd");
}

void Conv2d::initialize(Init scheme, std::mt19937_64& rng, double gain) {
    const double area = static_cast<double>(k_ * k_);
    init_weights(weight, bias, scheme, static_cast<double>(in_) * area, static_cast<double>(out_) * area, gain, rng);
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != in_)
        throw ShapeError(weight.name + ": expected input [batch, " + std::to_string(in_) + ", H, W], got " +
                         shape_string(x.shape()));
    const std::size_t batch = x.dim(0), h = x.dim(2), w = x.dim(3);
    if (h < k_ || w < k_) throw ShapeError(weight.name + ": spatial dims smaller than kernel");
    input_shape_ = x.shape();

    const std::size_t hw = h * w;
    const std::size_t q = in_ * k_ * k_;
    const std::size_t cols = batch * hw;
    const long pad = static_cast<long>(k_ / 2);

    columns_.assign(q * cols, 0.0);
    for (std::size_t c = 0; c < in_; ++c) {
        for (std::size_t ky = 0; ky < k_; ++ky) {
            for (std::size_t kx = 0; kx < k_; ++kx) {
                double* row = columns_.data() + ((c * k_ + ky) * k_ + kx) * cols;
                for (std::size_t b = 0; b < batch; ++b) {
                    const double* src = x.data() + (b * in_ + c) * hw;
                    double* dst = row + b * hw;
                    for (std::size_t y = 0; y < h; ++y) {
                        const long sy = static_cast<long>(y) + static_cast<long>(ky) - pad;
                        if (sy < 0 || sy >= static_cast<long>(h)) continue;
                        for (std::size_t xx = 0; xx < w; ++xx) {
                            const long sx = static_cast<long>(xx) + static_cast<long>(kx) - pad;
                            if (sx < 0 || sx >= static_cast<long>(w)) continue;
                            dst[y * w + xx] = src[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
                        }
                    }
                }
            }
        }
    }

    RowMatrix out(static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(cols));
    ConstMatMap wm(weight.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(q));
    ConstMatMap cm(columns_.data(), static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(cols));
    out.noalias() = wm * cm;

    Tensor y({batch, out_, h, w});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_; ++o) {
            const double bo = bias.value[o];
            const double* src = out.data() + o * cols + b * hw;
            double* dst = y.data() + (b * out_ + o) * hw;
            for (std::size_t p = 0; p < hw; ++p) dst[p] = src[p] + bo;
        }
    return y;
}

Tensor Conv2d::backward(const Tensor& upstream) {
    const std::size_t batch = input_shape_[0], h = input_shape_[2], w = input_shape_[3];
    require_shape(upstream, {batch, out_, h, w}, weight.name + " backward");
    const std::size_t hw = h * w;
    const std::size_t q = in_ * k_ * k_;
    const std::size_t cols = batch * hw;
    const long pad = static_cast<long>(k_ / 2);

    RowMatrix g(static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(cols));
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_; ++o) {
            const double* src = upstream.data() + (b * out_ + o) * hw;
            double* dst = g.data() + o * cols + b * hw;
            for (std::size_t p = 0; p < hw; ++p) dst[p] = src[p];
        }

    ConstMatMap wm(weight.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(q));
    ConstMatMap cm(columns_.data(), static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(cols));
    MatMap dw(weight.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(q));
    dw.noalias() += g * cm.transpose();
    Eigen::Map<Eigen::VectorXd> db(bias.grad.data(), static_cast<Eigen::Index>(out_));
    db += g.rowwise().sum();

    RowMatrix dcols(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(cols));
    dcols.noalias() = wm.transpose() * g;

    Tensor dx(input_shape_);
    for (std::size_t c = 0; c < in_; ++c) {
        for (std::size_t ky = 0; ky < k_; ++ky) {
            for (std::size_t kx = 0; kx < k_; ++kx) {
                const double* row = dcols.data() + ((c * k_ + ky) * k_ + kx) * cols;
                for (std::size_t b = 0; b < batch; ++b) {
                    double* dst = dx.data() + (b * in_ + c) * hw;
                    const double* src = row + b * hw;
                    for (std::size_t y = 0; y < h; ++y) {
                        const long sy = static_cast<long>(y) + static_cast<long>(ky) - pad;
                        if (sy < 0 || sy >= static_cast<long>(h)) continue;
                        for (std::size_t xx = 0; xx < w; ++xx) {
                            const long sx = static_cast<long>(xx) + static_cast<long>(kx) - pad;
                            if (sx < 0 || sx >= static_cast<long>(w)) continue;
                            dst[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)] += src[y * w + xx];
                        }
                    }
                }
            }
        }
    }
    return dx;
}

Tensor Relu::forward(const Tensor& x) {
    Tensor y = x;
    if (held_) {
        if (x.size() != active_.size()) throw ShapeError("relu forward: held mask size mismatch");
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!active_[i]) y[i] = 0.0;
        return y;
    }
    active_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        active_[i] = x[i] > 0.0;
        if (!active_[i]) y[i] = 0.0;
    }
    return y;
}

Tensor Relu::backward(const Tensor& upstream) const {
    if (upstream.size() != active_.size()) throw ShapeError("relu backward: size mismatch");
    Tensor dx = upstream;
    for (std::size_t i = 0; i < dx.size(); ++i)
        if (!active_[i]) dx[i] = 0.0;
    return dx;
}

Tensor Sigmoid::forward(const Tensor& x) {
    output_ = x;
    for (auto& v : output_.values()) v = sigmoid(v);
    return output_;
}

Tensor Sigmoid::backward(const Tensor& upstream) const {
    if (upstream.size() != output_.size()) throw ShapeError("sigmoid backward: size mismatch");
    Tensor dx = upstream;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= output_[i] * (1.0 - output_[i]);
    return dx;
}

} // namespace tractgrid
