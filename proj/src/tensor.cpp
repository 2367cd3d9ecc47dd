#include "tractgrid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tractgrid/errors.hpp"

namespace tractgrid {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (shape_size(shape_) != data_.size())
        throw ShapeError("tensor data has " + std::to_string(data_.size()) + " values for shape " +
                         shape_string(shape_));
}

Tensor Tensor::adopt(Shape shape, Storage data) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return adopt(std::move(shape), data_);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
    if (shape_.empty() || begin > end || end > shape_[0]) throw ShapeError("slice_rows out of range");
    const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
    Shape s = shape_;
    s[0] = end - begin;
    return adopt(std::move(s), Storage(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                        data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

Tensor concat_rows(std::initializer_list<const Tensor*> parts) {
    if (parts.size() == 0) return {};
    const Tensor& first = **parts.begin();
    Shape shape = first.shape();
    shape[0] = 0;
    std::vector<double> data;
    for (const Tensor* t : parts) {
        if (t->rank() != first.rank() || !std::equal(t->shape().begin() + 1, t->shape().end(), first.shape().begin() + 1))
            throw ShapeError("concat_rows: trailing shape mismatch");
        shape[0] += t->dim(0);
        data.insert(data.end(), t->storage().begin(), t->storage().end());
    }
    return Tensor(std::move(shape), std::move(data));
}

void require_shape(const Tensor& t, const Shape& expected, const std::string& what) {
    if (t.shape() != expected)
        throw ShapeError(what + ": expected shape " + shape_string(expected) + ", got " + shape_string(t.shape()));
}

} // namespace tractgrid
