#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace tractgrid {

using Shape = std::vector<std::size_t>;

// Eigen's vectorized kernels peel a different number of leading elements
// depending on buffer alignment, which changes summation order. A fixed
// alignment keeps results bitwise reproducible.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float64 array.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    Storage& storage() { return data_; }
    const Storage& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2D access for [rows, cols] tensors.
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    void fill(double v);
    bool all_finite() const;

    /// Same data, new shape of equal element count.
    Tensor reshaped(Shape shape) const;

    /// Rows [begin, end) along the first axis.
    Tensor slice_rows(std::size_t begin, std::size_t end) const;

    bool operator==(const Tensor&) const = default;

private:
    static Tensor adopt(Shape shape, Storage data);

    Shape shape_;
    Storage data_;
};

/// Concatenates along the first axis; trailing dims must agree.
Tensor concat_rows(std::initializer_list<const Tensor*> parts);

void require_shape(const Tensor& t, const Shape& expected, const std::string& what);

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(std::move(shape)) {}

    void zero_grad() { grad.fill(0.0); }
};

} // namespace tractgrid
