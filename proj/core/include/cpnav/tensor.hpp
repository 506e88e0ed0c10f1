#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cpnav/error.hpp"

namespace cpnav {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

/// Dense row-major array. `T` is float for the deployed path; tests also
/// instantiate double as an independent high-precision reference.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
        validate_shape(shape_);
        data_.assign(shape_size(shape_), fill);
    }

    BasicTensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
        validate_shape(shape_);
        if (data_.size() != shape_size(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                                 shape_str(shape_));
    }

    static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }

    const Shape& shape() const noexcept { return shape_; }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& values() noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // (c, h, w) access for rank-3 tensors.
    T& at(int c, int h, int w) { return data_[index3(c, h, w)]; }
    const T& at(int c, int h, int w) const { return data_[index3(c, h, w)]; }

    bool has_grad() const noexcept { return grad_.has_value(); }
    std::vector<T>& grad() {
        if (!grad_) grad_.emplace(data_.size(), T{0});
        return *grad_;
    }
    const std::optional<std::vector<T>>& grad_buffer() const noexcept { return grad_; }
    void zero_grad() {
        if (grad_) std::fill(grad_->begin(), grad_->end(), T{0});
    }
    void drop_grad() noexcept { grad_.reset(); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    // Same storage, new extents. Total size must match.
    BasicTensor reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size())
            throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        return BasicTensor(std::move(shape), data_);
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    BasicTensor<U> cast() const {
        return BasicTensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    // Bitwise-equal storage and shape (NaN payloads included).
    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    static void validate_shape(const Shape& shape) {
        for (int d : shape)
            if (d <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }

    std::size_t index3(int c, int h, int w) const {
        return (static_cast<std::size_t>(c) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(h)) *
                   static_cast<std::size_t>(shape_[2]) +
               static_cast<std::size_t>(w);
    }

    Shape shape_;
    std::vector<T> data_;
    std::optional<std::vector<T>> grad_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename T>
void require_finite(const BasicTensor<T>& t, const char* what) {
    if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace cpnav
