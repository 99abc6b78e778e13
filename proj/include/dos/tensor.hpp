#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "dos/errors.hpp"

namespace dos {

// Dense row-major tensor of arbitrary rank.  Scalar type is a template
// parameter: float for training, double for verification tests.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), T(0)) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size()) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape product " +
                                 std::to_string(count(shape_)));
        }
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor vector1d(std::initializer_list<T> vals) {
        return Tensor({vals.size()}, std::vector<T>(vals));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    T& operator[](std::size_t flat) { return data_[flat]; }
    const T& operator[](std::size_t flat) const { return data_[flat]; }

    template <typename... Ix>
    T& at(Ix... ix) { return data_[flat_index(ix...)]; }
    template <typename... Ix>
    const T& at(Ix... ix) const { return data_[flat_index(ix...)]; }

    template <typename... Ix>
    std::size_t flat_index(Ix... ix) const {
        const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
        const std::size_t n = sizeof...(Ix);
        if (n != shape_.size()) {
            throw DimensionError("index rank " + std::to_string(n) +
                                 " does not match tensor rank " + std::to_string(shape_.size()));
        }
        std::size_t flat = 0;
        for (std::size_t a = 0; a < n; ++a) {
            if (idx[a] >= shape_[a]) {
                throw DimensionError("index " + std::to_string(idx[a]) + " out of range for axis " +
                                     std::to_string(a) + " (extent " + std::to_string(shape_[a]) + ")");
            }
            flat = flat * shape_[a] + idx[a];
        }
        return flat;
    }

    void reshape(std::vector<std::size_t> shape) {
        if (count(shape) != data_.size()) {
            throw DimensionError("reshape product mismatch");
        }
        shape_ = std::move(shape);
    }

    bool is_finite() const {
        for (const T& v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }
    bool operator!=(const Tensor& o) const { return !(*this == o); }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) os << "x";
            os << shape_[i];
        }
        os << "]";
        return os.str();
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

} // namespace dos
