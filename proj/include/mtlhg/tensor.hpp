#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "mtlhg/common.hpp"

namespace mtlhg {

/// Extents of a rank-4 tensor in (batch, channel, height, width) order.
struct Shape4 {
    std::int64_t n = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    std::int64_t size() const { return n * c * h * w; }

    bool operator==(const Shape4&) const = default;

    std::string str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" +
               std::to_string(h) + "x" + std::to_string(w);
    }
};

/// Dense rank-4 array of 64-bit floats, contiguous row-major (n,c,h,w).
/// The universal value type for activations, gradients, and parameters.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w)
        : shape_{n, c, h, w}, data_(static_cast<std::size_t>(shape_.size()), 0.0) {
        if (n < 0 || c < 0 || h < 0 || w < 0) {
            throw DimensionError("tensor extents must be non-negative, got " + shape_.str());
        }
    }
    explicit Tensor(Shape4 s) : Tensor(s.n, s.c, s.h, s.w) {}

    static Tensor zeros(Shape4 s) { return Tensor(s); }
    static Tensor full(Shape4 s, double v) {
        Tensor t(s);
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    const Shape4& shape() const { return shape_; }
    std::int64_t size() const { return shape_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
        return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    double& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
        return data_[static_cast<std::size_t>(index(n, c, y, x))];
    }
    double at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
        return data_[static_cast<std::size_t>(index(n, c, y, x))];
    }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    /// Copy of sample `i` as a batch-1 tensor.
    Tensor slice_sample(std::int64_t i) const {
        Tensor out(1, shape_.c, shape_.h, shape_.w);
        const std::int64_t per = shape_.c * shape_.h * shape_.w;
        std::copy(data_.begin() + static_cast<std::ptrdiff_t>(i * per),
                  data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * per),
                  out.data_.begin());
        return out;
    }

    /// Writes a batch-1 tensor into sample slot `i`.
    void set_sample(std::int64_t i, const Tensor& src) {
        const std::int64_t per = shape_.c * shape_.h * shape_.w;
        if (src.shape_.n != 1 || src.size() != per) {
            throw DimensionError("sample slice shape " + src.shape_.str() +
                                 " does not fit batch slot of " + shape_.str());
        }
        std::copy(src.data_.begin(), src.data_.end(),
                  data_.begin() + static_cast<std::ptrdiff_t>(i * per));
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    Shape4 shape_{};
    std::vector<double> data_;
};

/// Argmax positions recorded by 2x2 max-pooling. Same shape as the pooled
/// output; each element is the flat spatial index (y*W + x) of the window
/// maximum within the pre-pool plane.
struct PoolIndices {
    Shape4 shape{};
    std::vector<std::int64_t> idx;
};

}  // namespace mtlhg
