#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace wlpr {

/// Up to four extents, each >= 1. Feature maps use (N, H, W, C) order.
class Shape {
public:
    static constexpr int kMaxRank = 4;

    Shape() = default;
    Shape(std::initializer_list<int> extents);

    int rank() const noexcept { return rank_; }
    int operator[](int axis) const;
    /// Unchecked extent for hot loops.
    int extent(int axis) const noexcept { return d_[axis]; }
    std::size_t numel() const noexcept;

    /// Extents as a printable string, e.g. "(1, 8, 16, 4)".
    std::string str() const;

    friend bool operator==(const Shape& a, const Shape& b) noexcept;

private:
    std::array<int, kMaxRank> d_{1, 1, 1, 1};
    int rank_ = 0;
};

/// Dense row-major array of doubles with shape metadata. A default-constructed
/// tensor is empty (no elements); anything else has numel() >= 1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

    const Shape& shape() const noexcept { return shape_; }
    int dim(int axis) const { return shape_[axis]; }
    int rank() const noexcept { return shape_.rank(); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double* ptr() noexcept { return data_.data(); }
    const double* ptr() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Rank-4 element access (n, h, w, c).
    double& at(int n, int h, int w, int c) noexcept {
        return data_[((static_cast<std::size_t>(n) * shape_.extent(1) + h) * shape_.extent(2) + w) * shape_.extent(3) + c];
    }
    const double& at(int n, int h, int w, int c) const noexcept {
        return data_[((static_cast<std::size_t>(n) * shape_.extent(1) + h) * shape_.extent(2) + w) * shape_.extent(3) + c];
    }

    /// Same data, new shape; element counts must agree.
    Tensor reshaped(Shape shape) const;

    void fill(double v);
    Tensor& operator+=(const Tensor& o);
    Tensor& operator-=(const Tensor& o);
    Tensor& operator*=(double s);

    bool all_finite() const noexcept;

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

/// Throws ShapeError naming `what` unless the shapes agree.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

double max_abs_diff(const Tensor& a, const Tensor& b);
double sum(const Tensor& t);
/// Sum of element-wise products.
double dot(const Tensor& a, const Tensor& b);

}  // namespace wlpr
