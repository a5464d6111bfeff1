#include "weatherlpr/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "weatherlpr/error.hpp"

namespace wlpr {

Shape::Shape(std::initializer_list<int> extents) {
    if (extents.size() > kMaxRank) throw ShapeError("shape rank " + std::to_string(extents.size()) + " exceeds 4");
    for (int e : extents) {
        if (e < 1) throw ShapeError("shape extent must be >= 1, got " + std::to_string(e));
        d_[rank_++] = e;
    }
}

int Shape::operator[](int axis) const {
    if (axis < 0 || axis >= rank_)
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + str());
    return d_[axis];
}

std::size_t Shape::numel() const noexcept {
    std::size_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= static_cast<std::size_t>(d_[i]);
    return n;
}

std::string Shape::str() const {
    std::string s = "(";
    for (int i = 0; i < rank_; ++i) {
        if (i) s += ", ";
        s += std::to_string(d_[i]);
    }
    return s + ")";
}

bool operator==(const Shape& a, const Shape& b) noexcept {
    if (a.rank_ != b.rank_) return false;
    for (int i = 0; i < a.rank_; ++i)
        if (a.d_[i] != b.d_[i]) return false;
    return true;
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape_.numel())
        throw ShapeError("tensor of shape " + shape_.str() + " needs " + std::to_string(shape_.numel()) +
                         " values, got " + std::to_string(data_.size()));
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape.numel() != numel())
        throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    Tensor t;
    t.shape_ = shape;
    t.data_ = data_;
    return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!(a.shape() == b.shape()))
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

Tensor& Tensor::operator+=(const Tensor& o) {
    require_same_shape(*this, o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
    require_same_shape(*this, o, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double sum(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v;
    return s;
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace wlpr
