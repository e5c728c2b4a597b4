#include "capaa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "capaa/error.hpp"

namespace capaa {

std::string Shape::str() const {
  return "(" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(values.begin(), values.end()) {
  if (data_.size() != shape_.size()) {
    throw Error("shape_mismatch", "tensor data size does not match shape " + shape_.str());
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!(shape_ == other.shape_)) throw Error("shape_mismatch", "add " + shape_.str() + " vs " + other.shape_.str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  if (!(shape_ == other.shape_)) throw Error("shape_mismatch", "sub " + shape_.str() + " vs " + other.shape_.str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }
double Tensor::max() const { return *std::max_element(data_.begin(), data_.end()); }
double Tensor::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Tensor::squared_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) throw Error("shape_mismatch", "hadamard " + a.shape().str() + " vs " + b.shape().str());
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor resize_bilinear(const Tensor& t, int height, int width) {
  if (t.height() == height && t.width() == width) return t;
  Tensor out({t.channels(), height, width});
  const double sy = static_cast<double>(t.height()) / height;
  const double sx = static_cast<double>(t.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, t.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, t.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, t.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, t.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < t.channels(); ++c) {
        out.at(c, y, x) = (1 - wy) * ((1 - wx) * t.at(c, y0, x0) + wx * t.at(c, y0, x1)) +
                          wy * ((1 - wx) * t.at(c, y1, x0) + wx * t.at(c, y1, x1));
      }
    }
  }
  return out;
}

}  // namespace capaa
