#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace capaa {

/// Over-aligned allocator. Eigen picks its vectorized summation order from
/// the buffer alignment, so fixed alignment keeps results bit-reproducible.
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

/// Channel-major 3-D shape. Vectors are (n,1,1), scalars (1,1,1).
struct Shape {
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense CHW array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.c; }
  int height() const { return shape_.h; }
  int width() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x]; }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x];
  }

  /// Channel plane view.
  std::span<double> plane(int c) { return {data_.data() + static_cast<std::size_t>(c) * shape_.h * shape_.w,
                                           static_cast<std::size_t>(shape_.h) * shape_.w}; }
  std::span<const double> plane(int c) const {
    return {data_.data() + static_cast<std::size_t>(c) * shape_.h * shape_.w,
            static_cast<std::size_t>(shape_.h) * shape_.w};
  }

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  double sum() const;
  double max() const;
  double min() const;
  double squared_norm() const;

 private:
  Shape shape_;
  Storage data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
/// Elementwise product.
Tensor hadamard(const Tensor& a, const Tensor& b);

/// Bilinear resize of every channel (pixel-center alignment).
Tensor resize_bilinear(const Tensor& t, int height, int width);

}  // namespace capaa
