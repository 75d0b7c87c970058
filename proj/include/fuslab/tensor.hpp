#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fuslab {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

// Dense row-major tensor of finite doubles.
class Tensor {
 public:
  Tensor() = default;
  // Zero-filled.
  explicit Tensor(Shape shape);
  // Throws ShapeError if the sizes disagree, NumericError on non-finite data.
  Tensor(Shape shape, std::vector<double> data);

  static Tensor vector(std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// L2 norm over all elements.
double l2_norm(std::span<const double> v);

}  // namespace fuslab
