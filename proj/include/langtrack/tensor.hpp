#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace langtrack {

/// Dense row-major array of doubles. The only storage type the compute
/// kernels operate on; shapes are small vectors of extents.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data);
  static Tensor zeros_like(const Tensor& t);
  static Tensor scalar(double v);

  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& buffer() { return data_; }
  const std::vector<double>& buffer() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 2-D access: row i, column j
  double& at(int i, int j);
  double at(int i, int j) const;
  // 4-D access: sample n, channel c, row y, column x
  double& at(int n, int c, int y, int x);
  double at(int n, int c, int y, int x) const;

  void fill(double v);
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::int64_t shape_product(const std::vector<int>& shape);

}  // namespace langtrack
