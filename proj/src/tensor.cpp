#include "langtrack/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace langtrack {

std::int64_t shape_product(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)),
      data_(static_cast<size_t>(shape_product(shape_)), fill) {}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data) {
  if (shape_product(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("from_data: shape/data size mismatch");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape_); }

Tensor Tensor::scalar(double v) {
  Tensor t(std::vector<int>{});
  t.data_.assign(1, v);
  return t;
}

double& Tensor::at(int i, int j) {
  return data_[static_cast<size_t>(i) * dim(1) + j];
}
double Tensor::at(int i, int j) const {
  return data_[static_cast<size_t>(i) * dim(1) + j];
}

double& Tensor::at(int n, int c, int y, int x) {
  const size_t idx =
      ((static_cast<size_t>(n) * dim(1) + c) * dim(2) + y) * dim(3) + x;
  return data_[idx];
}
double Tensor::at(int n, int c, int y, int x) const {
  const size_t idx =
      ((static_cast<size_t>(n) * dim(1) + c) * dim(2) + y) * dim(3) + x;
  return data_[idx];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ", ";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

}  // namespace langtrack
