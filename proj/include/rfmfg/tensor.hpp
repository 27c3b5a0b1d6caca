#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfmfg {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Dense tensor of shape (agents, steps, dim), agent-major.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t agents, std::size_t steps, std::size_t dim, double fill = 0.0)
      : agents_(agents), steps_(steps), dim_(dim), data_(agents * steps * dim, fill) {}

  std::size_t agents() const { return agents_; }
  std::size_t steps() const { return steps_; }
  std::size_t dim() const { return dim_; }

  double& operator()(std::size_t m, std::size_t l, std::size_t k) {
    return data_[(m * steps_ + l) * dim_ + k];
  }
  double operator()(std::size_t m, std::size_t l, std::size_t k) const {
    return data_[(m * steps_ + l) * dim_ + k];
  }

  std::span<double> at(std::size_t m, std::size_t l) {
    return {data_.data() + (m * steps_ + l) * dim_, dim_};
  }
  std::span<const double> at(std::size_t m, std::size_t l) const {
    return {data_.data() + (m * steps_ + l) * dim_, dim_};
  }

  /// All steps of one agent, contiguous (steps * dim entries).
  std::span<double> agent(std::size_t m) { return {data_.data() + m * steps_ * dim_, steps_ * dim_}; }
  std::span<const double> agent(std::size_t m) const {
    return {data_.data() + m * steps_ * dim_, steps_ * dim_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor3& o) const {
    return agents_ == o.agents_ && steps_ == o.steps_ && dim_ == o.dim_;
  }
  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t agents_ = 0;
  std::size_t steps_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double sup_norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s = std::max(s, std::abs(x));
  return s;
}

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("sup_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
  return s;
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace rfmfg
