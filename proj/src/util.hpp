#pragma once

// Shared numeric helpers: structured errors, a small row-major matrix,
// log-sum-exp, and normal-distribution functions.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace npmlca {

enum class ErrorCategory {
  invalid_argument,
  dimension,
  parse,
  io,
  numeric,
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}
  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

const char* error_category_name(ErrorCategory category);

// Dense row-major matrix of doubles. Zero-initialized on construction.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  std::span<double> row(int r) { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }
  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// log(sum_i exp(v_i)) with max subtraction; -inf for an empty span.
double log_sum_exp(std::span<const double> v);

// out[i] = exp(v[i] - log_sum_exp(v)); rows sum to 1 by construction.
void softmax(std::span<const double> logits, std::span<double> out);

// Standard normal CDF and its inverse (Wichura/Acklam-grade accuracy).
double normal_cdf(double x);
double normal_quantile(double p);

// Two-sided p-value for a standard-normal z statistic.
double normal_two_sided_p(double z);

// Shortest round-trip decimal form of a double (deterministic across runs).
std::string format_double(double v);

bool nearly_equal(double a, double b, double tol);

}  // namespace npmlca
