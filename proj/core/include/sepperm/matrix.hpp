#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sepperm {

// Dense row-major matrix of doubles. A small carrier type shared across the
// library, not a linear-algebra package.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols, double fill = 0.0)
      : rows_(rows),
        cols_(cols),
        data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
              fill) {}

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int r, int c) {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  double operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }

  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<std::size_t>(r) * cols_,
            static_cast<std::size_t>(cols_)};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Mat&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Largest absolute entrywise difference; matrices must have equal shape.
double max_abs_diff(const Mat& a, const Mat& b);

// Every entry in [0,1] and every row and column sums to 1 within tol.
bool is_doubly_stochastic(const Mat& m, double tol);

}  // namespace sepperm
