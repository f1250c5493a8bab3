#include "sepperm/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace sepperm {

double max_abs_diff(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

bool is_doubly_stochastic(const Mat& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const int n = m.rows();
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (m(r, c) < -tol || m(r, c) > 1.0 + tol) return false;
  for (int r = 0; r < n; ++r) {
    double s = 0.0;
    for (int c = 0; c < n; ++c) s += m(r, c);
    if (std::abs(s - 1.0) > tol) return false;
  }
  for (int c = 0; c < n; ++c) {
    double s = 0.0;
    for (int r = 0; r < n; ++r) s += m(r, c);
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

}  // namespace sepperm
