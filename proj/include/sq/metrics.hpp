#pragma once

#include <cmath>

#include "sq/error.hpp"
#include "sq/tensor.hpp"

namespace sq {

inline double max_abs(const Tensor& x) {
  double m = 0.0;
  for (float v : x.data) m = std::max(m, std::fabs(static_cast<double>(v)));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw DimensionError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return m;
}

inline double mse(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw DimensionError("mse: size mismatch");
  if (a.size() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

// Max-norm relative error: max|a - ref| / max|ref|.
inline double max_rel_err(const Tensor& a, const Tensor& ref) {
  const double denom = max_abs(ref);
  if (denom == 0.0) return max_abs_diff(a, ref) == 0.0 ? 0.0 : HUGE_VAL;
  return max_abs_diff(a, ref) / denom;
}

// L2-norm relative error: ||a - ref|| / ||ref||.
inline double l2_rel_err(const Tensor& a, const Tensor& ref) {
  if (a.size() != ref.size()) throw DimensionError("l2_rel_err: size mismatch");
  double num = 0.0, denom = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(ref.data[i]);
    num += d * d;
    denom += static_cast<double>(ref.data[i]) * static_cast<double>(ref.data[i]);
  }
  if (denom == 0.0) return num == 0.0 ? 0.0 : HUGE_VAL;
  return std::sqrt(num / denom);
}

}  // namespace sq
