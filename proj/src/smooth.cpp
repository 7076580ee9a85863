#include "sq/smooth.hpp"

#include <cmath>

namespace sq {

namespace {

constexpr float kFactorFloor = 1e-5f;

float safe_factor(double raw) {
  if (!std::isfinite(raw) || raw < kFactorFloor) return 1.0f;  // dead channel
  return static_cast<float>(raw);
}

}  // namespace

std::vector<float> smoothing_factors(std::span<const float> act_max,
                                     std::span<const float> weight_max, float alpha) {
  if (act_max.size() != weight_max.size())
    throw DimensionError("smoothing_factors: stat vectors differ in length");
  if (!(alpha >= 0.0f && alpha <= 1.0f))
    throw ParameterError("migration strength alpha must be in [0,1]");
  for (std::size_t j = 0; j < act_max.size(); ++j)
    if (act_max[j] < 0.0f || weight_max[j] < 0.0f)
      throw DataError("channel maxima must be non-negative");

  std::vector<float> s(act_max.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double a = std::pow(static_cast<double>(act_max[j]), static_cast<double>(alpha));
    const double w =
        std::pow(static_cast<double>(weight_max[j]), 1.0 - static_cast<double>(alpha));
    s[j] = safe_factor(a / w);
  }
  return s;
}

std::pair<Tensor, Tensor> apply_smoothing(const Tensor& x, const Tensor& w,
                                          std::span<const float> s) {
  const std::size_t ci = x.cols();
  if (w.rank() != 2 || w.dims[0] != ci)
    throw DimensionError("apply_smoothing: weight rows must match activation channels");
  if (s.size() != ci) throw DimensionError("apply_smoothing: factor length must match channels");
  for (float f : s)
    if (!(f > 0.0f) || !std::isfinite(f))
      throw ParameterError("smoothing factors must be positive and finite");

  Tensor xs = x;
  const std::size_t xrows = x.rows();
  for (std::size_t r = 0; r < xrows; ++r)
    for (std::size_t c = 0; c < ci; ++c) xs.data[r * ci + c] /= s[c];

  Tensor ws = w;
  const std::size_t co = w.dims[1];
  for (std::size_t r = 0; r < ci; ++r)
    for (std::size_t c = 0; c < co; ++c) ws.data[r * co + c] *= s[r];

  return {std::move(xs), std::move(ws)};
}

std::pair<std::vector<float>, std::vector<float>> post_smoothing_balance(
    std::span<const float> act_max, std::span<const float> weight_max, float alpha) {
  const std::vector<float> s = smoothing_factors(act_max, weight_max, alpha);
  std::vector<float> x_hat(s.size()), w_hat(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    x_hat[j] = act_max[j] / s[j];
    w_hat[j] = weight_max[j] * s[j];
  }
  return {std::move(x_hat), std::move(w_hat)};
}

void fuse_into_predecessor(LayerNormParams& pred, std::span<const float> s) {
  if (pred.gamma.size() != s.size() || pred.beta.size() != s.size())
    throw DimensionError("fuse: LayerNorm width must match factor length");
  for (std::size_t j = 0; j < s.size(); ++j) {
    pred.gamma[j] /= s[j];
    pred.beta[j] /= s[j];
  }
}

void fuse_into_predecessor(LinearParams& pred, std::span<const float> s) {
  if (pred.weight.rank() != 2 || pred.weight.dims[1] != s.size())
    throw DimensionError("fuse: linear output width must match factor length");
  const std::size_t rows = pred.weight.dims[0], cols = pred.weight.dims[1];
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) pred.weight.data[r * cols + c] /= s[c];
  if (!pred.bias.empty()) {
    if (pred.bias.size() != s.size())
      throw DimensionError("fuse: linear bias width must match factor length");
    for (std::size_t j = 0; j < s.size(); ++j) pred.bias[j] /= s[j];
  }
}

PredecessorParams fuse_into_predecessor(PredecessorParams pred, std::span<const float> s) {
  if (std::holds_alternative<ResidualAddParams>(pred))
    throw NotFusableError(
        "residual add has no fusable parameters; scale the branch explicitly instead");
  if (auto* ln = std::get_if<LayerNormParams>(&pred)) {
    fuse_into_predecessor(*ln, s);
  } else {
    fuse_into_predecessor(std::get<LinearParams>(pred), s);
  }
  return pred;
}

}  // namespace sq
