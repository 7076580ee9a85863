#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sq/tensor.hpp"

namespace sq {

// Per-channel activation absolute maxima accumulated over calibration
// samples at one smoothing attachment point.
struct ChannelStats {
  std::vector<float> act_absmax;
  std::size_t sample_count = 0;
  float clip_fraction = 0.0f;
};

// Per-layer smoothing vectors s keyed by attachment point id, plus the
// migration strength they were derived with.
struct SmoothingPlan {
  std::map<std::string, std::vector<float>> factors;
  float alpha = 0.5f;
};

// s_j = act_max_j^alpha / weight_max_j^(1-alpha). Degenerate entries (zero,
// non-finite, or below 1e-5) fall back to 1 so dead channels pass through
// untouched.
std::vector<float> smoothing_factors(std::span<const float> act_max,
                                     std::span<const float> weight_max, float alpha);

// Equivalence-preserving rescaling of a linear layer: column j of x divided
// by s_j, row j of w multiplied by s_j. matmul(x_hat, w_hat) matches
// matmul(x, w) up to float round-off.
std::pair<Tensor, Tensor> apply_smoothing(const Tensor& x, const Tensor& w,
                                          std::span<const float> s);

// Post-smoothing channel maxima, given pre-smoothing maxima:
// x_hat_max_j = (A_j W_j)^(1-alpha), w_hat_max_j = (A_j W_j)^alpha. At
// alpha = 0.5 the two vectors coincide.
std::pair<std::vector<float>, std::vector<float>> post_smoothing_balance(
    std::span<const float> act_max, std::span<const float> weight_max, float alpha);

struct LayerNormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  float eps = 1e-5f;
};

// weight is [C_in x C_out], bias has C_out entries (may be empty).
struct LinearParams {
  Tensor weight;
  std::vector<float> bias;
};

// Marker for predecessors with nothing to fold scaling into.
struct ResidualAddParams {};

using PredecessorParams = std::variant<LayerNormParams, LinearParams, ResidualAddParams>;

// Folds the division by s into the predecessor that produces the smoothed
// activation, so no runtime scaling op remains. LayerNorm: gamma and beta
// divided element-wise. Linear: output column j and bias j divided by s_j.
// Residual adds are not fusable; callers fall back to an explicit scaling
// on the branch.
void fuse_into_predecessor(LayerNormParams& pred, std::span<const float> s);
void fuse_into_predecessor(LinearParams& pred, std::span<const float> s);
PredecessorParams fuse_into_predecessor(PredecessorParams pred, std::span<const float> s);

}  // namespace sq
