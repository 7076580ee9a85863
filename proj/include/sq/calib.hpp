#pragma once

#include <span>
#include <utility>
#include <vector>

#include "sq/calib_types.hpp"
#include "sq/graph.hpp"

namespace sq {

// Runs every sample through the model in fp32 and accumulates element-wise
// maxima at each quantized-operator input. With clip_fraction > 0 the top
// fraction of token rows (ranked by row absmax, per operator) is excluded
// from both the channel stats and the global absmax.
CalibResult run_calibration(const ModelGraph& model, const std::vector<Tensor>& samples,
                            const CalibConfig& cfg);

// Smoothing factors for every attachment point of the model, from the
// calibrated activation stats and the consumer weight row maxima.
SmoothingPlan build_plan(const CalibResult& calib, const ModelGraph& model, float alpha);

struct AlphaSearchResult {
  float best_alpha = 0.5f;
  std::vector<std::pair<float, double>> curve;  // (alpha, mean output MSE)
};

// Grid search over the migration strength: per candidate alpha, build the
// plan, fuse it, recalibrate static scales on the smoothed model, and score
// quantized output MSE against the fp32 reference on the eval samples.
// Ties break toward the alpha closest to 0.5.
AlphaSearchResult search_alpha(const ModelGraph& model, const std::vector<Tensor>& calib_samples,
                               const std::vector<Tensor>& eval_samples,
                               std::span<const float> grid, SettingLevel level = SettingLevel::O3,
                               const CalibConfig& cfg = {});

}  // namespace sq
