#include "sq/calib.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sq/metrics.hpp"
#include "sq/quant.hpp"

namespace sq {

namespace {

// Row-max value below which rows are kept after dropping the top
// floor(clip_fraction * N) token rows. The clipped global absmax is exactly
// the largest surviving row max.
float keep_threshold(std::vector<float> maxima, float clip_fraction) {
  const std::size_t drop =
      static_cast<std::size_t>(std::floor(static_cast<double>(clip_fraction) *
                                          static_cast<double>(maxima.size())));
  if (drop == 0) return std::numeric_limits<float>::infinity();
  std::sort(maxima.begin(), maxima.end(), std::greater<float>());
  return maxima[drop];
}

std::vector<float> row_absmax_weights_concat(const BlockParams& blk) {
  // shared input channels of q/k/v: row absmax over the concatenated weights
  std::vector<float> m = row_absmax(blk.q_proj.weight);
  const std::vector<float> mk = row_absmax(blk.k_proj.weight);
  const std::vector<float> mv = row_absmax(blk.v_proj.weight);
  for (std::size_t j = 0; j < m.size(); ++j) m[j] = std::max(m[j], std::max(mk[j], mv[j]));
  return m;
}

}  // namespace

float CalibResult::static_scale(const std::string& key, int bits) const {
  const auto it = static_absmax.find(key);
  if (it == static_absmax.end())
    throw ConfigError("no calibration entry for '" + key + "'");
  return compute_step(it->second, bits);
}

CalibResult run_calibration(const ModelGraph& model, const std::vector<Tensor>& samples,
                            const CalibConfig& cfg) {
  if (samples.empty()) throw ParameterError("calibration needs at least one sample");
  if (!(cfg.clip_fraction >= 0.0f && cfg.clip_fraction < 0.5f))
    throw ParameterError("clip_fraction must be in [0, 0.5)");
  for (const Tensor& s : samples)
    if (s.cols() != model.channels)
      throw DimensionError("calibration sample channel extent does not match the model");

  CalibResult res;
  res.sample_count = samples.size();
  res.clip_fraction = cfg.clip_fraction;

  // pass 1: per-token row maxima at every quantized-operator input
  for (const Tensor& s : samples) {
    forward_observed(model, s, [&](const std::string& key, const Tensor& t) {
      const std::vector<float> rm = row_absmax(t);
      auto& acc = res.token_maxima[key];
      acc.insert(acc.end(), rm.begin(), rm.end());
    });
  }

  std::map<std::string, float> thresholds;
  for (const auto& [key, maxima] : res.token_maxima)
    thresholds[key] = keep_threshold(maxima, cfg.clip_fraction);

  // pass 2: channel stats and global absmax over the surviving rows
  for (const Tensor& s : samples) {
    forward_observed(model, s, [&](const std::string& key, const Tensor& t) {
      const float thr = thresholds.at(key);
      const std::size_t rows = t.rows(), cols = t.cols();

      ChannelStats& st = res.stats[key];
      if (st.act_absmax.empty()) st.act_absmax.assign(cols, 0.0f);
      st.sample_count += 1;
      st.clip_fraction = cfg.clip_fraction;

      float& global = res.static_absmax[key];
      for (std::size_t r = 0; r < rows; ++r) {
        float rm = 0.0f;
        for (std::size_t c = 0; c < cols; ++c)
          rm = std::max(rm, std::fabs(t.data[r * cols + c]));
        if (rm > thr) continue;  // clipped token row
        global = std::max(global, rm);
        for (std::size_t c = 0; c < cols; ++c)
          st.act_absmax[c] = std::max(st.act_absmax[c], std::fabs(t.data[r * cols + c]));
      }
    });
  }
  return res;
}

SmoothingPlan build_plan(const CalibResult& calib, const ModelGraph& model, float alpha) {
  SmoothingPlan plan;
  plan.alpha = alpha;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    for (const auto& [key, weight_max] :
         {std::pair{attn_input_key(b), row_absmax_weights_concat(model.blocks[b])},
          std::pair{ffn_input_key(b), row_absmax(model.blocks[b].fc1.weight)}}) {
      const auto it = calib.stats.find(key);
      if (it == calib.stats.end())
        throw ConfigError("calibration does not cover attachment point '" + key + "'");
      if (it->second.act_absmax.size() != weight_max.size())
        throw DimensionError("calibration stats width does not match the model at '" + key + "'");
      plan.factors[key] = smoothing_factors(it->second.act_absmax, weight_max, alpha);
    }
  }
  return plan;
}

AlphaSearchResult search_alpha(const ModelGraph& model, const std::vector<Tensor>& calib_samples,
                               const std::vector<Tensor>& eval_samples,
                               std::span<const float> grid, SettingLevel level,
                               const CalibConfig& cfg) {
  if (grid.empty()) throw ParameterError("alpha grid must be non-empty");
  for (float a : grid)
    if (!(a >= 0.0f && a <= 1.0f)) throw ParameterError("alpha grid values must be in [0,1]");
  if (eval_samples.empty()) throw ParameterError("alpha search needs eval samples");

  const CalibResult base = run_calibration(model, calib_samples, cfg);

  std::vector<Tensor> refs;
  refs.reserve(eval_samples.size());
  for (const Tensor& x : eval_samples) refs.push_back(forward_fp(model, x));

  AlphaSearchResult out;
  for (float alpha : grid) {
    const SmoothingPlan plan = build_plan(base, model, alpha);
    const ModelGraph smoothed = attach_smoothing(model, plan);
    CalibResult calib = run_calibration(smoothed, calib_samples, cfg);
    calib.alpha_used = alpha;
    const PrecisionMap pmap = PrecisionMap::int8_default(smoothed, level);

    double err = 0.0;
    for (std::size_t i = 0; i < eval_samples.size(); ++i) {
      const Tensor y = forward_quant(smoothed, eval_samples[i], pmap, nullptr, &calib);
      err += mse(y, refs[i]);
    }
    out.curve.emplace_back(alpha, err / static_cast<double>(eval_samples.size()));
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < out.curve.size(); ++i) {
    const auto& [a, e] = out.curve[i];
    const auto& [ba, be] = out.curve[best];
    if (e < be) {
      best = i;
    } else if (e == be) {
      // ties go to the alpha nearest 0.5, then to the smaller alpha
      const float da = std::fabs(a - 0.5f), db = std::fabs(ba - 0.5f);
      if (da < db || (da == db && a < ba)) best = i;
    }
  }
  out.best_alpha = out.curve[best].first;
  return out;
}

}  // namespace sq
