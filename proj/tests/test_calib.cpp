#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sq/calib.hpp"
#include "sq/metrics.hpp"
#include "sq/rng.hpp"

using namespace sq;

namespace {

ModelGraph standard_model(std::uint64_t seed) {
  ModelSpec spec;
  spec.blocks = 2;
  spec.channels = 128;
  spec.heads = 4;
  spec.seed = seed;
  spec.weight_outliers = {0.02, 16.0, seed};
  return make_synthetic_model(spec);
}

std::vector<Tensor> sample_set(std::size_t n, std::uint64_t seed, std::size_t t = 16,
                               std::size_t c = 128) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(gen_outlier_activations(t, c, {0.0, 1.0, seed}, substream_seed(seed, i)));
  return out;
}

}  // namespace

TEST_CASE("calibration requires samples and a sane clip fraction") {
  ModelGraph m = standard_model(1);
  CHECK_THROWS_AS(run_calibration(m, {}, {}), ParameterError);
  CalibConfig bad;
  bad.clip_fraction = 0.7f;
  CHECK_THROWS_AS(run_calibration(m, sample_set(1, 2), bad), ParameterError);
  CHECK_THROWS_AS(run_calibration(m, {Tensor::zeros({4, 64})}, {}), DimensionError);
}

TEST_CASE("two-sample stats are the element-wise max of single-sample stats") {
  ModelGraph m = standard_model(3);
  const auto samples = sample_set(2, 5);
  const CalibResult c1 = run_calibration(m, {samples[0]}, {});
  const CalibResult c2 = run_calibration(m, {samples[1]}, {});
  const CalibResult both = run_calibration(m, samples, {});

  for (const auto& [key, st] : both.stats) {
    const auto& a = c1.stats.at(key).act_absmax;
    const auto& b = c2.stats.at(key).act_absmax;
    for (std::size_t j = 0; j < st.act_absmax.size(); ++j)
      CHECK(st.act_absmax[j] == std::max(a[j], b[j]));
  }
  for (const auto& [key, v] : both.static_absmax)
    CHECK(v == std::max(c1.static_absmax.at(key), c2.static_absmax.at(key)));
}

TEST_CASE("adding samples never decreases the stats") {
  ModelGraph m = standard_model(5);
  const auto samples = sample_set(4, 7);
  const CalibResult small = run_calibration(m, {samples[0], samples[1]}, {});
  const CalibResult big = run_calibration(m, samples, {});
  for (const auto& [key, st] : small.stats)
    for (std::size_t j = 0; j < st.act_absmax.size(); ++j)
      CHECK(big.stats.at(key).act_absmax[j] >= st.act_absmax[j]);
}

TEST_CASE("token clipping lowers the static scale") {
  ModelGraph m = standard_model(7);
  const auto samples = sample_set(8, 9, 32);
  const CalibResult plain = run_calibration(m, samples, {});
  CalibConfig clipped_cfg;
  clipped_cfg.clip_fraction = 0.02f;
  const CalibResult clipped = run_calibration(m, samples, clipped_cfg);

  // per key: clipped absmax equals the (k+1)-th largest token max, and is
  // strictly smaller whenever the top row is unique
  bool some_strict = false;
  for (const auto& [key, maxima] : plain.token_maxima) {
    std::vector<float> sorted = maxima;
    std::sort(sorted.begin(), sorted.end(), std::greater<float>());
    const std::size_t drop = static_cast<std::size_t>(
        std::floor(0.02 * static_cast<double>(sorted.size())));
    CHECK(clipped.static_absmax.at(key) == sorted[drop]);
    CHECK(clipped.static_absmax.at(key) <= plain.static_absmax.at(key));
    if (drop > 0 && sorted[drop] < sorted[0]) some_strict = true;
  }
  CHECK(some_strict);

  // channel stats are clipped as well (never above the unclipped stats)
  for (const auto& [key, st] : clipped.stats)
    for (std::size_t j = 0; j < st.act_absmax.size(); ++j)
      CHECK(st.act_absmax[j] <= plain.stats.at(key).act_absmax[j]);
}

TEST_CASE("static_scale derives the quantization step") {
  ModelGraph m = standard_model(11);
  const CalibResult calib = run_calibration(m, sample_set(2, 13), {});
  const std::string key = attn_input_key(0);
  CHECK(calib.static_scale(key) == compute_step(calib.static_absmax.at(key), 8));
  CHECK_THROWS_AS(calib.static_scale("nope"), ConfigError);
}

TEST_CASE("build_plan: balanced stats give unit factors") {
  ModelGraph m = standard_model(15);
  CalibResult calib = run_calibration(m, sample_set(2, 17), {});
  // force stats equal to the weight row maxima: s_j = (A/W)^0.5 = 1
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    std::vector<float> wmax = row_absmax(m.blocks[b].q_proj.weight);
    const auto wk = row_absmax(m.blocks[b].k_proj.weight);
    const auto wv = row_absmax(m.blocks[b].v_proj.weight);
    for (std::size_t j = 0; j < wmax.size(); ++j) wmax[j] = std::max({wmax[j], wk[j], wv[j]});
    calib.stats[attn_input_key(b)].act_absmax = wmax;
    calib.stats[ffn_input_key(b)].act_absmax = row_absmax(m.blocks[b].fc1.weight);
  }
  const SmoothingPlan plan = build_plan(calib, m, 0.5f);
  for (const auto& [id, s] : plan.factors)
    for (float v : s) CHECK(v == doctest::Approx(1.0f).epsilon(1e-5));
}

TEST_CASE("build_plan: outlier channels get factors above 1") {
  ModelGraph m = standard_model(19);
  const CalibResult calib = run_calibration(m, sample_set(4, 21), {});
  const SmoothingPlan plan = build_plan(calib, m, 0.5f);

  // channels with outsized activation stats migrate difficulty to weights
  const auto& s = plan.factors.at(attn_input_key(0));
  const auto& stats = calib.stats.at(attn_input_key(0)).act_absmax;
  std::vector<float> sorted_stats = stats;
  std::sort(sorted_stats.begin(), sorted_stats.end());
  const float median = sorted_stats[sorted_stats.size() / 2];
  int outliers_checked = 0;
  for (std::size_t j = 0; j < stats.size(); ++j) {
    if (stats[j] > 8.0f * median) {
      CHECK(s[j] > 1.0f);
      ++outliers_checked;
    }
  }
  CHECK(outliers_checked > 0);
}

TEST_CASE("build_plan rejects calibration gaps") {
  ModelGraph m = standard_model(23);
  CalibResult calib = run_calibration(m, sample_set(2, 25), {});
  calib.stats.erase(ffn_input_key(1));
  CHECK_THROWS_AS(build_plan(calib, m, 0.5f), ConfigError);
}

TEST_CASE("recalibration on the smoothed model shrinks outlier-driven scales") {
  ModelGraph m = standard_model(27);
  const auto samples = sample_set(4, 29);
  const CalibResult raw = run_calibration(m, samples, {});
  const SmoothingPlan plan = build_plan(raw, m, 0.5f);
  const ModelGraph fused = attach_smoothing(m, plan);
  const CalibResult smooth = run_calibration(fused, samples, {});
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    CHECK(smooth.static_absmax.at(attn_input_key(b)) < raw.static_absmax.at(attn_input_key(b)));
    CHECK(smooth.static_absmax.at(ffn_input_key(b)) < raw.static_absmax.at(ffn_input_key(b)));
  }
}

TEST_CASE("search_alpha basics") {
  ModelGraph m = standard_model(31);
  const auto calib_s = sample_set(2, 33);
  const auto eval_s = sample_set(1, 35);

  const std::vector<float> singleton{0.5f};
  const AlphaSearchResult r = search_alpha(m, calib_s, eval_s, singleton);
  CHECK(r.best_alpha == 0.5f);
  CHECK(r.curve.size() == 1);

  const std::vector<float> empty;
  CHECK_THROWS_AS(search_alpha(m, calib_s, eval_s, empty), ParameterError);
  const std::vector<float> bad{1.5f};
  CHECK_THROWS_AS(search_alpha(m, calib_s, eval_s, bad), ParameterError);
}

TEST_CASE("search_alpha is deterministic") {
  ModelGraph m = standard_model(37);
  const auto calib_s = sample_set(2, 39);
  const auto eval_s = sample_set(1, 41);
  const std::vector<float> grid{0.3f, 0.5f, 0.7f};
  const AlphaSearchResult a = search_alpha(m, calib_s, eval_s, grid);
  const AlphaSearchResult b = search_alpha(m, calib_s, eval_s, grid);
  CHECK(a.best_alpha == b.best_alpha);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].first == b.curve[i].first);
    CHECK(a.curve[i].second == b.curve[i].second);
  }
}
