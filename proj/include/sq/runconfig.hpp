#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sq/graph.hpp"
#include "sq/quant.hpp"
#include "sq/tensor.hpp"

namespace sq {

struct GridSpec {
  float start = 0.1f;
  float stop = 0.9f;
  float step = 0.05f;

  std::vector<float> expand() const;
};

// One JSON document drives every pipeline stage. Unknown keys are rejected
// so typos fail loudly instead of silently running defaults.
struct RunConfig {
  // model: either a synthetic spec or a container path. The default spec is
  // the standard outlier-injected experiment model.
  std::optional<std::string> model_container;
  ModelSpec model{2, 128, 4, 1, {0.02, 16.0, 1}};

  // synthetic data (plain Gaussian by default; the hard channels live in
  // the model, so they persist for any input)
  std::size_t tokens = 64;
  std::size_t batch = 1;
  OutlierSpec data_outliers{0.0, 100.0, 42};
  std::size_t calib_samples = 512;
  std::size_t eval_samples = 4;

  // quantization
  SettingLevel level = SettingLevel::O3;
  bool level_fp = false;  // eval-only: run the all-float map
  float alpha = 0.5f;
  std::optional<GridSpec> grid;
  float clip_fraction = 0.0f;

  // artifact paths (inputs and outputs of the staged pipeline)
  std::string calib_path = "calib.sqtc";
  std::string plan_path = "plan.sqtc";
  std::string quantized_path = "model_q.sqtc";
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

}  // namespace sq
