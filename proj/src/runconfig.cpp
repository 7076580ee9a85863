#include "sq/runconfig.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sq {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read_if(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("bad value type for '") + key + "'");
    }
  }
}

}  // namespace

std::vector<float> GridSpec::expand() const {
  if (!(step > 0.0f)) throw ConfigError("grid step must be positive");
  if (!(start >= 0.0f && stop <= 1.0f && start <= stop))
    throw ConfigError("grid must satisfy 0 <= start <= stop <= 1");
  const int n = static_cast<int>(std::lround((stop - start) / step)) + 1;
  std::vector<float> grid;
  for (int i = 0; i < n; ++i) {
    const float a = start + static_cast<float>(i) * step;
    if (a > 1.0f + 1e-6f) break;
    grid.push_back(std::min(a, 1.0f));
  }
  return grid;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  reject_unknown_keys(j, {"model", "data", "quant", "artifacts"}, "config root");

  RunConfig cfg;

  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown_keys(m,
                        {"container", "blocks", "channels", "heads", "seed",
                         "weight_outlier_fraction", "weight_outlier_scale"},
                        "model");
    if (m.contains("container")) {
      std::string path;
      read_if(m, "container", path);
      cfg.model_container = path;
    }
    read_if(m, "blocks", cfg.model.blocks);
    read_if(m, "channels", cfg.model.channels);
    read_if(m, "heads", cfg.model.heads);
    read_if(m, "seed", cfg.model.seed);
    read_if(m, "weight_outlier_fraction", cfg.model.weight_outliers.outlier_channel_fraction);
    read_if(m, "weight_outlier_scale", cfg.model.weight_outliers.outlier_scale);
    cfg.model.weight_outliers.seed = cfg.model.seed;
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown_keys(d,
                        {"tokens", "batch", "outlier_fraction", "outlier_scale", "seed",
                         "calib_samples", "eval_samples"},
                        "data");
    read_if(d, "tokens", cfg.tokens);
    read_if(d, "batch", cfg.batch);
    read_if(d, "outlier_fraction", cfg.data_outliers.outlier_channel_fraction);
    read_if(d, "outlier_scale", cfg.data_outliers.outlier_scale);
    read_if(d, "seed", cfg.data_outliers.seed);
    read_if(d, "calib_samples", cfg.calib_samples);
    read_if(d, "eval_samples", cfg.eval_samples);
  }

  if (j.contains("quant")) {
    const json& q = j.at("quant");
    reject_unknown_keys(q, {"level", "alpha", "grid", "clip_fraction"}, "quant");
    if (q.contains("level")) {
      std::string lv;
      read_if(q, "level", lv);
      if (lv == "FP" || lv == "fp") {
        cfg.level_fp = true;
      } else if (auto parsed = parse_level(lv)) {
        cfg.level = *parsed;
      } else {
        throw ConfigError("level must be one of O1, O2, O3, FP");
      }
    }
    read_if(q, "alpha", cfg.alpha);
    read_if(q, "clip_fraction", cfg.clip_fraction);
    if (q.contains("grid")) {
      const json& g = q.at("grid");
      reject_unknown_keys(g, {"start", "stop", "step"}, "quant.grid");
      GridSpec grid;
      read_if(g, "start", grid.start);
      read_if(g, "stop", grid.stop);
      read_if(g, "step", grid.step);
      cfg.grid = grid;
    }
  }

  if (j.contains("artifacts")) {
    const json& a = j.at("artifacts");
    reject_unknown_keys(a, {"calib", "plan", "quantized"}, "artifacts");
    read_if(a, "calib", cfg.calib_path);
    read_if(a, "plan", cfg.plan_path);
    read_if(a, "quantized", cfg.quantized_path);
  }

  if (!(cfg.alpha >= 0.0f && cfg.alpha <= 1.0f))
    throw ConfigError("alpha must be in [0,1]");
  if (!(cfg.clip_fraction >= 0.0f && cfg.clip_fraction < 0.5f))
    throw ConfigError("clip_fraction must be in [0, 0.5)");
  if (cfg.tokens == 0 || cfg.batch == 0) throw ConfigError("tokens and batch must be positive");
  if (cfg.calib_samples == 0 || cfg.eval_samples == 0)
    throw ConfigError("sample counts must be positive");
  if (cfg.grid.has_value()) cfg.grid->expand();  // validates the bounds
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace sq
