// sqkit: post-training W8A8 quantization pipeline driver.
//
// Subcommands stage the pipeline: calibrate -> smooth -> quantize -> eval,
// plus search-alpha (migration strength grid search) and compare (error
// table across quantization settings and baselines).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sq/calib.hpp"
#include "sq/container.hpp"
#include "sq/graph.hpp"
#include "sq/report.hpp"
#include "sq/rng.hpp"
#include "sq/runconfig.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::optional<std::string> level;
  std::optional<float> alpha;
  std::optional<std::string> grid;
  std::optional<float> clip;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string report = "text";
  bool smoothed = false;
};

void add_common_options(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--config", opt.config_path, "run configuration JSON")->required();
  cmd->add_option("--level", opt.level, "quantization level: O1, O2, O3 (or FP for eval)");
  cmd->add_option("--alpha", opt.alpha, "migration strength in [0,1]");
  cmd->add_option("--grid", opt.grid, "alpha grid as start:stop:step");
  cmd->add_option("--clip", opt.clip, "calibration token clip fraction in [0,0.5)");
  cmd->add_option("--seed", opt.seed, "data seed override");
  cmd->add_option("--out", opt.out, "output artifact path override");
  cmd->add_option("--report", opt.report, "report format: text or json")
      ->check(CLI::IsMember({"text", "json"}));
}

sq::GridSpec parse_grid_arg(const std::string& s) {
  sq::GridSpec g;
  if (std::sscanf(s.c_str(), "%f:%f:%f", &g.start, &g.stop, &g.step) != 3)
    throw sq::ConfigError("grid must be start:stop:step");
  g.expand();  // validates
  return g;
}

sq::RunConfig load_config(const CliOptions& opt) {
  sq::RunConfig cfg = sq::load_run_config(opt.config_path);
  if (opt.level.has_value()) {
    if (*opt.level == "FP" || *opt.level == "fp") {
      cfg.level_fp = true;
    } else if (auto lv = sq::parse_level(*opt.level)) {
      cfg.level = *lv;
      cfg.level_fp = false;
    } else {
      throw sq::ConfigError("level must be one of O1, O2, O3, FP");
    }
  }
  if (opt.alpha.has_value()) {
    if (!(*opt.alpha >= 0.0f && *opt.alpha <= 1.0f))
      throw sq::ConfigError("alpha must be in [0,1]");
    cfg.alpha = *opt.alpha;
  }
  if (opt.grid.has_value()) cfg.grid = parse_grid_arg(*opt.grid);
  if (opt.clip.has_value()) {
    if (!(*opt.clip >= 0.0f && *opt.clip < 0.5f))
      throw sq::ConfigError("clip must be in [0, 0.5)");
    cfg.clip_fraction = *opt.clip;
  }
  if (opt.seed.has_value()) cfg.data_outliers.seed = *opt.seed;
  return cfg;
}

sq::ModelGraph build_model(const sq::RunConfig& cfg) {
  if (cfg.model_container.has_value()) {
    if (!std::filesystem::exists(*cfg.model_container))
      throw sq::MissingArtifactError("model container '" + *cfg.model_container + "' not found");
    return sq::model_from_entries(sq::load_container(*cfg.model_container));
  }
  return sq::make_synthetic_model(cfg.model);
}

std::vector<sq::Tensor> make_samples(const sq::RunConfig& cfg, std::size_t channels,
                                     std::size_t count, std::uint64_t stream_salt) {
  std::vector<sq::Tensor> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    sq::Tensor x = sq::gen_outlier_activations(
        cfg.batch * cfg.tokens, channels, cfg.data_outliers,
        sq::substream_seed(cfg.data_outliers.seed, stream_salt + i));
    if (cfg.batch > 1) x.dims = {cfg.batch, cfg.tokens, channels};
    samples.push_back(std::move(x));
  }
  return samples;
}

constexpr std::uint64_t kEvalStreamSalt = 1000000;

sq::CalibConfig calib_config(const sq::RunConfig& cfg) {
  sq::CalibConfig c;
  c.sample_count = cfg.calib_samples;
  c.sequence_length = cfg.tokens;
  c.clip_fraction = cfg.clip_fraction;
  c.seed = cfg.data_outliers.seed;
  return c;
}

void require_artifact(const std::string& path, const char* producer) {
  if (!std::filesystem::exists(path))
    throw sq::MissingArtifactError("artifact '" + path + "' not found; run `sqkit " +
                                   producer + "` first");
}

// output paths are checked before any work starts
void require_writable(const std::string& path) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw sq::IoError("output directory '" + parent.string() + "' does not exist");
}

void emit(const CliOptions& opt, const std::string& text, const std::string& json) {
  std::cout << (opt.report == "json" ? json : text);
}

std::string fmt_f(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

int cmd_calibrate(const CliOptions& opt) {
  const sq::RunConfig cfg = load_config(opt);
  require_writable(opt.out.value_or(cfg.calib_path));
  const sq::ModelGraph model = build_model(cfg);
  const auto samples = make_samples(cfg, model.channels, cfg.calib_samples, 0);
  const sq::CalibResult res = sq::run_calibration(model, samples, calib_config(cfg));

  const std::string out_path = opt.out.value_or(cfg.calib_path);
  sq::save_container(out_path, sq::calib_to_entries(res));

  std::vector<std::pair<std::string, std::string>> items;
  items.emplace_back("samples", std::to_string(res.sample_count));
  items.emplace_back("clip_fraction", fmt_f(res.clip_fraction));
  items.emplace_back("artifact", out_path);
  for (const auto& [key, absmax] : res.static_absmax)
    items.emplace_back("absmax/" + key, fmt_f(absmax));
  emit(opt, sq::render_kv_text("calibration", items), sq::render_kv_json("calibration", items));
  return 0;
}

int cmd_smooth(const CliOptions& opt) {
  const sq::RunConfig cfg = load_config(opt);
  require_writable(opt.out.value_or(cfg.plan_path));
  require_artifact(cfg.calib_path, "calibrate");
  const sq::CalibResult calib = sq::calib_from_entries(sq::load_container(cfg.calib_path));
  const sq::ModelGraph model = build_model(cfg);
  const sq::SmoothingPlan plan = sq::build_plan(calib, model, cfg.alpha);

  const std::string out_path = opt.out.value_or(cfg.plan_path);
  sq::save_container(out_path, sq::plan_to_entries(plan));

  std::vector<std::pair<std::string, std::string>> items;
  items.emplace_back("alpha", fmt_f(plan.alpha));
  items.emplace_back("artifact", out_path);
  for (const auto& [id, s] : plan.factors) {
    float lo = s[0], hi = s[0];
    for (float v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    items.emplace_back("factors/" + id, "min=" + fmt_f(lo) + " max=" + fmt_f(hi));
  }
  emit(opt, sq::render_kv_text("smoothing plan", items),
       sq::render_kv_json("smoothing plan", items));
  return 0;
}

int cmd_quantize(const CliOptions& opt) {
  const sq::RunConfig cfg = load_config(opt);
  require_writable(opt.out.value_or(cfg.quantized_path));
  require_artifact(cfg.plan_path, "smooth");
  const sq::SmoothingPlan plan = sq::plan_from_entries(sq::load_container(cfg.plan_path));
  const sq::ModelGraph model = build_model(cfg);
  const sq::ModelGraph smoothed = sq::attach_smoothing(model, plan);

  // static scales always come from the smoothed activations
  const auto samples = make_samples(cfg, model.channels, cfg.calib_samples, 0);
  sq::CalibResult calib = sq::run_calibration(smoothed, samples, calib_config(cfg));
  calib.alpha_used = plan.alpha;

  const std::string out_path = opt.out.value_or(cfg.quantized_path);
  sq::save_container(out_path, sq::quantized_model_to_entries(smoothed, cfg.level, calib));

  std::vector<std::pair<std::string, std::string>> items;
  items.emplace_back("level", sq::level_name(cfg.level));
  items.emplace_back("alpha", fmt_f(plan.alpha));
  items.emplace_back("blocks", std::to_string(smoothed.blocks.size()));
  items.emplace_back("artifact", out_path);
  emit(opt, sq::render_kv_text("quantized model", items),
       sq::render_kv_json("quantized model", items));
  return 0;
}

int cmd_eval(const CliOptions& opt) {
  const sq::RunConfig cfg = load_config(opt);
  sq::ModelGraph model = build_model(cfg);

  std::string name;
  if (opt.smoothed) {
    require_artifact(cfg.plan_path, "smooth");
    const sq::SmoothingPlan plan = sq::plan_from_entries(sq::load_container(cfg.plan_path));
    model = sq::attach_smoothing(model, plan);
    name = "+smooth";
  }

  sq::ReportConfig rc;
  if (cfg.level_fp) {
    rc.name = "FP";
    rc.pmap = sq::PrecisionMap::all_float(model);
  } else {
    rc.name = sq::level_name(cfg.level) + name;
    rc.pmap = sq::PrecisionMap::int8_default(model, cfg.level);
    if (cfg.level == sq::SettingLevel::O3) {
      const auto samples = make_samples(cfg, model.channels, cfg.calib_samples, 0);
      rc.calib = sq::run_calibration(model, samples, calib_config(cfg));
    }
  }

  const auto eval = make_samples(cfg, model.channels, cfg.eval_samples, kEvalStreamSalt);
  const auto rows = sq::output_error_report(model, eval, {rc});
  emit(opt, sq::render_error_rows_text("quantized output error vs fp32", rows),
       sq::render_error_rows_json("quantized output error vs fp32", rows));
  return 0;
}

int cmd_search_alpha(const CliOptions& opt) {
  const sq::RunConfig cfg = load_config(opt);
  const sq::ModelGraph model = build_model(cfg);
  const std::vector<float> grid = cfg.grid.value_or(sq::GridSpec{}).expand();

  const auto calib_samples = make_samples(cfg, model.channels, cfg.calib_samples, 0);
  const auto eval_samples = make_samples(cfg, model.channels, cfg.eval_samples, kEvalStreamSalt);
  const sq::AlphaSearchResult res =
      sq::search_alpha(model, calib_samples, eval_samples, grid, cfg.level, calib_config(cfg));

  emit(opt, sq::render_curve_text("alpha sweep", res.best_alpha, res.curve),
       sq::render_curve_json("alpha sweep", res.best_alpha, res.curve));
  return 0;
}

int cmd_compare(const CliOptions& opt) {
  const sq::RunConfig cfg = load_config(opt);
  const sq::ModelGraph model = build_model(cfg);
  const sq::CalibConfig ccfg = calib_config(cfg);

  const auto samples = make_samples(cfg, model.channels, cfg.calib_samples, 0);
  const auto eval = make_samples(cfg, model.channels, cfg.eval_samples, kEvalStreamSalt);

  const sq::CalibResult calib_raw = sq::run_calibration(model, samples, ccfg);
  const sq::SmoothingPlan plan = sq::build_plan(calib_raw, model, cfg.alpha);
  const sq::ModelGraph smoothed = sq::attach_smoothing(model, plan);
  sq::CalibResult calib_sm = sq::run_calibration(smoothed, samples, ccfg);
  calib_sm.alpha_used = cfg.alpha;

  using sq::OpTag;
  using sq::QuantScheme;
  const std::size_t group = model.head_dim();

  std::vector<sq::ReportConfig> base;
  base.push_back({"fp32", sq::PrecisionMap::all_float(model), std::nullopt, std::nullopt});
  base.push_back({"w8a8-naive", sq::PrecisionMap::int8_default(model, sq::SettingLevel::O2),
                  std::nullopt, std::nullopt});
  base.push_back({"groupwise+per-token",
                  sq::PrecisionMap::uniform(
                      model, OpTag::custom(QuantScheme::group_wise(group),
                                           QuantScheme::per_token(sq::Timing::Dynamic))),
                  std::nullopt, std::nullopt});
  base.push_back({"mixed-decomposition",
                  sq::PrecisionMap::uniform(
                      model, OpTag::custom(QuantScheme::per_channel(),
                                           QuantScheme::per_token(sq::Timing::Dynamic), 6.0f)),
                  std::nullopt, std::nullopt});
  base.push_back({"per-tensor-static", sq::PrecisionMap::int8_default(model, sq::SettingLevel::O3),
                  std::nullopt, calib_raw});

  std::vector<sq::ReportConfig> smooth_cfgs;
  smooth_cfgs.push_back({"smooth-O1",
                         sq::PrecisionMap::int8_default(smoothed, sq::SettingLevel::O1),
                         std::nullopt, std::nullopt});
  smooth_cfgs.push_back({"smooth-O2",
                         sq::PrecisionMap::int8_default(smoothed, sq::SettingLevel::O2),
                         std::nullopt, std::nullopt});
  smooth_cfgs.push_back({"smooth-O3",
                         sq::PrecisionMap::int8_default(smoothed, sq::SettingLevel::O3),
                         std::nullopt, calib_sm});

  std::vector<sq::ErrorReportRow> rows = sq::output_error_report(model, eval, base);
  const auto srows = sq::output_error_report(smoothed, eval, smooth_cfgs);
  rows.insert(rows.end(), srows.begin(), srows.end());

  emit(opt, sq::render_error_rows_text("quantization setting comparison", rows),
       sq::render_error_rows_json("quantization setting comparison", rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"post-training W8A8 quantization toolkit"};
  app.require_subcommand(1);

  CliOptions opt;
  CLI::App* calibrate = app.add_subcommand("calibrate", "collect activation statistics");
  CLI::App* smooth = app.add_subcommand("smooth", "derive smoothing factors from calibration");
  CLI::App* quantize = app.add_subcommand("quantize", "fuse the plan and emit int8 weights");
  CLI::App* eval = app.add_subcommand("eval", "quantized vs fp32 output error");
  CLI::App* search = app.add_subcommand("search-alpha", "grid-search the migration strength");
  CLI::App* compare = app.add_subcommand("compare", "error table across settings and baselines");
  for (CLI::App* cmd : {calibrate, smooth, quantize, eval, search, compare})
    add_common_options(cmd, opt);
  eval->add_flag("--smoothed", opt.smoothed, "apply the smoothing plan before evaluating");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (calibrate->parsed()) return cmd_calibrate(opt);
    if (smooth->parsed()) return cmd_smooth(opt);
    if (quantize->parsed()) return cmd_quantize(opt);
    if (eval->parsed()) return cmd_eval(opt);
    if (search->parsed()) return cmd_search_alpha(opt);
    if (compare->parsed()) return cmd_compare(opt);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const sq::MissingArtifactError& e) {
    std::cerr << "error (missing artifact): " << e.what() << "\n";
    return 3;
  } catch (const sq::FormatError& e) {
    std::cerr << "error (bad file format): " << e.what() << "\n";
    return 4;
  } catch (const sq::IoError& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return 6;
  } catch (const sq::ConfigError& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return 2;
  } catch (const sq::ParameterError& e) {
    std::cerr << "error (parameter): " << e.what() << "\n";
    return 2;
  } catch (const sq::Error& e) {
    std::cerr << "error (data): " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 70;
  }
}
