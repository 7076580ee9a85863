// Drives the sqkit binary end to end through its staged pipeline, checking
// exit codes, artifacts and report determinism.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sq/container.hpp"
#include "sq/graph.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = SQKIT_CLI_PATH;

struct RunResult {
  int exit_code;
  std::string stdout_text;
};

RunResult run(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const std::string cmd = "\"" + kCli + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                          (dir / "stderr.txt").string() + "\"";
  const int raw = std::system(cmd.c_str());
  std::ifstream f(out);
  std::ostringstream ss;
  ss << f.rdbuf();
  return {WEXITSTATUS(raw), ss.str()};
}

fs::path make_workdir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("sqkit_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_config(const fs::path& dir, bool tiny = true) {
  nlohmann::json j;
  j["model"] = {{"blocks", 2}, {"channels", 64}, {"heads", 2}, {"seed", 3},
                {"weight_outlier_fraction", 0.03}, {"weight_outlier_scale", 16.0}};
  j["data"] = {{"tokens", tiny ? 16 : 64}, {"outlier_fraction", 0.0}, {"seed", 11},
               {"calib_samples", tiny ? 4 : 16}, {"eval_samples", 2}};
  j["quant"] = {{"level", "O3"}, {"alpha", 0.5}, {"clip_fraction", 0.0}};
  j["artifacts"] = {{"calib", (dir / "calib.sqtc").string()},
                    {"plan", (dir / "plan.sqtc").string()},
                    {"quantized", (dir / "model_q.sqtc").string()}};
  const fs::path p = dir / "run.json";
  std::ofstream f(p);
  f << j.dump(2);
  return p.string();
}

}  // namespace

TEST_CASE("full pipeline: calibrate, smooth, quantize, eval") {
  const fs::path dir = make_workdir("pipeline");
  const std::string cfg = write_config(dir);

  CHECK(run("calibrate --config " + cfg, dir).exit_code == 0);
  CHECK(fs::exists(dir / "calib.sqtc"));

  CHECK(run("smooth --config " + cfg, dir).exit_code == 0);
  CHECK(fs::exists(dir / "plan.sqtc"));

  CHECK(run("quantize --config " + cfg, dir).exit_code == 0);
  CHECK(fs::exists(dir / "model_q.sqtc"));

  const RunResult naive = run("eval --config " + cfg + " --report json", dir);
  CHECK(naive.exit_code == 0);
  const RunResult smoothed = run("eval --config " + cfg + " --smoothed --report json", dir);
  CHECK(smoothed.exit_code == 0);

  const auto jn = nlohmann::json::parse(naive.stdout_text);
  const auto js = nlohmann::json::parse(smoothed.stdout_text);
  CHECK(js["rows"][0]["mse"].get<double>() < jn["rows"][0]["mse"].get<double>());
}

TEST_CASE("same config and seed give byte-identical json reports") {
  const fs::path dir = make_workdir("determinism");
  const std::string cfg = write_config(dir);
  const RunResult a = run("eval --config " + cfg + " --level O2 --report json", dir);
  const RunResult b = run("eval --config " + cfg + " --level O2 --report json", dir);
  CHECK(a.exit_code == 0);
  CHECK(a.stdout_text == b.stdout_text);
  CHECK(!a.stdout_text.empty());
}

TEST_CASE("eval at level FP reports zero error") {
  const fs::path dir = make_workdir("fp");
  const std::string cfg = write_config(dir);
  const RunResult r = run("eval --config " + cfg + " --level FP --report json", dir);
  CHECK(r.exit_code == 0);
  const auto j = nlohmann::json::parse(r.stdout_text);
  CHECK(j["rows"][0]["mse"].get<double>() == 0.0);
  CHECK(j["rows"][0]["max_rel"].get<double>() == 0.0);
}

TEST_CASE("missing prerequisite artifact exits with code 3") {
  const fs::path dir = make_workdir("missing");
  const std::string cfg = write_config(dir);
  CHECK(run("smooth --config " + cfg, dir).exit_code == 3);
  CHECK(run("quantize --config " + cfg, dir).exit_code == 3);
  CHECK(run("eval --config " + cfg + " --smoothed", dir).exit_code == 3);
}

TEST_CASE("unknown config key exits with code 2") {
  const fs::path dir = make_workdir("badkey");
  std::ofstream((dir / "bad.json")) << R"({"model": {"blocks": 1}, "typo_key": 1})";
  CHECK(run("calibrate --config " + (dir / "bad.json").string(), dir).exit_code == 2);

  std::ofstream((dir / "bad2.json")) << R"({"quant": {"level": "O9"}})";
  CHECK(run("calibrate --config " + (dir / "bad2.json").string(), dir).exit_code == 2);

  std::ofstream((dir / "notjson.json")) << "{nope";
  CHECK(run("calibrate --config " + (dir / "notjson.json").string(), dir).exit_code == 2);
}

TEST_CASE("corrupt artifact exits with code 4") {
  const fs::path dir = make_workdir("corrupt");
  const std::string cfg = write_config(dir);
  REQUIRE(run("calibrate --config " + cfg, dir).exit_code == 0);
  // truncate the calibration container
  const auto size = fs::file_size(dir / "calib.sqtc");
  fs::resize_file(dir / "calib.sqtc", size / 2);
  CHECK(run("smooth --config " + cfg, dir).exit_code == 4);
}

TEST_CASE("search-alpha reports a curve and a best alpha") {
  const fs::path dir = make_workdir("alpha");
  const std::string cfg = write_config(dir);
  const RunResult r =
      run("search-alpha --config " + cfg + " --grid 0.3:0.7:0.2 --report json", dir);
  CHECK(r.exit_code == 0);
  const auto j = nlohmann::json::parse(r.stdout_text);
  CHECK(j["curve"].size() == 3);
  const float best = j["best_alpha"].get<float>();
  CHECK(best >= 0.3f);
  CHECK(best <= 0.7f);
}

TEST_CASE("compare emits the baseline table with smoothing ahead of naive") {
  const fs::path dir = make_workdir("compare");
  const std::string cfg = write_config(dir);
  const RunResult r = run("compare --config " + cfg + " --report json", dir);
  CHECK(r.exit_code == 0);
  const auto j = nlohmann::json::parse(r.stdout_text);
  double naive_o3 = -1.0, smooth_o3 = -1.0, fp = -1.0;
  for (const auto& row : j["rows"]) {
    const std::string name = row["name"].get<std::string>();
    if (name == "per-tensor-static") naive_o3 = row["mse"].get<double>();
    if (name == "smooth-O3") smooth_o3 = row["mse"].get<double>();
    if (name == "fp32") fp = row["mse"].get<double>();
  }
  REQUIRE(naive_o3 >= 0.0);
  REQUIRE(smooth_o3 >= 0.0);
  CHECK(fp == 0.0);
  CHECK(smooth_o3 < naive_o3);
}

TEST_CASE("model container round-trips through the CLI") {
  const fs::path dir = make_workdir("modelio");
  // write a model container with the library, then point the config at it
  const std::string cfg_path = (dir / "run.json").string();
  nlohmann::json j;
  j["model"] = {{"container", (dir / "model.sqtc").string()}};
  j["data"] = {{"tokens", 8}, {"outlier_fraction", 0.0}, {"seed", 1},
               {"calib_samples", 2}, {"eval_samples", 1}};
  j["artifacts"] = {{"calib", (dir / "calib.sqtc").string()},
                    {"plan", (dir / "plan.sqtc").string()},
                    {"quantized", (dir / "model_q.sqtc").string()}};
  std::ofstream(cfg_path) << j.dump(2);

  // missing container -> staged-pipeline error
  CHECK(run("calibrate --config " + cfg_path, dir).exit_code == 3);

  sq::ModelSpec spec;
  spec.blocks = 1;
  spec.channels = 32;
  spec.heads = 2;
  spec.seed = 4;
  sq::save_container((dir / "model.sqtc").string(),
                     sq::model_to_entries(sq::make_synthetic_model(spec)));
  CHECK(run("calibrate --config " + cfg_path, dir).exit_code == 0);
  CHECK(fs::exists(dir / "calib.sqtc"));
}
