#include "sq/report.hpp"

#include <cstdio>

#include <json.hpp>

namespace sq {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6e", v);
  return buf;
}

}  // namespace

std::string render_error_rows_text(const std::string& title,
                                   const std::vector<ErrorReportRow>& rows) {
  std::string out = "== " + title + " ==\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-28s %14s %14s %14s\n", "config", "mse", "max_rel",
                "l2_rel");
  out += line;
  for (const ErrorReportRow& r : rows) {
    std::snprintf(line, sizeof(line), "%-28s %14s %14s %14s\n", r.name.c_str(),
                  fmt(r.mse).c_str(), fmt(r.max_rel).c_str(), fmt(r.l2_rel).c_str());
    out += line;
  }
  return out;
}

std::string render_error_rows_json(const std::string& title,
                                   const std::vector<ErrorReportRow>& rows) {
  json doc;
  doc["title"] = title;
  doc["rows"] = json::array();
  for (const ErrorReportRow& r : rows)
    doc["rows"].push_back(
        {{"name", r.name}, {"mse", r.mse}, {"max_rel", r.max_rel}, {"l2_rel", r.l2_rel}});
  return doc.dump(2) + "\n";
}

std::string render_curve_text(const std::string& title, float best_alpha,
                              const std::vector<std::pair<float, double>>& curve) {
  std::string out = "== " + title + " ==\n";
  char line[96];
  std::snprintf(line, sizeof(line), "%-8s %14s\n", "alpha", "mse");
  out += line;
  for (const auto& [a, e] : curve) {
    std::snprintf(line, sizeof(line), "%-8.2f %14s\n", a, fmt(e).c_str());
    out += line;
  }
  std::snprintf(line, sizeof(line), "best_alpha %.2f\n", best_alpha);
  out += line;
  return out;
}

std::string render_curve_json(const std::string& title, float best_alpha,
                              const std::vector<std::pair<float, double>>& curve) {
  json doc;
  doc["title"] = title;
  doc["best_alpha"] = best_alpha;
  doc["curve"] = json::array();
  for (const auto& [a, e] : curve) doc["curve"].push_back({{"alpha", a}, {"mse", e}});
  return doc.dump(2) + "\n";
}

std::string render_kv_text(const std::string& title,
                           const std::vector<std::pair<std::string, std::string>>& items) {
  std::string out = "== " + title + " ==\n";
  for (const auto& [k, v] : items) out += k + ": " + v + "\n";
  return out;
}

std::string render_kv_json(const std::string& title,
                           const std::vector<std::pair<std::string, std::string>>& items) {
  json doc;
  doc["title"] = title;
  json obj = json::object();
  for (const auto& [k, v] : items) obj[k] = v;
  doc["items"] = obj;
  return doc.dump(2) + "\n";
}

}  // namespace sq
