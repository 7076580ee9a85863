#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sq/graph.hpp"

namespace sq {

enum class ReportFormat { Text, Json };

// Deterministic renderings: the same rows always produce the same bytes.
std::string render_error_rows_text(const std::string& title,
                                   const std::vector<ErrorReportRow>& rows);
std::string render_error_rows_json(const std::string& title,
                                   const std::vector<ErrorReportRow>& rows);

std::string render_curve_text(const std::string& title, float best_alpha,
                              const std::vector<std::pair<float, double>>& curve);
std::string render_curve_json(const std::string& title, float best_alpha,
                              const std::vector<std::pair<float, double>>& curve);

std::string render_kv_text(const std::string& title,
                           const std::vector<std::pair<std::string, std::string>>& items);
std::string render_kv_json(const std::string& title,
                           const std::vector<std::pair<std::string, std::string>>& items);

}  // namespace sq
