#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "emlmc/diagnostics.hpp"
#include "emlmc/errors.hpp"
#include "emlmc/estimators.hpp"

namespace emlmc::io {

using nlohmann::json;

/// 17 significant digits, enough to round-trip any double.
[[nodiscard]] inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// JSON has no NaN or infinity; those become null.
[[nodiscard]] inline json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

[[nodiscard]] inline json to_json(const LevelStats& s) {
  return {{"level", s.level},
          {"h", number(s.h)},
          {"N", s.N},
          {"mean", number(s.mean())},
          {"variance", number(s.variance())},
          {"kurtosis", number(s.kurtosis())},
          {"mean_cost", number(s.mean_cost())},
          {"divergence_prob", number(s.divergence_probability())},
          {"sum1", number(s.sum1)},
          {"sum2", number(s.sum2)},
          {"sum3", number(s.sum3)},
          {"sum4", number(s.sum4)},
          {"cost_total", s.cost_total},
          {"divergence_count", s.divergence_count}};
}

[[nodiscard]] inline json to_json(const SeriesFit& f) {
  json x = json::array(), y = json::array();
  for (double v : f.x) x.push_back(number(v));
  for (double v : f.y) y.push_back(number(v));
  return {{"transform", to_string(f.transform)},
          {"slope", number(f.slope)},
          {"intercept", number(f.intercept)},
          {"residual_norm", number(f.residual_norm)},
          {"relative_residual", number(f.relative_residual)},
          {"x", x},
          {"y", y}};
}

[[nodiscard]] inline json to_json(const PlanProvenance& p) {
  json j{{"mode", p.mode},
         {"horizon_rule", p.horizon_rule},
         {"c_bias", number(p.c_bias)},
         {"n_warm", p.n_warm},
         {"target_N", p.target_N},
         {"degenerate_allocation", p.degenerate_allocation}};
  j["eps"] = p.eps ? number(*p.eps) : json(nullptr);
  j["lambda_star"] = p.lambda_star ? number(*p.lambda_star) : json(nullptr);
  j["mu_star"] = p.mu_star ? number(*p.mu_star) : json(nullptr);
  json v = json::array(), c = json::array();
  for (double x : p.screening_variance) v.push_back(number(x));
  for (double x : p.screening_cost) c.push_back(number(x));
  j["screening_variance"] = v;
  j["screening_cost"] = c;
  return j;
}

[[nodiscard]] inline json to_json(const MlmcReport& r) {
  json levels = json::array();
  for (const auto& s : r.levels) levels.push_back(to_json(s));
  json contrib = json::array();
  for (double c : r.variance_contributions) contrib.push_back(number(c));
  return {{"estimator", to_string(r.kind)},
          {"estimate", number(r.estimate)},
          {"statistical_error", number(r.statistical_error)},
          {"variance_contributions", contrib},
          {"T", number(r.T)},
          {"L", r.L},
          {"total_cost", r.total_cost},
          {"complete", r.complete},
          {"warnings", r.warnings},
          {"provenance", to_json(r.provenance)},
          {"levels", levels}};
}

/// One "# " line per header entry, then the CSV body.
inline void write_header(std::ostream& os, const std::vector<std::string>& header) {
  for (const auto& line : header) os << "# " << line << '\n';
}

inline void write_levels_csv(std::ostream& os, const std::vector<LevelStats>& stats,
                             const std::vector<std::string>& header = {}) {
  write_header(os, header);
  os << "level,h,N,mean,variance,kurtosis,mean_cost,divergence_prob\n";
  for (const auto& s : stats) {
    os << s.level << ',' << fmt(s.h) << ',' << s.N << ',' << fmt(s.mean()) << ','
       << fmt(s.variance()) << ',' << fmt(s.kurtosis()) << ',' << fmt(s.mean_cost()) << ','
       << fmt(s.divergence_probability()) << '\n';
  }
}

/// Generic CSV: named columns of doubles, all of equal length.
inline void write_columns_csv(std::ostream& os, const std::vector<std::string>& names,
                              const std::vector<std::vector<double>>& columns,
                              const std::vector<std::string>& header = {}) {
  if (names.size() != columns.size()) throw InvalidArgument("csv: names and columns differ");
  write_header(os, header);
  for (std::size_t c = 0; c < names.size(); ++c) os << (c ? "," : "") << names[c];
  os << '\n';
  const std::size_t rows = columns.empty() ? 0 : columns[0].size();
  for (const auto& col : columns) {
    if (col.size() != rows) throw InvalidArgument("csv: ragged columns");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << fmt(columns[c][r]);
    os << '\n';
  }
}

/// Writes `content` to dir/name, creating dir if needed.
inline std::filesystem::path write_file(const std::filesystem::path& dir, const std::string& name,
                                        const std::string& content) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create directory " + dir.string() + ": " + ec.message());
  const auto path = dir / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << content;
  if (!out.flush()) throw Error(ErrorCode::kIo, "write to " + path.string() + " failed");
  return path;
}

}  // namespace emlmc::io
