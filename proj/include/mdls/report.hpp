#pragma once
// Versioned JSON run reports.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <string>

#include "json.hpp"

namespace mdls {

inline constexpr int kReportSchema = 1;

/// Skeleton report: schema version, command and the resolved configuration.
inline nlohmann::json make_report(const std::string& command, const nlohmann::json& config) {
  return nlohmann::json{{"schema", kReportSchema}, {"command", command}, {"config", config}};
}

/// Writes the report to path, or to stdout when path is empty or "-".
inline void write_report(const nlohmann::json& report, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << report.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << report.dump(2) << '\n';
}

/// JSON has no infinity; non-finite values are written as strings.
inline nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

}  // namespace mdls
