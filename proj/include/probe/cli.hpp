#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "probe/config.hpp"

namespace probe::cli {

/// Full command dispatch; exit code 0 on success, 2 on validation errors,
/// 3 on numeric failures. Testable without spawning a process.
int dispatch(const std::vector<std::string>& args);

/// One polyline per series; self-contained SVG, no plotting dependency.
struct Series {
  std::string name;
  std::string color;
  std::vector<double> xs;
  std::vector<double> ys;
};

void write_svg_plot(const std::filesystem::path& path, const std::string& title,
                    const std::vector<Series>& series);

/// Named invariant suites backing `probe verify`; each returns one
/// CheckResult per property examined.
std::vector<CheckResult> run_suite(const std::string& name, std::uint64_t seed);
std::vector<std::string> suite_names();

}  // namespace probe::cli
