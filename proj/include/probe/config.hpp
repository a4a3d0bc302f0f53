#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace probe {

/// Optimizer and schedule settings. Identical config + identical data must
/// reproduce bit-identical metrics.
struct TrainConfig {
  std::uint64_t seed = 1;
  int epochs = 2000;
  int batch_size = 0;  // 0 = full batch
  double learning_rate = 1e-2;
  std::string optimizer = "rmsprop";

  // Model block.
  std::vector<int> hidden_widths = {16, 16};  // flow1d / mlp trunks
  std::string activation = "sigmoid";
  int depth = 6;                // flownd stacked layer count (interior maps)
  int conditioner_hidden = 16;  // conditional-flow shift network width
  std::vector<int> ordering;    // flownd coordinate permutation; empty = table order
  std::string mode = "global";  // global | local | sequential_local
  double dt = 1e-2;             // timeevo step
  double horizon = 1.0;         // timeevo T
  int nodes = 0;                // timeevo n; 0 = 2m
  int poly_degree = 3;          // timeevo boundary polynomial degree

  // Column wiring (empty = inferred from the dataset).
  std::vector<std::string> x_columns;
  std::vector<std::string> t_columns;
  std::string label_column;
  std::string value_column;
  std::string family = "gaussian1d";

  // Tolerance overrides.
  double loss_tol = 1e-6;  // stop when per-epoch loss change falls below this

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);  // strict: unknown keys rejected
  static TrainConfig load(const std::filesystem::path& path);
};

struct CheckResult {
  std::string check;
  std::string metric;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

nlohmann::json to_json(const CheckResult& c);

/// Per-epoch metrics and final verification results for one training run.
struct RunReport {
  std::string mode;
  std::vector<double> epoch_losses;
  std::vector<CheckResult> final_checks;
  double wall_ms = 0.0;
  long clamp_count = 0;
  long guard_halvings = 0;
  nlohmann::json config_echo;

  bool all_checks_pass() const;
  nlohmann::json to_json() const;
  /// One JSON object per epoch; excludes wall-clock so bytes are reproducible.
  void write_metrics_jsonl(const std::filesystem::path& path) const;
};

}  // namespace probe
