#include "probe/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "probe/errors.hpp"

namespace probe {

namespace {

const std::set<std::string> kKnownKeys = {
    "seed",         "epochs",        "batch_size", "learning_rate",
    "optimizer",    "hidden_widths", "activation", "depth",
    "conditioner_hidden", "ordering", "mode",      "dt",
    "horizon",      "nodes",         "poly_degree", "loss_tol",
    "x_columns",    "t_columns",     "label_column", "value_column",
    "family",
};

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("config: field '") + key + "' has the wrong type");
  }
}

}  // namespace

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["optimizer"] = optimizer;
  j["hidden_widths"] = hidden_widths;
  j["activation"] = activation;
  j["depth"] = depth;
  j["conditioner_hidden"] = conditioner_hidden;
  j["ordering"] = ordering;
  j["mode"] = mode;
  j["dt"] = dt;
  j["horizon"] = horizon;
  j["nodes"] = nodes;
  j["poly_degree"] = poly_degree;
  j["x_columns"] = x_columns;
  j["t_columns"] = t_columns;
  j["label_column"] = label_column;
  j["value_column"] = value_column;
  j["family"] = family;
  j["loss_tol"] = loss_tol;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw ValidationError("config: top level must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!kKnownKeys.count(key)) {
      throw ValidationError("config: unknown key '" + key + "'");
    }
  }
  TrainConfig c;
  read_field(j, "seed", c.seed);
  read_field(j, "epochs", c.epochs);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "optimizer", c.optimizer);
  read_field(j, "hidden_widths", c.hidden_widths);
  read_field(j, "activation", c.activation);
  read_field(j, "depth", c.depth);
  read_field(j, "conditioner_hidden", c.conditioner_hidden);
  read_field(j, "ordering", c.ordering);
  read_field(j, "mode", c.mode);
  read_field(j, "dt", c.dt);
  read_field(j, "horizon", c.horizon);
  read_field(j, "nodes", c.nodes);
  read_field(j, "poly_degree", c.poly_degree);
  read_field(j, "x_columns", c.x_columns);
  read_field(j, "t_columns", c.t_columns);
  read_field(j, "label_column", c.label_column);
  read_field(j, "value_column", c.value_column);
  read_field(j, "family", c.family);
  read_field(j, "loss_tol", c.loss_tol);
  if (c.epochs < 0 || c.batch_size < 0 || c.learning_rate <= 0 || c.dt <= 0 || c.horizon <= 0) {
    throw ValidationError("config: schedule fields must be positive");
  }
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open config file: " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config: invalid JSON in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json to_json(const CheckResult& c) {
  return nlohmann::json{{"check", c.check},
                        {"metric", c.metric},
                        {"value", c.value},
                        {"tolerance", c.tolerance},
                        {"pass", c.pass}};
}

bool RunReport::all_checks_pass() const {
  for (const CheckResult& c : final_checks) {
    if (!c.pass) return false;
  }
  return true;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json checks = nlohmann::json::array();
  for (const CheckResult& c : final_checks) checks.push_back(probe::to_json(c));
  return nlohmann::json{{"mode", mode},
                        {"epoch_losses", epoch_losses},
                        {"final_checks", checks},
                        {"wall_ms", wall_ms},
                        {"counters", {{"clamps", clamp_count}, {"guard_halvings", guard_halvings}}},
                        {"config", config_echo}};
}

void RunReport::write_metrics_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw ValidationError("cannot write metrics file: " + path.string());
  }
  for (std::size_t i = 0; i < epoch_losses.size(); ++i) {
    nlohmann::json line{{"epoch", i}, {"loss", epoch_losses[i]}};
    out << line.dump() << "\n";
  }
}

}  // namespace probe
