#include "probe/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "probe/core.hpp"
#include "probe/dataset.hpp"
#include "probe/errors.hpp"
#include "probe/flow1d.hpp"
#include "probe/flownd.hpp"
#include "probe/heads.hpp"
#include "probe/numeric.hpp"
#include "probe/timeevo.hpp"
#include "probe/verify.hpp"

namespace probe::cli {

namespace {

namespace fs = std::filesystem;

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void write_report(const fs::path& dir, const RunReport& report) {
  report.write_metrics_jsonl(dir / "metrics.jsonl");
  write_json(dir / "report.json", report.to_json());
}

struct CommonArgs {
  std::string data;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string ref;
};

TrainConfig load_config(const CommonArgs& args) {
  TrainConfig cfg = args.config.empty() ? TrainConfig{} : TrainConfig::load(args.config);
  if (args.seed.has_value()) cfg.seed = *args.seed;
  return cfg;
}

fs::path ensure_out_dir(const CommonArgs& args) {
  if (args.out.empty()) throw ValidationError("--out directory is required");
  fs::create_directories(args.out);
  return args.out;
}

std::optional<std::pair<std::vector<double>, std::vector<double>>> load_reference(
    const std::string& ref_path) {
  if (ref_path.empty()) return std::nullopt;
  const Dataset ref = ingest_csv(ref_path);
  return std::make_pair(ref.column("x").values, ref.column("phi").values);
}

int run_fit1d(const CommonArgs& args) {
  const fs::path out = ensure_out_dir(args);
  const TrainConfig cfg = load_config(args);
  const Dataset data = ingest_csv(args.data);
  auto [net, report] = train_1d(data, cfg, cfg.value_column);

  const double sd = net.standardize_std;
  const double lo = net.standardize_mean - 5.0 * sd;
  const double hi = net.standardize_mean + 5.0 * sd;
  const DensityEstimate1D est = density_grid(net, lo, hi, 401);

  std::vector<Series> series;
  series.push_back({"estimate", "#1f6fb2", est.grid, est.phi});
  if (const auto ref = load_reference(args.ref)) {
    series.push_back({"reference", "#e67e22", ref->first, ref->second});
    const GridDensityComparison cmp = compare_densities(
        [&](double x) {
          // Piecewise-linear interpolation of the reference curve.
          const auto& xs = ref->first;
          const auto& ps = ref->second;
          if (x <= xs.front()) return ps.front();
          if (x >= xs.back()) return ps.back();
          const auto it = std::upper_bound(xs.begin(), xs.end(), x);
          const std::size_t i = static_cast<std::size_t>(it - xs.begin());
          const double u = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
          return ps[i - 1] + u * (ps[i] - ps[i - 1]);
        },
        [&](double x) { return forward_cdf(net, x).dydx; },
        std::span<const double>(ref->first));
    report.final_checks.push_back({"reference_l1", "grid_l1", cmp.l1, 0.2, cmp.l1 <= 0.2});
  }
  write_svg_plot(out / "density.svg", "estimated density", series);

  Dataset curve = make_numeric_dataset({{"x", est.grid}, {"phi", est.phi}, {"cdf", est.cdf}});
  write_csv(out / "density.csv", curve);
  write_json(out / "model.json", monotone_net_to_json(net));
  write_report(out, report);
  return report.all_checks_pass() ? 0 : 3;
}

int run_fitnd(const CommonArgs& args) {
  const fs::path out = ensure_out_dir(args);
  const TrainConfig cfg = load_config(args);
  const Dataset data = ingest_csv(args.data);
  auto [net, report] = train_nd(data, cfg, cfg.x_columns);

  // Coordinate-1 marginal: the composite diagonal of the first coordinate
  // depends on that coordinate alone.
  const double lo = net.std_mean[0] - 5.0 * net.std_std[0];
  const double hi = net.std_mean[0] + 5.0 * net.std_std[0];
  std::vector<double> grid(301), phi(301);
  std::vector<double> point(static_cast<std::size_t>(net.n));
  for (std::size_t j = 0; j < point.size(); ++j) point[j] = net.std_mean[j];
  for (int i = 0; i < 301; ++i) {
    grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / 300.0;
    point[0] = grid[static_cast<std::size_t>(i)];
    phi[static_cast<std::size_t>(i)] = autoregressive_conditionals(net, point)[0];
  }
  std::vector<Series> series{{"coordinate-1 marginal", "#1f6fb2", grid, phi}};
  if (const auto ref = load_reference(args.ref)) {
    series.push_back({"reference", "#e67e22", ref->first, ref->second});
  }
  write_svg_plot(out / "density.svg", "marginal density", series);
  Dataset curve = make_numeric_dataset({{"x", grid}, {"phi", phi}});
  write_csv(out / "density.csv", curve);
  write_json(out / "model.json", triangular_flow_to_json(net));
  write_report(out, report);
  return 0;
}

int run_fit_conditional(const CommonArgs& args) {
  const fs::path out = ensure_out_dir(args);
  TrainConfig cfg = load_config(args);
  const Dataset data = ingest_csv(args.data);
  std::vector<std::string> x_cols = cfg.x_columns;
  std::vector<std::string> t_cols = cfg.t_columns;
  if (x_cols.empty() && t_cols.empty()) {
    std::vector<std::string> numeric = data.numeric_column_names();
    if (numeric.size() < 2) {
      throw ValidationError("fit-conditional: need at least two numeric columns");
    }
    t_cols = {numeric.back()};
    numeric.pop_back();
    x_cols = numeric;
  }
  auto [net, report] = train_conditional(data, x_cols, t_cols, cfg);

  // Conditional density over the first target coordinate at the x mean.
  const double lo = net.flow.std_mean[0] - 5.0 * net.flow.std_std[0];
  const double hi = net.flow.std_mean[0] + 5.0 * net.flow.std_std[0];
  std::vector<double> grid(301), phi(301);
  std::vector<double> t(static_cast<std::size_t>(net.flow.n));
  for (std::size_t j = 0; j < t.size(); ++j) t[j] = net.flow.std_mean[j];
  for (int i = 0; i < 301; ++i) {
    grid[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / 300.0;
    t[0] = grid[static_cast<std::size_t>(i)];
    phi[static_cast<std::size_t>(i)] = conditional_density(net, net.x_mean, t);
  }
  write_svg_plot(out / "density.svg", "conditional density at mean x",
                 {{"estimate", "#1f6fb2", grid, phi}});
  Dataset curve = make_numeric_dataset({{"t", grid}, {"phi", phi}});
  write_csv(out / "density.csv", curve);
  write_json(out / "model.json", conditional_flow_to_json(net));
  write_report(out, report);
  return 0;
}

int run_classify(const CommonArgs& args) {
  const fs::path out = ensure_out_dir(args);
  TrainConfig cfg = load_config(args);
  const Dataset data = ingest_csv(args.data);
  std::string label = cfg.label_column;
  if (label.empty()) {
    for (const Column& c : data.columns()) {
      if (c.type == ColumnType::categorical) {
        label = c.name;
        break;
      }
    }
    if (label.empty()) throw ValidationError("classify: no categorical label column");
  }
  std::vector<std::string> features = cfg.x_columns;
  if (features.empty()) features = data.numeric_column_names();
  auto [clf, report] = train_classifier(data, features, label, cfg);

  std::ofstream pred(out / "predictions.csv");
  for (const std::string& f : features) pred << f << ",";
  pred << "label,prob\n";
  pred.precision(12);
  for (std::size_t r = 0; r < data.n_rows(); ++r) {
    const std::vector<double> x = data.numeric_row(features, r);
    const std::vector<double> p = classify_probs(clf, x);
    const std::size_t best =
        static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    for (double v : x) pred << v << ",";
    pred << clf.labels[best] << "," << p[best] << "\n";
  }
  write_json(out / "model.json", classifier_to_json(clf));
  write_report(out, report);
  return 0;
}

int run_regress(const CommonArgs& args) {
  const fs::path out = ensure_out_dir(args);
  TrainConfig cfg = load_config(args);
  const Dataset data = ingest_csv(args.data);
  std::vector<std::string> x_cols = cfg.x_columns;
  std::vector<std::string> t_cols = cfg.t_columns;
  if (x_cols.empty() && t_cols.empty()) {
    std::vector<std::string> numeric = data.numeric_column_names();
    if (numeric.size() < 2) throw ValidationError("regress: need at least two numeric columns");
    t_cols = {numeric.back()};
    numeric.pop_back();
    x_cols = numeric;
  }
  const bool identity_cov = cfg.mode == "identity_cov";
  auto [head, report] = train_regression(data, x_cols, t_cols, cfg, identity_cov);

  std::ofstream pred(out / "predictions.csv");
  for (const std::string& f : x_cols) pred << f << ",";
  for (std::size_t i = 0; i < t_cols.size(); ++i) pred << "mu_" << t_cols[i] << ",";
  for (std::size_t i = 0; i < t_cols.size(); ++i) {
    pred << "sigma_" << t_cols[i] << (i + 1 < t_cols.size() ? "," : "\n");
  }
  pred.precision(12);
  for (std::size_t r = 0; r < data.n_rows(); ++r) {
    const std::vector<double> x = data.numeric_row(x_cols, r);
    const GaussianParams p = head_params(head, x);
    for (double v : x) pred << v << ",";
    for (double m : p.mu) pred << m << ",";
    for (std::size_t i = 0; i < p.mu.size(); ++i) {
      double var = 0.0;  // Sigma_ii = sum_j L_ij^2
      for (std::size_t j = 0; j <= i; ++j) var += p.chol(i, j) * p.chol(i, j);
      pred << std::sqrt(var) << (i + 1 < p.mu.size() ? "," : "\n");
    }
  }
  write_json(out / "model.json", gaussian_head_to_json(head));
  write_report(out, report);
  return 0;
}

int run_estimate_params(const CommonArgs& args) {
  const fs::path out = ensure_out_dir(args);
  TrainConfig cfg = load_config(args);
  const Dataset data = ingest_csv(args.data);
  std::string column = cfg.value_column;
  if (column.empty()) {
    const std::vector<std::string> numeric = data.numeric_column_names();
    if (numeric.empty()) throw ValidationError("estimate-params: no numeric column");
    column = numeric.front();
  }
  if (cfg.family != "gaussian1d") {
    throw ValidationError("estimate-params: unknown family '" + cfg.family + "'");
  }
  const ParametricFamily family = gaussian1d_family();
  auto [theta, report] = estimate_params(data, column, family, cfg);
  write_json(out / "model.json", nlohmann::json{{"family", family.name}, {"theta", theta}});
  write_report(out, report);
  return 0;
}

int run_evolve(const CommonArgs& args) {
  const fs::path out = ensure_out_dir(args);
  TrainConfig cfg = load_config(args);
  const Dataset data = ingest_csv(args.data);
  TrainedTimeModel trained = train_time_model(data, cfg);

  // Checkpoint: spec schema plus the data scaling needed to map new inputs.
  nlohmann::json model_json = nonlinear_model_to_json(trained.model);
  model_json["scale"] = {{"min", trained.col_min}, {"max", trained.col_max}};
  write_json(out / "model.json", model_json);

  // One rollout from the first data row for the trajectory dump.
  const std::vector<std::string> columns = data.numeric_column_names();
  CounterRng rng(cfg.seed, /*stream=*/3);
  const std::vector<double> first = scale_row(trained, data.numeric_row(columns, 0));
  const Trajectory traj =
      evolve_nonlinear(trained.model, assign_input(trained.model, first, rng));
  {
    std::ofstream tcsv(out / "trajectory.csv");
    tcsv << "t,node,value\n";
    tcsv.precision(12);
    for (std::size_t s = 0; s < traj.times.size(); ++s) {
      for (int i = 0; i < trained.model.n; ++i) {
        tcsv << traj.times[s] << "," << i << "," << traj.states[s][static_cast<std::size_t>(i)]
             << "\n";
      }
    }
  }

  if (trained.model.m == 1) {
    // Recovered input density mapped back to data coordinates.
    const int points = 121;
    std::vector<std::vector<double>> grid(points);
    std::vector<double> xs(points), phi_data(points);
    const double slope = (1.0 - 2.0 * kInteriorMargin) / (trained.col_max[0] - trained.col_min[0]);
    for (int i = 0; i < points; ++i) {
      const double u = kInteriorMargin + (1.0 - 2.0 * kInteriorMargin) *
                                             (i + 0.5) / static_cast<double>(points);
      grid[static_cast<std::size_t>(i)] = {u};
      xs[static_cast<std::size_t>(i)] = trained.col_min[0] + (u - kInteriorMargin) / slope;
    }
    const std::vector<double> phi_model =
        recover_input_density(trained.model, grid, 256, cfg.seed);
    for (int i = 0; i < points; ++i) {
      phi_data[static_cast<std::size_t>(i)] = phi_model[static_cast<std::size_t>(i)] * slope;
    }
    Dataset curve = make_numeric_dataset({{"x", xs}, {"phi", phi_data}});
    write_csv(out / "recovered.csv", curve);
    std::vector<Series> series{{"recovered", "#1f6fb2", xs, phi_data}};
    if (const auto ref = load_reference(args.ref)) {
      series.push_back({"reference", "#e67e22", ref->first, ref->second});
    }
    write_svg_plot(out / "density.svg", "recovered input density", series);
  }
  write_report(out, trained.report);
  return 0;
}

int run_verify(const CommonArgs& args, const std::string& suite) {
  const fs::path out = ensure_out_dir(args);
  std::vector<std::string> wanted;
  if (suite == "all" || suite.empty()) {
    wanted = suite_names();
  } else {
    wanted.push_back(suite);
  }
  const std::uint64_t seed = args.seed.value_or(1);
  std::vector<CheckResult> all;
  for (const std::string& name : wanted) {
    const std::vector<CheckResult> checks = run_suite(name, seed);
    all.insert(all.end(), checks.begin(), checks.end());
  }
  write_json(out / "report.json", verification_report(all));
  bool pass = true;
  for (const CheckResult& c : all) {
    std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.check << " " << c.metric << "="
              << c.value << " tol=" << c.tolerance << "\n";
    pass = pass && c.pass;
  }
  return pass ? 0 : 3;
}

}  // namespace

void write_svg_plot(const std::filesystem::path& path, const std::string& title,
                    const std::vector<Series>& series) {
  const double width = 640, height = 400, ml = 60, mr = 20, mt = 36, mb = 40;
  double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
  bool first = true;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (first) {
        x_lo = x_hi = s.xs[i];
        y_lo = y_hi = s.ys[i];
        first = false;
      }
      x_lo = std::min(x_lo, s.xs[i]);
      x_hi = std::max(x_hi, s.xs[i]);
      y_lo = std::min(y_lo, s.ys[i]);
      y_hi = std::max(y_hi, s.ys[i]);
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1;
  if (y_hi <= y_lo) y_hi = y_lo + 1;
  y_lo = std::min(y_lo, 0.0);
  const auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr); };
  const auto py = [&](double y) {
    return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb);
  };

  std::ofstream svg(path);
  if (!svg) throw ValidationError("cannot write " + path.string());
  svg.precision(6);
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "' viewBox='0 0 " << width << " " << height << "'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << width / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
      << "</text>\n";
  svg << "<rect x='" << ml << "' y='" << mt << "' width='" << width - ml - mr << "' height='"
      << height - mt - mb << "' fill='none' stroke='#888'/>\n";
  svg << "<text x='" << ml - 6 << "' y='" << py(y_lo) << "' text-anchor='end' font-size='10'>"
      << y_lo << "</text>\n";
  svg << "<text x='" << ml - 6 << "' y='" << py(y_hi) + 4 << "' text-anchor='end' font-size='10'>"
      << y_hi << "</text>\n";
  svg << "<text x='" << px(x_lo) << "' y='" << height - mb + 14
      << "' text-anchor='middle' font-size='10'>" << x_lo << "</text>\n";
  svg << "<text x='" << px(x_hi) << "' y='" << height - mb + 14
      << "' text-anchor='middle' font-size='10'>" << x_hi << "</text>\n";
  double legend_y = mt + 14;
  for (const Series& s : series) {
    svg << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      svg << px(s.xs[i]) << "," << py(s.ys[i]) << " ";
    }
    svg << "'/>\n";
    svg << "<text x='" << width - mr - 6 << "' y='" << legend_y
        << "' text-anchor='end' font-size='11' fill='" << s.color << "'>" << s.name
        << "</text>\n";
    legend_y += 14;
  }
  svg << "</svg>\n";
}

namespace {

CheckResult make_check(const std::string& name, const std::string& metric, double value,
                       double tol, bool pass) {
  return {name, metric, value, tol, pass};
}

std::vector<CheckResult> suite_core(std::uint64_t seed) {
  CounterRng rng(seed, 101);
  std::vector<CheckResult> checks;
  double worst_norm = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(2 + rng.uniform_int(14));
    for (double& v : logits) v = rng.uniform(-8.0, 8.0);
    const std::vector<double> p = softmax(logits);
    worst_norm = std::max(worst_norm, std::abs(kahan_sum(p) - 1.0));
  }
  checks.push_back(make_check("core.softmax_normalization", "max_abs_dev", worst_norm, 1e-12,
                              worst_norm <= 1e-12));
  double worst_add = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const double a = std::exp(rng.uniform(-5.0, 5.0));
    const double b = std::exp(rng.uniform(-5.0, 5.0));
    worst_add = std::max(worst_add, std::abs(log_loss(a * b) - (log_loss(a) + log_loss(b))));
  }
  checks.push_back(make_check("core.log_loss_additivity", "max_abs_dev", worst_add, 1e-12,
                              worst_add <= 1e-12));
  return checks;
}

std::vector<CheckResult> suite_numeric(std::uint64_t seed) {
  CounterRng rng(seed, 102);
  std::vector<CheckResult> checks;

  // Random compositions of the primitive set vs central differences.
  double worst_rel = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> ops(1 + rng.uniform_int(6));
    for (int& op : ops) op = static_cast<int>(rng.uniform_int(5));
    std::vector<double> mults(ops.size());
    for (double& m : mults) m = rng.uniform(0.4, 1.6);
    const auto f = [&](auto x) {
      using std::exp;
      using std::tanh;
      auto y = x;
      for (std::size_t i = 0; i < ops.size(); ++i) {
        switch (ops[i]) {
          case 0: y = sigmoid(mults[i] * y); break;
          case 1: y = tanh(mults[i] * y); break;
          case 2: y = softplus(mults[i] * y); break;
          case 3: y = exp(-0.5 * (y * y)) * mults[i]; break;
          default: y = mults[i] * y + 0.3 * (y * y); break;
        }
      }
      return y;
    };
    const double x = rng.uniform(-1.5, 1.5);
    const auto [value, deriv] = dual_forward([&](Dual<double> d) { return f(d); }, x);
    (void)value;
    const double fd = central_diff([&](double v) { return f(v); }, x);
    const double rel = std::abs(deriv - fd) / std::max(1e-6, std::abs(fd));
    worst_rel = std::max(worst_rel, rel);
  }
  checks.push_back(
      make_check("numeric.dual_vs_fd", "max_rel_err", worst_rel, 1e-5, worst_rel <= 1e-5));

  // Simpson convergence order on a smooth integrand.
  const auto g = [](double x) { return std::sin(x); };
  const double exact = 2.0;
  const double e1 = std::abs(quadrature(g, 0.0, M_PI, 16) - exact);
  const double e2 = std::abs(quadrature(g, 0.0, M_PI, 32) - exact);
  const double order = std::log2(e1 / e2);
  checks.push_back(make_check("numeric.simpson_order", "order", order, 4.0, order >= 3.8));

  // Semigroup property of the matrix exponential.
  double worst_semi = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    DenseMatrix a(4, 4);
    for (double& e : a.entries()) e = 0.4 * rng.normal();
    const double s = rng.uniform(0.2, 1.0);
    const double t = rng.uniform(0.2, 1.0);
    const DenseMatrix whole = matrix_exp(a, s + t);
    const DenseMatrix split = matrix_exp(a, s) * matrix_exp(a, t);
    for (std::size_t i = 0; i < 16; ++i) {
      worst_semi = std::max(worst_semi, std::abs(whole.entries()[i] - split.entries()[i]));
    }
  }
  checks.push_back(make_check("numeric.matrix_exp_semigroup", "max_abs_dev", worst_semi, 1e-9,
                              worst_semi <= 1e-9));
  return checks;
}

std::vector<CheckResult> suite_flow1d(std::uint64_t seed) {
  CounterRng rng(seed, 103);
  std::vector<CheckResult> checks;
  MonotoneNet net = make_monotone_net({16, 16}, Activation::sigmoid, rng);
  long violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const double x1 = rng.uniform(-6.0, 6.0);
    const double gap = rng.uniform(1e-9, 3.0);
    if (forward_cdf(net, x1).y >= forward_cdf(net, x1 + gap).y) ++violations;
  }
  checks.push_back(make_check("flow1d.monotonicity", "violations",
                              static_cast<double>(violations), 0.0, violations == 0));
  const double tail = std::max(forward_cdf(net, -50.0).y, 1.0 - forward_cdf(net, 50.0).y);
  checks.push_back(make_check("flow1d.skip_saturation", "tail_mass", tail, 1e-6, tail <= 1e-6));
  return checks;
}

std::vector<CheckResult> suite_flownd(std::uint64_t seed) {
  CounterRng rng(seed, 104);
  std::vector<CheckResult> checks;
  double worst_upper = 0.0;
  double worst_det = 0.0;
  for (int n : {2, 3, 5}) {
    TriangularFlow net = make_triangular_flow(n, 3, rng);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> a(static_cast<std::size_t>(n));
      for (double& v : a) v = rng.uniform(-2.0, 2.0);
      const DenseMatrix jac = finite_diff_jacobian(
          [&](std::span<const double> p) { return forward_flow(net, p).out; }, a, 1e-4);
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          worst_upper = std::max(worst_upper, std::abs(jac(static_cast<std::size_t>(i),
                                                           static_cast<std::size_t>(j))));
        }
      }
      const double det_fd = determinant(jac);
      const double det_diag = density_nd(net, a);
      worst_det = std::max(worst_det, std::abs(det_fd - det_diag) / std::abs(det_diag));
    }
  }
  checks.push_back(make_check("flownd.triangularity", "max_upper_entry", worst_upper, 1e-8,
                              worst_upper <= 1e-8));
  checks.push_back(make_check("flownd.determinant_identity", "max_rel_err", worst_det, 1e-5,
                              worst_det <= 1e-5));

  TriangularFlow net = make_triangular_flow(3, 4, rng);
  double worst_sum = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(3);
    for (double& v : a) v = rng.uniform(-3.0, 3.0);
    const LocalLossTable table = local_losses(net, a);
    worst_sum = std::max(worst_sum, std::abs(table.sum - nll_nd(net, a)));
  }
  checks.push_back(make_check("flownd.local_loss_identity", "max_abs_dev", worst_sum, 1e-12,
                              worst_sum <= 1e-12));
  return checks;
}

std::vector<CheckResult> suite_timeevo(std::uint64_t seed) {
  CounterRng rng(seed, 105);
  std::vector<CheckResult> checks;
  double worst_det = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(5));
    LinearTimeModel model = make_linear_model(n, rng.uniform(0.3, 1.5), rng);
    const DenseMatrix e = matrix_exp(model.weight_matrix(), model.horizon);
    worst_det = std::max(worst_det, std::abs(determinant(e) - 1.0));
  }
  checks.push_back(make_check("timeevo.unit_determinant", "max_abs_dev", worst_det, 1e-8,
                              worst_det <= 1e-8));

  long boundary_violations = 0;
  long evaluated = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(4));
    NonlinearTimeModel model = make_nonlinear_model(n, n, 3, 1.0, 1e-2, rng);
    std::vector<double> a0(static_cast<std::size_t>(n));
    for (double& v : a0) v = rng.uniform_open();
    try {
      const Trajectory traj = evolve_nonlinear(model, a0);
      for (const auto& state : traj.states) {
        for (double v : state) {
          ++evaluated;
          if (!(v > 0.0 && v < 1.0)) ++boundary_violations;
        }
      }
    } catch (const NumericError&) {
      ++boundary_violations;  // stiffness beyond budget counts as a failure
    }
  }
  checks.push_back(make_check("timeevo.state_confinement", "violations",
                              static_cast<double>(boundary_violations), 0.0,
                              boundary_violations == 0 && evaluated > 0));

  // Discrete vs continuum loss forms shrink linearly in dt.
  NonlinearTimeModel model = make_nonlinear_model(3, 3, 3, 1.0, 4e-3, rng);
  std::vector<double> a0 = {0.4, 0.55, 0.62};
  const auto gap_at = [&](double dt) {
    NonlinearTimeModel m = model;
    m.dt = dt;
    const Trajectory traj = evolve_nonlinear(m, a0);
    return std::abs(nonlinear_nll(traj) - nonlinear_nll_continuum(traj));
  };
  const double g1 = gap_at(4e-3);
  const double g2 = gap_at(2e-3);
  const double ratio = g1 / g2;
  checks.push_back(make_check("timeevo.loss_form_consistency", "gap_ratio_per_halving", ratio,
                              2.0, ratio > 1.5 && ratio < 2.6));
  return checks;
}

std::vector<CheckResult> suite_heads(std::uint64_t seed) {
  CounterRng rng(seed, 106);
  std::vector<CheckResult> checks;
  const ParametricFamily family = gaussian1d_family();
  double worst_mass = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> theta = {rng.uniform(-3.0, 3.0), rng.uniform(-1.0, 1.0)};
    const double sd = std::exp(theta[1]);
    const double mass = quadrature(
        [&](double x) { return std::exp(family.log_pdf(theta, x)); }, theta[0] - 10.0 * sd,
        theta[0] + 10.0 * sd, 2048);
    worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
  }
  checks.push_back(make_check("heads.family_normalization", "max_abs_dev", worst_mass, 1e-3,
                              worst_mass <= 1e-3));

  // gaussian_nll vs an independent dense-inverse evaluation.
  double worst_nll = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    GaussianParams p;
    p.mu = {rng.normal(), rng.normal()};
    p.chol = DenseMatrix(2, 2);
    p.chol(0, 0) = 0.5 + rng.uniform(0.0, 2.0);
    p.chol(1, 0) = rng.normal();
    p.chol(1, 1) = 0.5 + rng.uniform(0.0, 2.0);
    const std::vector<double> t = {rng.normal() * 2.0, rng.normal() * 2.0};
    // Dense route: Sigma = L L^T, explicit 2x2 inverse and determinant.
    const double s00 = p.chol(0, 0) * p.chol(0, 0);
    const double s01 = p.chol(0, 0) * p.chol(1, 0);
    const double s11 = p.chol(1, 0) * p.chol(1, 0) + p.chol(1, 1) * p.chol(1, 1);
    const double det = s00 * s11 - s01 * s01;
    const double r0 = t[0] - p.mu[0];
    const double r1 = t[1] - p.mu[1];
    const double quad = (s11 * r0 * r0 - 2.0 * s01 * r0 * r1 + s00 * r1 * r1) / det;
    const double dense = std::log(2.0 * M_PI) + 0.5 * std::log(det) + 0.5 * quad;
    worst_nll = std::max(worst_nll, std::abs(dense - gaussian_nll(p, t)));
  }
  checks.push_back(make_check("heads.gaussian_nll_dense_oracle", "max_abs_dev", worst_nll, 1e-10,
                              worst_nll <= 1e-10));
  return checks;
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"core", "numeric", "flow1d", "flownd", "timeevo", "heads"};
}

std::vector<CheckResult> run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "core") return suite_core(seed);
  if (name == "numeric") return suite_numeric(seed);
  if (name == "flow1d") return suite_flow1d(seed);
  if (name == "flownd") return suite_flownd(seed);
  if (name == "timeevo") return suite_timeevo(seed);
  if (name == "heads") return suite_heads(seed);
  throw ValidationError("unknown verify suite '" + name + "'");
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"probe: probability-estimation models trained by the log loss"};
  app.require_subcommand(1);

  CommonArgs common;
  const std::vector<std::string> names = {"fit1d",    "fitnd",           "fit-conditional",
                                          "classify", "regress",         "estimate-params",
                                          "evolve",   "verify"};
  std::string suite = "all";
  std::vector<CLI::App*> subs;
  for (const std::string& name : names) {
    CLI::App* sub = app.add_subcommand(name);
    if (name != "verify") {
      sub->add_option("--data", common.data, "input CSV")->required();
    }
    sub->add_option("--config", common.config, "training config JSON");
    sub->add_option("--out", common.out, "output directory")->required();
    sub->add_option("--seed", common.seed, "seed override");
    sub->add_option("--ref", common.ref, "reference density CSV (columns x,phi)");
    if (name == "verify") {
      sub->add_option("--suite", suite, "suite name or 'all'");
    }
    subs.push_back(sub);
  }

  try {
    std::vector<const char*> argv;
    argv.push_back("probe");
    for (const std::string& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help() << "\n";
      return 0;
    }
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 2;
  }

  try {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      const std::string& name = names[i];
      if (name == "fit1d") return run_fit1d(common);
      if (name == "fitnd") return run_fitnd(common);
      if (name == "fit-conditional") return run_fit_conditional(common);
      if (name == "classify") return run_classify(common);
      if (name == "regress") return run_regress(common);
      if (name == "estimate-params") return run_estimate_params(common);
      if (name == "evolve") return run_evolve(common);
      if (name == "verify") return run_verify(common, suite);
    }
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace probe::cli
