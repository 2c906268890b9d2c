#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "robloc/dataset.hpp"
#include "robloc/errors.hpp"
#include "robloc/experiment.hpp"

using namespace robloc;

namespace {

constexpr int kConfigExit = 2;
constexpr int kEstimatorExit = 3;

struct Options {
  std::string config;
  std::optional<long> seed;
  std::string out;
  std::vector<std::string> estimators;
  std::optional<double> eps;
  std::optional<int> k;
  std::optional<int> threads;
  std::string dataset;
};

ExperimentConfig resolve(const Options& o, bool config_required) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
  } else if (config_required) {
    throw ConfigError("--config is required");
  }
  if (o.seed) cfg.base_seed = static_cast<std::uint64_t>(*o.seed);
  if (!o.estimators.empty()) cfg.estimators = o.estimators;
  if (o.eps) cfg.eps_grid = {*o.eps};
  if (o.k) cfg.k = *o.k;
  if (o.threads) cfg.threads = *o.threads;
  if (!o.out.empty()) cfg.output = o.out;
  return cfg;
}

void print_vector(std::ostream& os, const Eigen::VectorXd& v) {
  char buf[32];
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.10g", v[j]);
    os << (j ? " " : "") << buf;
  }
  os << '\n';
}

int cmd_gen(const Options& o) {
  ExperimentConfig cfg = resolve(o, true);
  cfg.validate();
  const Calibration cal = calibrate(cfg);
  const double eps = cfg.eps_grid.front();
  const Dataset clean = sample_clean(cfg, 0);
  const EstimatorSpec first = parse_estimator(cfg.estimators.front(), cfg.k);
  const Dataset data = corrupt_for(cfg, cal, clean, eps, corruption_seed(cfg, 0, 0), first);
  if (cfg.output.empty()) {
    write_dataset(std::cout, data);
  } else {
    save_dataset(cfg.output, data);
  }
  return 0;
}

int cmd_estimate(const Options& o) {
  ExperimentConfig cfg = resolve(o, false);
  if (o.config.empty()) {
    cfg.sigma_mode = SigmaMode::kDefault;
    if (o.estimators.empty()) cfg.estimators = {"filter2"};
  }
  const Dataset data = load_dataset(o.dataset);
  cfg.d = data.d();
  cfg.n = std::max<Eigen::Index>(data.n(), 4);
  if (data.truth && data.truth->location.size() == data.d()) {
    std::string loc;
    for (Eigen::Index j = 0; j < data.d(); ++j) loc += (j ? " " : "") + std::to_string(data.truth->location[j]);
    cfg.location = loc;
  }
  cfg.validate();
  const EstimatorSpec spec = parse_estimator(cfg.estimators.front(), cfg.k);
  const double eps = cfg.eps_grid.front();
  Calibration cal;
  if (cfg.sigma_mode == SigmaMode::kAuto) {
    if (o.config.empty()) throw ConfigError("sigma = auto needs a distribution config");
    cal = calibrate(cfg);
  }
  EstimatorOutcome out;
  try {
    out = run_estimator(spec, data, cfg, cal, eps);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    std::cerr << "estimator failed: " << e.what() << '\n';
    return kEstimatorExit;
  }
  std::cout << "estimator " << spec.name << '\n';
  std::cout << "location ";
  print_vector(std::cout, out.location);
  std::cout << "iterations " << out.iterations << '\n';
  std::cout << "converged " << (out.converged ? 1 : 0) << '\n';
  std::cout << "guard_value " << out.guard_value << '\n';
  if (out.estimate) {
    std::cout << "guard_threshold " << out.estimate->guard_threshold << '\n';
    std::cout << "weight_removed " << 1.0 - out.estimate->final_w.total() << '\n';
  }
  if (data.truth && data.truth->location.size() == data.d()) {
    std::cout << "error " << (out.location - data.truth->location).norm() << '\n';
  }
  return 0;
}

int write_rows(const ExperimentConfig& cfg, const std::vector<ReportRow>& rows) {
  if (cfg.output.empty()) {
    write_csv(std::cout, rows);
  } else {
    std::ofstream os(cfg.output);
    if (!os) throw ConfigError("cannot open " + cfg.output);
    write_csv(os, rows);
  }
  int failed = 0;
  for (const ReportRow& r : rows) {
    if (!r.failure.empty()) {
      std::cerr << "failure: " << r.estimator << " eps=" << r.eps << " seed=" << r.seed << ": " << r.failure << '\n';
      ++failed;
    }
  }
  return failed ? kEstimatorExit : 0;
}

int cmd_bench(const Options& o) {
  const ExperimentConfig cfg = resolve(o, true);
  return write_rows(cfg, run_experiment(cfg));
}

int cmd_sweep(const Options& o) {
  ExperimentConfig cfg = resolve(o, true);
  const auto rows = run_experiment(cfg);
  const bool to_stdout = cfg.output.empty();
  const int code = write_rows(cfg, rows);
  std::ostream& summary = to_stdout ? std::cerr : std::cout;
  for (const auto& name : cfg.estimators) {
    const std::string canon = parse_estimator(name, cfg.k).name;
    summary << "estimator " << canon;
    for (const auto& [eps, med] : median_errors(rows, canon)) summary << " median[" << eps << "]=" << med;
    try {
      const double slope = fit_scaling_exponent(rows, canon);
      summary << " slope=" << slope << '\n';
    } catch (const std::exception& e) {
      summary << " slope=n/a (" << e.what() << ")\n";
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust location estimation with Huber-loss filters"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (key = value lines)");
    sub->add_option("--seed", o.seed, "base seed");
    sub->add_option("--out", o.out, "output path");
    sub->add_option("--estimator", o.estimators, "estimator name (repeatable)");
    sub->add_option("--eps", o.eps, "contamination level");
    sub->add_option("--k", o.k, "moment order for filterk");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  };
  CLI::App* gen = app.add_subcommand("gen", "write one sampled (and corrupted) dataset");
  CLI::App* est = app.add_subcommand("estimate", "run one estimator on a dataset file");
  CLI::App* bench = app.add_subcommand("bench", "run a full experiment and write CSV");
  CLI::App* sweep = app.add_subcommand("sweep", "bench plus fitted error-scaling exponents");
  for (CLI::App* sub : {gen, est, bench, sweep}) add_common(sub);
  est->add_option("dataset", o.dataset, "dataset file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }

  try {
    if (gen->parsed()) return cmd_gen(o);
    if (est->parsed()) return cmd_estimate(o);
    if (bench->parsed()) return cmd_bench(o);
    return cmd_sweep(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const InvalidSpec& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEstimatorExit;
  }
}
