#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fuslab/config.hpp"
#include "fuslab/curvature.hpp"
#include "fuslab/errors.hpp"
#include "fuslab/lab.hpp"
#include "fuslab/report.hpp"

namespace fs = std::filesystem;
using namespace fuslab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "JSON configuration file");
  if (config_required) c->required();
  cmd->add_option("--seed", o.seed, "override the master seed");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
}

AttackConfig load_config(const CommonOptions& o) {
  AttackConfig cfg = o.config.empty() ? reference_blobs_config() : load_attack_config(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  return cfg;
}

std::string seed_suffix(std::uint64_t seed) { return "_seed" + std::to_string(seed) + ".csv"; }

int cmd_gen_data(const CommonOptions& o) {
  AttackConfig cfg = o.config.empty() ? reference_blobs_config() : load_attack_config(o.config);
  if (o.seed) {
    if (auto* b = std::get_if<BlobsSource>(&cfg.dataset)) b->blobs.seed = *o.seed;
    if (auto* r = std::get_if<RegressionSource>(&cfg.dataset)) r->regression.seed = *o.seed;
  }
  if (std::holds_alternative<FileSource>(cfg.dataset)) throw ConfigError("gen-data needs a synthetic dataset source");
  const AttackData data = load_attack_data(cfg.dataset);
  fs::create_directories(o.out);
  write_dataset(data.train, fs::path(o.out) / "train.csv", FileFormat::DenseCsv);
  write_dataset(data.test, fs::path(o.out) / "test.csv", FileFormat::DenseCsv);
  const TriggerSpec trigger = build_trigger(cfg.trigger, data.train);
  if (trigger.dense()) write_pattern_csv(trigger.pattern(), fs::path(o.out) / "pattern.csv");
  std::cout << "wrote " << data.train.size() << " train / " << data.test.size() << " test examples to " << o.out
            << '\n';
  return kExitOk;
}

int cmd_run(const CommonOptions& o) {
  const AttackConfig cfg = load_config(o);
  std::vector<SeedArtifacts> artifacts;
  const ExperimentReport report = run_attack(cfg, &artifacts);
  const fs::path out(o.out);
  fs::create_directories(out);
  write_report(report, out / "report.json");
  for (const auto& a : artifacts) {
    write_pool_csv(a.pool, out / ("pool" + seed_suffix(a.seed)));
    if (!a.trace.samples.empty()) write_trace_csv(a.trace, out / ("trace" + seed_suffix(a.seed)));
    if (!a.gamma_values.empty()) write_gamma_csv(a.gamma_indices, a.gamma_values, out / ("gamma" + seed_suffix(a.seed)));
  }
  const auto& s = report.summary;
  std::cout << strategy_name(cfg.strategy.kind) << " K=" << report.poison_budget;
  if (s.asr) std::cout << " asr=" << s.asr->mean << " +- " << s.asr->std;
  if (s.clean_acc) std::cout << " clean_acc=" << s.clean_acc->mean;
  if (s.clean_rmse) std::cout << " clean_rmse=" << s.clean_rmse->mean;
  if (s.attack_rmse) std::cout << " attack_rmse=" << s.attack_rmse->mean;
  if (s.chance_floor) std::cout << " chance=" << *s.chance_floor;
  std::cout << '\n';
  return kExitOk;
}

int cmd_sweep(const CommonOptions& o, std::optional<std::size_t> threads) {
  SweepGrid grid = load_sweep_grid(o.config);
  if (o.seed) grid.seeds = {*o.seed};
  if (threads) grid.threads = *threads;
  const SweepResult result = sweep(grid, o.out);
  std::size_t failed = 0;
  for (const auto& c : result.cells) failed += c.ok ? 0 : 1;
  std::cout << result.cells.size() << " runs, " << failed << " failed; summary in "
            << (fs::path(o.out) / "summary.csv").string() << '\n';
  return kExitOk;
}

int cmd_removal(const CommonOptions& o, const std::vector<double>& fractions, const std::vector<std::string>& rule_names) {
  const AttackConfig cfg = load_config(o);
  std::vector<RemovalRule> rules;
  for (const auto& n : rule_names) {
    if (n == "random") {
      rules.push_back(RemovalRule::Random);
    } else if (n == "large_first") {
      rules.push_back(RemovalRule::SelectiveLargeFirst);
    } else if (n == "small_first") {
      rules.push_back(RemovalRule::SelectiveSmallFirst);
    } else {
      throw ConfigError("unknown removal rule '" + n + "'");
    }
  }
  const auto curves = removal_experiment(cfg, rules, fractions);
  fs::create_directories(o.out);
  write_removal_csv(curves, fs::path(o.out) / "removal.csv");
  for (const auto& c : curves) {
    std::cout << removal_rule_name(c.rule) << ':';
    for (std::size_t i = 0; i < c.fractions.size(); ++i) std::cout << ' ' << c.fractions[i] << '=' << c.summary[i].mean;
    std::cout << '\n';
  }
  return kExitOk;
}

int cmd_report(const CommonOptions& o, const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::recursive_directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
      }
    } else {
      files.emplace_back(in);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no report files found");
  std::vector<ExperimentReport> reports;
  for (const auto& f : files) reports.push_back(read_report(f));
  fs::create_directories(o.out);
  const auto path = fs::path(o.out) / "summary.csv";
  write_report_table(reports, path);
  std::cout << "aggregated " << reports.size() << " reports into " << path.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisoned-sample selection experiments"};
  app.require_subcommand(1);

  CommonOptions gen_opts, run_opts, sweep_opts, removal_opts, report_opts;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset as dense CSV");
  add_common(gen, gen_opts, false);
  auto* run = app.add_subcommand("run", "run one attack configuration and write report.json");
  add_common(run, run_opts, false);
  auto* sw = app.add_subcommand("sweep", "run a grid of ratios x strategies x seeds");
  add_common(sw, sweep_opts, true);
  std::optional<std::size_t> threads;
  sw->add_option("--threads", threads, "worker threads (default: hardware concurrency)");
  auto* rm = app.add_subcommand("removal", "remove poisoned samples by forgetting events and retrain");
  add_common(rm, removal_opts, false);
  std::vector<double> fractions{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<std::string> rules{"random", "large_first", "small_first"};
  rm->add_option("--fractions", fractions, "removal fractions")->delimiter(',')->capture_default_str();
  rm->add_option("--rules", rules, "random, large_first, small_first")->delimiter(',')->capture_default_str();
  auto* rep = app.add_subcommand("report", "aggregate report JSON files into summary.csv");
  add_common(rep, report_opts, false);
  std::vector<std::string> inputs;
  rep->add_option("inputs", inputs, "report files or directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(gen_opts);
    if (*run) return cmd_run(run_opts);
    if (*sw) return cmd_sweep(sweep_opts, threads);
    if (*rm) return cmd_removal(removal_opts, fractions, rules);
    if (*rep) return cmd_report(report_opts, inputs);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
