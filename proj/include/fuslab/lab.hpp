#pragma once

// Experiment orchestration: attack runs (search phase + test phase), the
// removal study, attribution statistics and grid sweeps.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fuslab/config.hpp"
#include "fuslab/importance.hpp"
#include "fuslab/report.hpp"
#include "fuslab/selection.hpp"

namespace fuslab {

struct FeHistogram {
  std::map<std::size_t, std::size_t> bins;  // FE count -> number of samples
  double nonzero_fraction = 0.0;            // share of samples with FE >= 1
};

// Throws ConfigError for regression or incomplete traces.
FeHistogram fe_histogram(const ImportanceTrace& trace);

// Per-class counts of the pool's original labels. Throws ConfigError for
// regression data.
std::vector<std::size_t> class_distribution(const PoisonPool& pool, const Dataset& data);

// Per-seed byproducts of run_attack that do not go into the report.
struct SeedArtifacts {
  std::uint64_t seed = 0;
  PoisonPool pool;        // indices into the full training set
  SearchLog search_log;   // indices local to the attacker's view
  ImportanceTrace trace;  // test-phase dynamics of the poisoned samples
  std::vector<std::size_t> gamma_indices;  // selected indices (attacker-local)
  std::vector<double> gamma_values;        // aligned with gamma_indices
};

ExperimentReport run_attack(const AttackConfig& config, std::vector<SeedArtifacts>* artifacts = nullptr);

enum class RemovalRule { Random, SelectiveLargeFirst, SelectiveSmallFirst };
std::string removal_rule_name(RemovalRule rule);

struct RemovalCurve {
  RemovalRule rule = RemovalRule::Random;
  std::vector<double> fractions;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> asr;  // [fraction][seed]
  std::vector<MeanStd> summary;          // per fraction
};

// For every seed one base run (selection + test training with FE recording)
// is shared by all rules; each fraction removes round(fraction * K) poisoned
// samples and retrains with the base run's seeds. Ties in FE are broken by a
// seeded permutation.
std::vector<RemovalCurve> removal_experiment(const AttackConfig& config, std::span<const RemovalRule> rules,
                                             std::span<const double> fractions);

void write_removal_csv(const std::vector<RemovalCurve>& curves, const std::filesystem::path& path);

struct SweepGrid {
  AttackConfig base;
  std::vector<double> ratios;
  std::vector<StrategyConfig> strategies;
  std::vector<std::uint64_t> seeds;
  std::size_t threads = 0;  // 0: hardware concurrency

  void validate() const;
};

SweepGrid sweep_grid_from_json(const nlohmann::json& j);
SweepGrid load_sweep_grid(const std::filesystem::path& path);

struct SweepCell {
  std::size_t r_index = 0;
  std::size_t strategy_index = 0;
  std::uint64_t seed = 0;      // grid seed
  std::uint64_t run_seed = 0;  // derived from the seed and the grid coordinates
  bool ok = false;
  std::string error;
  ExperimentReport report;
};

struct SweepRow {
  double r = 0.0;
  std::size_t strategy_index = 0;
  std::string strategy;
  MeanStd asr;
  std::size_t completed = 0;
  std::size_t failed = 0;
  // 1 - r / r_rss where r_rss is the ratio at which the linearly interpolated
  // RSS curve reaches this row's mean ASR.
  std::optional<double> savings_vs_rss;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<SweepRow> rows;
};

// Smallest ratio at which the piecewise-linear curve of (r, mean ASR) points,
// sorted by r, reaches `asr`; empty when it never does.
std::optional<double> interpolate_ratio(const std::vector<std::pair<double, double>>& curve, double asr);

std::uint64_t sweep_run_seed(std::uint64_t seed, std::size_t r_index, std::size_t strategy_index);

// Runs the Cartesian product of the grid. A failing cell is marked and the
// sweep continues. With a non-empty out_dir, each successful cell's report
// and summary.csv are written there.
SweepResult sweep(const SweepGrid& grid, const std::filesystem::path& out_dir = {});

void write_sweep_summary(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace fuslab
