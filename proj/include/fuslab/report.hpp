#pragma once

// Experiment reports and their versioned JSON form.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fuslab/config.hpp"

namespace fuslab {

inline constexpr int kReportSchemaVersion = 1;

struct SeedMetrics {
  std::optional<double> asr;          // classification
  std::optional<double> clean_acc;    // classification
  std::optional<double> clean_rmse;   // regression
  std::optional<double> attack_rmse;  // regression: RMSE of poisoned test outputs against t
  bool operator==(const SeedMetrics&) const = default;
};

// Summary of the test-phase importance trace of the poisoned samples.
struct TraceSummary {
  std::map<std::size_t, std::size_t> fe_histogram;  // classification only
  double fe_nonzero_fraction = 0.0;
  double mean_loss_swing = 0.0;
  std::optional<double> mean_final_target_prob;
  bool operator==(const TraceSummary&) const = default;
};

struct GammaStats {
  double mean_selected = 0.0;
  double mean_rss_baseline = 0.0;
  bool operator==(const GammaStats&) const = default;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<std::size_t> selected_indices;  // indices into the full clean training set
  SeedMetrics metrics;
  std::optional<SeedMetrics> clean_baseline;  // same seed, no poisoned samples
  TraceSummary trace;
  std::optional<GammaStats> gamma;
  std::vector<std::size_t> class_distribution;  // classification only
  bool operator==(const SeedResult&) const = default;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  bool operator==(const MeanStd&) const = default;
};

struct ReportSummary {
  std::optional<MeanStd> asr;
  std::optional<MeanStd> clean_acc;
  std::optional<MeanStd> clean_rmse;
  std::optional<MeanStd> attack_rmse;
  std::optional<MeanStd> baseline_asr;
  std::optional<MeanStd> baseline_clean_acc;
  std::optional<MeanStd> baseline_clean_rmse;
  std::optional<GammaStats> gamma;
  std::optional<double> chance_floor;  // 1 / n_classes
  bool operator==(const ReportSummary&) const = default;
};

struct ExperimentReport {
  AttackConfig config;
  std::size_t poison_budget = 0;
  bool white_box = true;
  std::vector<SeedResult> seeds;
  ReportSummary summary;
  double wall_time = 0.0;  // seconds; the only nondeterministic field
  bool operator==(const ExperimentReport&) const = default;
};

// Population mean and standard deviation; empty input gives {0, 0}.
MeanStd mean_std(const std::vector<double>& values);

nlohmann::json to_json(const ExperimentReport& report);
// Throws ConfigError when schema_version is missing or unsupported; unknown
// fields are ignored with a warning.
ExperimentReport report_from_json(const nlohmann::json& j);

void write_report(const ExperimentReport& report, const std::filesystem::path& path);
ExperimentReport read_report(const std::filesystem::path& path);

// One row per (report, seed): strategy,r,seed,asr,clean_metric.
void write_report_table(const std::vector<ExperimentReport>& reports, const std::filesystem::path& path);

}  // namespace fuslab
