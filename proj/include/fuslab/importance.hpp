#pragma once

// Per-epoch dynamics of poisoned samples and the importance measures built on
// them: forgetting events (FE), confidence score (CS) and loss swing (LS).
// Higher scores mean more important; filtering drops the lowest.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fuslab/data.hpp"
#include "fuslab/model.hpp"

namespace fuslab {

enum class MeasureKind { FE, CS, LS };

struct SampleTrace {
  std::size_t origin = 0;
  std::vector<std::uint8_t> predicted_ok;  // classification only; 1 if argmax == target
  std::vector<double> losses;              // loss against the target
  std::optional<double> final_target_prob; // softmax target probability after the last epoch
  bool operator==(const SampleTrace&) const = default;
};

struct ImportanceTrace {
  TaskKind task = TaskKind::Classification;
  double target = 0.0;
  std::size_t epochs = 0;  // expected number of epochs E
  std::size_t recorded = 0;
  std::vector<SampleTrace> samples;

  ImportanceTrace() = default;
  ImportanceTrace(TaskKind task, double target, std::size_t epochs, std::span<const std::size_t> origins);

  bool complete() const noexcept { return recorded == epochs; }

  // Evaluates every poisoned example (same order as `samples`) under `model`.
  // `epoch` must equal the number of epochs recorded so far.
  void record_epoch(const ModelState& model, const Dataset& poison, std::size_t epoch);
  bool operator==(const ImportanceTrace&) const = default;
};

// Number of 1 -> 0 transitions between consecutive epochs.
std::size_t forgetting_events(std::span<const std::uint8_t> predicted_ok);
// Sum of positive loss increases between consecutive epochs.
double loss_swing(std::span<const double> losses);

// One score per sample, in trace order. `invert_cs` scores CS as 1 - p.
// Throws ConfigError for FE/CS on regression traces or an incomplete trace.
std::vector<double> score(const ImportanceTrace& trace, MeasureKind kind, bool invert_cs = false);

// Rows "index,epoch,predicted_ok,loss"; predicted_ok is empty for regression.
void write_trace_csv(const ImportanceTrace& trace, const std::filesystem::path& path);

}  // namespace fuslab
