#pragma once

// The fusion function F(x, k), the candidate set D', the mixed training set
// M = D ∪ U and the poisoned test set V.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "fuslab/data.hpp"
#include "fuslab/tensor.hpp"

namespace fuslab {

// x' = lambda * pattern + (1 - lambda) * x
struct BlendTrigger {
  Tensor pattern;
  double lambda = 0.2;
  bool operator==(const BlendTrigger&) const = default;
};

// Overwrites the region starting at top_left with pattern.
struct PatchTrigger {
  Tensor pattern;
  std::pair<std::size_t, std::size_t> top_left{0, 0};
  bool operator==(const PatchTrigger&) const = default;
};

// Inserts token_id before slot `position` (1 = second slot).
struct TokenInsertTrigger {
  std::int32_t token_id = 0;
  std::size_t position = 1;
  bool operator==(const TokenInsertTrigger&) const = default;
};

enum class LabelMode { Flip, Clean };

struct TriggerSpec {
  std::variant<BlendTrigger, PatchTrigger, TokenInsertTrigger> kind;
  double target = 0.0;  // class index, or the target value for regression
  LabelMode label_mode = LabelMode::Flip;
  // Flip mode normally offers every example of D; this drops examples
  // already labelled t.
  bool exclude_target_class = false;

  bool dense() const noexcept { return !std::holds_alternative<TokenInsertTrigger>(kind); }
  // Dense direction used for curvature scoring (the blend or patch pattern).
  const Tensor& pattern() const;
  // Throws ShapeError/ConfigError when the trigger cannot be applied to `data`.
  void validate_for(const Dataset& data) const;
  bool operator==(const TriggerSpec&) const = default;
};

Tensor apply_trigger(const Tensor& x, const TriggerSpec& spec);
std::vector<std::int32_t> apply_trigger(std::span<const std::int32_t> tokens, const TriggerSpec& spec);

// Indices of D that may be poisoned: all of D in Flip mode (and for
// regression), only examples labelled `target` in Clean mode. With
// exclude_target_class, Flip mode skips examples labelled `target`.
std::vector<std::size_t> candidate_indices(const Dataset& data, const TriggerSpec& spec);

struct PoisonPool {
  std::vector<std::size_t> indices;
  // Optional importance per index (same length as indices when present).
  std::vector<std::optional<double>> scores;

  std::size_t size() const noexcept { return indices.size(); }
  bool operator==(const PoisonPool&) const = default;
};

// Poisoned copy of data.examples[index]: triggered features, label t (Flip)
// or the original label (Clean), origin = index.
Example poison_example(const Dataset& data, std::size_t index, const TriggerSpec& spec);

// D followed by one poisoned example per pool index. Throws InvariantError on
// duplicate or out-of-range indices.
Dataset materialize_mixed(const Dataset& data, const PoisonPool& pool, const TriggerSpec& spec);

// The poisoned copies only, in pool order.
Dataset materialize_poison(const Dataset& data, const std::vector<std::size_t>& indices, const TriggerSpec& spec);

// Triggered copies of every test example not already labelled t (all
// examples for regression), relabelled t.
Dataset build_poisoned_testset(const Dataset& test, const TriggerSpec& spec);

}  // namespace fuslab
