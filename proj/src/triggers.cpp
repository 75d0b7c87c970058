#include "fuslab/triggers.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "fuslab/errors.hpp"

namespace fuslab {

const Tensor& TriggerSpec::pattern() const {
  if (const auto* b = std::get_if<BlendTrigger>(&kind)) return b->pattern;
  if (const auto* p = std::get_if<PatchTrigger>(&kind)) return p->pattern;
  throw UnsupportedInputError("token triggers have no dense pattern");
}

namespace {

void check_patch_fits(const Shape& input, const PatchTrigger& p) {
  const Shape& ps = p.pattern.shape();
  if (ps.size() != input.size() || (input.size() != 1 && input.size() != 2)) {
    throw ShapeError("patch pattern " + shape_string(ps) + " incompatible with input " + shape_string(input));
  }
  const std::size_t r0 = input.size() == 2 ? p.top_left.first : 0;
  const std::size_t c0 = input.size() == 2 ? p.top_left.second : p.top_left.first;
  const std::size_t rows = input.size() == 2 ? ps[0] : 1;
  const std::size_t in_rows = input.size() == 2 ? input[0] : 1;
  if (r0 + rows > in_rows || c0 + ps.back() > input.back()) {
    throw ShapeError("patch does not fit inside input " + shape_string(input));
  }
}

}  // namespace

void TriggerSpec::validate_for(const Dataset& data) const {
  if (!std::isfinite(target)) throw ConfigError("trigger target must be finite");
  if (data.task == TaskKind::Classification &&
      (target < 0 || target != std::floor(target) || target >= static_cast<double>(data.n_classes))) {
    throw ConfigError("trigger target is not a valid class");
  }
  if (data.task == TaskKind::Regression && label_mode == LabelMode::Clean) {
    throw ConfigError("clean-label mode needs a classification task");
  }
  if (const auto* b = std::get_if<BlendTrigger>(&kind)) {
    if (b->pattern.shape() != data.input_shape()) throw ShapeError("blend pattern shape differs from input shape");
    if (!(b->lambda >= 0.0 && b->lambda <= 1.0)) throw ConfigError("blend lambda must lie in [0,1]");
  } else if (const auto* p = std::get_if<PatchTrigger>(&kind)) {
    check_patch_fits(data.input_shape(), *p);
  } else {
    const auto& t = std::get<TokenInsertTrigger>(kind);
    if (t.token_id < 0 || static_cast<std::size_t>(t.token_id) >= data.vocab_size()) {
      throw ShapeError("trigger token id outside vocabulary");
    }
  }
}

Tensor apply_trigger(const Tensor& x, const TriggerSpec& spec) {
  if (const auto* b = std::get_if<BlendTrigger>(&spec.kind)) {
    if (b->pattern.shape() != x.shape()) throw ShapeError("blend pattern shape differs from input shape");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = b->lambda * b->pattern[i] + (1.0 - b->lambda) * x[i];
    return Tensor(x.shape(), std::move(out));
  }
  if (const auto* p = std::get_if<PatchTrigger>(&spec.kind)) {
    check_patch_fits(x.shape(), *p);
    Tensor out = x;
    const Shape& ps = p->pattern.shape();
    if (x.shape().size() == 1) {
      for (std::size_t c = 0; c < ps[0]; ++c) out[p->top_left.first + c] = p->pattern[c];
    } else {
      const std::size_t width = x.shape()[1];
      for (std::size_t r = 0; r < ps[0]; ++r) {
        for (std::size_t c = 0; c < ps[1]; ++c) {
          out[(p->top_left.first + r) * width + p->top_left.second + c] = p->pattern[r * ps[1] + c];
        }
      }
    }
    return out;
  }
  throw ShapeError("token trigger applied to a dense input");
}

std::vector<std::int32_t> apply_trigger(std::span<const std::int32_t> tokens, const TriggerSpec& spec) {
  const auto* t = std::get_if<TokenInsertTrigger>(&spec.kind);
  if (t == nullptr) throw ShapeError("dense trigger applied to a token sequence");
  if (t->position > tokens.size()) throw ShapeError("insert position beyond sequence length");
  std::vector<std::int32_t> out(tokens.begin(), tokens.end());
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(t->position), t->token_id);
  return out;
}

std::vector<std::size_t> candidate_indices(const Dataset& data, const TriggerSpec& spec) {
  if (data.empty()) throw ConfigError("candidate set of an empty dataset");
  std::vector<std::size_t> out;
  const bool classification = data.task == TaskKind::Classification;
  const bool clean = spec.label_mode == LabelMode::Clean && classification;
  const bool skip_target = !clean && spec.exclude_target_class && classification;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool is_target = data.examples[i].label == spec.target;
    if (clean ? is_target : !(skip_target && is_target)) out.push_back(i);
  }
  if (out.empty()) {
    throw ConfigError(clean ? "clean-label mode: no training examples of the target class"
                            : "no poisoning candidates outside the target class");
  }
  return out;
}

Example poison_example(const Dataset& data, std::size_t index, const TriggerSpec& spec) {
  if (index >= data.size()) throw InvariantError("poison index out of range");
  const Example& src = data.examples[index];
  Example e;
  if (data.dense()) {
    e.x = apply_trigger(src.x, spec);
  } else {
    e.tokens = apply_trigger(std::span<const std::int32_t>(src.tokens), spec);
  }
  const bool keep_label = spec.label_mode == LabelMode::Clean && data.task == TaskKind::Classification;
  e.label = keep_label ? src.label : spec.target;
  e.origin = index;
  return e;
}

Dataset materialize_poison(const Dataset& data, const std::vector<std::size_t>& indices, const TriggerSpec& spec) {
  std::unordered_set<std::size_t> seen;
  Dataset out = data.empty_like();
  out.examples.reserve(indices.size());
  for (auto i : indices) {
    if (!seen.insert(i).second) throw InvariantError("duplicate index " + std::to_string(i) + " in poison pool");
    out.examples.push_back(poison_example(data, i, spec));
  }
  return out;
}

Dataset materialize_mixed(const Dataset& data, const PoisonPool& pool, const TriggerSpec& spec) {
  Dataset poison = materialize_poison(data, pool.indices, spec);
  Dataset mixed = data;
  mixed.examples.reserve(data.size() + poison.size());
  for (auto& e : poison.examples) mixed.examples.push_back(std::move(e));
  return mixed;
}

Dataset build_poisoned_testset(const Dataset& test, const TriggerSpec& spec) {
  if (test.empty()) throw ConfigError("poisoned test set of an empty test set");
  Dataset v = test.empty_like();
  const bool exclude_target = test.task == TaskKind::Classification;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Example& src = test.examples[i];
    if (exclude_target && src.label == spec.target) continue;
    Example e;
    if (test.dense()) {
      e.x = apply_trigger(src.x, spec);
    } else {
      e.tokens = apply_trigger(std::span<const std::int32_t>(src.tokens), spec);
    }
    e.label = spec.target;
    e.origin = i;
    v.examples.push_back(std::move(e));
  }
  if (v.empty()) throw ConfigError("poisoned test set is empty (every test example has the target label)");
  return v;
}

}  // namespace fuslab
