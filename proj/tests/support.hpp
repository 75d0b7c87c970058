#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fuslab/data.hpp"
#include "fuslab/model.hpp"
#include "fuslab/rng.hpp"

namespace fuslab::testing {

struct GradCheck {
  double max_param_rel = 0.0;
  double max_input_rel = 0.0;
};

// |a - n| / max(|a|, |n|, floor)
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares analytic gradients with central differences of the loss.
inline GradCheck finite_difference_check(const ModelState& model, const std::vector<double>& x, double label,
                                         TaskKind task, double step = 1e-5, double floor = 1e-6) {
  GradCheck out;
  const auto analytic = loss_and_grads(model, x, label, task, true);
  ModelState probe = model;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const double saved = probe.params[i];
    probe.params[i] = saved + step;
    const double up = loss_from_output(forward(probe, x), label, task);
    probe.params[i] = saved - step;
    const double down = loss_from_output(forward(probe, x), label, task);
    probe.params[i] = saved;
    out.max_param_rel = std::max(out.max_param_rel, rel_error(analytic.param_grads[i], (up - down) / (2 * step), floor));
  }
  std::vector<double> xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + step;
    const double up = loss_from_output(forward(model, xp), label, task);
    xp[i] = x[i] - step;
    const double down = loss_from_output(forward(model, xp), label, task);
    xp[i] = x[i];
    out.max_input_rel = std::max(out.max_input_rel, rel_error(analytic.input_grad[i], (up - down) / (2 * step), floor));
  }
  return out;
}

// The i-th of a family of small random MLPs with a random input and label.
struct GradCase {
  ModelState model;
  std::vector<double> x;
  double label = 0.0;
  TaskKind task = TaskKind::Classification;
};

inline GradCase random_grad_case(std::uint64_t i) {
  Rng rng(i, "grad-case");
  GradCase c;
  c.task = i % 4 == 3 ? TaskKind::Regression : TaskKind::Classification;
  MlpSpec mlp;
  mlp.input_dim = 1 + rng.index(8);
  const std::size_t depth = rng.index(3);
  for (std::size_t l = 0; l < depth; ++l) mlp.hidden_widths.push_back(1 + rng.index(6));
  mlp.output_dim = c.task == TaskKind::Classification ? 2 + rng.index(4) : 1;
  c.model = init_model(ModelSpec{mlp}, derive_seed(i, "grad-init"));
  for (auto& p : c.model.params) p += rng.normal(0.0, 0.1);  // nonzero biases
  c.x.resize(mlp.input_dim);
  for (auto& v : c.x) v = rng.uniform(-1.0, 1.0);
  c.label = c.task == TaskKind::Classification ? static_cast<double>(rng.index(mlp.output_dim)) : rng.uniform(-1.0, 1.0);
  return c;
}

// Token classification data: class c draws most tokens from its own band of
// the vocabulary.
inline Dataset token_dataset(std::size_t n_classes, std::size_t per_class, std::size_t vocab, std::uint64_t seed) {
  Dataset d;
  d.name = "tokens";
  d.task = TaskKind::Classification;
  d.n_classes = n_classes;
  d.modality = TokenModality{vocab};
  Rng rng(seed, "tokens");
  const std::size_t band = vocab / n_classes;
  for (std::size_t c = 0; c < n_classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Example e;
      e.label = static_cast<double>(c);
      const std::size_t len = 3 + rng.index(5);
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t tok = rng.uniform() < 0.8 ? c * band + rng.index(band) : rng.index(vocab);
        e.tokens.push_back(static_cast<std::int32_t>(tok));
      }
      d.examples.push_back(std::move(e));
    }
  }
  return d;
}

}  // namespace fuslab::testing
