#include "fuslab/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fuslab/errors.hpp"
#include "fuslab/rng.hpp"

namespace fuslab {

std::vector<double> fd_hvp(const InputGradientFn& grad, std::span<const double> x, std::span<const double> z,
                           double h) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step h must be > 0");
  if (x.size() != z.size()) throw ShapeError("direction and input shapes differ");
  std::vector<double> shifted(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = x[i] + h * z[i];
  auto g1 = grad(shifted);
  const auto g0 = grad(x);
  if (g1.size() != g0.size()) throw ShapeError("gradient size changed between evaluations");
  for (std::size_t i = 0; i < g1.size(); ++i) g1[i] = (g1[i] - g0[i]) / h;
  return g1;
}

double gamma(const InputGradientFn& grad, std::span<const double> x, std::span<const double> k, double h) {
  return l2_norm(fd_hvp(grad, x, k, h));
}

namespace {

InputGradientFn model_input_gradient(const ModelState& model, double label, TaskKind task,
                                     GradientWorkspace& ws) {
  if (!model.spec.dense_input()) throw UnsupportedInputError("curvature is undefined for token inputs");
  return [&model, &ws, label, task](std::span<const double> x) {
    std::vector<double> g(x.size());
    ws.accumulate(model.params, x, label, task, {}, g);
    return g;
  };
}

}  // namespace

double gamma(const ModelState& model, std::span<const double> x, std::span<const double> k, double label,
             TaskKind task, double h) {
  GradientWorkspace ws(model.spec);
  return gamma(model_input_gradient(model, label, task, ws), x, k, h);
}

double hutchinson_tr2(const HvpFn& hvp, std::size_t dim, std::size_t n_samples, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("hutchinson_tr2 needs dim >= 1");
  if (n_samples == 0) throw ConfigError("hutchinson_tr2 needs n_samples >= 1");
  Rng rng(seed, "hutchinson");
  std::vector<double> z(dim);
  double sum = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (auto& v : z) v = rng.sign();
    const auto hz = hvp(z);
    double sq = 0.0;
    for (double v : hz) sq += v * v;
    sum += sq;
  }
  return sum / static_cast<double>(n_samples);
}

void CurvatureConfig::validate() const {
  if (!(h > 0.0)) throw ConfigError("curvature step h must be > 0");
  if (direction == CurvatureDirection::Rademacher && rademacher_samples == 0) {
    throw ConfigError("Rademacher curvature needs n_samples >= 1");
  }
}

std::vector<double> curvature_scores(const Dataset& data, std::span<const std::size_t> candidates,
                                     const ModelState& model, const TriggerSpec& spec,
                                     const CurvatureConfig& config) {
  config.validate();
  if (!data.dense() || !spec.dense() || !model.spec.dense_input()) {
    throw UnsupportedInputError("curvature scoring needs dense inputs");
  }
  GradientWorkspace ws(model.spec);
  const Tensor& k = spec.pattern();
  std::vector<double> out;
  out.reserve(candidates.size());
  std::vector<double> z(data.input_dim());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const std::size_t idx = candidates[c];
    if (idx >= data.size()) throw ConfigError("candidate index out of range");
    const Example& e = data.examples[idx];
    const double label = config.label_policy == LabelPolicy::UseTarget ? spec.target : e.label;
    const auto grad = model_input_gradient(model, label, data.task, ws);
    if (config.direction == CurvatureDirection::Rademacher) {
      const auto x = e.x.values();
      const HvpFn hvp = [&](std::span<const double> dir) { return fd_hvp(grad, x, dir, config.h); };
      out.push_back(hutchinson_tr2(hvp, x.size(), config.rademacher_samples,
                                   derive_seed(config.rademacher_seed, "rademacher", idx)));
      continue;
    }
    if (config.displacement == Displacement::Literal) {
      std::copy(k.values().begin(), k.values().end(), z.begin());
    } else {
      const Tensor fused = apply_trigger(e.x, spec);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = fused[i] - e.x[i];
    }
    out.push_back(gamma(grad, e.x.values(), z, config.h));
  }
  return out;
}

std::vector<std::size_t> rank_ascending(std::span<const std::size_t> indices, std::span<const double> scores) {
  if (indices.size() != scores.size()) throw InvariantError("scores and indices differ in length");
  std::vector<std::size_t> order(indices.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return indices[a] < indices[b];
  });
  std::vector<std::size_t> out;
  out.reserve(order.size());
  for (auto o : order) out.push_back(indices[o]);
  return out;
}

std::vector<std::size_t> rank_by_gamma(const Dataset& data, std::span<const std::size_t> candidates,
                                       const ModelState& model, const TriggerSpec& spec,
                                       const CurvatureConfig& config) {
  if (candidates.empty()) throw ConfigError("no candidates to rank");
  const auto scores = curvature_scores(data, candidates, model, spec, config);
  return rank_ascending(candidates, scores);
}

void write_gamma_csv(std::span<const std::size_t> indices, std::span<const double> gammas,
                     const std::filesystem::path& path) {
  if (indices.size() != gammas.size()) throw InvariantError("gamma export: length mismatch");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(17);
  out << "index,gamma\n";
  for (std::size_t i = 0; i < indices.size(); ++i) out << indices[i] << ',' << gammas[i] << '\n';
}

}  // namespace fuslab
