#pragma once

// Input-space curvature of the loss.
//
//   gamma(x) = || (grad_x L(x + h z) - grad_x L(x)) / h ||,   z = trigger pattern k
//
// With h = 1 this is || grad_x L(x + k) - grad_x L(x) ||, a finite-difference
// Hessian-vector product along the trigger direction. hutchinson_tr2 gives
// the Rademacher estimate of Tr(H^2) = E_z ||H z||^2 for comparison.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "fuslab/data.hpp"
#include "fuslab/model.hpp"
#include "fuslab/triggers.hpp"

namespace fuslab {

using InputGradientFn = std::function<std::vector<double>(std::span<const double> x)>;
using HvpFn = std::function<std::vector<double>(std::span<const double> z)>;

// (grad(x + h z) - grad(x)) / h
std::vector<double> fd_hvp(const InputGradientFn& grad, std::span<const double> x, std::span<const double> z,
                           double h);

// || fd_hvp(grad, x, k, h) ||
double gamma(const InputGradientFn& grad, std::span<const double> x, std::span<const double> k, double h = 1.0);

// gamma for a model's loss at the given label. Token models are rejected.
double gamma(const ModelState& model, std::span<const double> x, std::span<const double> k, double label,
             TaskKind task, double h = 1.0);

// Mean of ||H z||^2 over n_samples Rademacher vectors drawn from `seed`.
double hutchinson_tr2(const HvpFn& hvp, std::size_t dim, std::size_t n_samples, std::uint64_t seed);

enum class CurvatureDirection { Trigger, Rademacher };
enum class LabelPolicy { UseTarget, UseTrue };
// Literal: displace x by the pattern k. Fused: displace x to F(x, k).
enum class Displacement { Literal, Fused };

struct CurvatureConfig {
  double h = 1.0;
  CurvatureDirection direction = CurvatureDirection::Trigger;
  std::size_t rademacher_samples = 16;
  std::uint64_t rademacher_seed = 0;
  LabelPolicy label_policy = LabelPolicy::UseTarget;
  Displacement displacement = Displacement::Literal;

  void validate() const;
  bool operator==(const CurvatureConfig&) const = default;
};

// Curvature score of every candidate, aligned with `candidates`. With the
// Rademacher direction the score is the Tr(H^2) estimate at the clean input.
std::vector<double> curvature_scores(const Dataset& data, std::span<const std::size_t> candidates,
                                     const ModelState& model, const TriggerSpec& spec,
                                     const CurvatureConfig& config = {});

// Candidates sorted by ascending score; ties keep ascending index order.
std::vector<std::size_t> rank_by_gamma(const Dataset& data, std::span<const std::size_t> candidates,
                                       const ModelState& model, const TriggerSpec& spec,
                                       const CurvatureConfig& config = {});

// Same ordering rule applied to precomputed scores.
std::vector<std::size_t> rank_ascending(std::span<const std::size_t> indices, std::span<const double> scores);

// Rows "index,gamma".
void write_gamma_csv(std::span<const std::size_t> indices, std::span<const double> gammas,
                     const std::filesystem::path& path);

}  // namespace fuslab
