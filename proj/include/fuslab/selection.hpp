#pragma once

// Poisoned-sample selection strategies: random (RSS), greedy, curvature pool,
// and the iterative filter-and-update search (FUS, and FUS++ with a
// curvature-selected coarse set in its first iteration).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fuslab/curvature.hpp"
#include "fuslab/data.hpp"
#include "fuslab/importance.hpp"
#include "fuslab/optim.hpp"
#include "fuslab/rng.hpp"
#include "fuslab/triggers.hpp"

namespace fuslab {

enum class PolicyKind { Fixed, LinearDecay, ExponentialDecay };

struct FiltrationPolicy {
  PolicyKind kind = PolicyKind::LinearDecay;
  double alpha = 0.3;  // Fixed only
  bool operator==(const FiltrationPolicy&) const = default;
};

// Fixed: alpha. Linear: 0.5 - 0.4 n/N. Exponential: 0.1^(n/N). Requires 1 <= n <= N.
double policy_alpha(const FiltrationPolicy& policy, std::size_t iterations, std::size_t n);

enum class StrategyKind { RSS, Greedy, CurvaturePool, FUS, FUSPP };
enum class UpdateSource { Full, Coarse };

struct StrategyConfig {
  StrategyKind kind = StrategyKind::RSS;
  std::size_t iterations = 15;     // N
  double beta = 10.0;              // coarse set size = beta * K
  double k_prime_factor = 2.0;     // greedy trial size K' = k_prime_factor * K
  FiltrationPolicy policy{};
  MeasureKind measure = MeasureKind::FE;
  bool invert_cs = false;
  UpdateSource update_source = UpdateSource::Full;
  CurvatureConfig curvature{};
  // Warn when iterations * |M| * epochs exceeds this many sample-epochs.
  double budget_warning = 5e8;

  static StrategyConfig rss();
  static StrategyConfig greedy(double k_prime_factor = 2.0);
  static StrategyConfig curvature_pool(double beta = 10.0);
  static StrategyConfig fus(std::size_t n = 15);
  static StrategyConfig fuspp(std::size_t n = 2, double beta = 10.0);

  void validate() const;
  bool operator==(const StrategyConfig&) const = default;
};

// K = round(r * |D|)
std::size_t poison_budget(double r, std::size_t clean_size);

// Trains infected models on D ∪ U' for the search. Iteration `n` gets its
// own init and shuffle seeds derived from the master seed.
struct SearchPipeline {
  const Dataset& clean;
  TriggerSpec trigger;
  ModelSpec model;
  TrainConfig train;
  std::uint64_t master_seed = 0;

  struct Outcome {
    ModelState model;
    ImportanceTrace trace;  // empty unless recording was requested
  };

  Outcome train_infected(const std::vector<std::size_t>& pool, std::uint64_t iteration, bool record) const;
};

// Uniform draw of K candidates without replacement (partial Fisher-Yates).
PoisonPool select_rss(std::span<const std::size_t> candidates, std::size_t k, Rng& rng);

// The k highest-scoring indices, ties by ascending index.
PoisonPool keep_top_k(std::span<const std::size_t> indices, std::span<const double> scores, std::size_t k);

// One trial on D ∪ (K' random poisons); keeps the K with the highest measure
// (ties: lower index first).
PoisonPool select_greedy(const SearchPipeline& pipeline, std::span<const std::size_t> candidates, std::size_t k,
                         double k_prime_factor, Rng& rng, MeasureKind measure = MeasureKind::FE);

// Coarse set = the round(beta * K) lowest-gamma candidates under
// `trained_model` (clamped to all candidates); returns K uniform draws from it.
PoisonPool select_curvature_pool(const Dataset& data, std::span<const std::size_t> candidates, std::size_t k,
                                 double beta, const ModelState& trained_model, const TriggerSpec& spec, Rng& rng,
                                 const CurvatureConfig& curvature = {});

// As above, first training the infected model on D ∪ RSS(K).
PoisonPool select_curvature_pool(const SearchPipeline& pipeline, std::span<const std::size_t> candidates,
                                 std::size_t k, double beta, Rng& rng, const CurvatureConfig& curvature = {});

struct IterationRecord {
  std::size_t n = 0;
  double alpha = 0.0;  // 0 for the curvature iteration
  bool curvature_step = false;
  std::vector<std::size_t> removed;
  std::vector<std::size_t> added;
  double mean_score = 0.0;  // mean importance of the evaluated pool
};

struct SearchLog {
  std::vector<IterationRecord> iterations;
  std::vector<std::size_t> coarse_set;  // FUS++ only
};

// The filter-and-update search. Starts from select_rss(candidates, K, rng);
// N = 0 returns that draw unchanged.
PoisonPool fus_search(const SearchPipeline& pipeline, std::span<const std::size_t> candidates, std::size_t k,
                      const StrategyConfig& config, Rng& rng, SearchLog* log = nullptr);

// Dispatches on config.kind.
PoisonPool select_pool(const SearchPipeline& pipeline, std::span<const std::size_t> candidates, std::size_t k,
                       const StrategyConfig& config, Rng& rng, SearchLog* log = nullptr);

// Rows "origin_index,score" (score empty when unscored).
void write_pool_csv(const PoisonPool& pool, const std::filesystem::path& path);
PoisonPool read_pool_csv(const std::filesystem::path& path);

}  // namespace fuslab
