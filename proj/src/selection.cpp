#include "fuslab/selection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>

#include "fuslab/errors.hpp"
#include "fuslab/log.hpp"
#include "fuslab/train.hpp"

namespace fuslab {

double policy_alpha(const FiltrationPolicy& policy, std::size_t iterations, std::size_t n) {
  if (n < 1 || n > iterations) throw ConfigError("policy_alpha: iteration index out of range");
  const double ratio = static_cast<double>(n) / static_cast<double>(iterations);
  switch (policy.kind) {
    case PolicyKind::Fixed:
      return policy.alpha;
    case PolicyKind::LinearDecay:
      return 0.5 - 0.4 * ratio;
    case PolicyKind::ExponentialDecay:
      return std::pow(0.1, ratio);
  }
  return 0.0;
}

StrategyConfig StrategyConfig::rss() { return StrategyConfig{}; }

StrategyConfig StrategyConfig::greedy(double k_prime_factor) {
  StrategyConfig c;
  c.kind = StrategyKind::Greedy;
  c.k_prime_factor = k_prime_factor;
  return c;
}

StrategyConfig StrategyConfig::curvature_pool(double beta) {
  StrategyConfig c;
  c.kind = StrategyKind::CurvaturePool;
  c.beta = beta;
  return c;
}

StrategyConfig StrategyConfig::fus(std::size_t n) {
  StrategyConfig c;
  c.kind = StrategyKind::FUS;
  c.iterations = n;
  return c;
}

StrategyConfig StrategyConfig::fuspp(std::size_t n, double beta) {
  StrategyConfig c;
  c.kind = StrategyKind::FUSPP;
  c.iterations = n;
  c.beta = beta;
  return c;
}

void StrategyConfig::validate() const {
  if (!(beta >= 1.0)) throw ConfigError("beta must be >= 1");
  if (!(k_prime_factor >= 1.0)) throw ConfigError("k_prime_factor must be >= 1");
  if (policy.kind == PolicyKind::Fixed && !(policy.alpha >= 0.0 && policy.alpha < 1.0)) {
    throw ConfigError("fixed filtration ratio must lie in [0, 1)");
  }
  curvature.validate();
}

std::size_t poison_budget(double r, std::size_t clean_size) {
  if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("mixing ratio r must be >= 0");
  return static_cast<std::size_t>(std::llround(r * static_cast<double>(clean_size)));
}

SearchPipeline::Outcome SearchPipeline::train_infected(const std::vector<std::size_t>& pool,
                                                       std::uint64_t iteration, bool record) const {
  const Dataset poison = materialize_poison(clean, pool, trigger);
  Dataset mixed = clean;
  mixed.examples.insert(mixed.examples.end(), poison.examples.begin(), poison.examples.end());
  const std::uint64_t seed = derive_seed(master_seed, "search", iteration);
  TrainConfig cfg = train;
  cfg.seed = seed;
  Outcome out{init_model(model, seed), {}};
  if (record) {
    out.trace = ImportanceTrace(clean.task, trigger.target, cfg.epochs, pool);
    out.model = fuslab::train(std::move(out.model), mixed, cfg, [&](const ModelState& m, std::size_t epoch) {
      out.trace.record_epoch(m, poison, epoch);
    });
  } else {
    out.model = fuslab::train(std::move(out.model), mixed, cfg);
  }
  return out;
}

PoisonPool select_rss(std::span<const std::size_t> candidates, std::size_t k, Rng& rng) {
  if (k > candidates.size()) {
    throw ConfigError("cannot draw " + std::to_string(k) + " samples from " + std::to_string(candidates.size()) +
                      " candidates");
  }
  std::vector<std::size_t> work(candidates.begin(), candidates.end());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.index(work.size() - i);
    std::swap(work[i], work[j]);
  }
  work.resize(k);
  return PoisonPool{std::move(work), std::vector<std::optional<double>>(k)};
}

namespace {

// Positions of `scores` ordered by descending score, ties by ascending index.
std::vector<std::size_t> order_desc(const std::vector<std::size_t>& indices, const std::vector<double>& scores) {
  std::vector<std::size_t> order(indices.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return indices[a] < indices[b];
  });
  return order;
}

void check_budget(const SearchPipeline& p, std::size_t trainings, std::size_t k, double limit) {
  const double cost = static_cast<double>(trainings) * static_cast<double>(p.clean.size() + k) *
                      static_cast<double>(p.train.epochs);
  if (cost > limit) {
    warn("search will train " + std::to_string(trainings) + " models (" + std::to_string(cost) +
         " sample-epochs), above the configured guardrail");
  }
}

}  // namespace

PoisonPool keep_top_k(std::span<const std::size_t> indices, std::span<const double> scores, std::size_t k) {
  if (indices.size() != scores.size()) throw InvariantError("scores and indices differ in length");
  if (k > indices.size()) throw ConfigError("cannot keep more samples than were scored");
  const std::vector<std::size_t> idx(indices.begin(), indices.end());
  const std::vector<double> sc(scores.begin(), scores.end());
  const auto order = order_desc(idx, sc);
  PoisonPool out;
  for (std::size_t i = 0; i < k; ++i) {
    out.indices.push_back(idx[order[i]]);
    out.scores.emplace_back(sc[order[i]]);
  }
  return out;
}

PoisonPool select_greedy(const SearchPipeline& pipeline, std::span<const std::size_t> candidates, std::size_t k,
                         double k_prime_factor, Rng& rng, MeasureKind measure) {
  if (!(k_prime_factor >= 1.0)) throw ConfigError("k_prime_factor must be >= 1");
  const auto k_prime = static_cast<std::size_t>(std::llround(k_prime_factor * static_cast<double>(k)));
  if (k_prime > candidates.size()) throw ConfigError("greedy trial size K' exceeds the candidate set");
  PoisonPool trial = select_rss(candidates, k_prime, rng);
  if (k_prime == k) return trial;
  const auto outcome = pipeline.train_infected(trial.indices, 0, true);
  const auto scores = score(outcome.trace, measure);
  return keep_top_k(trial.indices, scores, k);
}

PoisonPool select_curvature_pool(const Dataset& data, std::span<const std::size_t> candidates, std::size_t k,
                                 double beta, const ModelState& trained_model, const TriggerSpec& spec, Rng& rng,
                                 const CurvatureConfig& curvature) {
  if (!(beta >= 1.0)) throw ConfigError("beta must be >= 1");
  if (k > candidates.size()) throw ConfigError("K exceeds the candidate set");
  const auto ranked = rank_by_gamma(data, candidates, trained_model, spec, curvature);
  const auto coarse_size =
      std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(std::llround(beta * static_cast<double>(k))));
  return select_rss(std::span(ranked).first(coarse_size), k, rng);
}

PoisonPool select_curvature_pool(const SearchPipeline& pipeline, std::span<const std::size_t> candidates,
                                 std::size_t k, double beta, Rng& rng, const CurvatureConfig& curvature) {
  const PoisonPool initial = select_rss(candidates, k, rng);
  const auto outcome = pipeline.train_infected(initial.indices, 0, false);
  return select_curvature_pool(pipeline.clean, candidates, k, beta, outcome.model, pipeline.trigger, rng, curvature);
}

PoisonPool fus_search(const SearchPipeline& pipeline, std::span<const std::size_t> candidates, std::size_t k,
                      const StrategyConfig& config, Rng& rng, SearchLog* log) {
  if (config.kind != StrategyKind::FUS && config.kind != StrategyKind::FUSPP) {
    throw ConfigError("fus_search needs a FUS or FUS++ strategy");
  }
  config.validate();
  const bool plus = config.kind == StrategyKind::FUSPP;
  if (plus && (!pipeline.clean.dense() || !pipeline.trigger.dense())) {
    throw UnsupportedInputError("FUS++ needs dense inputs for curvature scoring");
  }
  check_budget(pipeline, config.iterations, k, config.budget_warning);

  PoisonPool pool = select_rss(candidates, k, rng);
  std::vector<std::size_t> coarse;

  for (std::size_t n = 1; n <= config.iterations; ++n) {
    IterationRecord rec;
    rec.n = n;
    if (plus && n == 1) {
      const auto outcome = pipeline.train_infected(pool.indices, n, false);
      const auto ranked = rank_by_gamma(pipeline.clean, candidates, outcome.model, pipeline.trigger, config.curvature);
      const auto coarse_size = std::min<std::size_t>(
          ranked.size(), static_cast<std::size_t>(std::llround(config.beta * static_cast<double>(k))));
      coarse.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(coarse_size));
      rec.curvature_step = true;
      rec.removed = pool.indices;
      pool = select_rss(coarse, k, rng);
      rec.added = pool.indices;
      if (log != nullptr) {
        log->coarse_set = coarse;
        log->iterations.push_back(std::move(rec));
      }
      continue;
    }

    const auto outcome = pipeline.train_infected(pool.indices, n, true);
    const auto scores = score(outcome.trace, config.measure, config.invert_cs);
    const double alpha = policy_alpha(config.policy, config.iterations, n);
    const auto m = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(k)));
    rec.alpha = alpha;
    rec.mean_score =
        scores.empty() ? 0.0 : std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());

    // Filter: drop the m lowest (score, index) members.
    const auto ascending = rank_ascending(pool.indices, scores);
    std::unordered_set<std::size_t> dropped(ascending.begin(), ascending.begin() + static_cast<std::ptrdiff_t>(m));
    PoisonPool next;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (dropped.count(pool.indices[i]) != 0) continue;
      next.indices.push_back(pool.indices[i]);
      next.scores.emplace_back(scores[i]);
    }
    rec.removed.assign(ascending.begin(), ascending.begin() + static_cast<std::ptrdiff_t>(m));

    // Update: m uniform draws from the source, excluding retained members.
    const std::span<const std::size_t> source =
        plus && config.update_source == UpdateSource::Coarse ? std::span<const std::size_t>(coarse) : candidates;
    const std::unordered_set<std::size_t> retained(next.indices.begin(), next.indices.end());
    std::vector<std::size_t> available;
    available.reserve(source.size());
    for (auto c : source) {
      if (retained.count(c) == 0) available.push_back(c);
    }
    const PoisonPool refill = select_rss(available, m, rng);
    for (auto idx : refill.indices) {
      next.indices.push_back(idx);
      next.scores.emplace_back(std::nullopt);
    }
    rec.added = refill.indices;
    pool = std::move(next);
    if (log != nullptr) log->iterations.push_back(std::move(rec));
  }
  return pool;
}

PoisonPool select_pool(const SearchPipeline& pipeline, std::span<const std::size_t> candidates, std::size_t k,
                       const StrategyConfig& config, Rng& rng, SearchLog* log) {
  config.validate();
  switch (config.kind) {
    case StrategyKind::RSS:
      return select_rss(candidates, k, rng);
    case StrategyKind::Greedy:
      return select_greedy(pipeline, candidates, k, config.k_prime_factor, rng, config.measure);
    case StrategyKind::CurvaturePool:
      return select_curvature_pool(pipeline, candidates, k, config.beta, rng, config.curvature);
    case StrategyKind::FUS:
    case StrategyKind::FUSPP:
      return fus_search(pipeline, candidates, k, config, rng, log);
  }
  throw ConfigError("unknown strategy");
}

void write_pool_csv(const PoisonPool& pool, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "origin_index,score\n";
  for (std::size_t i = 0; i < pool.size(); ++i) {
    out << pool.indices[i] << ',';
    if (i < pool.scores.size() && pool.scores[i]) {
      char buf[32];
      const auto r = std::to_chars(buf, buf + sizeof buf, *pool.scores[i]);
      out << std::string_view(buf, static_cast<std::size_t>(r.ptr - buf));
    }
    out << '\n';
  }
}

PoisonPool read_pool_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || line.rfind("origin_index", 0) != 0) throw ParseError("missing pool header", 1);
  PoisonPool pool;
  std::unordered_set<std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError("expected origin_index,score", lineno);
    std::size_t idx = 0;
    const auto r1 = std::from_chars(line.data(), line.data() + comma, idx);
    if (r1.ec != std::errc() || r1.ptr != line.data() + comma) throw ParseError("bad origin_index", lineno);
    if (!seen.insert(idx).second) throw ParseError("duplicate origin_index", lineno);
    pool.indices.push_back(idx);
    if (comma + 1 == line.size()) {
      pool.scores.emplace_back(std::nullopt);
    } else {
      double v = 0.0;
      const auto r2 = std::from_chars(line.data() + comma + 1, line.data() + line.size(), v);
      if (r2.ec != std::errc() || r2.ptr != line.data() + line.size()) throw ParseError("bad score", lineno);
      pool.scores.emplace_back(v);
    }
  }
  return pool;
}

}  // namespace fuslab
