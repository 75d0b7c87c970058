#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "../support.hpp"
#include "fuslab/errors.hpp"
#include "fuslab/selection.hpp"

using namespace fuslab;

namespace {

struct Fixture {
  Dataset data;
  TriggerSpec trigger;
  ModelSpec model{MlpSpec{64, {8}, 4}};
  TrainConfig train;
  std::vector<std::size_t> candidates;

  Fixture() {
    BlobsConfig bc;
    bc.n_per_class = 25;
    bc.seed = 4;
    data = gen_blobs(bc);
    trigger.kind = BlendTrigger{Tensor({8, 8}, std::vector<double>(64, 1.0)), 0.2};
    train.epochs = 3;
    train.batch_size = 16;
    candidates = candidate_indices(data, trigger);
  }
  SearchPipeline pipeline() const { return SearchPipeline{data, trigger, model, train, 77}; }
};

bool distinct_subset(const PoisonPool& pool, std::span<const std::size_t> of) {
  const std::set<std::size_t> s(pool.indices.begin(), pool.indices.end());
  const std::set<std::size_t> universe(of.begin(), of.end());
  return s.size() == pool.size() && std::includes(universe.begin(), universe.end(), s.begin(), s.end());
}

}  // namespace

TEST_CASE("filtration policies") {
  CHECK(policy_alpha({PolicyKind::Fixed, 0.3}, 15, 1) == 0.3);
  CHECK(policy_alpha({PolicyKind::Fixed, 0.3}, 15, 15) == 0.3);
  CHECK(std::abs(policy_alpha({PolicyKind::LinearDecay, 0}, 15, 15) - 0.1) <= 1e-12);
  CHECK(std::abs(policy_alpha({PolicyKind::ExponentialDecay, 0}, 15, 15) - 0.1) <= 1e-12);
  CHECK(std::abs(policy_alpha({PolicyKind::LinearDecay, 0}, 10, 5) - 0.3) <= 1e-12);
  CHECK(std::abs(policy_alpha({PolicyKind::ExponentialDecay, 0}, 10, 5) - std::sqrt(0.1)) <= 1e-12);
  CHECK_THROWS_AS(policy_alpha({PolicyKind::LinearDecay, 0}, 10, 0), ConfigError);
  CHECK_THROWS_AS(policy_alpha({PolicyKind::LinearDecay, 0}, 10, 11), ConfigError);
}

TEST_CASE("strategy defaults and validation") {
  const auto f = StrategyConfig::fus();
  CHECK(f.iterations == 15);
  CHECK(f.policy.kind == PolicyKind::LinearDecay);
  CHECK(f.measure == MeasureKind::FE);
  const auto p = StrategyConfig::fuspp();
  CHECK(p.iterations == 2);
  CHECK(p.beta == 10.0);
  CHECK(StrategyConfig::curvature_pool().beta == 10.0);
  auto bad = StrategyConfig::fus();
  bad.beta = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = StrategyConfig::fus();
  bad.policy = {PolicyKind::Fixed, 1.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = StrategyConfig::greedy(0.5);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("poison budget rounding") {
  CHECK(poison_budget(0.01, 4000) == 40);
  CHECK(poison_budget(0.01, 50000) == 500);
  CHECK(poison_budget(0.015, 100) == 2);
  CHECK_THROWS_AS(poison_budget(-0.1, 100), ConfigError);
}

TEST_CASE("random selection") {
  const std::vector<std::size_t> cand{3, 5, 8, 13, 21};
  Rng rng(1, "rss");
  auto all = select_rss(cand, 5, rng).indices;
  std::sort(all.begin(), all.end());
  CHECK(all == cand);
  CHECK(select_rss(cand, 0, rng).size() == 0);
  CHECK_THROWS_AS(select_rss(cand, 6, rng), ConfigError);
  for (int i = 0; i < 20; ++i) CHECK(distinct_subset(select_rss(cand, 3, rng), cand));
}

TEST_CASE("top-k by score with index tie-break") {
  const std::vector<std::size_t> idx{10, 11, 12, 13};
  const auto top = keep_top_k(idx, std::vector<double>{3, 0, 2, 1}, 2);
  CHECK(top.indices == std::vector<std::size_t>{10, 12});
  CHECK(top.scores[0] == 3.0);
  const std::vector<std::size_t> shuffled{9, 2, 7, 4};
  CHECK(keep_top_k(shuffled, std::vector<double>{0, 0, 0, 0}, 2).indices == std::vector<std::size_t>{2, 4});
}

TEST_CASE("greedy with K' = K is the random draw") {
  const Fixture f;
  Rng a(5, "g"), b(5, "g");
  const auto g = select_greedy(f.pipeline(), f.candidates, 6, 1.0, a);
  const auto r = select_rss(f.candidates, 6, b);
  CHECK(g == r);
}

TEST_CASE("greedy keeps the best of a larger trial") {
  const Fixture f;
  Rng rng(6, "g");
  const auto g = select_greedy(f.pipeline(), f.candidates, 4, 2.0, rng);
  CHECK(g.size() == 4);
  CHECK(distinct_subset(g, f.candidates));
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(*g.scores[i - 1] >= *g.scores[i]);
}

TEST_CASE("curvature pool: beta = 1 is the lowest-K gamma set; large beta covers all candidates") {
  const Fixture f;
  const auto model = init_model(f.model, 2);
  const auto ranked = rank_by_gamma(f.data, f.candidates, model, f.trigger);
  Rng rng(1, "cp");
  auto low = select_curvature_pool(f.data, f.candidates, 5, 1.0, model, f.trigger, rng).indices;
  std::vector<std::size_t> expect(ranked.begin(), ranked.begin() + 5);
  std::sort(low.begin(), low.end());
  std::sort(expect.begin(), expect.end());
  CHECK(low == expect);

  std::set<std::size_t> seen;
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng r(s, "cp");
    for (auto i : select_curvature_pool(f.data, f.candidates, 5, 1000.0, model, f.trigger, r).indices) seen.insert(i);
  }
  CHECK(seen.size() > f.candidates.size() * 9 / 10);
}

TEST_CASE("FUS with N = 0 is the random draw on the same stream") {
  const Fixture f;
  Rng a(3, "f"), b(3, "f");
  const auto x = fus_search(f.pipeline(), f.candidates, 8, StrategyConfig::fus(0), a);
  const auto y = select_rss(f.candidates, 8, b);
  CHECK(x == y);
  CHECK(a.next() == b.next());
}

TEST_CASE("FUS with fixed alpha = 0 keeps the initial pool") {
  const Fixture f;
  auto cfg = StrategyConfig::fus(3);
  cfg.policy = {PolicyKind::Fixed, 0.0};
  Rng a(3, "f"), b(3, "f");
  SearchLog log;
  const auto x = fus_search(f.pipeline(), f.candidates, 8, cfg, a, &log);
  CHECK(x.indices == select_rss(f.candidates, 8, b).indices);
  REQUIRE(log.iterations.size() == 3);
  for (const auto& it : log.iterations) {
    CHECK(it.removed.empty());
    CHECK(it.added.empty());
  }
}

TEST_CASE("FUS iterations keep K distinct candidates and drop floor(alpha K)") {
  const Fixture f;
  auto cfg = StrategyConfig::fus(4);
  Rng rng(9, "f");
  SearchLog log;
  const std::size_t k = 10;
  const auto pool = fus_search(f.pipeline(), f.candidates, k, cfg, rng, &log);
  CHECK(pool.size() == k);
  CHECK(distinct_subset(pool, f.candidates));
  REQUIRE(log.iterations.size() == 4);
  for (const auto& it : log.iterations) {
    const auto m = static_cast<std::size_t>(std::floor(policy_alpha(cfg.policy, 4, it.n) * k));
    CHECK(it.removed.size() == m);
    CHECK(it.added.size() == m);
  }
  Rng again(9, "f");
  CHECK(fus_search(f.pipeline(), f.candidates, k, cfg, again) == pool);
}

TEST_CASE("FUS++ draws from the coarse set") {
  const Fixture f;
  auto cfg = StrategyConfig::fuspp(2, 3.0);
  cfg.update_source = UpdateSource::Coarse;
  Rng rng(2, "f");
  SearchLog log;
  const std::size_t k = 6;
  const auto pool = fus_search(f.pipeline(), f.candidates, k, cfg, rng, &log);
  CHECK(log.coarse_set.size() == 18);
  CHECK(log.iterations.front().curvature_step);
  CHECK(distinct_subset(pool, log.coarse_set));
  CHECK(pool.size() == k);
}

TEST_CASE("FUS++ needs dense inputs") {
  const Dataset tokens = testing::token_dataset(2, 10, 20, 0);
  TriggerSpec ts;
  ts.kind = TokenInsertTrigger{3, 1};
  TrainConfig tc;
  tc.epochs = 1;
  const SearchPipeline p{tokens, ts, ModelSpec{EmbeddingBagSpec{20, 4, 2}}, tc, 0};
  const auto cand = candidate_indices(tokens, ts);
  Rng rng(0);
  CHECK_THROWS_AS(fus_search(p, cand, 2, StrategyConfig::fuspp(), rng), UnsupportedInputError);
  // Plain FUS works on tokens.
  CHECK(fus_search(p, cand, 2, StrategyConfig::fus(2), rng).size() == 2);
}

TEST_CASE("pool CSV round trip") {
  PoisonPool pool;
  pool.indices = {4, 1, 9};
  pool.scores = {2.0, std::nullopt, 0.125};
  const auto path = std::filesystem::temp_directory_path() / "fuslab_unit_pool.csv";
  write_pool_csv(pool, path);
  CHECK(read_pool_csv(path) == pool);
}
