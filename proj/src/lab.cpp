#include "fuslab/lab.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

#include "fuslab/curvature.hpp"
#include "fuslab/errors.hpp"
#include "fuslab/log.hpp"
#include "fuslab/rng.hpp"
#include "fuslab/train.hpp"

namespace fuslab {

FeHistogram fe_histogram(const ImportanceTrace& trace) {
  if (trace.task != TaskKind::Classification) throw ConfigError("FE histogram needs a classification trace");
  if (!trace.complete()) throw ConfigError("FE histogram needs a complete trace");
  FeHistogram h;
  std::size_t nonzero = 0;
  for (const auto& s : trace.samples) {
    const auto fe = forgetting_events(s.predicted_ok);
    ++h.bins[fe];
    if (fe > 0) ++nonzero;
  }
  if (!trace.samples.empty()) h.nonzero_fraction = static_cast<double>(nonzero) / static_cast<double>(trace.samples.size());
  return h;
}

std::vector<std::size_t> class_distribution(const PoisonPool& pool, const Dataset& data) {
  if (data.task != TaskKind::Classification) throw ConfigError("class distribution needs a classification task");
  std::vector<std::size_t> counts(data.n_classes, 0);
  for (auto i : pool.indices) {
    if (i >= data.size()) throw InvariantError("pool index out of range");
    ++counts.at(static_cast<std::size_t>(data.examples[i].label));
  }
  return counts;
}

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

// Everything the test phase of one seed needs, shared by run_attack and the
// removal study.
struct Prepared {
  AttackData data;
  TriggerSpec trigger;       // real trigger, built against the full data
  Dataset poisoned_test;     // V
  ModelSpec test_model;
  std::size_t k = 0;
};

Prepared prepare(const AttackConfig& config) {
  config.validate();
  Prepared p{load_attack_data(config.dataset), {}, {}, {}, 0};
  p.trigger = build_trigger(config.trigger, p.data.train);
  p.poisoned_test = build_poisoned_testset(p.data.test, p.trigger);
  p.test_model = build_model(config.test_train.model, p.data.train);
  p.k = poison_budget(config.r, p.data.train.size());
  if (p.k == 0) throw ConfigError("r * |D| must be at least 1");
  return p;
}

struct Selection {
  PoisonPool pool;             // full indices
  std::vector<std::size_t> local;  // attacker-local indices, aligned with pool
  SearchLog log;
  std::optional<GammaStats> gamma;
  std::vector<double> gamma_values;
};

Selection select_for_seed(const AttackConfig& config, const Prepared& p, std::uint64_t seed, bool gamma_stats) {
  const Dataset& full = p.data.train;
  std::vector<std::size_t> visible(full.size());
  std::iota(visible.begin(), visible.end(), std::size_t{0});
  if (config.attacker_fraction < 1.0) {
    const auto m = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(config.attacker_fraction * static_cast<double>(full.size()))));
    Rng rng(seed, "attacker");
    visible = select_rss(visible, m, rng).indices;
    std::sort(visible.begin(), visible.end());
  }
  const Dataset attacker = config.attacker_fraction < 1.0 ? subset(full, visible) : full;
  const TriggerSpec search_trigger = build_trigger(config.effective_search_trigger(), attacker);
  const SearchPipeline pipeline{attacker, search_trigger, build_model(config.search_train.model, attacker),
                                config.search_train.train, derive_seed(seed, "search-phase")};
  const auto candidates = candidate_indices(attacker, search_trigger);
  if (p.k > candidates.size()) {
    throw ConfigError("poison budget " + std::to_string(p.k) + " exceeds the " + std::to_string(candidates.size()) +
                      " candidates visible to the attacker");
  }

  Selection s;
  Rng rng(seed, "selection");
  PoisonPool local = select_pool(pipeline, candidates, p.k, config.strategy, rng, &s.log);
  s.local = local.indices;
  s.pool.scores = local.scores;
  for (auto i : local.indices) s.pool.indices.push_back(visible[i]);

  if (gamma_stats && attacker.dense()) {
    // Reference model: infected with an independent random draw.
    const SearchPipeline ref{attacker, search_trigger, pipeline.model, pipeline.train, derive_seed(seed, "gamma-ref")};
    Rng ref_rng(seed, "gamma-ref");
    const auto ref_model = ref.train_infected(select_rss(candidates, p.k, ref_rng).indices, 0, false).model;
    Rng rss_rng(seed, "gamma-rss");
    const auto rss = select_rss(candidates, p.k, rss_rng).indices;
    s.gamma_values = curvature_scores(attacker, s.local, ref_model, search_trigger, config.strategy.curvature);
    const auto rss_gamma = curvature_scores(attacker, rss, ref_model, search_trigger, config.strategy.curvature);
    const auto mean = [](const std::vector<double>& v) {
      return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    s.gamma = GammaStats{mean(s.gamma_values), mean(rss_gamma)};
    require_finite(s.gamma->mean_selected, "gamma");
    require_finite(s.gamma->mean_rss_baseline, "gamma");
  }
  return s;
}

struct TestOutcome {
  SeedMetrics metrics;
  ImportanceTrace trace;
};

SeedMetrics evaluate(const ModelState& model, const Prepared& p) {
  SeedMetrics m;
  const auto& target = p.trigger.target;
  if (p.data.train.task == TaskKind::Classification) {
    m.asr = p.poisoned_test.empty() ? 0.0 : target_hit_rate(model, p.poisoned_test, static_cast<std::size_t>(target));
    m.clean_acc = accuracy(model, p.data.test);
    require_finite(*m.asr, "ASR");
    require_finite(*m.clean_acc, "clean accuracy");
  } else {
    m.clean_rmse = rmse(model, p.data.test);
    m.attack_rmse = rmse(model, p.poisoned_test);
    require_finite(*m.clean_rmse, "clean RMSE");
    require_finite(*m.attack_rmse, "attack RMSE");
  }
  return m;
}

// Fresh model on D ∪ U with the test setting; the same seed is used for every
// test-phase training of one master seed.
TestOutcome test_phase(const AttackConfig& config, const Prepared& p, const std::vector<std::size_t>& pool,
                       std::uint64_t seed, bool record) {
  const Dataset& clean = p.data.train;
  const Dataset poison = materialize_poison(clean, pool, p.trigger);
  Dataset mixed = clean;
  mixed.examples.insert(mixed.examples.end(), poison.examples.begin(), poison.examples.end());
  TrainConfig cfg = config.test_train.train;
  cfg.seed = derive_seed(seed, "test-phase");
  ModelState model = init_model(p.test_model, cfg.seed);
  TestOutcome out;
  if (record && !pool.empty()) {
    out.trace = ImportanceTrace(clean.task, p.trigger.target, cfg.epochs, pool);
    model = train(std::move(model), mixed, cfg,
                  [&](const ModelState& m, std::size_t epoch) { out.trace.record_epoch(m, poison, epoch); });
  } else {
    model = train(std::move(model), mixed, cfg);
  }
  out.metrics = evaluate(model, p);
  return out;
}

TraceSummary summarize(const ImportanceTrace& trace) {
  TraceSummary t;
  if (trace.samples.empty()) return t;
  if (trace.task == TaskKind::Classification) {
    const auto h = fe_histogram(trace);
    t.fe_histogram = h.bins;
    t.fe_nonzero_fraction = h.nonzero_fraction;
    const auto cs = score(trace, MeasureKind::CS);
    t.mean_final_target_prob = std::accumulate(cs.begin(), cs.end(), 0.0) / static_cast<double>(cs.size());
  }
  const auto ls = score(trace, MeasureKind::LS);
  t.mean_loss_swing = std::accumulate(ls.begin(), ls.end(), 0.0) / static_cast<double>(ls.size());
  return t;
}

std::optional<MeanStd> collect(const std::vector<SeedResult>& seeds,
                               const std::function<std::optional<double>(const SeedResult&)>& get) {
  std::vector<double> v;
  for (const auto& s : seeds) {
    if (auto x = get(s)) v.push_back(*x);
  }
  if (v.empty()) return std::nullopt;
  return mean_std(v);
}

}  // namespace

ExperimentReport run_attack(const AttackConfig& config, std::vector<SeedArtifacts>* artifacts) {
  const auto start = std::chrono::steady_clock::now();
  const Prepared p = prepare(config);
  const bool classification = p.data.train.task == TaskKind::Classification;

  ExperimentReport report;
  report.config = config;
  report.poison_budget = p.k;
  report.white_box = config.white_box();
  if (artifacts) artifacts->clear();

  for (const auto seed : config.seeds) {
    Selection sel = select_for_seed(config, p, seed, config.gamma_stats);
    TestOutcome test = test_phase(config, p, sel.pool.indices, seed, true);

    SeedResult r;
    r.seed = seed;
    r.selected_indices = sel.pool.indices;
    r.metrics = test.metrics;
    if (config.clean_baseline) r.clean_baseline = test_phase(config, p, {}, seed, false).metrics;
    r.trace = summarize(test.trace);
    r.gamma = sel.gamma;
    if (classification) r.class_distribution = class_distribution(sel.pool, p.data.train);
    report.seeds.push_back(std::move(r));

    if (artifacts) {
      artifacts->push_back(SeedArtifacts{seed, std::move(sel.pool), std::move(sel.log), std::move(test.trace),
                                         std::move(sel.local), std::move(sel.gamma_values)});
    }
  }

  auto& s = report.summary;
  s.asr = collect(report.seeds, [](const SeedResult& r) { return r.metrics.asr; });
  s.clean_acc = collect(report.seeds, [](const SeedResult& r) { return r.metrics.clean_acc; });
  s.clean_rmse = collect(report.seeds, [](const SeedResult& r) { return r.metrics.clean_rmse; });
  s.attack_rmse = collect(report.seeds, [](const SeedResult& r) { return r.metrics.attack_rmse; });
  s.baseline_asr = collect(report.seeds, [](const SeedResult& r) {
    return r.clean_baseline ? r.clean_baseline->asr : std::nullopt;
  });
  s.baseline_clean_acc = collect(report.seeds, [](const SeedResult& r) {
    return r.clean_baseline ? r.clean_baseline->clean_acc : std::nullopt;
  });
  s.baseline_clean_rmse = collect(report.seeds, [](const SeedResult& r) {
    return r.clean_baseline ? r.clean_baseline->clean_rmse : std::nullopt;
  });
  const auto gsel = collect(report.seeds, [](const SeedResult& r) {
    return r.gamma ? std::optional(r.gamma->mean_selected) : std::nullopt;
  });
  const auto grss = collect(report.seeds, [](const SeedResult& r) {
    return r.gamma ? std::optional(r.gamma->mean_rss_baseline) : std::nullopt;
  });
  if (gsel && grss) s.gamma = GammaStats{gsel->mean, grss->mean};
  if (classification) s.chance_floor = 1.0 / static_cast<double>(p.data.train.n_classes);

  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string removal_rule_name(RemovalRule rule) {
  switch (rule) {
    case RemovalRule::Random: return "random";
    case RemovalRule::SelectiveLargeFirst: return "selective_large_first";
    case RemovalRule::SelectiveSmallFirst: return "selective_small_first";
  }
  return "?";
}

std::vector<RemovalCurve> removal_experiment(const AttackConfig& config, std::span<const RemovalRule> rules,
                                             std::span<const double> fractions) {
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("removal fraction must lie in [0, 1]");
  }
  const Prepared p = prepare(config);
  const bool selective = std::any_of(rules.begin(), rules.end(), [](RemovalRule r) { return r != RemovalRule::Random; });
  if (selective && p.data.train.task != TaskKind::Classification) {
    throw ConfigError("selective removal needs forgetting events (classification only)");
  }

  std::vector<RemovalCurve> curves;
  for (auto rule : rules) {
    RemovalCurve c;
    c.rule = rule;
    c.fractions.assign(fractions.begin(), fractions.end());
    c.seeds = config.seeds;
    c.asr.assign(fractions.size(), {});
    curves.push_back(std::move(c));
  }

  for (const auto seed : config.seeds) {
    const Selection sel = select_for_seed(config, p, seed, false);
    const auto& pool = sel.pool.indices;
    const TestOutcome base = test_phase(config, p, pool, seed, true);

    // Positions into `pool`: a seeded permutation, then stably sorted by FE.
    std::vector<std::size_t> perm(pool.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng tie_rng(seed, "removal-ties");
    tie_rng.shuffle(perm);
    std::vector<std::size_t> fe(pool.size(), 0);
    if (p.data.train.task == TaskKind::Classification) {
      for (std::size_t i = 0; i < pool.size(); ++i) fe[i] = forgetting_events(base.trace.samples[i].predicted_ok);
    }
    std::vector<std::size_t> large_first = perm;
    std::stable_sort(large_first.begin(), large_first.end(), [&](std::size_t a, std::size_t b) { return fe[a] > fe[b]; });
    std::vector<std::size_t> small_first = perm;
    std::stable_sort(small_first.begin(), small_first.end(), [&](std::size_t a, std::size_t b) { return fe[a] < fe[b]; });
    std::vector<std::size_t> random_order(pool.size());
    std::iota(random_order.begin(), random_order.end(), std::size_t{0});
    Rng random_rng(seed, "removal-random");
    random_rng.shuffle(random_order);

    for (auto& c : curves) {
      const auto& order = c.rule == RemovalRule::Random              ? random_order
                          : c.rule == RemovalRule::SelectiveLargeFirst ? large_first
                                                                       : small_first;
      for (std::size_t fi = 0; fi < c.fractions.size(); ++fi) {
        const auto removed = static_cast<std::size_t>(std::llround(c.fractions[fi] * static_cast<double>(pool.size())));
        double asr = 0.0;
        if (removed == 0) {
          asr = *base.metrics.asr;
        } else {
          std::vector<bool> drop(pool.size(), false);
          for (std::size_t i = 0; i < removed; ++i) drop[order[i]] = true;
          std::vector<std::size_t> kept;
          for (std::size_t i = 0; i < pool.size(); ++i) {
            if (!drop[i]) kept.push_back(pool[i]);
          }
          const auto m = test_phase(config, p, kept, seed, false).metrics;
          if (!m.asr) throw ConfigError("removal study needs a classification task");
          asr = *m.asr;
        }
        c.asr[fi].push_back(asr);
      }
    }
  }
  for (auto& c : curves) {
    for (const auto& per_seed : c.asr) c.summary.push_back(mean_std(per_seed));
  }
  return curves;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

void write_removal_csv(const std::vector<RemovalCurve>& curves, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "rule,fraction,mean_asr,std_asr";
  if (!curves.empty()) {
    for (auto s : curves.front().seeds) out << ",seed_" << s;
  }
  out << '\n';
  for (const auto& c : curves) {
    for (std::size_t fi = 0; fi < c.fractions.size(); ++fi) {
      out << removal_rule_name(c.rule) << ',' << fmt(c.fractions[fi]) << ',' << fmt(c.summary[fi].mean) << ','
          << fmt(c.summary[fi].std);
      for (double a : c.asr[fi]) out << ',' << fmt(a);
      out << '\n';
    }
  }
}

void SweepGrid::validate() const {
  if (ratios.empty() || strategies.empty() || seeds.empty()) throw ConfigError("sweep grid must be nonempty");
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("sweep ratios must be > 0");
  }
  for (const auto& s : strategies) s.validate();
}

SweepGrid sweep_grid_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("sweep grid must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "base" && key != "ratios" && key != "strategies" && key != "seeds" && key != "threads") {
      warn("ignoring unknown field '" + key + "' in sweep grid");
    }
  }
  SweepGrid g;
  try {
    if (j.contains("base")) g.base = attack_config_from_json(j["base"]);
    g.ratios = j.value("ratios", std::vector<double>{});
    g.seeds = j.value("seeds", std::vector<std::uint64_t>{});
    g.threads = j.value("threads", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sweep grid: ") + e.what());
  }
  if (j.contains("strategies")) {
    if (!j["strategies"].is_array()) throw ConfigError("sweep grid: 'strategies' must be an array");
    for (const auto& s : j["strategies"]) g.strategies.push_back(strategy_from_json(s));
  }
  g.validate();
  return g;
}

SweepGrid load_sweep_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sweep grid " + path.string());
  try {
    return sweep_grid_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("sweep grid " + path.string() + ": " + e.what());
  }
}

std::uint64_t sweep_run_seed(std::uint64_t seed, std::size_t r_index, std::size_t strategy_index) {
  return derive_seed(derive_seed(seed, "sweep-ratio", r_index), "sweep-strategy", strategy_index);
}

std::optional<double> interpolate_ratio(const std::vector<std::pair<double, double>>& curve, double asr) {
  if (curve.empty()) return std::nullopt;
  if (curve.front().second >= asr) {
    return curve.front().second == asr ? std::optional(curve.front().first) : std::nullopt;
  }
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto [r0, a0] = curve[i - 1];
    const auto [r1, a1] = curve[i];
    if (a1 >= asr && a1 > a0) return r0 + (asr - a0) * (r1 - r0) / (a1 - a0);
  }
  return std::nullopt;
}

SweepResult sweep(const SweepGrid& grid, const std::filesystem::path& out_dir) {
  grid.validate();
  SweepResult result;
  for (std::size_t ri = 0; ri < grid.ratios.size(); ++ri) {
    for (std::size_t si = 0; si < grid.strategies.size(); ++si) {
      for (auto seed : grid.seeds) {
        SweepCell c;
        c.r_index = ri;
        c.strategy_index = si;
        c.seed = seed;
        c.run_seed = sweep_run_seed(seed, ri, si);
        result.cells.push_back(std::move(c));
      }
    }
  }

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < result.cells.size(); i = next++) {
      auto& c = result.cells[i];
      AttackConfig cfg = grid.base;
      cfg.r = grid.ratios[c.r_index];
      cfg.strategy = grid.strategies[c.strategy_index];
      cfg.seeds = {c.run_seed};
      try {
        c.report = run_attack(cfg);
        c.ok = true;
      } catch (const std::exception& e) {
        c.error = e.what();
        warn("sweep cell r=" + fmt(cfg.r) + " strategy=" + strategy_name(cfg.strategy.kind) + " seed=" +
             std::to_string(c.seed) + " failed: " + c.error);
      }
    }
  };
  std::size_t threads = grid.threads != 0 ? grid.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, result.cells.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t ri = 0; ri < grid.ratios.size(); ++ri) {
    for (std::size_t si = 0; si < grid.strategies.size(); ++si) {
      SweepRow row;
      row.r = grid.ratios[ri];
      row.strategy_index = si;
      row.strategy = strategy_name(grid.strategies[si].kind);
      std::vector<double> asr;
      for (const auto& c : result.cells) {
        if (c.r_index != ri || c.strategy_index != si) continue;
        if (!c.ok) {
          ++row.failed;
          continue;
        }
        ++row.completed;
        if (c.report.summary.asr) asr.push_back(c.report.summary.asr->mean);
      }
      row.asr = mean_std(asr);
      result.rows.push_back(std::move(row));
    }
  }

  // Savings against the first RSS strategy in the grid.
  const auto rss = std::find_if(grid.strategies.begin(), grid.strategies.end(),
                                [](const StrategyConfig& s) { return s.kind == StrategyKind::RSS; });
  if (rss != grid.strategies.end()) {
    const auto rss_index = static_cast<std::size_t>(rss - grid.strategies.begin());
    std::vector<std::pair<double, double>> curve;
    for (const auto& row : result.rows) {
      if (row.strategy_index == rss_index && row.completed > 0) curve.emplace_back(row.r, row.asr.mean);
    }
    std::sort(curve.begin(), curve.end());
    for (auto& row : result.rows) {
      if (row.completed == 0) continue;
      if (auto r_rss = interpolate_ratio(curve, row.asr.mean); r_rss && *r_rss > 0.0) row.savings_vs_rss = 1.0 - row.r / *r_rss;
    }
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    for (const auto& c : result.cells) {
      if (!c.ok) continue;
      write_report(c.report, out_dir / ("report_r" + std::to_string(c.r_index) + "_s" + std::to_string(c.strategy_index) +
                                        "_seed" + std::to_string(c.seed) + ".json"));
    }
    write_sweep_summary(result.rows, out_dir / "summary.csv");
  }
  return result;
}

void write_sweep_summary(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "r,strategy_index,strategy,mean_asr,std_asr,completed,failed,savings_vs_rss\n";
  for (const auto& row : rows) {
    out << fmt(row.r) << ',' << row.strategy_index << ',' << row.strategy << ',' << fmt(row.asr.mean) << ','
        << fmt(row.asr.std) << ',' << row.completed << ',' << row.failed << ','
        << (row.savings_vs_rss ? fmt(*row.savings_vs_rss) : "") << '\n';
  }
}

}  // namespace fuslab
