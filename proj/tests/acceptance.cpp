// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <boost/math/distributions/chi_squared.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fuslab/config.hpp"
#include "fuslab/curvature.hpp"
#include "fuslab/importance.hpp"
#include "fuslab/lab.hpp"
#include "fuslab/selection.hpp"
#include "support.hpp"

using namespace fuslab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Outcome formula_exactness() {
  std::ostringstream why;
  bool ok = true;
  const auto trace = [] {
    const std::vector<std::size_t> origins{0, 1, 2};
    ImportanceTrace t(TaskKind::Classification, 0.0, 4, origins);
    t.recorded = 4;
    t.samples[0].predicted_ok = {1, 0, 1, 0};
    t.samples[1].predicted_ok = {0, 0, 1, 1};
    t.samples[2].predicted_ok = {1, 1, 1, 1};
    t.samples[0].losses = {1.0, 0.5, 0.8, 0.2};
    t.samples[1].losses = {2.0, 2.0, 1.0, 0.5};
    t.samples[2].losses = {0.1, 0.4, 0.2, 0.9};
    t.samples[0].final_target_prob = 0.7;
    t.samples[1].final_target_prob = 0.25;
    t.samples[2].final_target_prob = 1.0;
    return t;
  }();
  const std::vector<double> fe_expect{2, 0, 0};
  const std::vector<double> cs_expect{0.7, 0.25, 1.0};
  // Hand sums: 0.8-0.5; none; (0.4-0.1)+(0.9-0.2).
  const std::vector<double> ls_expect{0.8 - 0.5, 0.0, (0.4 - 0.1) + (0.9 - 0.2)};
  if (score(trace, MeasureKind::FE) != fe_expect) ok = false, why << " FE";
  if (score(trace, MeasureKind::CS) != cs_expect) ok = false, why << " CS";
  if (score(trace, MeasureKind::LS) != ls_expect) ok = false, why << " LS";
  const std::uint8_t seq[] = {0, 0, 1};
  if (forgetting_events(seq) != 0) ok = false, why << " FE[0,0,1]";

  double max_err = 0.0;
  for (std::size_t big_n : {1, 2, 5, 10, 15}) {
    for (std::size_t n = 1; n <= big_n; ++n) {
      const double frac = static_cast<double>(n) / static_cast<double>(big_n);
      max_err = std::max(max_err, std::abs(policy_alpha({PolicyKind::LinearDecay, 0.0}, big_n, n) - (0.5 - 0.4 * frac)));
      max_err = std::max(max_err, std::abs(policy_alpha({PolicyKind::ExponentialDecay, 0.0}, big_n, n) - std::pow(0.1, frac)));
      max_err = std::max(max_err, std::abs(policy_alpha({PolicyKind::Fixed, 0.3}, big_n, n) - 0.3));
    }
  }
  if (!(max_err <= 1e-12)) ok = false, why << " alpha";
  return {ok, "max alpha error " + sci(max_err) + (ok ? "" : ";" + why.str())};
}

Outcome gradient_correctness() {
  double worst_param = 0.0, worst_input = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto c = testing::random_grad_case(i);
    const auto r = testing::finite_difference_check(c.model, c.x, c.label, c.task);
    worst_param = std::max(worst_param, r.max_param_rel);
    worst_input = std::max(worst_input, r.max_input_rel);
  }
  const bool ok = worst_param < 1e-4 && worst_input < 1e-4;
  return {ok, "max rel error params " + sci(worst_param) + ", inputs " + sci(worst_input)};
}

Outcome curvature_oracle() {
  const InputGradientFn grad = [](std::span<const double> x) { return std::vector<double>{1.0 * x[0], 2.0 * x[1]}; };
  const std::vector<double> k{1.0, 1.0};
  Rng rng(2024, "oracle");
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const std::vector<double> x{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    worst = std::max(worst, std::abs(gamma(grad, x, k, 1.0) - std::sqrt(5.0)));
  }
  const HvpFn hvp = [](std::span<const double> z) { return std::vector<double>{2.0 * z[0], 3.0 * z[1]}; };
  const double tr = hutchinson_tr2(hvp, 2, 4, 0);
  const bool ok = worst <= 1e-9 && tr == 13.0;
  return {ok, "max |gamma - sqrt5| " + sci(worst) + ", Hutchinson " + sci(tr)};
}

Outcome degeneracy() {
  // fus_search with N = 0 against select_rss on a shared stream.
  BlobsConfig bc;
  bc.n_per_class = 25;
  bc.seed = 11;
  const Dataset data = gen_blobs(bc);
  TriggerSpec trig;
  trig.kind = BlendTrigger{Tensor(data.input_shape(), std::vector<double>(data.input_dim(), 1.0)), 0.2};
  const ModelSpec mspec{MlpSpec{data.input_dim(), {8}, 4}};
  TrainConfig tc;
  tc.epochs = 2;
  const SearchPipeline pipeline{data, trig, mspec, tc, 5};
  const auto cand = candidate_indices(data, trig);
  bool identical = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng a(s, "shared"), b(s, "shared");
    auto cfg = StrategyConfig::fus(0);
    const auto x = fus_search(pipeline, cand, 7, cfg, a);
    const auto y = select_rss(cand, 7, b);
    identical = identical && x == y && a.next() == b.next();
  }

  // Curvature pool with beta * K >= |candidates| against RSS: inclusion
  // counts over 1000 draws, chi-square test of homogeneity.
  std::vector<std::size_t> small(20);
  for (std::size_t i = 0; i < small.size(); ++i) small[i] = i * 5;
  const std::size_t k = 4;
  const double beta = 10.0;
  const ModelState model = init_model(mspec, 3);
  std::vector<double> pool_counts(data.size(), 0.0), rss_counts(data.size(), 0.0);
  for (std::uint64_t d = 0; d < 1000; ++d) {
    Rng r1(d, "curv-draw"), r2(d, "rss-draw");
    for (auto i : select_curvature_pool(data, small, k, beta, model, trig, r1).indices) pool_counts[i] += 1;
    for (auto i : select_rss(small, k, r2).indices) rss_counts[i] += 1;
  }
  double chi2 = 0.0;
  const double total = 2.0 * 1000 * k;
  for (auto i : small) {
    const double row = pool_counts[i] + rss_counts[i];
    for (double obs : {pool_counts[i], rss_counts[i]}) {
      const double expect = row * (1000.0 * k) / total;
      chi2 += (obs - expect) * (obs - expect) / expect;
    }
  }
  const boost::math::chi_squared dist(static_cast<double>(small.size() - 1));
  const double p = boost::math::cdf(boost::math::complement(dist, chi2));
  const bool ok = identical && p > 0.01;
  return {ok, std::string("N=0 ") + (identical ? "bit-identical" : "DIFFERS") + ", chi-square p=" + num(p)};
}

AttackConfig desk_config(StrategyConfig strategy, std::size_t n_seeds) {
  AttackConfig c = reference_blobs_config();
  c.strategy = strategy;
  c.seeds.clear();
  for (std::size_t s = 0; s < n_seeds; ++s) c.seeds.push_back(s);
  return c;
}

struct DeskRuns {
  ExperimentReport rss, fus, fuspp;
};

const DeskRuns& desk_runs() {
  static const DeskRuns runs = [] {
    DeskRuns r;
    r.rss = run_attack(desk_config(StrategyConfig::rss(), 10));
    r.fus = run_attack(desk_config(StrategyConfig::fus(10), 10));
    r.fuspp = run_attack(desk_config(StrategyConfig::fuspp(2, 10.0), 10));
    return r;
  }();
  return runs;
}

Outcome selection_benefit() {
  const auto& r = desk_runs();
  const double rss = r.rss.summary.asr->mean;
  const double fus = r.fus.summary.asr->mean;
  const double fuspp = r.fuspp.summary.asr->mean;
  const bool fus_ok = fus - rss >= 0.02;
  const bool fuspp_ok = fuspp >= rss + 0.02;
  return {fus_ok && fuspp_ok, "mean ASR RSS " + num(rss) + ", FUS(N=10) " + num(fus) + (fus_ok ? " ok" : " short") +
                                  ", FUS++(N=2) " + num(fuspp) + (fuspp_ok ? " ok" : " short") + " (10 seeds)"};
}

Outcome removal_ordering() {
  const auto cfg = desk_config(StrategyConfig::rss(), 5);
  const std::array rules{RemovalRule::SelectiveSmallFirst, RemovalRule::Random, RemovalRule::SelectiveLargeFirst};
  const std::array fractions{0.5};
  const auto curves = removal_experiment(cfg, rules, fractions);
  const double small = curves[0].summary[0].mean;
  const double random = curves[1].summary[0].mean;
  const double large = curves[2].summary[0].mean;
  const bool ok = small >= random && random >= large;
  return {ok, "ASR at 50% removal: small-first " + num(small) + ", random " + num(random) + ", large-first " +
                  num(large) + " (5 seeds)"};
}

Outcome clean_parity() {
  const auto& r = desk_runs();
  double worst = 0.0;
  std::string detail;
  for (const auto* rep : {&r.rss, &r.fus, &r.fuspp}) {
    const double gap = std::abs(rep->summary.clean_acc->mean - rep->summary.baseline_clean_acc->mean);
    worst = std::max(worst, gap);
    detail += strategy_name(rep->config.strategy.kind) + " " + num(rep->summary.clean_acc->mean) + " ";
  }
  return {worst < 0.02, "clean acc " + detail + "vs unpoisoned " + num(r.rss.summary.baseline_clean_acc->mean) +
                            ", max gap " + num(worst)};
}

Outcome curvature_attribution() {
  const auto& g = *desk_runs().fus.summary.gamma;
  return {g.mean_selected < g.mean_rss_baseline,
          "mean gamma FUS-selected " + num(g.mean_selected) + " vs RSS draw " + num(g.mean_rss_baseline) + " (10 seeds)"};
}

std::string strip_wall_time(const fs::path& p) {
  std::ifstream in(p);
  auto j = nlohmann::json::parse(in);
  j.erase("wall_time");
  return j.dump();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducibility() {
  const fs::path dir = fs::temp_directory_path() / "fuslab_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto cfg = desk_config(StrategyConfig::fus(3), 2);
  {
    std::ofstream out(dir / "config.json");
    out << to_json(cfg).dump(2);
  }
  for (const char* sub : {"a", "b"}) {
    const std::string cmd = std::string("\"") + FUSLAB_CLI + "\" run --config \"" + (dir / "config.json").string() +
                            "\" --out \"" + (dir / sub).string() + "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "CLI run failed"};
  }
  // Byte comparison of everything except the wall_time line.
  std::string a = slurp(dir / "a" / "report.json"), b = slurp(dir / "b" / "report.json");
  const auto drop_wall = [](std::string s) {
    std::istringstream in(s);
    std::string line, out;
    while (std::getline(in, line)) {
      if (line.find("\"wall_time\"") == std::string::npos) out += line + '\n';
    }
    return out;
  };
  const bool bytes = drop_wall(a) == drop_wall(b);
  const bool parsed = strip_wall_time(dir / "a" / "report.json") == strip_wall_time(dir / "b" / "report.json");
  const bool ok = bytes && parsed && !a.empty();
  return {ok, ok ? "two runs byte-identical apart from wall_time" : "reports differ"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"formula exactness", formula_exactness},
      {"gradient correctness", gradient_correctness},
      {"curvature oracle", curvature_oracle},
      {"degeneracy identities", degeneracy},
      {"desk-scale selection benefit", selection_benefit},
      {"removal ordering", removal_ordering},
      {"clean-performance parity", clean_parity},
      {"curvature attribution", curvature_attribution},
      {"reproducibility", reproducibility},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
