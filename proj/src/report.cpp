#include "fuslab/report.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "fuslab/errors.hpp"
#include "fuslab/log.hpp"

namespace fuslab {

using nlohmann::json;

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) return {};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

namespace {

void check_fields(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  std::set<std::string> k(known.begin(), known.end());
  for (const auto& [key, value] : j.items()) {
    if (k.count(key) == 0) warn("ignoring unknown report field '" + key + "' in " + where);
  }
}

template <class T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
std::optional<T> opt_field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return field<T>(j, key, where);
}

template <class T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? json(*v) : json(nullptr);
}

json metrics_json(const SeedMetrics& m) {
  json j = json::object();
  put_opt(j, "asr", m.asr);
  put_opt(j, "clean_acc", m.clean_acc);
  put_opt(j, "clean_rmse", m.clean_rmse);
  put_opt(j, "attack_rmse", m.attack_rmse);
  return j;
}

SeedMetrics metrics_from(const json& j, const std::string& where) {
  check_fields(j, {"asr", "clean_acc", "clean_rmse", "attack_rmse"}, where);
  return {opt_field<double>(j, "asr", where), opt_field<double>(j, "clean_acc", where),
          opt_field<double>(j, "clean_rmse", where), opt_field<double>(j, "attack_rmse", where)};
}

json gamma_json(const GammaStats& g) { return {{"mean_selected", g.mean_selected}, {"mean_rss_baseline", g.mean_rss_baseline}}; }

GammaStats gamma_from(const json& j, const std::string& where) {
  check_fields(j, {"mean_selected", "mean_rss_baseline"}, where);
  return {field<double>(j, "mean_selected", where), field<double>(j, "mean_rss_baseline", where)};
}

json ms_json(const std::optional<MeanStd>& m) {
  if (!m) return nullptr;
  return {{"mean", m->mean}, {"std", m->std}};
}

std::optional<MeanStd> ms_from(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto& m = j.at(key);
  const std::string w = where + "." + key;
  check_fields(m, {"mean", "std"}, w);
  return MeanStd{field<double>(m, "mean", w), field<double>(m, "std", w)};
}

json seed_json(const SeedResult& s) {
  json hist = json::array();
  for (const auto& [fe, count] : s.trace.fe_histogram) hist.push_back({fe, count});
  json trace{{"fe_histogram", hist},
             {"fe_nonzero_fraction", s.trace.fe_nonzero_fraction},
             {"mean_loss_swing", s.trace.mean_loss_swing}};
  put_opt(trace, "mean_final_target_prob", s.trace.mean_final_target_prob);
  return {{"seed", s.seed},
          {"selected_indices", s.selected_indices},
          {"metrics", metrics_json(s.metrics)},
          {"clean_baseline", s.clean_baseline ? metrics_json(*s.clean_baseline) : json(nullptr)},
          {"trace", trace},
          {"gamma", s.gamma ? gamma_json(*s.gamma) : json(nullptr)},
          {"class_distribution", s.class_distribution}};
}

SeedResult seed_from(const json& j, const std::string& where) {
  check_fields(j, {"seed", "selected_indices", "metrics", "clean_baseline", "trace", "gamma", "class_distribution"},
               where);
  SeedResult s;
  s.seed = field<std::uint64_t>(j, "seed", where);
  s.selected_indices = field<std::vector<std::size_t>>(j, "selected_indices", where);
  if (!j.contains("metrics")) throw ConfigError(where + ": missing field 'metrics'");
  s.metrics = metrics_from(j["metrics"], where + ".metrics");
  if (j.contains("clean_baseline") && !j["clean_baseline"].is_null()) {
    s.clean_baseline = metrics_from(j["clean_baseline"], where + ".clean_baseline");
  }
  if (j.contains("trace")) {
    const auto& t = j["trace"];
    const std::string w = where + ".trace";
    check_fields(t, {"fe_histogram", "fe_nonzero_fraction", "mean_loss_swing", "mean_final_target_prob"}, w);
    for (const auto& pair : field<std::vector<std::array<std::size_t, 2>>>(t, "fe_histogram", w)) {
      s.trace.fe_histogram[pair[0]] = pair[1];
    }
    s.trace.fe_nonzero_fraction = field<double>(t, "fe_nonzero_fraction", w);
    s.trace.mean_loss_swing = field<double>(t, "mean_loss_swing", w);
    s.trace.mean_final_target_prob = opt_field<double>(t, "mean_final_target_prob", w);
  }
  if (j.contains("gamma") && !j["gamma"].is_null()) s.gamma = gamma_from(j["gamma"], where + ".gamma");
  if (j.contains("class_distribution")) {
    s.class_distribution = field<std::vector<std::size_t>>(j, "class_distribution", where);
  }
  if (s.metrics.asr && !(*s.metrics.asr >= 0.0 && *s.metrics.asr <= 1.0)) {
    throw ConfigError(where + ": asr outside [0, 1]");
  }
  return s;
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

json to_json(const ExperimentReport& r) {
  json seeds = json::array();
  for (const auto& s : r.seeds) seeds.push_back(seed_json(s));
  json summary{{"asr", ms_json(r.summary.asr)},
               {"clean_acc", ms_json(r.summary.clean_acc)},
               {"clean_rmse", ms_json(r.summary.clean_rmse)},
               {"attack_rmse", ms_json(r.summary.attack_rmse)},
               {"baseline_asr", ms_json(r.summary.baseline_asr)},
               {"baseline_clean_acc", ms_json(r.summary.baseline_clean_acc)},
               {"baseline_clean_rmse", ms_json(r.summary.baseline_clean_rmse)},
               {"gamma", r.summary.gamma ? gamma_json(*r.summary.gamma) : json(nullptr)}};
  put_opt(summary, "chance_floor", r.summary.chance_floor);
  return {{"schema_version", kReportSchemaVersion},
          {"config", to_json(r.config)},
          {"poison_budget", r.poison_budget},
          {"white_box", r.white_box},
          {"seeds", seeds},
          {"summary", summary},
          {"wall_time", r.wall_time}};
}

ExperimentReport report_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("report must be a JSON object");
  if (!j.contains("schema_version")) throw ConfigError("report is missing schema_version");
  const int version = field<int>(j, "schema_version", "report");
  if (version != kReportSchemaVersion) {
    throw ConfigError("unsupported report schema_version " + std::to_string(version));
  }
  check_fields(j, {"schema_version", "config", "poison_budget", "white_box", "seeds", "summary", "wall_time"}, "report");
  ExperimentReport r;
  if (!j.contains("config")) throw ConfigError("report: missing field 'config'");
  r.config = attack_config_from_json(j["config"]);
  r.poison_budget = field<std::size_t>(j, "poison_budget", "report");
  r.white_box = field<bool>(j, "white_box", "report");
  if (!j.contains("seeds") || !j["seeds"].is_array()) throw ConfigError("report: 'seeds' must be an array");
  for (std::size_t i = 0; i < j["seeds"].size(); ++i) {
    r.seeds.push_back(seed_from(j["seeds"][i], "report.seeds[" + std::to_string(i) + "]"));
  }
  if (j.contains("summary")) {
    const auto& s = j["summary"];
    const std::string w = "report.summary";
    check_fields(s, {"asr", "clean_acc", "clean_rmse", "attack_rmse", "baseline_asr", "baseline_clean_acc",
                     "baseline_clean_rmse", "gamma", "chance_floor"},
                 w);
    r.summary.asr = ms_from(s, "asr", w);
    r.summary.clean_acc = ms_from(s, "clean_acc", w);
    r.summary.clean_rmse = ms_from(s, "clean_rmse", w);
    r.summary.attack_rmse = ms_from(s, "attack_rmse", w);
    r.summary.baseline_asr = ms_from(s, "baseline_asr", w);
    r.summary.baseline_clean_acc = ms_from(s, "baseline_clean_acc", w);
    r.summary.baseline_clean_rmse = ms_from(s, "baseline_clean_rmse", w);
    if (s.contains("gamma") && !s["gamma"].is_null()) r.summary.gamma = gamma_from(s["gamma"], w + ".gamma");
    r.summary.chance_floor = opt_field<double>(s, "chance_floor", w);
  }
  r.wall_time = field<double>(j, "wall_time", "report");
  return r;
}

void write_report(const ExperimentReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write report " + path.string());
  out << to_json(report).dump(2) << '\n';
}

ExperimentReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open report " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("report " + path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

void write_report_table(const std::vector<ExperimentReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "strategy,r,seed,asr,clean_metric\n";
  for (const auto& r : reports) {
    for (const auto& s : r.seeds) {
      const auto& m = s.metrics;
      const auto clean = m.clean_acc ? m.clean_acc : m.clean_rmse;
      out << strategy_name(r.config.strategy.kind) << ',' << fmt(r.config.r) << ',' << s.seed << ','
          << (m.asr ? fmt(*m.asr) : "") << ',' << (clean ? fmt(*clean) : "") << '\n';
    }
  }
}

}  // namespace fuslab
