#include "fuslab/config.hpp"

#include <fstream>
#include <set>

#include "fuslab/errors.hpp"
#include "fuslab/log.hpp"
#include "fuslab/rng.hpp"

namespace fuslab {

using nlohmann::json;

bool FileSource::operator==(const FileSource& o) const {
  return train_path == o.train_path && test_path == o.test_path && format == o.format &&
         options.task == o.options.task && options.shape == o.options.shape &&
         options.vocab_size == o.options.vocab_size && options.n_classes == o.options.n_classes;
}

namespace {

// Reads `key` from `j` if present; type errors become ConfigError.
template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

void warn_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  std::set<std::string> k(known.begin(), known.end());
  for (const auto& [key, value] : j.items()) {
    if (k.count(key) == 0) warn("ignoring unknown field '" + key + "' in " + where);
  }
}

template <class E>
struct EnumName {
  E value;
  const char* name;
};

template <class E, std::size_t N>
std::string enum_to(E v, const EnumName<E> (&table)[N]) {
  for (const auto& e : table) {
    if (e.value == v) return e.name;
  }
  throw ConfigError("unnamed enum value");
}

template <class E, std::size_t N>
E enum_from(const json& j, const EnumName<E> (&table)[N], const char* what) {
  if (!j.is_string()) throw ConfigError(std::string(what) + " must be a string");
  const auto s = j.get<std::string>();
  for (const auto& e : table) {
    if (s == e.name) return e.value;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
}

constexpr EnumName<StrategyKind> kStrategies[] = {{StrategyKind::RSS, "rss"},
                                                  {StrategyKind::Greedy, "greedy"},
                                                  {StrategyKind::CurvaturePool, "curvature_pool"},
                                                  {StrategyKind::FUS, "fus"},
                                                  {StrategyKind::FUSPP, "fuspp"}};
constexpr EnumName<PolicyKind> kPolicies[] = {{PolicyKind::Fixed, "fixed"},
                                              {PolicyKind::LinearDecay, "linear_decay"},
                                              {PolicyKind::ExponentialDecay, "exponential_decay"}};
constexpr EnumName<MeasureKind> kMeasures[] = {{MeasureKind::FE, "fe"}, {MeasureKind::CS, "cs"}, {MeasureKind::LS, "ls"}};
constexpr EnumName<UpdateSource> kSources[] = {{UpdateSource::Full, "full"}, {UpdateSource::Coarse, "coarse"}};
constexpr EnumName<CurvatureDirection> kDirections[] = {{CurvatureDirection::Trigger, "trigger"},
                                                        {CurvatureDirection::Rademacher, "rademacher"}};
constexpr EnumName<LabelPolicy> kLabelPolicies[] = {{LabelPolicy::UseTarget, "target"}, {LabelPolicy::UseTrue, "true"}};
constexpr EnumName<Displacement> kDisplacements[] = {{Displacement::Literal, "literal"}, {Displacement::Fused, "fused"}};
constexpr EnumName<LabelMode> kLabelModes[] = {{LabelMode::Flip, "flip"}, {LabelMode::Clean, "clean"}};
constexpr EnumName<FileFormat> kFormats[] = {{FileFormat::DenseCsv, "dense_csv"}, {FileFormat::TokenJsonl, "token_jsonl"}};
constexpr EnumName<TaskKind> kTasks[] = {{TaskKind::Classification, "classification"},
                                         {TaskKind::Regression, "regression"}};
constexpr EnumName<TriggerConfig::Kind> kTriggerKinds[] = {{TriggerConfig::Kind::Blend, "blend"},
                                                           {TriggerConfig::Kind::Patch, "patch"},
                                                           {TriggerConfig::Kind::TokenInsert, "token_insert"}};
constexpr EnumName<PatternSource::Kind> kPatternKinds[] = {{PatternSource::Kind::BinaryNoise, "binary_noise"},
                                                           {PatternSource::Kind::UniformNoise, "uniform_noise"},
                                                           {PatternSource::Kind::Values, "values"},
                                                           {PatternSource::Kind::File, "file"}};

// ---- dataset

json dataset_to_json(const DatasetSource& src) {
  if (const auto* b = std::get_if<BlobsSource>(&src)) {
    return {{"kind", "blobs"},
            {"n_classes", b->blobs.n_classes},
            {"n_per_class", b->blobs.n_per_class},
            {"side", b->blobs.side},
            {"noise_sigma", b->blobs.noise_sigma},
            {"seed", b->blobs.seed},
            {"test_fraction", b->test_fraction}};
  }
  if (const auto* r = std::get_if<RegressionSource>(&src)) {
    return {{"kind", "regression"},
            {"n", r->regression.n},
            {"side", r->regression.side},
            {"lo", r->regression.lo},
            {"hi", r->regression.hi},
            {"noise_sigma", r->regression.noise_sigma},
            {"seed", r->regression.seed},
            {"test_fraction", r->test_fraction}};
  }
  const auto& f = std::get<FileSource>(src);
  json j{{"kind", "file"}, {"train", f.train_path}, {"test", f.test_path}, {"format", enum_to(f.format, kFormats)}};
  if (f.options.task) j["task"] = enum_to(*f.options.task, kTasks);
  if (f.options.shape) j["shape"] = *f.options.shape;
  if (f.options.vocab_size != 0) j["vocab_size"] = f.options.vocab_size;
  if (f.options.n_classes != 0) j["n_classes"] = f.options.n_classes;
  return j;
}

DatasetSource dataset_from_json(const json& j) {
  std::string kind = "blobs";
  read(j, "kind", kind);
  if (kind == "blobs") {
    warn_unknown(j, {"kind", "n_classes", "n_per_class", "side", "noise_sigma", "seed", "test_fraction"}, "dataset");
    BlobsSource b;
    read(j, "n_classes", b.blobs.n_classes);
    read(j, "n_per_class", b.blobs.n_per_class);
    read(j, "side", b.blobs.side);
    read(j, "noise_sigma", b.blobs.noise_sigma);
    read(j, "seed", b.blobs.seed);
    read(j, "test_fraction", b.test_fraction);
    return b;
  }
  if (kind == "regression") {
    warn_unknown(j, {"kind", "n", "side", "lo", "hi", "noise_sigma", "seed", "test_fraction"}, "dataset");
    RegressionSource r;
    read(j, "n", r.regression.n);
    read(j, "side", r.regression.side);
    read(j, "lo", r.regression.lo);
    read(j, "hi", r.regression.hi);
    read(j, "noise_sigma", r.regression.noise_sigma);
    read(j, "seed", r.regression.seed);
    read(j, "test_fraction", r.test_fraction);
    return r;
  }
  if (kind == "file") {
    warn_unknown(j, {"kind", "train", "test", "format", "task", "shape", "vocab_size", "n_classes"}, "dataset");
    FileSource f;
    read(j, "train", f.train_path);
    read(j, "test", f.test_path);
    if (f.train_path.empty() || f.test_path.empty()) throw ConfigError("file dataset needs 'train' and 'test' paths");
    if (j.contains("format")) f.format = enum_from(j["format"], kFormats, "format");
    if (j.contains("task")) f.options.task = enum_from(j["task"], kTasks, "task");
    if (j.contains("shape")) {
      Shape s;
      read(j, "shape", s);
      f.options.shape = s;
    }
    read(j, "vocab_size", f.options.vocab_size);
    read(j, "n_classes", f.options.n_classes);
    return f;
  }
  throw ConfigError("unknown dataset kind '" + kind + "'");
}

// ---- trigger

json trigger_to_json(const TriggerConfig& t) {
  json j{{"kind", enum_to(t.kind, kTriggerKinds)},
         {"target", t.target},
         {"label_mode", enum_to(t.label_mode, kLabelModes)},
         {"exclude_target_class", t.exclude_target_class}};
  if (t.kind == TriggerConfig::Kind::TokenInsert) {
    j["token_id"] = t.token_id;
    j["position"] = t.position;
    return j;
  }
  json p{{"source", enum_to(t.pattern.kind, kPatternKinds)}};
  switch (t.pattern.kind) {
    case PatternSource::Kind::BinaryNoise:
    case PatternSource::Kind::UniformNoise:
      p["seed"] = t.pattern.seed;
      break;
    case PatternSource::Kind::Values:
      p["values"] = t.pattern.values;
      break;
    case PatternSource::Kind::File:
      p["path"] = t.pattern.path;
      break;
  }
  if (t.pattern.shape) p["shape"] = *t.pattern.shape;
  j["pattern"] = p;
  if (t.kind == TriggerConfig::Kind::Blend) {
    j["lambda"] = t.lambda;
  } else {
    j["top_left"] = {t.top_left.first, t.top_left.second};
  }
  return j;
}

TriggerConfig trigger_from_json(const json& j) {
  warn_unknown(j, {"kind", "pattern", "lambda", "top_left", "token_id", "position", "target", "label_mode",
                   "exclude_target_class"},
               "trigger");
  TriggerConfig t;
  if (j.contains("kind")) t.kind = enum_from(j["kind"], kTriggerKinds, "trigger kind");
  read(j, "lambda", t.lambda);
  read(j, "token_id", t.token_id);
  read(j, "position", t.position);
  read(j, "target", t.target);
  read(j, "exclude_target_class", t.exclude_target_class);
  if (j.contains("label_mode")) t.label_mode = enum_from(j["label_mode"], kLabelModes, "label_mode");
  if (j.contains("top_left")) {
    std::vector<std::size_t> tl;
    read(j, "top_left", tl);
    if (tl.size() != 2) throw ConfigError("top_left must be [row, col]");
    t.top_left = {tl[0], tl[1]};
  }
  if (j.contains("pattern")) {
    const auto& p = j["pattern"];
    warn_unknown(p, {"source", "seed", "values", "path", "shape"}, "trigger.pattern");
    if (p.contains("source")) t.pattern.kind = enum_from(p["source"], kPatternKinds, "pattern source");
    read(p, "seed", t.pattern.seed);
    read(p, "values", t.pattern.values);
    read(p, "path", t.pattern.path);
    if (p.contains("shape")) {
      Shape s;
      read(p, "shape", s);
      t.pattern.shape = s;
    }
  }
  return t;
}

// ---- training

json train_to_json(const TrainingSetting& s) {
  json model = s.model.embedding_bag ? json{{"kind", "embedding_bag"}, {"embed_dim", s.model.embed_dim}}
                                     : json{{"kind", "mlp"}, {"hidden_widths", s.model.hidden_widths}};
  json opt;
  if (const auto* a = std::get_if<Adam>(&s.train.optimizer)) {
    opt = {{"kind", "adam"}, {"lr", a->lr}, {"beta1", a->beta1}, {"beta2", a->beta2}, {"eps", a->eps}};
  } else {
    opt = {{"kind", "sgd"}, {"lr", std::get<Sgd>(s.train.optimizer).lr}};
  }
  return {{"model", model},
          {"optimizer", opt},
          {"epochs", s.train.epochs},
          {"batch_size", s.train.batch_size},
          {"lr_milestones", s.train.lr_milestones},
          {"lr_factor", s.train.lr_factor}};
}

TrainingSetting train_from_json(const json& j, const std::string& where) {
  warn_unknown(j, {"model", "optimizer", "epochs", "batch_size", "lr_milestones", "lr_factor", "seed"}, where);
  TrainingSetting s;
  if (j.contains("model")) {
    const auto& m = j["model"];
    warn_unknown(m, {"kind", "hidden_widths", "embed_dim"}, where + ".model");
    std::string kind = "mlp";
    read(m, "kind", kind);
    if (kind != "mlp" && kind != "embedding_bag") throw ConfigError("unknown model kind '" + kind + "'");
    s.model.embedding_bag = kind == "embedding_bag";
    read(m, "hidden_widths", s.model.hidden_widths);
    read(m, "embed_dim", s.model.embed_dim);
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    warn_unknown(o, {"kind", "lr", "beta1", "beta2", "eps"}, where + ".optimizer");
    std::string kind = "sgd";
    read(o, "kind", kind);
    if (kind == "sgd") {
      Sgd sgd;
      read(o, "lr", sgd.lr);
      s.train.optimizer = sgd;
    } else if (kind == "adam") {
      Adam adam;
      read(o, "lr", adam.lr);
      read(o, "beta1", adam.beta1);
      read(o, "beta2", adam.beta2);
      read(o, "eps", adam.eps);
      s.train.optimizer = adam;
    } else {
      throw ConfigError("unknown optimizer '" + kind + "'");
    }
  }
  read(j, "epochs", s.train.epochs);
  read(j, "batch_size", s.train.batch_size);
  read(j, "lr_milestones", s.train.lr_milestones);
  read(j, "lr_factor", s.train.lr_factor);
  return s;
}

}  // namespace

std::string strategy_name(StrategyKind kind) { return enum_to(kind, kStrategies); }

json to_json(const StrategyConfig& s) {
  return {{"kind", enum_to(s.kind, kStrategies)},
          {"iterations", s.iterations},
          {"beta", s.beta},
          {"k_prime_factor", s.k_prime_factor},
          {"policy", {{"kind", enum_to(s.policy.kind, kPolicies)}, {"alpha", s.policy.alpha}}},
          {"measure", enum_to(s.measure, kMeasures)},
          {"invert_cs", s.invert_cs},
          {"update_source", enum_to(s.update_source, kSources)},
          {"curvature",
           {{"h", s.curvature.h},
            {"direction", enum_to(s.curvature.direction, kDirections)},
            {"rademacher_samples", s.curvature.rademacher_samples},
            {"rademacher_seed", s.curvature.rademacher_seed},
            {"label_policy", enum_to(s.curvature.label_policy, kLabelPolicies)},
            {"displacement", enum_to(s.curvature.displacement, kDisplacements)}}},
          {"budget_warning", s.budget_warning}};
}

StrategyConfig strategy_from_json(const json& j) {
  warn_unknown(j, {"kind", "name", "iterations", "beta", "k_prime_factor", "policy", "measure", "invert_cs",
                   "update_source", "curvature", "budget_warning"},
               "strategy");
  StrategyConfig s;
  if (j.contains("kind")) s.kind = enum_from(j["kind"], kStrategies, "strategy kind");
  // Per-kind defaults before explicit fields.
  if (s.kind == StrategyKind::FUSPP) s.iterations = 2;
  read(j, "iterations", s.iterations);
  read(j, "beta", s.beta);
  read(j, "k_prime_factor", s.k_prime_factor);
  if (j.contains("policy")) {
    const auto& p = j["policy"];
    warn_unknown(p, {"kind", "alpha"}, "strategy.policy");
    if (p.contains("kind")) s.policy.kind = enum_from(p["kind"], kPolicies, "policy kind");
    read(p, "alpha", s.policy.alpha);
  }
  if (j.contains("measure")) s.measure = enum_from(j["measure"], kMeasures, "measure");
  read(j, "invert_cs", s.invert_cs);
  if (j.contains("update_source")) s.update_source = enum_from(j["update_source"], kSources, "update_source");
  if (j.contains("curvature")) {
    const auto& c = j["curvature"];
    warn_unknown(c, {"h", "direction", "rademacher_samples", "rademacher_seed", "label_policy", "displacement"},
                 "strategy.curvature");
    read(c, "h", s.curvature.h);
    if (c.contains("direction")) s.curvature.direction = enum_from(c["direction"], kDirections, "direction");
    read(c, "rademacher_samples", s.curvature.rademacher_samples);
    read(c, "rademacher_seed", s.curvature.rademacher_seed);
    if (c.contains("label_policy")) s.curvature.label_policy = enum_from(c["label_policy"], kLabelPolicies, "label_policy");
    if (c.contains("displacement")) s.curvature.displacement = enum_from(c["displacement"], kDisplacements, "displacement");
  }
  read(j, "budget_warning", s.budget_warning);
  s.validate();
  return s;
}

json to_json(const AttackConfig& c) {
  json j{{"dataset", dataset_to_json(c.dataset)},
         {"trigger", trigger_to_json(c.trigger)},
         {"r", c.r},
         {"strategy", to_json(c.strategy)},
         {"search_train", train_to_json(c.search_train)},
         {"test_train", train_to_json(c.test_train)},
         {"attacker_fraction", c.attacker_fraction},
         {"seeds", c.seeds},
         {"clean_baseline", c.clean_baseline},
         {"gamma_stats", c.gamma_stats}};
  if (c.search_trigger) j["search_trigger"] = trigger_to_json(*c.search_trigger);
  return j;
}

AttackConfig attack_config_from_json(const json& j) {
  warn_unknown(j, {"dataset", "trigger", "search_trigger", "r", "strategy", "search_train", "test_train",
                   "attacker_fraction", "seeds", "clean_baseline", "gamma_stats"},
               "attack config");
  AttackConfig c;
  if (j.contains("dataset")) c.dataset = dataset_from_json(j["dataset"]);
  if (j.contains("trigger")) c.trigger = trigger_from_json(j["trigger"]);
  if (j.contains("search_trigger") && !j["search_trigger"].is_null()) c.search_trigger = trigger_from_json(j["search_trigger"]);
  read(j, "r", c.r);
  if (j.contains("strategy")) c.strategy = strategy_from_json(j["strategy"]);
  if (j.contains("search_train")) c.search_train = train_from_json(j["search_train"], "search_train");
  // test_train defaults to the search setting (white-box).
  c.test_train = j.contains("test_train") ? train_from_json(j["test_train"], "test_train") : c.search_train;
  read(j, "attacker_fraction", c.attacker_fraction);
  read(j, "seeds", c.seeds);
  read(j, "clean_baseline", c.clean_baseline);
  read(j, "gamma_stats", c.gamma_stats);
  c.validate();
  return c;
}

AttackConfig load_attack_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return attack_config_from_json(j);
}

void AttackConfig::validate() const {
  if (!(r > 0.0)) throw ConfigError("mixing ratio r must be > 0");
  if (!(attacker_fraction > 0.0 && attacker_fraction <= 1.0)) throw ConfigError("attacker_fraction must lie in (0, 1]");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  strategy.validate();
  search_train.train.validate();
  test_train.train.validate();
}

bool AttackConfig::white_box() const {
  return search_train == test_train && effective_search_trigger() == trigger;
}

AttackConfig reference_blobs_config() {
  AttackConfig c;
  BlobsSource b;
  b.blobs = BlobsConfig{4, 1250, 8, 0.25, 7};
  b.test_fraction = 0.2;
  c.dataset = b;
  c.trigger.kind = TriggerConfig::Kind::Blend;
  c.trigger.pattern.kind = PatternSource::Kind::BinaryNoise;
  c.trigger.pattern.seed = 123;
  c.trigger.lambda = 0.2;
  c.trigger.target = 0.0;
  c.r = 0.01;
  c.search_train.model.hidden_widths = {64};
  c.search_train.train.optimizer = Sgd{0.05};
  c.search_train.train.epochs = 30;
  c.search_train.train.batch_size = 16;
  c.test_train = c.search_train;
  return c;
}

AttackData load_attack_data(const DatasetSource& source) {
  if (const auto* b = std::get_if<BlobsSource>(&source)) {
    auto [tr, te] = split(gen_blobs(b->blobs), b->test_fraction, b->blobs.seed);
    return {std::move(tr), std::move(te)};
  }
  if (const auto* r = std::get_if<RegressionSource>(&source)) {
    auto [tr, te] = split(gen_regression(r->regression), r->test_fraction, r->regression.seed);
    return {std::move(tr), std::move(te)};
  }
  const auto& f = std::get<FileSource>(source);
  AttackData d{load_dataset(f.train_path, f.format, f.options), load_dataset(f.test_path, f.format, f.options)};
  if (d.train.modality != d.test.modality || d.train.task != d.test.task) {
    throw ConfigError("train and test files disagree on modality or task");
  }
  if (d.train.task == TaskKind::Classification) {
    const auto n = std::max(d.train.n_classes, d.test.n_classes);
    d.train.n_classes = d.test.n_classes = n;
  }
  if (!d.train.dense()) {
    const auto v = std::max(d.train.vocab_size(), d.test.vocab_size());
    d.train.modality = d.test.modality = TokenModality{v};
  }
  return d;
}

TriggerSpec build_trigger(const TriggerConfig& t, const Dataset& data) {
  TriggerSpec spec;
  spec.target = t.target;
  spec.label_mode = t.label_mode;
  spec.exclude_target_class = t.exclude_target_class;
  if (t.kind == TriggerConfig::Kind::TokenInsert) {
    spec.kind = TokenInsertTrigger{t.token_id, t.position};
  } else {
    Shape shape;
    if (t.pattern.shape) {
      shape = *t.pattern.shape;
    } else if (t.kind == TriggerConfig::Kind::Blend) {
      shape = data.input_shape();
    } else {
      throw ConfigError("patch trigger needs pattern.shape");
    }
    Tensor pattern;
    switch (t.pattern.kind) {
      case PatternSource::Kind::BinaryNoise:
      case PatternSource::Kind::UniformNoise: {
        Rng rng(t.pattern.seed, "trigger");
        std::vector<double> v(shape_size(shape));
        for (auto& x : v) {
          const double u = rng.uniform();
          x = t.pattern.kind == PatternSource::Kind::BinaryNoise ? (u < 0.5 ? 0.0 : 1.0) : u;
        }
        pattern = Tensor(shape, std::move(v));
        break;
      }
      case PatternSource::Kind::Values:
        pattern = Tensor(shape, t.pattern.values);
        break;
      case PatternSource::Kind::File:
        pattern = load_pattern_csv(t.pattern.path, shape);
        break;
    }
    if (t.kind == TriggerConfig::Kind::Blend) {
      spec.kind = BlendTrigger{std::move(pattern), t.lambda};
    } else {
      spec.kind = PatchTrigger{std::move(pattern), t.top_left};
    }
  }
  spec.validate_for(data);
  return spec;
}

ModelSpec build_model(const ArchitectureConfig& arch, const Dataset& data) {
  const std::size_t out = data.task == TaskKind::Classification ? data.n_classes : 1;
  ModelSpec spec;
  if (arch.embedding_bag) {
    spec.kind = EmbeddingBagSpec{data.vocab_size(), arch.embed_dim, out};
  } else {
    if (!data.dense()) throw ConfigError("MLP models need dense inputs; use embedding_bag for tokens");
    spec.kind = MlpSpec{data.input_dim(), arch.hidden_widths, out};
  }
  spec.validate();
  return spec;
}

}  // namespace fuslab
