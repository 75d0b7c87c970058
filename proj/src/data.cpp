#include "fuslab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fuslab/errors.hpp"
#include "fuslab/rng.hpp"

namespace fuslab {

const Shape& Dataset::input_shape() const {
  const auto* d = std::get_if<DenseModality>(&modality);
  if (d == nullptr) throw UnsupportedInputError("dataset '" + name + "' holds token sequences");
  return d->shape;
}

std::size_t Dataset::input_dim() const { return shape_size(input_shape()); }

std::size_t Dataset::vocab_size() const {
  const auto* t = std::get_if<TokenModality>(&modality);
  if (t == nullptr) throw UnsupportedInputError("dataset '" + name + "' holds dense tensors");
  return t->vocab_size;
}

Dataset Dataset::empty_like() const { return Dataset{name, task, n_classes, modality, {}}; }

void Dataset::validate() const {
  if (task == TaskKind::Classification && n_classes == 0) throw ConfigError("classification needs n_classes >= 1");
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    if (task == TaskKind::Classification) {
      if (e.label < 0 || e.label != std::floor(e.label) || e.label >= static_cast<double>(n_classes)) {
        throw ConfigError("example " + std::to_string(i) + " has label outside [0, n_classes)");
      }
    } else if (!std::isfinite(e.label)) {
      throw NumericError("example " + std::to_string(i) + " has a non-finite target");
    }
    if (dense()) {
      if (e.x.shape() != input_shape()) throw ShapeError("example " + std::to_string(i) + " has the wrong shape");
    } else {
      if (e.tokens.empty()) throw ShapeError("example " + std::to_string(i) + " has no tokens");
      for (auto t : e.tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab_size()) {
          throw ShapeError("example " + std::to_string(i) + " has out-of-range token id " + std::to_string(t));
        }
      }
    }
  }
}

Dataset gen_blobs(const BlobsConfig& c) {
  if (c.n_classes == 0 || c.n_per_class == 0 || c.side == 0) throw ConfigError("blobs config values must be positive");
  if (!(c.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  const std::size_t d = c.side * c.side;
  Rng rng(c.seed, "data");
  std::vector<std::vector<double>> protos(c.n_classes, std::vector<double>(d));
  for (auto& p : protos) {
    for (auto& v : p) v = rng.uniform();
  }
  Dataset ds{"blobs", TaskKind::Classification, c.n_classes, DenseModality{{c.side, c.side}}, {}};
  ds.examples.reserve(c.n_classes * c.n_per_class);
  for (std::size_t cls = 0; cls < c.n_classes; ++cls) {
    for (std::size_t i = 0; i < c.n_per_class; ++i) {
      std::vector<double> x(protos[cls]);
      if (c.noise_sigma > 0.0) {
        for (auto& v : x) v = std::clamp(v + rng.normal(0.0, c.noise_sigma), 0.0, 1.0);
      }
      ds.examples.push_back({Tensor({c.side, c.side}, std::move(x)), {}, static_cast<double>(cls), std::nullopt});
    }
  }
  return ds;
}

Dataset gen_regression(const RegressionConfig& c) {
  if (!(c.lo < c.hi)) throw ConfigError("regression range requires lo < hi");
  if (c.side == 0) throw ConfigError("side must be positive");
  if (!(c.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  const std::size_t d = c.side * c.side;
  Rng rng(c.seed, "data");
  Dataset ds{"regression", TaskKind::Regression, 0, DenseModality{{c.side, c.side}}, {}};
  ds.examples.reserve(c.n);
  for (std::size_t i = 0; i < c.n; ++i) {
    const double y = rng.uniform(c.lo, c.hi);
    const double u = (y - c.lo) / (c.hi - c.lo);
    std::vector<double> x(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double ramp = d > 1 ? 0.5 + 0.5 * static_cast<double>(j) / static_cast<double>(d - 1) : 1.0;
      const double noise = c.noise_sigma > 0.0 ? rng.normal(0.0, c.noise_sigma) : 0.0;
      x[j] = std::clamp(u * ramp + noise, 0.0, 1.0);
    }
    ds.examples.push_back({Tensor({c.side, c.side}, std::move(x)), {}, y, std::nullopt});
  }
  return ds;
}

// --------------------------------------------------------------------------- I/O

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view field, std::size_t line) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw ParseError("cannot parse number '" + std::string(field) + "'", line);
  }
  if (!std::isfinite(v)) throw ParseError("non-finite number", line);
  return v;
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

bool is_class_label(double v) { return v >= 0 && v == std::floor(v); }

void finish_labels(Dataset& ds, const LoadOptions& opt) {
  bool integral = std::all_of(ds.examples.begin(), ds.examples.end(), [](const Example& e) { return is_class_label(e.label); });
  ds.task = opt.task.value_or(integral ? TaskKind::Classification : TaskKind::Regression);
  if (ds.task == TaskKind::Classification) {
    if (!integral) throw ConfigError("classification labels must be non-negative integers");
    std::size_t mx = 0;
    for (const auto& e : ds.examples) mx = std::max(mx, static_cast<std::size_t>(e.label) + 1);
    ds.n_classes = opt.n_classes != 0 ? opt.n_classes : mx;
  } else {
    ds.n_classes = 0;
  }
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

Dataset load_csv(const std::filesystem::path& path, const LoadOptions& opt) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.empty() || header[0] != "label") throw ParseError("header must start with 'label'", 1);
  const std::size_t d = header.size() - 1;
  if (d == 0) throw ParseError("header names no feature columns", 1);
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j + 1] != "f" + std::to_string(j)) throw ParseError("header column " + std::to_string(j + 1) + " must be f" + std::to_string(j), 1);
  }
  Shape shape = opt.shape.value_or(Shape{d});
  if (shape_size(shape) != d) throw ShapeError("requested shape " + shape_string(shape) + " does not hold " + std::to_string(d) + " features");
  Dataset ds{path.stem().string(), TaskKind::Classification, 0, DenseModality{shape}, {}};
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != d + 1) {
      throw ParseError("expected " + std::to_string(d + 1) + " fields, got " + std::to_string(fields.size()), lineno);
    }
    Example e;
    e.label = parse_double(fields[0], lineno);
    std::vector<double> x(d);
    for (std::size_t j = 0; j < d; ++j) {
      x[j] = parse_double(fields[j + 1], lineno);
      if (x[j] < 0.0 || x[j] > 1.0) throw ParseError("feature outside [0,1]", lineno);
    }
    e.x = Tensor(shape, std::move(x));
    ds.examples.push_back(std::move(e));
  }
  finish_labels(ds, opt);
  ds.validate();
  return ds;
}

Dataset load_jsonl(const std::filesystem::path& path, const LoadOptions& opt) {
  auto in = open_in(path);
  Dataset ds{path.stem().string(), TaskKind::Classification, 0, TokenModality{0}, {}};
  std::string line;
  std::size_t lineno = 0;
  std::int64_t max_id = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& err) {
      throw ParseError(std::string("invalid JSON: ") + err.what(), lineno);
    }
    if (!j.is_object() || !j.contains("label") || !j.contains("tokens") || !j["tokens"].is_array() ||
        !j["label"].is_number()) {
      throw ParseError("expected {\"label\": int, \"tokens\": [ints]}", lineno);
    }
    Example e;
    e.label = j["label"].get<double>();
    for (const auto& t : j["tokens"]) {
      if (!t.is_number_integer()) throw ParseError("token ids must be integers", lineno);
      const auto id = t.get<std::int64_t>();
      if (id < 0 || id > INT32_MAX) throw ParseError("token id out of range", lineno);
      if (opt.vocab_size != 0 && static_cast<std::size_t>(id) >= opt.vocab_size) {
        throw ParseError("token id " + std::to_string(id) + " >= vocab_size " + std::to_string(opt.vocab_size), lineno);
      }
      max_id = std::max(max_id, id);
      e.tokens.push_back(static_cast<std::int32_t>(id));
    }
    if (e.tokens.empty()) throw ParseError("empty token list", lineno);
    ds.examples.push_back(std::move(e));
  }
  ds.modality = TokenModality{opt.vocab_size != 0 ? opt.vocab_size : static_cast<std::size_t>(max_id + 1)};
  finish_labels(ds, opt);
  ds.validate();
  return ds;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, FileFormat format, const LoadOptions& options) {
  return format == FileFormat::DenseCsv ? load_csv(path, options) : load_jsonl(path, options);
}

void write_dataset(const Dataset& data, const std::filesystem::path& path, FileFormat format) {
  auto out = open_out(path);
  if (format == FileFormat::DenseCsv) {
    const std::size_t d = data.input_dim();
    out << "label";
    for (std::size_t j = 0; j < d; ++j) out << ",f" << j;
    out << '\n';
    for (const auto& e : data.examples) {
      out << format_double(e.label);
      for (double v : e.x.values()) out << ',' << format_double(v);
      out << '\n';
    }
  } else {
    (void)data.vocab_size();
    for (const auto& e : data.examples) {
      nlohmann::json j;
      if (data.task == TaskKind::Classification) {
        j["label"] = static_cast<std::int64_t>(e.label);
      } else {
        j["label"] = e.label;
      }
      j["tokens"] = e.tokens;
      out << j.dump() << '\n';
    }
  }
  if (!out) throw ConfigError("write failed: " + path.string());
}

Tensor load_pattern_csv(const std::filesystem::path& path, const Shape& shape) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == 'f') continue;  // optional header "f0,f1,..."
    for (auto f : split_commas(line)) values.push_back(parse_double(f, lineno));
    break;
  }
  if (values.size() != shape_size(shape)) {
    throw ShapeError("pattern has " + std::to_string(values.size()) + " values, expected " + shape_string(shape));
  }
  return Tensor(shape, std::move(values));
}

void write_pattern_csv(const Tensor& pattern, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (std::size_t j = 0; j < pattern.size(); ++j) out << (j == 0 ? "" : ",") << 'f' << j;
  out << '\n';
  for (std::size_t j = 0; j < pattern.size(); ++j) out << (j == 0 ? "" : ",") << format_double(pattern[j]);
  out << '\n';
}

// --------------------------------------------------------------------------- split

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const Dataset& data,
                                                                            double test_fraction,
                                                                            std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  Rng rng(seed, "split");
  std::map<long long, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const long long key = data.task == TaskKind::Classification ? static_cast<long long>(data.examples[i].label) : 0;
    groups[key].push_back(i);
  }
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (auto& [key, idx] : groups) {
    rng.shuffle(idx);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    test.insert(test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  auto [tr, te] = split_indices(data, test_fraction, seed);
  return {subset(data, tr), subset(data, te)};
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices) {
  Dataset out = data.empty_like();
  out.examples.reserve(indices.size());
  for (auto i : indices) {
    if (i >= data.size()) throw ConfigError("subset index out of range");
    out.examples.push_back(data.examples[i]);
  }
  return out;
}

}  // namespace fuslab
