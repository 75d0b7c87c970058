#pragma once

// AttackConfig and its JSON form. JSON keys mirror the field names below;
// enums are lower-case strings ("fus", "linear_decay", "flip", ...).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fuslab/curvature.hpp"
#include "fuslab/data.hpp"
#include "fuslab/optim.hpp"
#include "fuslab/selection.hpp"
#include "fuslab/triggers.hpp"

namespace fuslab {

struct BlobsSource {
  BlobsConfig blobs;
  double test_fraction = 0.2;
  bool operator==(const BlobsSource&) const = default;
};

struct RegressionSource {
  RegressionConfig regression;
  double test_fraction = 0.2;
  bool operator==(const RegressionSource&) const = default;
};

struct FileSource {
  std::string train_path;
  std::string test_path;
  FileFormat format = FileFormat::DenseCsv;
  LoadOptions options;
  bool operator==(const FileSource& o) const;
};

using DatasetSource = std::variant<BlobsSource, RegressionSource, FileSource>;

// Where a dense trigger pattern comes from.
struct PatternSource {
  enum class Kind { BinaryNoise, UniformNoise, Values, File };
  Kind kind = Kind::BinaryNoise;
  std::uint64_t seed = 0;
  std::vector<double> values;
  std::string path;
  std::optional<Shape> shape;  // defaults to the input shape (blend) or required (patch)
  bool operator==(const PatternSource&) const = default;
};

struct TriggerConfig {
  enum class Kind { Blend, Patch, TokenInsert };
  Kind kind = Kind::Blend;
  PatternSource pattern;
  double lambda = 0.2;
  std::pair<std::size_t, std::size_t> top_left{0, 0};
  std::int32_t token_id = 0;
  std::size_t position = 1;
  double target = 0.0;
  LabelMode label_mode = LabelMode::Flip;
  bool exclude_target_class = false;
  bool operator==(const TriggerConfig&) const = default;
};

// Architecture template; input and output sizes come from the dataset.
struct ArchitectureConfig {
  bool embedding_bag = false;
  std::vector<std::size_t> hidden_widths{64};
  std::size_t embed_dim = 16;
  bool operator==(const ArchitectureConfig&) const = default;
};

// A training setting: the model family plus its optimization schedule.
struct TrainingSetting {
  ArchitectureConfig model;
  TrainConfig train;
  bool operator==(const TrainingSetting&) const = default;
};

struct AttackConfig {
  DatasetSource dataset = BlobsSource{};
  TriggerConfig trigger;
  std::optional<TriggerConfig> search_trigger;
  double r = 0.01;
  StrategyConfig strategy;
  TrainingSetting search_train;
  TrainingSetting test_train;
  double attacker_fraction = 1.0;
  std::vector<std::uint64_t> seeds{0};
  // Also train an unpoisoned model per seed (clean-accuracy parity, ASR floor).
  bool clean_baseline = true;
  // Compute mean gamma of the selection vs an equal-size random draw.
  bool gamma_stats = true;

  void validate() const;
  const TriggerConfig& effective_search_trigger() const { return search_trigger ? *search_trigger : trigger; }
  bool white_box() const;
  bool operator==(const AttackConfig&) const = default;
};

// Reference desk-scale setup: 4-class blobs (4000 train / 1000 test, side 8,
// sigma 0.25), binary-noise blend trigger with lambda 0.2, r = 0.01,
// MLP{64,[64],4}, SGD lr 0.05, 30 epochs.
AttackConfig reference_blobs_config();

nlohmann::json to_json(const AttackConfig& config);
AttackConfig attack_config_from_json(const nlohmann::json& j);
AttackConfig load_attack_config(const std::filesystem::path& path);

nlohmann::json to_json(const StrategyConfig& s);
StrategyConfig strategy_from_json(const nlohmann::json& j);
std::string strategy_name(StrategyKind kind);

// Materialized inputs of an attack.
struct AttackData {
  Dataset train;
  Dataset test;
};
AttackData load_attack_data(const DatasetSource& source);

TriggerSpec build_trigger(const TriggerConfig& config, const Dataset& data);
ModelSpec build_model(const ArchitectureConfig& arch, const Dataset& data);

}  // namespace fuslab
