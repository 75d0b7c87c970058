#pragma once

// Datasets: dense-tensor classification/regression and token-sequence
// classification, with synthetic generators, file I/O and splitting.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fuslab/model.hpp"
#include "fuslab/tensor.hpp"

namespace fuslab {

struct DenseModality {
  Shape shape;
  bool operator==(const DenseModality&) const = default;
};
struct TokenModality {
  std::size_t vocab_size = 0;
  bool operator==(const TokenModality&) const = default;
};
using Modality = std::variant<DenseModality, TokenModality>;

struct Example {
  Tensor x;                          // dense modality
  std::vector<std::int32_t> tokens;  // token modality
  double label = 0.0;                // class index or regression target
  // Index into the clean set this example was poisoned from; empty for clean examples.
  std::optional<std::size_t> origin;
  bool operator==(const Example&) const = default;
};

struct Dataset {
  std::string name;
  TaskKind task = TaskKind::Classification;
  std::size_t n_classes = 0;  // 0 for regression
  Modality modality = DenseModality{};
  std::vector<Example> examples;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
  bool dense() const noexcept { return std::holds_alternative<DenseModality>(modality); }
  const Shape& input_shape() const;  // dense only
  std::size_t input_dim() const;      // dense only
  std::size_t vocab_size() const;     // tokens only
  // Copy of the metadata with no examples.
  Dataset empty_like() const;
  // Throws ConfigError/ShapeError if any example breaks the modality or label contract.
  void validate() const;
  bool operator==(const Dataset&) const = default;
};

struct BlobsConfig {
  std::size_t n_classes = 4;
  std::size_t n_per_class = 1000;
  std::size_t side = 8;
  double noise_sigma = 0.25;
  std::uint64_t seed = 0;
  bool operator==(const BlobsConfig&) const = default;
};

// One uniform [0,1] prototype per class; samples are prototype + N(0, sigma^2)
// clipped to [0,1]. Examples are ordered class by class.
Dataset gen_blobs(const BlobsConfig& config);

struct RegressionConfig {
  std::size_t n = 500;
  std::size_t side = 8;
  double lo = 20.0;
  double hi = 50.0;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
  bool operator==(const RegressionConfig&) const = default;
};

// Targets uniform in [lo, hi]. Pixel j of a sample with normalized target
// u = (y - lo) / (hi - lo) is clip(u * (0.5 + 0.5 * j / (d - 1)) + noise, 0, 1):
// an intensity ramp whose brightness grows with the target.
Dataset gen_regression(const RegressionConfig& config);

enum class FileFormat { DenseCsv, TokenJsonl };

struct LoadOptions {
  // Unset: classification when every label is a non-negative integer.
  std::optional<TaskKind> task;
  // Dense feature shape; unset means flat {d}.
  std::optional<Shape> shape;
  // Token id bound; 0 infers max id + 1.
  std::size_t vocab_size = 0;
  // 0 infers max label + 1.
  std::size_t n_classes = 0;
};

// DenseCSV: header "label,f0,...,f{d-1}", one example per row, features in [0,1].
// TokenJSONL: {"label": int, "tokens": [ints]} per line.
// Throws ParseError carrying the 1-based line number.
Dataset load_dataset(const std::filesystem::path& path, FileFormat format, const LoadOptions& options = {});
void write_dataset(const Dataset& data, const std::filesystem::path& path, FileFormat format);

// Single-row DenseCSV without label column (trigger patterns). Header optional.
Tensor load_pattern_csv(const std::filesystem::path& path, const Shape& shape);
void write_pattern_csv(const Tensor& pattern, const std::filesystem::path& path);

// Deterministic shuffled split, stratified by class for classification.
// Returns (train, test).
std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed);

// Indices of a split, before materialization. Partition of [0, n).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const Dataset& data,
                                                                            double test_fraction,
                                                                            std::uint64_t seed);

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace fuslab
