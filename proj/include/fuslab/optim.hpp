#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "fuslab/model.hpp"

namespace fuslab {

struct Sgd {
  double lr = 0.05;
  bool operator==(const Sgd&) const = default;
};

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const Adam&) const = default;
};

struct TrainConfig {
  std::variant<Sgd, Adam> optimizer = Sgd{};
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::vector<std::size_t> lr_milestones;  // strictly increasing, each < epochs
  double lr_factor = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  double base_lr() const;
  bool operator==(const TrainConfig&) const = default;
};

// lr * lr_factor^(number of milestones <= epoch)
double effective_lr(const TrainConfig& config, std::size_t epoch);

// In-place update. Throws NumericError on a non-finite gradient (params untouched).
void apply_optimizer_step(ModelState& model, std::span<const double> grads, const TrainConfig& config,
                          std::size_t epoch);

ModelState optimizer_step(ModelState model, std::span<const double> grads, const TrainConfig& config,
                          std::size_t epoch);

}  // namespace fuslab
