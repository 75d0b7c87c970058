#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "fuslab/data.hpp"
#include "fuslab/model.hpp"
#include "fuslab/optim.hpp"

namespace fuslab {

// Called after every epoch with the 0-based epoch index.
using EpochHook = std::function<void(const ModelState&, std::size_t epoch)>;

// Shuffled mini-batch training for config.epochs epochs. The shuffle is drawn
// from the "shuffle" stream of config.seed; the final short batch is kept.
// Each step uses the batch-mean gradient.
ModelState train(ModelState model, const Dataset& data, const TrainConfig& config, const EpochHook& hook = {});

// Model output for one example (logits or a single prediction).
std::vector<double> predict(const ModelState& model, const Example& example);

// Fraction of examples predicted as their label.
double accuracy(const ModelState& model, const Dataset& data);
// Fraction of examples predicted as class `target`.
double target_hit_rate(const ModelState& model, const Dataset& data, std::size_t target);
// Root mean squared error of the model against each example's label.
double rmse(const ModelState& model, const Dataset& data);

}  // namespace fuslab
