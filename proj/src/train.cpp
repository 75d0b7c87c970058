#include "fuslab/train.hpp"

#include <cmath>
#include <numeric>

#include "fuslab/errors.hpp"
#include "fuslab/rng.hpp"

namespace fuslab {
namespace {

void check_compatible(const ModelSpec& spec, const Dataset& data) {
  if (spec.dense_input() != data.dense()) throw ConfigError("model and dataset modalities differ");
  if (data.dense() && std::get<MlpSpec>(spec.kind).input_dim != data.input_dim()) {
    throw ShapeError("model input_dim does not match dataset feature count");
  }
  if (!data.dense() && std::get<EmbeddingBagSpec>(spec.kind).vocab_size < data.vocab_size()) {
    throw ShapeError("model vocabulary smaller than dataset vocabulary");
  }
  if (data.task == TaskKind::Classification && spec.output_dim() != data.n_classes) {
    throw ConfigError("model output_dim must equal n_classes");
  }
  if (data.task == TaskKind::Regression && spec.output_dim() != 1) {
    throw ConfigError("regression model must have output_dim 1");
  }
}

double accumulate_example(GradientWorkspace& ws, const ModelState& m, const Example& e, TaskKind task,
                          std::span<double> grads) {
  if (e.tokens.empty()) return ws.accumulate(m.params, e.x.values(), e.label, task, grads);
  return ws.accumulate(m.params, std::span<const std::int32_t>(e.tokens), e.label, task, grads);
}

}  // namespace

ModelState train(ModelState model, const Dataset& data, const TrainConfig& config, const EpochHook& hook) {
  config.validate();
  if (data.empty()) throw ConfigError("cannot train on an empty dataset");
  check_compatible(model.spec, data);
  GradientWorkspace ws(model.spec);
  Rng rng(config.seed, "shuffle");
  std::vector<std::size_t> order(data.size());
  std::vector<double> grads(model.params.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::fill(grads.begin(), grads.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        batch_loss += accumulate_example(ws, model, data.examples[order[i]], data.task, grads);
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& g : grads) g *= inv;
      apply_optimizer_step(model, grads, config, epoch);
    }
    if (hook) hook(model, epoch);
  }
  return model;
}

std::vector<double> predict(const ModelState& model, const Example& example) {
  if (example.tokens.empty()) return forward(model, example.x.values());
  return forward(model, std::span<const std::int32_t>(example.tokens));
}

namespace {

template <class F>
void for_each_output(const ModelState& model, const Dataset& data, F&& f) {
  GradientWorkspace ws(model.spec);
  for (const auto& e : data.examples) {
    const auto out = e.tokens.empty() ? ws.forward(model.params, e.x.values())
                                      : ws.forward(model.params, std::span<const std::int32_t>(e.tokens));
    f(e, out);
  }
}

}  // namespace

double accuracy(const ModelState& model, const Dataset& data) {
  if (data.empty()) throw ConfigError("accuracy of an empty dataset");
  std::size_t hits = 0;
  for_each_output(model, data, [&](const Example& e, std::span<const double> out) {
    hits += argmax(out) == static_cast<std::size_t>(e.label) ? 1 : 0;
  });
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double target_hit_rate(const ModelState& model, const Dataset& data, std::size_t target) {
  if (data.empty()) throw ConfigError("hit rate of an empty dataset");
  std::size_t hits = 0;
  for_each_output(model, data, [&](const Example&, std::span<const double> out) {
    hits += argmax(out) == target ? 1 : 0;
  });
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

double rmse(const ModelState& model, const Dataset& data) {
  if (data.empty()) throw ConfigError("rmse of an empty dataset");
  double s = 0.0;
  for_each_output(model, data, [&](const Example& e, std::span<const double> out) {
    const double r = out[0] - e.label;
    s += r * r;
  });
  const double v = std::sqrt(s / static_cast<double>(data.size()));
  if (!std::isfinite(v)) throw NumericError("non-finite rmse");
  return v;
}

}  // namespace fuslab
