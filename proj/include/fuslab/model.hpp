#pragma once

// Small feed-forward models with exact gradients w.r.t. parameters and inputs.
//
// Parameter layout (flat vector):
//   MLP:          for each layer l: W_l (out x in, row-major), then b_l (out)
//   EmbeddingBag: table (vocab x embed), W (out x embed), b (out)
// Hidden layers use ReLU; the last layer is linear and yields logits
// (classification) or a single prediction (regression).

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "fuslab/tensor.hpp"

namespace fuslab {

enum class TaskKind { Classification, Regression };

struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_widths;
  std::size_t output_dim = 0;
  bool operator==(const MlpSpec&) const = default;
};

struct EmbeddingBagSpec {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;
  std::size_t output_dim = 0;
  bool operator==(const EmbeddingBagSpec&) const = default;
};

struct ModelSpec {
  std::variant<MlpSpec, EmbeddingBagSpec> kind;

  // Throws ConfigError on any zero dimension.
  void validate() const;
  std::size_t param_count() const;
  std::size_t output_dim() const;
  bool dense_input() const noexcept { return std::holds_alternative<MlpSpec>(kind); }
  bool operator==(const ModelSpec&) const = default;
};

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t steps = 0;
  bool operator==(const OptimizerState&) const = default;
};

struct ModelState {
  ModelSpec spec;
  std::vector<double> params;
  OptimizerState optimizer;
  bool operator==(const ModelState&) const = default;
};

// Weights uniform in [-sqrt(6/fan_in), +sqrt(6/fan_in)], biases zero.
ModelState init_model(const ModelSpec& spec, std::uint64_t seed);

std::vector<double> forward(const ModelState& model, std::span<const double> x);
std::vector<double> forward(const ModelState& model, std::span<const std::int32_t> tokens);
inline std::vector<double> forward(const ModelState& model, const Tensor& x) { return forward(model, x.values()); }

std::vector<double> softmax(std::span<const double> logits);
std::size_t argmax(std::span<const double> v);

// Cross-entropy against class index `label` or squared error against target.
double loss_from_output(std::span<const double> output, double label, TaskKind task);

struct LossAndGrads {
  double loss = 0.0;
  std::vector<double> param_grads;
  std::vector<double> input_grad;  // empty unless requested (dense inputs only)
};

LossAndGrads loss_and_grads(const ModelState& model, std::span<const double> x, double label, TaskKind task,
                            bool want_input_grad = true);
LossAndGrads loss_and_grads(const ModelState& model, std::span<const std::int32_t> tokens, double label,
                            TaskKind task, bool want_input_grad = false);

// Reusable scratch space for the training loop: evaluates many examples
// against one parameter vector without reallocating.
class GradientWorkspace {
 public:
  explicit GradientWorkspace(const ModelSpec& spec);

  // Adds d loss / d params into `grad_acc` (skipped when empty) and returns
  // the loss. `input_grad` receives d loss / d x when non-empty.
  double accumulate(std::span<const double> params, std::span<const double> x, double label, TaskKind task,
                    std::span<double> grad_acc, std::span<double> input_grad = {});
  double accumulate(std::span<const double> params, std::span<const std::int32_t> tokens, double label,
                    TaskKind task, std::span<double> grad_acc);

  std::span<const double> forward(std::span<const double> params, std::span<const double> x);
  std::span<const double> forward(std::span<const double> params, std::span<const std::int32_t> tokens);

 private:
  void output_delta(double label, TaskKind task);
  double output_loss(double label, TaskKind task) const;

  ModelSpec spec_;
  std::vector<std::size_t> dims_;           // MLP: input, hidden..., output
  std::vector<std::size_t> offsets_;        // MLP: start of W_l in params
  std::vector<std::vector<double>> acts_;   // post-activation per layer (acts_[0] = input copy)
  std::vector<std::vector<double>> pre_;    // pre-activation per layer
  std::vector<double> delta_;
  std::vector<double> delta_prev_;
  std::vector<double> bag_;                 // EmbeddingBag pooled embedding
};

}  // namespace fuslab
