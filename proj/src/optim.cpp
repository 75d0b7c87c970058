#include "fuslab/optim.hpp"

#include <algorithm>
#include <cmath>

#include "fuslab/errors.hpp"
#include "fuslab/simd/kernels.hpp"

namespace fuslab {

void TrainConfig::validate() const {
  if (!(base_lr() > 0.0) || !std::isfinite(base_lr())) throw ConfigError("learning rate must be > 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr_factor > 0.0)) throw ConfigError("lr_factor must be > 0");
  for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
    if (lr_milestones[i] >= epochs) throw ConfigError("lr milestone must be < epochs");
    if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1]) throw ConfigError("lr milestones must be strictly increasing");
  }
  if (const auto* a = std::get_if<Adam>(&optimizer)) {
    if (!(a->beta1 >= 0.0 && a->beta1 < 1.0) || !(a->beta2 >= 0.0 && a->beta2 < 1.0) || !(a->eps > 0.0)) {
      throw ConfigError("Adam betas must lie in [0,1) and eps > 0");
    }
  }
}

double TrainConfig::base_lr() const {
  return std::visit([](const auto& o) { return o.lr; }, optimizer);
}

double effective_lr(const TrainConfig& config, std::size_t epoch) {
  const auto passed = std::count_if(config.lr_milestones.begin(), config.lr_milestones.end(),
                                    [&](std::size_t m) { return m <= epoch; });
  return config.base_lr() * std::pow(config.lr_factor, static_cast<double>(passed));
}

void apply_optimizer_step(ModelState& model, std::span<const double> grads, const TrainConfig& config,
                          std::size_t epoch) {
  if (grads.size() != model.params.size()) throw ShapeError("gradient length does not match parameter count");
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("non-finite gradient");
  }
  const double lr = effective_lr(config, epoch);
  const auto& k = simd::kernels();
  if (std::holds_alternative<Sgd>(config.optimizer)) {
    k.axpy(-lr, grads.data(), model.params.data(), grads.size());
    return;
  }
  const auto& a = std::get<Adam>(config.optimizer);
  auto& st = model.optimizer;
  if (st.m.size() != grads.size()) {
    st.m.assign(grads.size(), 0.0);
    st.v.assign(grads.size(), 0.0);
    st.steps = 0;
  }
  ++st.steps;
  const double t = static_cast<double>(st.steps);
  const double bc1 = 1.0 - std::pow(a.beta1, t);
  const double bc2 = 1.0 - std::pow(a.beta2, t);
  k.adam(model.params.data(), st.m.data(), st.v.data(), grads.data(), grads.size(), lr, a.beta1, a.beta2, a.eps,
         bc1, bc2);
}

ModelState optimizer_step(ModelState model, std::span<const double> grads, const TrainConfig& config,
                          std::size_t epoch) {
  apply_optimizer_step(model, grads, config, epoch);
  return model;
}

}  // namespace fuslab
