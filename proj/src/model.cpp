#include "fuslab/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fuslab/errors.hpp"
#include "fuslab/rng.hpp"
#include "fuslab/simd/kernels.hpp"

namespace fuslab {
namespace {

std::vector<std::size_t> mlp_dims(const MlpSpec& s) {
  std::vector<std::size_t> dims{s.input_dim};
  dims.insert(dims.end(), s.hidden_widths.begin(), s.hidden_widths.end());
  dims.push_back(s.output_dim);
  return dims;
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

void ModelSpec::validate() const {
  std::visit(Overloaded{[](const MlpSpec& s) {
                          if (s.input_dim == 0 || s.output_dim == 0) {
                            throw ConfigError("MLP input_dim and output_dim must be >= 1");
                          }
                          for (auto w : s.hidden_widths) {
                            if (w == 0) throw ConfigError("MLP hidden width must be >= 1");
                          }
                        },
                        [](const EmbeddingBagSpec& s) {
                          if (s.vocab_size == 0 || s.embed_dim == 0 || s.output_dim == 0) {
                            throw ConfigError("EmbeddingBag dimensions must be >= 1");
                          }
                        }},
             kind);
}

std::size_t ModelSpec::param_count() const {
  return std::visit(Overloaded{[](const MlpSpec& s) {
                                 const auto dims = mlp_dims(s);
                                 std::size_t n = 0;
                                 for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l] * dims[l + 1] + dims[l + 1];
                                 return n;
                               },
                               [](const EmbeddingBagSpec& s) {
                                 return s.vocab_size * s.embed_dim + s.output_dim * s.embed_dim + s.output_dim;
                               }},
                    kind);
}

std::size_t ModelSpec::output_dim() const {
  return std::visit([](const auto& s) { return s.output_dim; }, kind);
}

ModelState init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelState m{spec, std::vector<double>(spec.param_count(), 0.0), {}};
  Rng rng(seed, "init");
  auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) m.params[offset + i] = rng.uniform(-bound, bound);
  };
  if (const auto* s = std::get_if<MlpSpec>(&spec.kind)) {
    const auto dims = mlp_dims(*s);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      fill(off, dims[l] * dims[l + 1], dims[l]);
      off += dims[l] * dims[l + 1] + dims[l + 1];
    }
  } else {
    const auto& e = std::get<EmbeddingBagSpec>(spec.kind);
    fill(0, e.vocab_size * e.embed_dim, e.embed_dim);
    fill(e.vocab_size * e.embed_dim, e.output_dim * e.embed_dim, e.embed_dim);
  }
  return m;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double loss_from_output(std::span<const double> output, double label, TaskKind task) {
  if (task == TaskKind::Regression) {
    const double r = output[0] - label;
    return r * r;
  }
  const auto cls = static_cast<std::size_t>(label);
  const double mx = *std::max_element(output.begin(), output.end());
  double z = 0.0;
  for (double v : output) z += std::exp(v - mx);
  return std::log(z) + mx - output[cls];
}

// ---------------------------------------------------------------------------

GradientWorkspace::GradientWorkspace(const ModelSpec& spec) : spec_(spec) {
  spec_.validate();
  if (const auto* s = std::get_if<MlpSpec>(&spec_.kind)) {
    dims_ = mlp_dims(*s);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      offsets_.push_back(off);
      off += dims_[l] * dims_[l + 1] + dims_[l + 1];
    }
    acts_.resize(dims_.size());
    pre_.resize(dims_.size());
    for (std::size_t l = 0; l < dims_.size(); ++l) {
      acts_[l].resize(dims_[l]);
      pre_[l].resize(dims_[l]);
    }
  } else {
    const auto& e = std::get<EmbeddingBagSpec>(spec_.kind);
    bag_.resize(e.embed_dim);
    acts_.resize(1);
    acts_[0].resize(e.output_dim);
  }
  std::size_t widest = 0;
  for (auto d : dims_) widest = std::max(widest, d);
  widest = std::max(widest, spec_.output_dim());
  if (!bag_.empty()) widest = std::max(widest, bag_.size());
  delta_.resize(widest);
  delta_prev_.resize(widest);
}

std::span<const double> GradientWorkspace::forward(std::span<const double> params, std::span<const double> x) {
  if (dims_.empty()) throw UnsupportedInputError("dense input given to a token model");
  if (x.size() != dims_[0]) {
    throw ShapeError("input has " + std::to_string(x.size()) + " features, model expects " +
                     std::to_string(dims_[0]));
  }
  const auto& k = simd::kernels();
  std::copy(x.begin(), x.end(), acts_[0].begin());
  const std::size_t layers = dims_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = dims_[l];
    const std::size_t out = dims_[l + 1];
    const double* w = params.data() + offsets_[l];
    const double* b = w + in * out;
    double* h = pre_[l + 1].data();
    k.gemv(w, acts_[l].data(), b, h, out, in);
    double* a = acts_[l + 1].data();
    if (l + 1 < layers) {
      for (std::size_t i = 0; i < out; ++i) a[i] = h[i] > 0.0 ? h[i] : 0.0;
    } else {
      std::copy(h, h + out, a);
    }
  }
  return acts_.back();
}

std::span<const double> GradientWorkspace::forward(std::span<const double> params,
                                                   std::span<const std::int32_t> tokens) {
  const auto* e = std::get_if<EmbeddingBagSpec>(&spec_.kind);
  if (e == nullptr) throw UnsupportedInputError("token input given to a dense model");
  if (tokens.empty()) throw ShapeError("token sequence is empty");
  std::fill(bag_.begin(), bag_.end(), 0.0);
  const auto& k = simd::kernels();
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (auto t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= e->vocab_size) {
      throw ShapeError("token id " + std::to_string(t) + " outside vocabulary of " + std::to_string(e->vocab_size));
    }
    k.axpy(inv, params.data() + static_cast<std::size_t>(t) * e->embed_dim, bag_.data(), e->embed_dim);
  }
  const double* w = params.data() + e->vocab_size * e->embed_dim;
  const double* b = w + e->output_dim * e->embed_dim;
  k.gemv(w, bag_.data(), b, acts_[0].data(), e->output_dim, e->embed_dim);
  return acts_[0];
}

double GradientWorkspace::output_loss(double label, TaskKind task) const {
  return loss_from_output(acts_.back(), label, task);
}

// delta_[0..out) = d loss / d output
void GradientWorkspace::output_delta(double label, TaskKind task) {
  const auto& out = acts_.back();
  if (task == TaskKind::Regression) {
    delta_[0] = 2.0 * (out[0] - label);
    return;
  }
  const auto p = softmax(out);
  for (std::size_t i = 0; i < p.size(); ++i) delta_[i] = p[i];
  delta_[static_cast<std::size_t>(label)] -= 1.0;
}

double GradientWorkspace::accumulate(std::span<const double> params, std::span<const double> x, double label,
                                     TaskKind task, std::span<double> grad_acc, std::span<double> input_grad) {
  forward(params, x);
  const double loss = output_loss(label, task);
  output_delta(label, task);
  const auto& k = simd::kernels();
  const std::size_t layers = dims_.size() - 1;
  for (std::size_t li = layers; li-- > 0;) {
    const std::size_t in = dims_[li];
    const std::size_t out = dims_[li + 1];
    const double* w = params.data() + offsets_[li];
    if (!grad_acc.empty()) {
      double* gw = grad_acc.data() + offsets_[li];
      double* gb = gw + in * out;
      k.ger_acc(delta_.data(), acts_[li].data(), gw, out, in);
      for (std::size_t i = 0; i < out; ++i) gb[i] += delta_[i];
    }
    if (li == 0 && input_grad.empty()) break;
    std::fill(delta_prev_.begin(), delta_prev_.begin() + static_cast<std::ptrdiff_t>(in), 0.0);
    k.gemv_t_acc(w, delta_.data(), delta_prev_.data(), out, in);
    if (li > 0) {
      const double* h = pre_[li].data();
      for (std::size_t i = 0; i < in; ++i) {
        if (h[i] <= 0.0) delta_prev_[i] = 0.0;
      }
    }
    std::swap(delta_, delta_prev_);
  }
  if (!input_grad.empty()) {
    if (input_grad.size() != dims_[0]) throw ShapeError("input gradient buffer has wrong size");
    std::copy(delta_.begin(), delta_.begin() + static_cast<std::ptrdiff_t>(dims_[0]), input_grad.begin());
  }
  return loss;
}

double GradientWorkspace::accumulate(std::span<const double> params, std::span<const std::int32_t> tokens,
                                     double label, TaskKind task, std::span<double> grad_acc) {
  forward(params, tokens);
  const double loss = output_loss(label, task);
  if (grad_acc.empty()) return loss;
  output_delta(label, task);
  const auto& e = std::get<EmbeddingBagSpec>(spec_.kind);
  const auto& k = simd::kernels();
  const std::size_t woff = e.vocab_size * e.embed_dim;
  const std::size_t boff = woff + e.output_dim * e.embed_dim;
  k.ger_acc(delta_.data(), bag_.data(), grad_acc.data() + woff, e.output_dim, e.embed_dim);
  for (std::size_t i = 0; i < e.output_dim; ++i) grad_acc[boff + i] += delta_[i];
  std::fill(delta_prev_.begin(), delta_prev_.begin() + static_cast<std::ptrdiff_t>(e.embed_dim), 0.0);
  k.gemv_t_acc(params.data() + woff, delta_.data(), delta_prev_.data(), e.output_dim, e.embed_dim);
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (auto t : tokens) {
    k.axpy(inv, delta_prev_.data(), grad_acc.data() + static_cast<std::size_t>(t) * e.embed_dim, e.embed_dim);
  }
  return loss;
}

// ---------------------------------------------------------------------------

namespace {

void check_label(const ModelState& model, double label, TaskKind task) {
  if (!std::isfinite(label)) throw ConfigError("label must be finite");
  if (task == TaskKind::Classification) {
    if (label < 0 || label != std::floor(label) || static_cast<std::size_t>(label) >= model.spec.output_dim()) {
      throw ConfigError("class label out of range");
    }
  } else if (model.spec.output_dim() != 1) {
    throw ConfigError("regression requires output_dim == 1");
  }
}

}  // namespace

std::vector<double> forward(const ModelState& model, std::span<const double> x) {
  GradientWorkspace ws(model.spec);
  const auto out = ws.forward(model.params, x);
  return {out.begin(), out.end()};
}

std::vector<double> forward(const ModelState& model, std::span<const std::int32_t> tokens) {
  GradientWorkspace ws(model.spec);
  const auto out = ws.forward(model.params, tokens);
  return {out.begin(), out.end()};
}

LossAndGrads loss_and_grads(const ModelState& model, std::span<const double> x, double label, TaskKind task,
                            bool want_input_grad) {
  check_label(model, label, task);
  GradientWorkspace ws(model.spec);
  LossAndGrads r;
  r.param_grads.assign(model.params.size(), 0.0);
  if (want_input_grad) r.input_grad.assign(x.size(), 0.0);
  r.loss = ws.accumulate(model.params, x, label, task, r.param_grads, r.input_grad);
  return r;
}

LossAndGrads loss_and_grads(const ModelState& model, std::span<const std::int32_t> tokens, double label,
                            TaskKind task, bool want_input_grad) {
  if (want_input_grad) throw UnsupportedInputError("input gradient is undefined for token inputs");
  check_label(model, label, task);
  GradientWorkspace ws(model.spec);
  LossAndGrads r;
  r.param_grads.assign(model.params.size(), 0.0);
  r.loss = ws.accumulate(model.params, tokens, label, task, r.param_grads);
  return r;
}

}  // namespace fuslab
