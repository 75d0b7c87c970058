#include "fuslab/importance.hpp"

#include <fstream>

#include "fuslab/errors.hpp"

namespace fuslab {

ImportanceTrace::ImportanceTrace(TaskKind task_, double target_, std::size_t epochs_,
                                 std::span<const std::size_t> origins)
    : task(task_), target(target_), epochs(epochs_) {
  samples.reserve(origins.size());
  for (auto o : origins) {
    SampleTrace s;
    s.origin = o;
    s.losses.reserve(epochs);
    if (task == TaskKind::Classification) s.predicted_ok.reserve(epochs);
    samples.push_back(std::move(s));
  }
}

void ImportanceTrace::record_epoch(const ModelState& model, const Dataset& poison, std::size_t epoch) {
  if (epoch != recorded || recorded >= epochs) {
    throw InvariantError("importance trace: epoch " + std::to_string(epoch) + " recorded out of order");
  }
  if (poison.size() != samples.size()) throw InvariantError("importance trace: poisoned set size changed");
  GradientWorkspace ws(model.spec);
  const bool last = epoch + 1 == epochs;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Example& e = poison.examples[i];
    const auto out = e.tokens.empty() ? ws.forward(model.params, e.x.values())
                                      : ws.forward(model.params, std::span<const std::int32_t>(e.tokens));
    auto& s = samples[i];
    s.losses.push_back(loss_from_output(out, target, task));
    if (task == TaskKind::Classification) {
      const auto t = static_cast<std::size_t>(target);
      s.predicted_ok.push_back(argmax(out) == t ? 1 : 0);
      if (last) s.final_target_prob = softmax(out)[t];
    }
  }
  ++recorded;
}

std::size_t forgetting_events(std::span<const std::uint8_t> ok) {
  std::size_t n = 0;
  for (std::size_t s = 0; s + 1 < ok.size(); ++s) {
    if (ok[s] != 0 && ok[s + 1] == 0) ++n;
  }
  return n;
}

double loss_swing(std::span<const double> losses) {
  double sum = 0.0;
  for (std::size_t s = 0; s + 1 < losses.size(); ++s) {
    const double d = losses[s + 1] - losses[s];
    if (d > 0.0) sum += d;
  }
  return sum;
}

std::vector<double> score(const ImportanceTrace& trace, MeasureKind kind, bool invert_cs) {
  if (!trace.complete()) throw ConfigError("importance trace is incomplete");
  if (kind != MeasureKind::LS && trace.task == TaskKind::Regression) {
    throw ConfigError("FE and CS measures need a classification task");
  }
  std::vector<double> out;
  out.reserve(trace.samples.size());
  for (const auto& s : trace.samples) {
    switch (kind) {
      case MeasureKind::FE:
        out.push_back(static_cast<double>(forgetting_events(s.predicted_ok)));
        break;
      case MeasureKind::CS: {
        if (!s.final_target_prob) throw ConfigError("trace lacks the final target probability");
        const double p = *s.final_target_prob;
        out.push_back(invert_cs ? 1.0 - p : p);
        break;
      }
      case MeasureKind::LS:
        out.push_back(loss_swing(s.losses));
        break;
    }
  }
  return out;
}

void write_trace_csv(const ImportanceTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(17);
  out << "index,epoch,predicted_ok,loss\n";
  for (const auto& s : trace.samples) {
    for (std::size_t e = 0; e < s.losses.size(); ++e) {
      out << s.origin << ',' << e << ',';
      if (e < s.predicted_ok.size()) out << static_cast<int>(s.predicted_ok[e]);
      out << ',' << s.losses[e] << '\n';
    }
  }
}

}  // namespace fuslab
