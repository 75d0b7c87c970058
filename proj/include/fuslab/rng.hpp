#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fuslab {

// splitmix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Seed for the named stream ("init", "shuffle", "selection", "data", ...) of a
// run with the given master seed. `salt` distinguishes repeated uses of one
// stream name, e.g. the search iteration.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t salt = 0) noexcept;

// A named random stream. Reproducible within one build of the library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, std::string_view stream, std::uint64_t salt = 0)
      : engine_(derive_seed(master, stream, salt)) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mean, double sigma);
  // Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);
  // +1 or -1 with equal probability.
  double sign() { return (engine_() >> 63) != 0 ? 1.0 : -1.0; }
  std::uint64_t next() { return engine_(); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace fuslab
