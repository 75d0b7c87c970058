#include <atomic>
#include <cstdlib>
#include <string>

#include "fuslab/errors.hpp"
#include "fuslab/simd/kernels.hpp"

namespace fuslab::simd {
namespace {

bool cpu_has_avx2() noexcept {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() noexcept {
  const char* env = std::getenv("FUSLAB_KERNELS");
  const std::string forced = env != nullptr ? env : "";
  if (forced == "scalar") return &scalar_kernels();
#if defined(__x86_64__) || defined(_M_X64)
  if (cpu_has_avx2()) return &avx2_kernels();
#endif
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& active() noexcept {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

}  // namespace

bool backend_available(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
      return cpu_has_avx2();
  }
  return false;
}

const KernelTable& kernels_for(Backend b) {
  if (!backend_available(b)) {
    throw ConfigError("kernel backend " + std::string(backend_name(b)) + " not supported on this CPU");
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (b == Backend::Avx2) return avx2_kernels();
#endif
  return scalar_kernels();
}

const KernelTable& kernels() noexcept { return *active().load(std::memory_order_acquire); }

Backend active_backend() noexcept { return kernels().backend; }

void set_backend(Backend b) { active().store(&kernels_for(b), std::memory_order_release); }

std::string_view backend_name(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace fuslab::simd
