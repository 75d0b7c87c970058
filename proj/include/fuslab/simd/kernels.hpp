#pragma once

// Dense double-precision inner loops used by the model and optimizers.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is chosen once at runtime from CPUID; the
// FUSLAB_KERNELS environment variable ("scalar" or "avx2") overrides it.
// Variants agree up to floating-point reassociation in the reductions
// (dot, gemv); elementwise kernels are bit-identical.
//
// Layout contract: matrices are row-major, `rows x cols`, contiguous. No
// alignment is required; all vector loads are unaligned.

#include <cstddef>
#include <span>
#include <string_view>

namespace fuslab::simd {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  Backend backend;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y = W x + b   (b may be null)
  void (*gemv)(const double* w, const double* x, const double* b, double* y, std::size_t rows, std::size_t cols);
  // out += W^T d
  void (*gemv_t_acc)(const double* w, const double* d, double* out, std::size_t rows, std::size_t cols);
  // G += d x^T
  void (*ger_acc)(const double* d, const double* x, double* g, std::size_t rows, std::size_t cols);
  // Bias-corrected Adam update; bc1 = 1 - beta1^t, bc2 = 1 - beta2^t.
  void (*adam)(double* w, double* m, double* v, const double* g, std::size_t n, double lr, double beta1,
               double beta2, double eps, double bc1, double bc2);
};

const KernelTable& scalar_kernels() noexcept;
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_kernels() noexcept;
#endif

bool backend_available(Backend b) noexcept;
const KernelTable& kernels_for(Backend b);

// The process-wide active table.
const KernelTable& kernels() noexcept;
Backend active_backend() noexcept;
// Testing hook. Throws ConfigError if the CPU lacks the backend.
void set_backend(Backend b);

std::string_view backend_name(Backend b) noexcept;

inline double dot(std::span<const double> x, std::span<const double> y) {
  return kernels().dot(x.data(), y.data(), x.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  kernels().axpy(a, x.data(), y.data(), x.size());
}

}  // namespace fuslab::simd
