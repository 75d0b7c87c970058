#include "fuslab/simd/kernels.hpp"

#include <cmath>

namespace fuslab::simd {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void gemv_scalar(const double* w, const double* x, const double* b, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = dot_scalar(w + r * cols, x, cols) + (b != nullptr ? b[r] : 0.0);
  }
}

void gemv_t_acc_scalar(const double* w, const double* d, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (d[r] != 0.0) axpy_scalar(d[r], w + r * cols, out, cols);
  }
}

void ger_acc_scalar(const double* d, const double* x, double* g, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (d[r] != 0.0) axpy_scalar(d[r], x, g + r * cols, cols);
  }
}

void adam_scalar(double* w, double* m, double* v, const double* g, std::size_t n, double lr, double beta1,
                 double beta2, double eps, double bc1, double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i]);
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

constexpr KernelTable kScalar{Backend::Scalar, dot_scalar, axpy_scalar, gemv_scalar,
                              gemv_t_acc_scalar, ger_acc_scalar, adam_scalar};

}  // namespace

const KernelTable& scalar_kernels() noexcept { return kScalar; }

}  // namespace fuslab::simd
