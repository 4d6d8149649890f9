#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dpal::kernels {

// Dispatch table for the data-parallel inner loops. Every entry has a scalar
// reference implementation; AVX2 (x86-64) and NEON (aarch64) variants are
// compiled when the target supports them and selected once at startup.
//
// Contract shared by all variants:
//   - axpy and scal are elementwise and must be bit-identical to the scalar
//     reference (no FMA, same per-element operation order).
//   - dot, sum, nrm2sq and sqdist may use split accumulators, so the result
//     can differ from the reference in the low-order bits only.
struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*nrm2sq)(const double* x, std::size_t n);
  double (*sqdist)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // x[i] *= alpha
  void (*scal)(double alpha, double* x, std::size_t n);
  const char* name;
};

const KernelTable& scalar_table();

// Tables compiled into this binary, scalar first.
std::vector<const KernelTable*> available_tables();

// Active table. Defaults to the widest variant the CPU supports; the
// DPAL_KERNELS environment variable ("scalar", "avx2", "neon", "auto")
// overrides the automatic choice.
const KernelTable& active();

// Force a specific variant by name; "auto" restores CPU-based selection.
// Unknown or unsupported names raise ParameterError.
void select(const std::string& name);

// Convenience wrappers through the active table.
inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline double sum(const double* x, std::size_t n) { return active().sum(x, n); }
inline double nrm2sq(const double* x, std::size_t n) {
  return active().nrm2sq(x, n);
}
inline double sqdist(const double* a, const double* b, std::size_t n) {
  return active().sqdist(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void scal(double alpha, double* x, std::size_t n) {
  active().scal(alpha, x, n);
}

}  // namespace dpal::kernels
