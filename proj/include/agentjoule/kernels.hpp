#pragma once

// Double-precision vector kernels used by the least-squares code.
//
// Each kernel has a portable scalar reference and an AVX2+FMA variant. The
// active table is picked once at first use from CPUID; setting the
// environment variable AGENTJOULE_SIMD=scalar forces the reference path.
// Both variants must agree to a few ulps times the vector length; the
// equivalence tests enforce it.

#include <cstddef>
#include <span>
#include <string_view>

namespace agentjoule::kernels {

struct KernelTable {
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
};

const KernelTable& scalar_table() noexcept;
// nullptr when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table() noexcept;

const KernelTable& active() noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size() < y.size() ? x.size() : y.size());
}

inline double sum(std::span<const double> a) { return active().sum(a.data(), a.size()); }

}  // namespace agentjoule::kernels
