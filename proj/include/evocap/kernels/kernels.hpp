#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

// Dense double-precision inner loops. A scalar reference table is always
// available; vector tables (AVX2+FMA on x86-64, NEON on aarch64) are compiled
// when the toolchain supports them and chosen at runtime if the CPU does.
//
// Selection order: EVOCAP_KERNELS env var ("scalar", "avx2", "neon", "auto"),
// then the widest supported table.

namespace evocap::kernels {

struct KernelTable {
  const char* name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
};

const KernelTable& scalar_table();
// nullptr when not compiled in or not supported by this CPU.
const KernelTable* avx2_table();
const KernelTable* neon_table();

const KernelTable& active();
// Every table usable on this machine, scalar first.
std::vector<const KernelTable*> available();
// Switches the active table; returns false if `name` is unknown or unsupported.
bool select(std::string_view name);

}  // namespace evocap::kernels
