// Compiled with AVX2 and FMA enabled; selected at run time.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace bikeflow {

namespace {

#include "gemm_kernel.inc"

}  // namespace

void gemm_kernel_avx2(std::size_t m, std::size_t n, std::size_t p, const double* a, std::size_t ars,
                      std::size_t acs, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    gemm_kernel(m, n, p, a, ars, acs, b, ldb, c, ldc);
}

}  // namespace bikeflow
