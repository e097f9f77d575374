#pragma once

#include <cstddef>

// Dense GEMM kernels on row-major buffers with explicit leading dimensions.
namespace tmm::kernels {

// C = op(A) * op(B) (+ C when accumulate). op(A) is m x k, op(B) is k x n.
// A is stored m x k (k x m when trans_a), B is stored k x n (n x k when trans_b).
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc, bool accumulate);

}  // namespace tmm::kernels
