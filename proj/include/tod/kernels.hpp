#pragma once
// Dense kernels used by the language model.
//
// Each kernel has two implementations with identical semantics:
//   *_ref : plain serial loops, kept as the ground truth for tests
//   *     : OpenMP-parallel over independent output rows
// Row partitioning never reorders the additions inside a dot product, so the
// two variants produce bitwise-identical results; tests assert that.

#include <cstddef>

namespace tod::kernels {

// C[m,n] = A[m,k] * B[k,n], row-major. C may not alias A or B.
void matmul_ref(const double* a, const double* b, double* c, int m, int k, int n);
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

// C[m,n] = A[m,k] * B[n,k]^T  (B stored row-major with rows of length k).
void matmul_bt_ref(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_bt(const double* a, const double* b, double* c, int m, int k, int n);

// C[k,n] += A[m,k]^T * B[m,n]. Accumulates (used for weight gradients).
void matmul_at_acc_ref(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_at_acc(const double* a, const double* b, double* c, int m, int k, int n);

// out[m,n] = x[m,n] + bias[n] broadcast over rows.
void add_bias_ref(const double* x, const double* bias, double* out, int m, int n);
void add_bias(const double* x, const double* bias, double* out, int m, int n);

}  // namespace tod::kernels
