#include "tod/kernels.hpp"

#include <cstring>

namespace tod::kernels {

// i-k-j loop order keeps the B walk contiguous so the compiler can vectorize
// the inner j loop. The serial and parallel bodies are shared: the reference
// runs the same row routine without the omp pragma.

namespace {

inline void matmul_row(const double* a, const double* b, double* c, int k, int n) {
  for (int j = 0; j < n; ++j) c[j] = 0.0;
  for (int kk = 0; kk < k; ++kk) {
    const double av = a[kk];
    const double* brow = b + static_cast<std::size_t>(kk) * n;
    for (int j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

inline void matmul_bt_row(const double* a, const double* b, double* c, int k, int n) {
  for (int j = 0; j < n; ++j) {
    const double* brow = b + static_cast<std::size_t>(j) * k;
    double acc = 0.0;
    for (int kk = 0; kk < k; ++kk) acc += a[kk] * brow[kk];
    c[j] = acc;
  }
}

}  // namespace

void matmul_ref(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    matmul_row(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, k, n);
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    matmul_row(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, k, n);
}

void matmul_bt_ref(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    matmul_bt_row(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, k, n);
}

void matmul_bt(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    matmul_bt_row(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, k, n);
}

// C[k,n] += A[m,k]^T * B[m,n]: parallel over output rows (columns of A), so
// each thread owns disjoint rows of C and accumulation order over m is the
// serial order in both variants.
void matmul_at_acc_ref(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < k; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int mm = 0; mm < m; ++mm) {
      const double av = a[static_cast<std::size_t>(mm) * k + i];
      const double* brow = b + static_cast<std::size_t>(mm) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_at_acc(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < k; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int mm = 0; mm < m; ++mm) {
      const double av = a[static_cast<std::size_t>(mm) * k + i];
      const double* brow = b + static_cast<std::size_t>(mm) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void add_bias_ref(const double* x, const double* bias, double* out, int m, int n) {
  for (int i = 0; i < m; ++i) {
    const double* xi = x + static_cast<std::size_t>(i) * n;
    double* oi = out + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) oi[j] = xi[j] + bias[j];
  }
}

void add_bias(const double* x, const double* bias, double* out, int m, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const double* xi = x + static_cast<std::size_t>(i) * n;
    double* oi = out + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) oi[j] = xi[j] + bias[j];
  }
}

}  // namespace tod::kernels
