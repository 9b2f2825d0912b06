#include <cstring>
#include <vector>

#include "doctest.h"
#include "tod/common.hpp"
#include "tod/kernels.hpp"

using namespace tod;
using namespace tod::kernels;

namespace {

// Plain triple loop in j-k order, independent of the library's i-k-j kernels.
void naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                  std::vector<double>& c, int m, int k, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

std::vector<double> random_vec(Rng& rng, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.uniform01() - 0.5;
  return v;
}

}  // namespace

TEST_CASE("matmul matches a naive triple loop") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    int m = 1 + static_cast<int>(rng.uniform_int(24));
    int k = 1 + static_cast<int>(rng.uniform_int(24));
    int n = 1 + static_cast<int>(rng.uniform_int(24));
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, k * n);
    std::vector<double> want(static_cast<std::size_t>(m) * n), got(want.size());
    naive_matmul(a, b, want, m, k, n);
    matmul(a.data(), b.data(), got.data(), m, k, n);
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("parallel kernels are bitwise identical to their references") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    int m = 1 + static_cast<int>(rng.uniform_int(40));
    int k = 1 + static_cast<int>(rng.uniform_int(40));
    int n = 1 + static_cast<int>(rng.uniform_int(40));
    auto a = random_vec(rng, m * k);
    auto b_kn = random_vec(rng, k * n);
    auto b_nk = random_vec(rng, n * k);

    std::vector<double> r1(static_cast<std::size_t>(m) * n), p1 = r1;
    matmul_ref(a.data(), b_kn.data(), r1.data(), m, k, n);
    matmul(a.data(), b_kn.data(), p1.data(), m, k, n);
    CHECK(std::memcmp(r1.data(), p1.data(), r1.size() * sizeof(double)) == 0);

    std::vector<double> r2(static_cast<std::size_t>(m) * n), p2 = r2;
    matmul_bt_ref(a.data(), b_nk.data(), r2.data(), m, k, n);
    matmul_bt(a.data(), b_nk.data(), p2.data(), m, k, n);
    CHECK(std::memcmp(r2.data(), p2.data(), r2.size() * sizeof(double)) == 0);

    auto b_mn = random_vec(rng, m * n);
    auto seed_c = random_vec(rng, k * n);
    std::vector<double> r3 = seed_c, p3 = seed_c;
    matmul_at_acc_ref(a.data(), b_mn.data(), r3.data(), m, k, n);
    matmul_at_acc(a.data(), b_mn.data(), p3.data(), m, k, n);
    CHECK(std::memcmp(r3.data(), p3.data(), r3.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("matmul_bt multiplies by the transpose") {
  // A [2,3] times B [2,3]^T gives [2,2]
  std::vector<double> a = {1, 2, 3, 4, 5, 6};
  std::vector<double> b = {1, 0, 1, 0, 1, 0};
  std::vector<double> c(4);
  matmul_bt(a.data(), b.data(), c.data(), 2, 3, 2);
  CHECK(c[0] == 4.0);   // 1+3
  CHECK(c[1] == 2.0);   // 2
  CHECK(c[2] == 10.0);  // 4+6
  CHECK(c[3] == 5.0);
}

TEST_CASE("matmul_at_acc accumulates into c") {
  // A [2,2], B [2,2]; C += A^T B
  std::vector<double> a = {1, 2, 3, 4};
  std::vector<double> b = {1, 0, 0, 1};
  std::vector<double> c = {10, 10, 10, 10};
  matmul_at_acc(a.data(), b.data(), c.data(), 2, 2, 2);
  CHECK(c[0] == 11.0);
  CHECK(c[1] == 13.0);
  CHECK(c[2] == 12.0);
  CHECK(c[3] == 14.0);
}

TEST_CASE("add_bias broadcasts over rows") {
  std::vector<double> x = {1, 2, 3, 4};
  std::vector<double> bias = {10, 20};
  std::vector<double> out(4), out_ref(4);
  add_bias(x.data(), bias.data(), out.data(), 2, 2);
  add_bias_ref(x.data(), bias.data(), out_ref.data(), 2, 2);
  CHECK(out == std::vector<double>{11, 22, 13, 24});
  CHECK(out == out_ref);
}
