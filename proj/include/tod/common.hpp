#pragma once
// Shared plumbing: deterministic RNG, typed errors, small string helpers.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tod {

// ---------------------------------------------------------------------------
// Errors. Every failure mode surfaces as one of these so callers (CLI, tests)
// can tell configuration mistakes from data problems from numeric blowups.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error("config error: " + m) {}
};
struct SchemaError : std::runtime_error {
  explicit SchemaError(const std::string& m) : std::runtime_error("schema error: " + m) {}
};
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& m) : std::runtime_error("parse error: " + m) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error("io error: " + m) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error("numeric error: " + m) {}
};
struct TruncationError : std::runtime_error {
  explicit TruncationError(const std::string& m) : std::runtime_error("truncation error: " + m) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// mt19937_64 raw output is specified by the standard, so sequences are
// bit-identical across platforms. The std:: distributions are not; all
// reductions below are hand-rolled for that reason.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stable sub-stream seed: mixes a base seed with up to two salts.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(base ^ 0x51f1dead9abcull) ^ splitmix64(a) ^ splitmix64(b ^ 0x9e37u));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, n). Modulo bias is irrelevant at the scales used here and
  // keeps the mapping trivially portable.
  int uniform_int(int n) {
    if (n <= 0) throw NumericError("uniform_int needs n > 0");
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double gaussian() {
    // Box-Muller; spare value cached.
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    if (v.empty()) throw NumericError("pick from empty vector");
    return v[static_cast<std::size_t>(uniform_int(static_cast<int>(v.size())))];
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// String helpers (corpus text is lowercase, whitespace-tokenized).

std::vector<std::string> split_ws(const std::string& s);
std::string join(const std::vector<std::string>& parts, const std::string& sep = " ");

}  // namespace tod
