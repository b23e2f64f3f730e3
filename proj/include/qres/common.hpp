#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qres {

// ---------------------------------------------------------------------------
// Error taxonomy. Names match the per-module contracts; everything derives
// from qres::Error so callers can catch broadly or precisely.
// ---------------------------------------------------------------------------
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteValue : Error { using Error::Error; };     // NaN/Inf in a forward pass
struct NonFiniteGradient : Error { using Error::Error; };  // NaN/Inf gradient fed to Adam
struct UsageError : Error { using Error::Error; };         // API misuse (wrong tape, bad config)
struct ShapeError : Error { using Error::Error; };         // dimension mismatch
struct SpecError : Error { using Error::Error; };          // invalid network spec (missing W2, ...)
struct DomainError : Error { using Error::Error; };        // argument outside contract domain
struct MetricError : Error { using Error::Error; };        // degenerate metric (zero reference norm)
struct OracleError : Error { using Error::Error; };        // reference solver failed its self-check
struct LineSearchFailed : Error { using Error::Error; };   // Wolfe search exhausted its budget

// ---------------------------------------------------------------------------
// Deterministic RNG. We avoid std::uniform_real_distribution and friends
// because their output is implementation-defined; this generator produces the
// same streams on any conforming compiler, which the seeded-reproducibility
// contracts require.
// ---------------------------------------------------------------------------
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Independent sub-stream seed for a named purpose ("init", "colloc", ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
  return splitmix64(seed ^ fnv1a64(purpose));
}

// splitmix64-backed stream with the handful of draws the artifact needs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller (cached spare)
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  // index in [0, n)
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline constexpr double kPi = 3.141592653589793238462643383279502884;

}  // namespace qres
