#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cctune {

#ifdef CCTUNE_VERSION
inline constexpr const char* kVersion = CCTUNE_VERSION;
#else
inline constexpr const char* kVersion = "0.1.0";
#endif

// Error taxonomy mapped to CLI exit codes: IoError -> 1,
// PreconditionError -> 2, NumericalError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : Error {
  using Error::Error;
};
struct PreconditionError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};

using Index = int;

// 1D Gauss-Legendre rule on [0,1].
struct QuadratureRule {
  std::vector<double> x;
  std::vector<double> w;
  int size() const { return static_cast<int>(x.size()); }
};

// Nodes via Newton iteration on Legendre polynomials, then mapped from
// [-1,1] to [0,1]. Accurate to machine precision for the small n used here.
inline QuadratureRule gauss_legendre(int n) {
  if (n < 1 || n > 64) throw PreconditionError("quadrature order out of range");
  QuadratureRule rule;
  rule.x.resize(n);
  rule.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double p0 = 0, p1 = 0;
    for (int it = 0; it < 100; ++it) {
      p0 = 1.0;
      p1 = 0.0;
      for (int k = 0; k < n; ++k) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k + 1.0) * t * p1 - k * p2) / (k + 1.0);
      }
      double dp = n * (t * p0 - p1) / (t * t - 1.0);
      double dt = p0 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    p0 = 1.0;
    p1 = 0.0;
    for (int k = 0; k < n; ++k) {
      double p2 = p1;
      p1 = p0;
      p0 = ((2.0 * k + 1.0) * t * p1 - k * p2) / (k + 1.0);
    }
    double dp = n * (t * p0 - p1) / (t * t - 1.0);
    rule.x[i] = 0.5 * (1.0 - t);  // reversed so nodes ascend
    rule.w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
  }
  return rule;
}

inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t seed = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string fnv1a_hex(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(s.data(), s.size())));
  return buf;
}

}  // namespace cctune
