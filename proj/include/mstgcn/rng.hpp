#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mstgcn {

// Deterministic random stream. Draws are defined here (not via
// std::*_distribution) so a seed reproduces bit-identical values
// regardless of the standard library build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // Uniform in [0,1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the spare draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = eng_();
    while (v >= limit) v = eng_();
    return v % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(index(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  // Decorrelated child stream, e.g. one per cross-validation fold.
  Rng spawn(std::uint64_t salt) {
    return Rng(eng_() ^ (salt * 0x9e3779b97f4a7c15ull));
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mstgcn
