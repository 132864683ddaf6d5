#include "mstgcn/fft.hpp"

#include <cmath>
#include <cstddef>

namespace mstgcn {

namespace {

using cdouble = std::complex<double>;

bool is_pow2(std::size_t n) { return n && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Iterative Cooley-Tukey, n a power of two.
void fft_pow2(std::vector<cdouble>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const cdouble wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cdouble w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const cdouble u = a[i + j];
        const cdouble v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    for (auto& v : a) v /= static_cast<double>(n);
  }
}

// Bluestein chirp-z transform for arbitrary n.
void fft_bluestein(std::vector<cdouble>& x, bool inverse) {
  const std::size_t n = x.size();
  const std::size_t m = next_pow2(2 * n - 1);
  const double sign = inverse ? 1.0 : -1.0;

  std::vector<cdouble> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // angle = sign*pi*k^2/n, with k^2 reduced mod 2n to keep precision
    const std::size_t k2 = (static_cast<unsigned long long>(k) * k) % (2 * n);
    const double ang = sign * M_PI * static_cast<double>(k2) /
                       static_cast<double>(n);
    chirp[k] = cdouble(std::cos(ang), std::sin(ang));
  }
  std::vector<cdouble> a(m, cdouble(0, 0)), b(m, cdouble(0, 0));
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  for (std::size_t k = 0; k < n; ++k) {
    b[k] = std::conj(chirp[k]);
    if (k) b[m - k] = std::conj(chirp[k]);
  }
  fft_pow2(a, false);
  fft_pow2(b, false);
  for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
  fft_pow2(a, true);
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
  if (inverse) {
    for (auto& v : x) v /= static_cast<double>(n);
  }
}

}  // namespace

void fft_inplace(std::vector<cdouble>& x, bool inverse) {
  if (x.empty()) return;
  if (is_pow2(x.size())) {
    fft_pow2(x, inverse);
  } else {
    fft_bluestein(x, inverse);
  }
}

std::vector<cdouble> fft(const std::vector<double>& x) {
  std::vector<cdouble> c(x.begin(), x.end());
  fft_inplace(c, false);
  return c;
}

std::vector<cdouble> analytic_signal(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<cdouble> spec = fft(x);
  // keep DC (and Nyquist when n is even), double positive, zero negative
  for (std::size_t k = 1; k < n; ++k) {
    if (2 * k < n) {
      spec[k] *= 2.0;
    } else if (2 * k > n) {
      spec[k] = cdouble(0, 0);
    }
  }
  fft_inplace(spec, true);
  return spec;
}

}  // namespace mstgcn
