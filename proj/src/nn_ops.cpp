#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mstgcn/ops.hpp"

namespace mstgcn {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;
using detail::NodePtr;

bool wants(Tape* tp, const Tensor& t) { return tp && tp->participates(t); }

std::size_t out_len(std::size_t L, std::size_t k, std::size_t s) {
  return (L - k) / s + 1;
}

}  // namespace

Tensor conv1d_valid(const Tensor& signal, const Tensor& kernel,
                    std::size_t stride) {
  if (signal.rank() != 1 || kernel.rank() != 1) {
    throw DimensionError("conv1d_valid: expected rank-1 inputs, got " +
                         shape_str(signal.shape()) + " and " +
                         shape_str(kernel.shape()));
  }
  const std::size_t L = signal.dim(0), k = kernel.dim(0);
  if (stride < 1) throw ParameterError("conv1d_valid: stride must be >= 1");
  if (k > L) {
    throw DimensionError("conv1d_valid: kernel " + std::to_string(k) +
                         " longer than signal " + std::to_string(L) +
                         " yields empty output");
  }
  const std::size_t T = out_len(L, k, stride);
  Tensor out = Tensor::zeros({T});
  for (std::size_t t = 0; t < T; ++t) {
    double s = 0.0;
    const double* x = signal.data() + t * stride;
    for (std::size_t j = 0; j < k; ++j) s += x[j] * kernel.data()[j];
    out.data()[t] = s;
  }
  Tape* tp = Tape::active();
  if (wants(tp, signal) || wants(tp, kernel)) {
    NodePtr xn = signal.node(), kn = kernel.node(), on = out.node();
    const bool gx = wants(tp, signal), gk = wants(tp, kernel);
    tp->record({xn, kn}, on, [xn, kn, on, gx, gk, T, k, stride]() {
      if (gx) xn->ensure_grad();
      if (gk) kn->ensure_grad();
      for (std::size_t t = 0; t < T; ++t) {
        const double g = on->grad[t];
        if (g == 0.0) continue;
        for (std::size_t j = 0; j < k; ++j) {
          if (gx) xn->grad[t * stride + j] += g * kn->values[j];
          if (gk) kn->grad[j] += g * xn->values[t * stride + j];
        }
      }
    });
  }
  return out;
}

Tensor maxpool1d(const Tensor& signal, std::size_t window, std::size_t stride) {
  if (signal.rank() != 1) {
    throw DimensionError("maxpool1d: expected rank-1 input, got " +
                         shape_str(signal.shape()));
  }
  const std::size_t L = signal.dim(0);
  if (window > L) {
    throw DimensionError("maxpool1d: window " + std::to_string(window) +
                         " exceeds length " + std::to_string(L));
  }
  if (stride < 1) throw ParameterError("maxpool1d: stride must be >= 1");
  const std::size_t T = out_len(L, window, stride);
  Tensor out = Tensor::zeros({T});
  auto argmax = std::make_shared<std::vector<std::size_t>>(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::size_t best = t * stride;
    for (std::size_t j = 1; j < window; ++j) {
      if (signal.data()[t * stride + j] > signal.data()[best])
        best = t * stride + j;
    }
    (*argmax)[t] = best;
    out.data()[t] = signal.data()[best];
  }
  Tape* tp = Tape::active();
  if (wants(tp, signal)) {
    NodePtr xn = signal.node(), on = out.node();
    tp->record({xn}, on, [xn, on, argmax]() {
      xn->ensure_grad();
      for (std::size_t t = 0; t < on->size(); ++t)
        xn->grad[(*argmax)[t]] += on->grad[t];
    });
  }
  return out;
}

Tensor conv1d_mc(const Tensor& x, const Tensor& w, const Tensor& bias,
                 std::size_t stride, bool same_pad) {
  if (x.rank() != 3 || w.rank() != 3 || bias.rank() != 1) {
    throw DimensionError("conv1d_mc: ranks " + shape_str(x.shape()) + ", " +
                         shape_str(w.shape()) + ", " + shape_str(bias.shape()));
  }
  const std::size_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  const std::size_t Cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != Cin || bias.dim(0) != Cout) {
    throw DimensionError("conv1d_mc: channel mismatch " + shape_str(x.shape()) +
                         " vs " + shape_str(w.shape()));
  }
  if (same_pad && stride != 1) {
    throw ParameterError("conv1d_mc: same padding requires stride 1");
  }
  std::size_t pad_l = 0, pad_r = 0;
  if (same_pad) {
    pad_l = (k - 1) / 2;
    pad_r = (k - 1) - pad_l;
  } else if (k > L) {
    throw DimensionError("conv1d_mc: kernel " + std::to_string(k) +
                         " longer than signal " + std::to_string(L));
  }
  const std::size_t Lp = L + pad_l + pad_r;
  const std::size_t T = out_len(Lp, k, stride);
  const std::size_t K = Cin * k;

  // im2col for the whole batch: col is [K x B*T]; one fat GEMM per call.
  auto col = std::make_shared<std::vector<double>>(K * B * T);
  {
    double* c = col->data();
    for (std::size_t b = 0; b < B; ++b) {
      const double* xb = x.data() + b * Cin * L;
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        for (std::size_t j = 0; j < k; ++j) {
          double* row = c + (ci * k + j) * (B * T) + b * T;
          const double* src = xb + ci * L;
          for (std::size_t t = 0; t < T; ++t) {
            const std::ptrdiff_t p =
                static_cast<std::ptrdiff_t>(t * stride + j) -
                static_cast<std::ptrdiff_t>(pad_l);
            row[t] = (p >= 0 && p < static_cast<std::ptrdiff_t>(L))
                         ? src[p]
                         : 0.0;
          }
        }
      }
    }
  }
  Tensor out = Tensor::zeros({B, Cout, T});
  {
    // weights [Cout x K] * col [K x B*T] -> [Cout x B*T], then scatter
    EMat prod(Cout, B * T);
    prod.noalias() =
        ECMap(w.data(), Cout, K) * ECMap(col->data(), K, B * T);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t co = 0; co < Cout; ++co) {
        double* dst = out.data() + (b * Cout + co) * T;
        const double* src = prod.data() + co * (B * T) + b * T;
        const double bv = bias.data()[co];
        for (std::size_t t = 0; t < T; ++t) dst[t] = src[t] + bv;
      }
    }
  }
  Tape* tp = Tape::active();
  if (wants(tp, x) || wants(tp, w) || wants(tp, bias)) {
    NodePtr xn = x.node(), wn = w.node(), bn = bias.node(), on = out.node();
    const bool gx = wants(tp, x), gw = wants(tp, w), gb = wants(tp, bias);
    tp->record(
        {xn, wn, bn}, on,
        [xn, wn, bn, on, col, gx, gw, gb, B, Cin, Cout, L, T, k, K, stride,
         pad_l]() {
          // regroup output grad as [Cout x B*T]
          EMat g(Cout, B * T);
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t co = 0; co < Cout; ++co) {
              std::memcpy(g.data() + co * (B * T) + b * T,
                          on->grad.data() + (b * Cout + co) * T,
                          T * sizeof(double));
            }
          }
          if (gb) {
            bn->ensure_grad();
            for (std::size_t co = 0; co < Cout; ++co) {
              double s = 0.0;
              const double* row = g.data() + co * (B * T);
              for (std::size_t i = 0; i < B * T; ++i) s += row[i];
              bn->grad[co] += s;
            }
          }
          if (gw) {
            wn->ensure_grad();
            EMap(wn->grad.data(), Cout, K).noalias() +=
                g * ECMap(col->data(), K, B * T).transpose();
          }
          if (gx) {
            xn->ensure_grad();
            EMat dcol(K, B * T);
            dcol.noalias() =
                ECMap(wn->values.data(), Cout, K).transpose() * g;
            for (std::size_t b = 0; b < B; ++b) {
              double* xg = xn->grad.data() + b * Cin * L;
              for (std::size_t ci = 0; ci < Cin; ++ci) {
                for (std::size_t j = 0; j < k; ++j) {
                  const double* row =
                      dcol.data() + (ci * k + j) * (B * T) + b * T;
                  double* dst = xg + ci * L;
                  for (std::size_t t = 0; t < T; ++t) {
                    const std::ptrdiff_t p =
                        static_cast<std::ptrdiff_t>(t * stride + j) -
                        static_cast<std::ptrdiff_t>(pad_l);
                    if (p >= 0 && p < static_cast<std::ptrdiff_t>(L))
                      dst[p] += row[t];
                  }
                }
              }
            }
          }
        });
  }
  return out;
}

Tensor maxpool1d_mc(const Tensor& x, std::size_t window, std::size_t stride) {
  if (x.rank() != 3) {
    throw DimensionError("maxpool1d_mc: expected [B,C,L], got " +
                         shape_str(x.shape()));
  }
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  if (window > L) {
    throw DimensionError("maxpool1d_mc: window " + std::to_string(window) +
                         " exceeds length " + std::to_string(L));
  }
  const std::size_t T = out_len(L, window, stride);
  Tensor out = Tensor::zeros({B, C, T});
  auto argmax = std::make_shared<std::vector<std::size_t>>(B * C * T);
  for (std::size_t r = 0; r < B * C; ++r) {
    const double* src = x.data() + r * L;
    double* dst = out.data() + r * T;
    for (std::size_t t = 0; t < T; ++t) {
      std::size_t best = t * stride;
      for (std::size_t j = 1; j < window; ++j) {
        if (src[t * stride + j] > src[best]) best = t * stride + j;
      }
      (*argmax)[r * T + t] = r * L + best;
      dst[t] = src[best];
    }
  }
  Tape* tp = Tape::active();
  if (wants(tp, x)) {
    NodePtr xn = x.node(), on = out.node();
    tp->record({xn}, on, [xn, on, argmax]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < on->size(); ++i)
        xn->grad[(*argmax)[i]] += on->grad[i];
    });
  }
  return out;
}

BatchNorm1d::BatchNorm1d(std::size_t channels) {
  if (channels > 0) {
    gamma = Tensor::full({channels}, 1.0, true);
    beta = Tensor::zeros({channels}, true);
    running_mean.assign(channels, 0.0);
    running_var.assign(channels, 1.0);
  }
}

Tensor batch_norm(const Tensor& x, BatchNorm1d& bn, Mode mode) {
  if (x.rank() != 3 || x.dim(1) != bn.gamma.dim(0)) {
    throw DimensionError("batch_norm: input " + shape_str(x.shape()) +
                         " vs channels " + shape_str(bn.gamma.shape()));
  }
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t M = B * L;
  const double eps = bn.eps;

  auto mean = std::make_shared<std::vector<double>>(C, 0.0);
  auto var = std::make_shared<std::vector<double>>(C, 0.0);
  if (mode == Mode::Train) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = x.data() + (b * C + c) * L;
        for (std::size_t t = 0; t < L; ++t) s += p[t];
      }
      (*mean)[c] = s / static_cast<double>(M);
      double v = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* p = x.data() + (b * C + c) * L;
        for (std::size_t t = 0; t < L; ++t) {
          const double d = p[t] - (*mean)[c];
          v += d * d;
        }
      }
      (*var)[c] = v / static_cast<double>(M);
      bn.running_mean[c] =
          bn.momentum * bn.running_mean[c] + (1.0 - bn.momentum) * (*mean)[c];
      bn.running_var[c] =
          bn.momentum * bn.running_var[c] + (1.0 - bn.momentum) * (*var)[c];
    }
  } else {
    *mean = bn.running_mean;
    *var = bn.running_var;
  }

  Tensor out = Tensor::zeros(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double inv = 1.0 / std::sqrt((*var)[c] + eps);
      const double g = bn.gamma.data()[c], sh = bn.beta.data()[c];
      const double* p = x.data() + (b * C + c) * L;
      double* h = xhat->data() + (b * C + c) * L;
      double* o = out.data() + (b * C + c) * L;
      for (std::size_t t = 0; t < L; ++t) {
        h[t] = (p[t] - (*mean)[c]) * inv;
        o[t] = g * h[t] + sh;
      }
    }
  }

  Tape* tp = Tape::active();
  if (wants(tp, x) || wants(tp, bn.gamma) || wants(tp, bn.beta)) {
    NodePtr xn = x.node(), gn = bn.gamma.node(), sn = bn.beta.node(),
            on = out.node();
    const bool gx = wants(tp, x), gg = wants(tp, bn.gamma),
               gs = wants(tp, bn.beta);
    const bool train = mode == Mode::Train;
    tp->record({xn, gn, sn}, on,
               [xn, gn, sn, on, xhat, var, gx, gg, gs, train, B, C, L, eps]() {
                 const std::size_t M = B * L;
                 if (gx) xn->ensure_grad();
                 if (gg) gn->ensure_grad();
                 if (gs) sn->ensure_grad();
                 for (std::size_t c = 0; c < C; ++c) {
                   double sum_g = 0.0, sum_gh = 0.0;
                   for (std::size_t b = 0; b < B; ++b) {
                     const std::size_t off = (b * C + c) * L;
                     for (std::size_t t = 0; t < L; ++t) {
                       sum_g += on->grad[off + t];
                       sum_gh += on->grad[off + t] * (*xhat)[off + t];
                     }
                   }
                   if (gs) sn->grad[c] += sum_g;
                   if (gg) gn->grad[c] += sum_gh;
                   if (gx) {
                     const double inv = 1.0 / std::sqrt((*var)[c] + eps);
                     const double gamma = gn->values[c];
                     const double mg = sum_g / static_cast<double>(M);
                     const double mgh = sum_gh / static_cast<double>(M);
                     for (std::size_t b = 0; b < B; ++b) {
                       const std::size_t off = (b * C + c) * L;
                       for (std::size_t t = 0; t < L; ++t) {
                         const double g = on->grad[off + t];
                         if (train) {
                           xn->grad[off + t] +=
                               gamma * inv *
                               (g - mg - (*xhat)[off + t] * mgh);
                         } else {
                           xn->grad[off + t] += gamma * inv * g;
                         }
                       }
                     }
                   }
                 }
               });
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, Mode mode, Rng* rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ParameterError("dropout: rate must be in [0,1)");
  }
  if (mode == Mode::Eval || rate == 0.0) {
    // identity; still passes gradient through unchanged
    Tensor out = Tensor::from(x.shape(), x.values());
    Tape* tp = Tape::active();
    if (wants(tp, x)) {
      NodePtr xn = x.node(), on = out.node();
      tp->record({xn}, on, [xn, on]() {
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->size(); ++i)
          xn->grad[i] += on->grad[i];
      });
    }
    return out;
  }
  if (rng == nullptr) {
    throw ParameterError("dropout: train mode requires an rng");
  }
  const double keep = 1.0 - rate;
  const double inv_keep = 1.0 / keep;
  auto mask = std::make_shared<std::vector<double>>(x.size());
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = rng->uniform() < keep ? inv_keep : 0.0;
    (*mask)[i] = m;
    out.data()[i] = x.data()[i] * m;
  }
  Tape* tp = Tape::active();
  if (wants(tp, x)) {
    NodePtr xn = x.node(), on = out.node();
    tp->record({xn}, on, [xn, on, mask]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < xn->size(); ++i)
        xn->grad[i] += on->grad[i] * (*mask)[i];
    });
  }
  return out;
}

}  // namespace mstgcn
