#include "mstgcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mstgcn/diag.hpp"
#include "mstgcn/fft.hpp"
#include "mstgcn/ops.hpp"

namespace mstgcn {

namespace {

using detail::NodePtr;

// Power iteration on a symmetric PSD matrix; returns (lambda, v).
std::pair<double, std::vector<double>> power_iteration(const double* L,
                                                       std::size_t n) {
  std::vector<double> v(n), Lv(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = 1.0 + 1e-4 * static_cast<double>(i);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;

  double lambda = 0.0;
  for (int iter = 0; iter < 10000; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += L[i * n + j] * v[j];
      Lv[i] = s;
    }
    double next = 0.0;
    for (std::size_t i = 0; i < n; ++i) next += v[i] * Lv[i];
    double nn = 0.0;
    for (double x : Lv) nn += x * x;
    nn = std::sqrt(nn);
    if (nn < 1e-300) return {0.0, v};  // L annihilated v: edgeless graph
    for (std::size_t i = 0; i < n; ++i) v[i] = Lv[i] / nn;
    // documented tolerance is 1e-9; iterate to machine precision so the
    // eigen-gradient stays clean under finite-difference probing
    if (std::abs(next - lambda) <= 1e-14 * std::max(1.0, std::abs(next))) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return {lambda, v};
}

}  // namespace

std::string to_string(AdjacencyKind k) {
  switch (k) {
    case AdjacencyKind::LearnedFC: return "learned";
    case AdjacencyKind::DistanceDC: return "distance";
    case AdjacencyKind::Full: return "full";
    case AdjacencyKind::Knn: return "knn";
    case AdjacencyKind::Pcc: return "pcc";
    case AdjacencyKind::Plv: return "plv";
    case AdjacencyKind::Mi: return "mi";
  }
  return "?";
}

std::optional<AdjacencyKind> adjacency_kind_from_string(const std::string& s) {
  if (s == "learned") return AdjacencyKind::LearnedFC;
  if (s == "distance") return AdjacencyKind::DistanceDC;
  if (s == "full") return AdjacencyKind::Full;
  if (s == "knn") return AdjacencyKind::Knn;
  if (s == "pcc") return AdjacencyKind::Pcc;
  if (s == "plv") return AdjacencyKind::Plv;
  if (s == "mi") return AdjacencyKind::Mi;
  return std::nullopt;
}

double ElectrodeLayout::distance(std::size_t a, std::size_t b) const {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = coords[a][i] - coords[b][i];
    s += d * d;
  }
  return std::sqrt(s);
}

GraphLearnParams::GraphLearnParams(std::size_t feature_dim) {
  if (feature_dim > 0) w = Tensor::zeros({feature_dim}, true);
}

AdjacencyMatrix learn_fc_adjacency(const Tensor& X,
                                   const GraphLearnParams& params) {
  if (X.rank() != 2 || X.dim(1) != params.w.dim(0)) {
    throw DimensionError("learn_fc_adjacency: features " +
                         shape_str(X.shape()) + " vs w " +
                         shape_str(params.w.shape()));
  }
  Tensor logits = relu(pairwise_absdiff_dot(X, params.w));
  AdjacencyMatrix A;
  A.n = X.dim(0);
  A.kind = AdjacencyKind::LearnedFC;
  A.weights = softmax_rows(logits);
  return A;
}

Tensor graph_learning_loss(const Tensor& X, const AdjacencyMatrix& A,
                           double lambda) {
  if (lambda < 0) throw ParameterError("graph_learning_loss: lambda >= 0");
  Tensor dist = pairwise_sqdist(X);
  Tensor fit = reduce_sum(mul(dist, A.weights));
  if (lambda == 0.0) return fit;
  return add(fit, scale(reduce_sum(square(A.weights)), lambda));
}

AdjacencyMatrix build_dc_adjacency(const ElectrodeLayout& layout,
                                   std::optional<double> sigma) {
  const std::size_t n = layout.size();
  if (n < 2) {
    throw ParameterError("build_dc_adjacency: need at least 2 electrodes");
  }
  double sig;
  if (sigma) {
    sig = *sigma;
    if (sig <= 0) throw ParameterError("build_dc_adjacency: sigma must be > 0");
  } else {
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        total += layout.distance(a, b);
        ++pairs;
      }
    }
    sig = total / static_cast<double>(pairs);
  }
  AdjacencyMatrix A;
  A.n = n;
  A.kind = AdjacencyKind::DistanceDC;
  A.weights = Tensor::zeros({n, n});
  if (sig <= 0.0) {
    diag::warn("build_dc_adjacency: degenerate layout, all electrodes "
               "coincide; using unit weights");
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (a != b) A.weights.ref(a, b) = 1.0;
      }
    }
    return A;
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      const double d = layout.distance(a, b);
      A.weights.ref(a, b) = std::exp(-d * d / (2.0 * sig * sig));
    }
  }
  return A;
}

AdjacencyMatrix full_adjacency(std::size_t n) {
  AdjacencyMatrix A;
  A.n = n;
  A.kind = AdjacencyKind::Full;
  A.weights = Tensor::full({n, n}, 1.0);
  return A;
}

AdjacencyMatrix knn_adjacency(const Tensor& features, std::size_t k) {
  if (features.rank() != 2) {
    throw DimensionError("knn_adjacency: expected [N,F], got " +
                         shape_str(features.shape()));
  }
  const std::size_t n = features.dim(0), F = features.dim(1);
  if (k >= n) {
    throw ParameterError("knn_adjacency: k=" + std::to_string(k) +
                         " must be < N=" + std::to_string(n));
  }
  AdjacencyMatrix A;
  A.n = n;
  A.kind = AdjacencyKind::Knn;
  A.weights = Tensor::zeros({n, n});
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(n - 1);
    for (std::size_t b = 0; b < n; ++b) {
      if (b == a) continue;
      double s = 0.0;
      for (std::size_t f = 0; f < F; ++f) {
        const double d = features.at(a, f) - features.at(b, f);
        s += d * d;
      }
      dist.emplace_back(s, b);
    }
    std::stable_sort(dist.begin(), dist.end(),
                     [](const auto& x, const auto& y) {
                       return x.first != y.first ? x.first < y.first
                                                 : x.second < y.second;
                     });
    for (std::size_t j = 0; j < k; ++j) {
      // union symmetrization: keep the edge if either endpoint selects it
      A.weights.ref(a, dist[j].second) = 1.0;
      A.weights.ref(dist[j].second, a) = 1.0;
    }
  }
  return A;
}

AdjacencyMatrix pcc_adjacency(const Tensor& signals) {
  if (signals.rank() != 2) {
    throw DimensionError("pcc_adjacency: expected [N,L], got " +
                         shape_str(signals.shape()));
  }
  const std::size_t n = signals.dim(0), L = signals.dim(1);
  std::vector<double> mean(n, 0.0), sd(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    const double* x = signals.data() + a * L;
    double s = 0.0;
    for (std::size_t t = 0; t < L; ++t) s += x[t];
    mean[a] = s / static_cast<double>(L);
    double v = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      const double d = x[t] - mean[a];
      v += d * d;
    }
    sd[a] = std::sqrt(v);
  }
  AdjacencyMatrix A;
  A.n = n;
  A.kind = AdjacencyKind::Pcc;
  A.weights = Tensor::zeros({n, n});
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      double w = 0.0;
      if (sd[a] > 0.0 && sd[b] > 0.0) {
        const double* x = signals.data() + a * L;
        const double* y = signals.data() + b * L;
        double cov = 0.0;
        for (std::size_t t = 0; t < L; ++t)
          cov += (x[t] - mean[a]) * (y[t] - mean[b]);
        w = std::abs(cov / (sd[a] * sd[b]));
      }
      A.weights.ref(a, b) = w;
      A.weights.ref(b, a) = w;
    }
  }
  return A;
}

AdjacencyMatrix plv_adjacency(const Tensor& signals) {
  if (signals.rank() != 2) {
    throw DimensionError("plv_adjacency: expected [N,L], got " +
                         shape_str(signals.shape()));
  }
  const std::size_t n = signals.dim(0), L = signals.dim(1);
  std::vector<std::vector<double>> phase(n, std::vector<double>(L));
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<double> x(signals.data() + a * L, signals.data() + (a + 1) * L);
    auto analytic = analytic_signal(x);
    for (std::size_t t = 0; t < L; ++t)
      phase[a][t] = std::arg(analytic[t]);
  }
  AdjacencyMatrix A;
  A.n = n;
  A.kind = AdjacencyKind::Plv;
  A.weights = Tensor::zeros({n, n});
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      double re = 0.0, im = 0.0;
      for (std::size_t t = 0; t < L; ++t) {
        const double d = phase[a][t] - phase[b][t];
        re += std::cos(d);
        im += std::sin(d);
      }
      const double w =
          std::sqrt(re * re + im * im) / static_cast<double>(L);
      A.weights.ref(a, b) = w;
      A.weights.ref(b, a) = w;
    }
  }
  return A;
}

AdjacencyMatrix mi_adjacency(const Tensor& signals, std::size_t bins) {
  if (signals.rank() != 2) {
    throw DimensionError("mi_adjacency: expected [N,L], got " +
                         shape_str(signals.shape()));
  }
  if (bins < 2) throw ParameterError("mi_adjacency: bins must be >= 2");
  const std::size_t n = signals.dim(0), L = signals.dim(1);

  // per-signal equal-width bin index, values at max clamp to the last bin
  std::vector<std::vector<std::size_t>> binned(n,
                                               std::vector<std::size_t>(L));
  for (std::size_t a = 0; a < n; ++a) {
    const double* x = signals.data() + a * L;
    double lo = x[0], hi = x[0];
    for (std::size_t t = 1; t < L; ++t) {
      lo = std::min(lo, x[t]);
      hi = std::max(hi, x[t]);
    }
    const double span = hi - lo;
    for (std::size_t t = 0; t < L; ++t) {
      std::size_t b = 0;
      if (span > 0.0) {
        b = static_cast<std::size_t>((x[t] - lo) / span *
                                     static_cast<double>(bins));
        if (b >= bins) b = bins - 1;
      }
      binned[a][t] = b;
    }
  }
  AdjacencyMatrix A;
  A.n = n;
  A.kind = AdjacencyKind::Mi;
  A.weights = Tensor::zeros({n, n});
  std::vector<double> joint(bins * bins);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      std::fill(joint.begin(), joint.end(), 0.0);
      for (std::size_t t = 0; t < L; ++t)
        joint[binned[a][t] * bins + binned[b][t]] += 1.0;
      std::vector<double> px(bins, 0.0), py(bins, 0.0);
      for (std::size_t i = 0; i < bins; ++i) {
        for (std::size_t j = 0; j < bins; ++j) {
          px[i] += joint[i * bins + j];
          py[j] += joint[i * bins + j];
        }
      }
      double mi = 0.0;
      const double total = static_cast<double>(L);
      for (std::size_t i = 0; i < bins; ++i) {
        for (std::size_t j = 0; j < bins; ++j) {
          const double pxy = joint[i * bins + j] / total;
          if (pxy > 0.0) {
            mi += pxy * std::log(pxy * total * total / (px[i] * py[j]));
          }
        }
      }
      A.weights.ref(a, b) = mi;
      A.weights.ref(b, a) = mi;
    }
  }
  return A;
}

Tensor scaled_laplacian(const Tensor& Araw) {
  if (Araw.rank() != 2 || Araw.dim(0) != Araw.dim(1)) {
    throw DimensionError("scaled_laplacian: expected square matrix, got " +
                         shape_str(Araw.shape()));
  }
  const std::size_t n = Araw.dim(0);

  // A_s = (A + A^T)/2; L = diag(rowsum(A_s)) - A_s
  std::vector<double> As(n * n), Lv(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      As[i * n + j] = 0.5 * (Araw.at(i, j) + Araw.at(j, i));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += As[i * n + j];
    for (std::size_t j = 0; j < n; ++j) Lv[i * n + j] = -As[i * n + j];
    Lv[i * n + i] += deg;
  }

  auto [lambda, eigvec] = power_iteration(Lv.data(), n);
  bool fallback = false;
  if (lambda < 1e-12) {
    diag::warn("scaled_laplacian: edgeless graph, falling back to "
               "lambda_max = 2");
    lambda = 2.0;
    fallback = true;
  }

  Tensor out = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.ref(i, j) = (2.0 / lambda) * Lv[i * n + j] - (i == j ? 1.0 : 0.0);
    }
  }

  Tape* tp = Tape::active();
  if (tp && tp->participates(Araw)) {
    NodePtr An = Araw.node(), on = out.node();
    auto Lsaved = std::make_shared<std::vector<double>>(std::move(Lv));
    auto vsaved = std::make_shared<std::vector<double>>(std::move(eigvec));
    const double lam = lambda;
    tp->record({An}, on, [An, on, Lsaved, vsaved, lam, fallback, n]() {
      An->ensure_grad();
      const double* G = on->grad.data();
      // dloss/dL = (2/lam) G + s v v^T, s = -(2/lam^2) <G, L>
      std::vector<double> GL(n * n);
      double dot = 0.0;
      for (std::size_t i = 0; i < n * n; ++i) dot += G[i] * (*Lsaved)[i];
      const double s = fallback ? 0.0 : -(2.0 / (lam * lam)) * dot;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          GL[i * n + j] = (2.0 / lam) * G[i * n + j] +
                          s * (*vsaved)[i] * (*vsaved)[j];
        }
      }
      // through L = D - A_s and the symmetrization
      for (std::size_t m = 0; m < n; ++m) {
        for (std::size_t q = 0; q < n; ++q) {
          if (m == q) continue;
          const double gAs = GL[m * n + m] - GL[m * n + q];
          // A_s[m,q] = (A[m,q] + A[q,m])/2 contributes to both entries
          An->grad[m * n + q] += 0.5 * gAs;
          An->grad[q * n + m] += 0.5 * gAs;
        }
      }
    });
  }
  return out;
}

Tensor scaled_laplacian(const AdjacencyMatrix& A) {
  return scaled_laplacian(A.weights);
}

ChebStack cheb_stack(const Tensor& L, std::size_t K) {
  if (K < 1) throw ParameterError("cheb_stack: K must be >= 1");
  if (L.rank() != 2 || L.dim(0) != L.dim(1)) {
    throw DimensionError("cheb_stack: expected square matrix, got " +
                         shape_str(L.shape()));
  }
  ChebStack st;
  st.K = K;
  st.polys.reserve(K);
  st.polys.push_back(Tensor::identity(L.dim(0)));
  if (K > 1) st.polys.push_back(L);
  for (std::size_t k = 2; k < K; ++k) {
    st.polys.push_back(
        sub(scale(matmul(L, st.polys[k - 1]), 2.0), st.polys[k - 2]));
  }
  return st;
}

}  // namespace mstgcn
