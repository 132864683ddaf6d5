#include "mstgcn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mstgcn {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

using detail::NodePtr;

bool wants(Tape* tp, const Tensor& t) { return tp && tp->participates(t); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Elementwise op with a value-dependent local derivative.
template <typename Fwd, typename Bwd>
Tensor unary_elementwise(const Tensor& a, Fwd fwd, Bwd bwd_factor) {
  Tensor out = Tensor::zeros(a.shape());
  const double* x = a.data();
  double* y = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) y[i] = fwd(x[i]);
  Tape* tp = Tape::active();
  if (wants(tp, a)) {
    NodePtr an = a.node(), on = out.node();
    tp->record({an}, on, [an, on, bwd_factor]() {
      an->ensure_grad();
      const std::size_t n = an->size();
      for (std::size_t i = 0; i < n; ++i) {
        an->grad[i] += on->grad[i] * bwd_factor(an->values[i], on->values[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  EMap(out.data(), m, n).noalias() =
      ECMap(a.data(), m, k) * ECMap(b.data(), k, n);
  Tape* tp = Tape::active();
  if (wants(tp, a) || wants(tp, b)) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    const bool ga = wants(tp, a), gb = wants(tp, b);
    tp->record({an, bn}, on, [an, bn, on, ga, gb, m, k, n]() {
      ECMap g(on->grad.data(), m, n);
      if (ga) {
        an->ensure_grad();
        EMap(an->grad.data(), m, k).noalias() +=
            g * ECMap(bn->values.data(), k, n).transpose();
      }
      if (gb) {
        bn->ensure_grad();
        EMap(bn->grad.data(), k, n).noalias() +=
            ECMap(an->values.data(), m, k).transpose() * g;
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  Tape* tp = Tape::active();
  if (wants(tp, a) || wants(tp, b)) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    const bool ga = wants(tp, a), gb = wants(tp, b);
    tp->record({an, bn}, on, [an, bn, on, ga, gb]() {
      const std::size_t n = on->size();
      if (ga) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      }
      if (gb) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  Tape* tp = Tape::active();
  if (wants(tp, a) || wants(tp, b)) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    const bool ga = wants(tp, a), gb = wants(tp, b);
    tp->record({an, bn}, on, [an, bn, on, ga, gb]() {
      const std::size_t n = on->size();
      if (ga) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      }
      if (gb) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) bn->grad[i] -= on->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  Tape* tp = Tape::active();
  if (wants(tp, a) || wants(tp, b)) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    const bool ga = wants(tp, a), gb = wants(tp, b);
    tp->record({an, bn}, on, [an, bn, on, ga, gb]() {
      const std::size_t n = on->size();
      if (ga) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          an->grad[i] += on->grad[i] * bn->values[i];
      }
      if (gb) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          bn->grad[i] += on->grad[i] * an->values[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  return unary_elementwise(
      a, [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_elementwise(
      a, [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}

Tensor abs_op(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_elementwise(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor reduce_sum(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i];
  Tensor out = Tensor::scalar(s);
  Tape* tp = Tape::active();
  if (wants(tp, a)) {
    NodePtr an = a.node(), on = out.node();
    tp->record({an}, on, [an, on]() {
      an->ensure_grad();
      const double g = on->grad[0];
      for (std::size_t i = 0; i < an->size(); ++i) an->grad[i] += g;
    });
  }
  return out;
}

Tensor reduce_mean(const Tensor& a) {
  return scale(reduce_sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (n != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) +
                         " as " + shape_str(shape));
  }
  Tensor out = Tensor::from(std::move(shape), a.values());
  Tape* tp = Tape::active();
  if (wants(tp, a)) {
    NodePtr an = a.node(), on = out.node();
    tp->record({an}, on, [an, on]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError("transpose: expected rank 2, got " +
                         shape_str(a.shape()));
  }
  return permute(a, {1, 0});
}

Tensor permute(const Tensor& a, std::vector<std::size_t> perm) {
  const std::size_t r = a.rank();
  if (perm.size() != r) {
    throw DimensionError("permute: perm size mismatch for " +
                         shape_str(a.shape()));
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = a.dim(perm[i]);

  // strides of the input
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * a.dim(i);
  std::vector<std::size_t> gather_stride(r);
  for (std::size_t i = 0; i < r; ++i) gather_stride[i] = in_stride[perm[i]];

  Tensor out = Tensor::zeros(out_shape);
  const std::size_t n = a.size();
  // index map out_i -> in_i, reused by the backward scatter
  auto mapping = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * gather_stride[i];
    (*mapping)[o] = src;
    out.data()[o] = a.data()[src];
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  Tape* tp = Tape::active();
  if (wants(tp, a)) {
    NodePtr an = a.node(), on = out.node();
    tp->record({an}, on, [an, on, mapping]() {
      an->ensure_grad();
      for (std::size_t o = 0; o < on->size(); ++o)
        an->grad[(*mapping)[o]] += on->grad[o];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ParameterError("concat: no inputs");
  const std::size_t r = parts[0].rank();
  if (axis >= r) throw DimensionError("concat: axis out of range");
  Shape out_shape = parts[0].shape();
  std::size_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) {
      throw DimensionError("concat: rank mismatch " + shape_str(p.shape()));
    }
    for (std::size_t i = 0; i < r; ++i) {
      if (i != axis && p.dim(i) != out_shape[i]) {
        throw DimensionError("concat: shape mismatch " +
                             shape_str(parts[0].shape()) + " vs " +
                             shape_str(p.shape()));
      }
    }
    axis_total += p.dim(axis);
  }
  out_shape[axis] = axis_total;

  // outer: product of dims before axis; inner: product after axis
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= out_shape[i];
  for (std::size_t i = axis + 1; i < r; ++i) inner *= out_shape[i];

  Tensor out = Tensor::zeros(out_shape);
  std::size_t offset = 0;  // in axis units
  struct Piece {
    NodePtr node;
    std::size_t axis_len;
    std::size_t offset;
    bool wants;
  };
  auto pieces = std::make_shared<std::vector<Piece>>();
  Tape* tp = Tape::active();
  bool any = false;
  for (const auto& p : parts) {
    const std::size_t alen = p.dim(axis);
    for (std::size_t o = 0; o < outer; ++o) {
      std::memcpy(out.data() + (o * axis_total + offset) * inner,
                  p.data() + o * alen * inner, alen * inner * sizeof(double));
    }
    bool w = wants(tp, p);
    any = any || w;
    pieces->push_back({p.node(), alen, offset, w});
    offset += alen;
  }
  if (tp && any) {
    std::vector<NodePtr> ins;
    for (const auto& pc : *pieces) ins.push_back(pc.node);
    NodePtr on = out.node();
    tp->record(ins, on, [on, pieces, outer, inner, axis_total]() {
      for (const auto& pc : *pieces) {
        if (!pc.wants) continue;
        pc.node->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* g =
              on->grad.data() + (o * axis_total + pc.offset) * inner;
          double* dst = pc.node->grad.data() + o * pc.axis_len * inner;
          for (std::size_t i = 0; i < pc.axis_len * inner; ++i) dst[i] += g[i];
        }
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t row0, std::size_t row1) {
  if (a.rank() < 1 || row1 > a.dim(0) || row0 >= row1) {
    throw DimensionError("slice_rows: bad range [" + std::to_string(row0) +
                         "," + std::to_string(row1) + ") for " +
                         shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[0] = row1 - row0;
  std::size_t inner = 1;
  for (std::size_t i = 1; i < a.rank(); ++i) inner *= a.dim(i);
  Tensor out = Tensor::zeros(out_shape);
  std::memcpy(out.data(), a.data() + row0 * inner,
              (row1 - row0) * inner * sizeof(double));
  Tape* tp = Tape::active();
  if (wants(tp, a)) {
    NodePtr an = a.node(), on = out.node();
    tp->record({an}, on, [an, on, row0, inner]() {
      an->ensure_grad();
      double* dst = an->grad.data() + row0 * inner;
      for (std::size_t i = 0; i < on->size(); ++i) dst[i] += on->grad[i];
    });
  }
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ParameterError("stack_rows: no inputs");
  std::vector<Tensor> parts;
  parts.reserve(rows.size());
  for (const auto& r : rows) {
    parts.push_back(reshape(r, Shape{1, r.size()}));
  }
  return concat(parts, 0);
}

Tensor softmax_rows(const Tensor& a) {
  if (a.rank() != 2) {
    throw DimensionError("softmax_rows: expected rank 2, got " +
                         shape_str(a.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data() + i * n;
    double* y = out.data() + i * n;
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= s;
  }
  Tape* tp = Tape::active();
  if (wants(tp, a)) {
    NodePtr an = a.node(), on = out.node();
    tp->record({an}, on, [an, on, m, n]() {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = on->values.data() + i * n;
        const double* g = on->grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        double* dx = an->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& probs, const Tensor& onehot) {
  if (probs.rank() != 2 || probs.shape() != onehot.shape()) {
    throw DimensionError("cross_entropy: shapes " + shape_str(probs.shape()) +
                         " vs " + shape_str(onehot.shape()));
  }
  const std::size_t L = probs.dim(0), R = probs.dim(1);
  for (std::size_t i = 0; i < L; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < R; ++j) s += probs.at(i, j);
    if (std::abs(s - 1.0) > 1e-6) {
      throw NormalizationError("cross_entropy: probs row " + std::to_string(i) +
                               " sums to " + std::to_string(s));
    }
    std::size_t ones = 0;
    for (std::size_t j = 0; j < R; ++j) {
      double v = onehot.at(i, j);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        throw LabelError("cross_entropy: row " + std::to_string(i) +
                         " is not one-hot");
      }
    }
    if (ones != 1) {
      throw LabelError("cross_entropy: row " + std::to_string(i) +
                       " is not one-hot");
    }
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < L * R; ++i) {
    if (onehot.data()[i] != 0.0) {
      loss -= std::log(std::max(probs.data()[i], kLogFloor));
    }
  }
  loss /= static_cast<double>(L);
  Tensor out = Tensor::scalar(loss);
  Tape* tp = Tape::active();
  if (wants(tp, probs)) {
    NodePtr pn = probs.node(), yn = onehot.node(), on = out.node();
    tp->record({pn, yn}, on, [pn, yn, on, L]() {
      pn->ensure_grad();
      const double g = on->grad[0] / static_cast<double>(L);
      for (std::size_t i = 0; i < pn->size(); ++i) {
        if (yn->values[i] != 0.0 && pn->values[i] > kLogFloor) {
          pn->grad[i] -= g / pn->values[i];
        }
      }
    });
  }
  return out;
}

Tensor grl(const Tensor& x, double scale_factor) {
  if (scale_factor < 0) throw ParameterError("grl: scale must be >= 0");
  Tensor out = Tensor::from(x.shape(), x.values());
  Tape* tp = Tape::active();
  if (wants(tp, x)) {
    NodePtr xn = x.node(), on = out.node();
    tp->record({xn}, on, [xn, on, scale_factor]() {
      xn->ensure_grad();
      for (std::size_t i = 0; i < xn->size(); ++i)
        xn->grad[i] -= scale_factor * on->grad[i];
    });
  }
  return out;
}

Tensor pairwise_absdiff_dot(const Tensor& X, const Tensor& w) {
  if (X.rank() != 2 || w.rank() != 1 || X.dim(1) != w.dim(0)) {
    throw DimensionError("pairwise_absdiff_dot: shapes " +
                         shape_str(X.shape()) + " and " + shape_str(w.shape()));
  }
  const std::size_t N = X.dim(0), F = X.dim(1);
  Tensor out = Tensor::zeros({N, N});
  for (std::size_t m = 0; m < N; ++m) {
    for (std::size_t n = 0; n < N; ++n) {
      double s = 0.0;
      const double* xm = X.data() + m * F;
      const double* xn = X.data() + n * F;
      for (std::size_t f = 0; f < F; ++f)
        s += w.data()[f] * std::abs(xm[f] - xn[f]);
      out.data()[m * N + n] = s;
    }
  }
  Tape* tp = Tape::active();
  if (wants(tp, X) || wants(tp, w)) {
    NodePtr Xn = X.node(), wn = w.node(), on = out.node();
    const bool gx = wants(tp, X), gw = wants(tp, w);
    tp->record({Xn, wn}, on, [Xn, wn, on, gx, gw, N, F]() {
      if (gx) Xn->ensure_grad();
      if (gw) wn->ensure_grad();
      for (std::size_t m = 0; m < N; ++m) {
        for (std::size_t n = 0; n < N; ++n) {
          const double g = on->grad[m * N + n];
          if (g == 0.0) continue;
          const double* xm = Xn->values.data() + m * F;
          const double* xn = Xn->values.data() + n * F;
          for (std::size_t f = 0; f < F; ++f) {
            const double d = xm[f] - xn[f];
            const double sgn = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
            if (gw) wn->grad[f] += g * std::abs(d);
            if (gx) {
              const double t = g * wn->values[f] * sgn;
              Xn->grad[m * F + f] += t;
              Xn->grad[n * F + f] -= t;
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor pairwise_sqdist(const Tensor& X) {
  if (X.rank() != 2) {
    throw DimensionError("pairwise_sqdist: expected rank 2, got " +
                         shape_str(X.shape()));
  }
  const std::size_t N = X.dim(0), F = X.dim(1);
  Tensor out = Tensor::zeros({N, N});
  for (std::size_t m = 0; m < N; ++m) {
    for (std::size_t n = 0; n < N; ++n) {
      double s = 0.0;
      const double* xm = X.data() + m * F;
      const double* xn = X.data() + n * F;
      for (std::size_t f = 0; f < F; ++f) {
        const double d = xm[f] - xn[f];
        s += d * d;
      }
      out.data()[m * N + n] = s;
    }
  }
  Tape* tp = Tape::active();
  if (wants(tp, X)) {
    NodePtr Xn = X.node(), on = out.node();
    tp->record({Xn}, on, [Xn, on, N, F]() {
      Xn->ensure_grad();
      for (std::size_t m = 0; m < N; ++m) {
        for (std::size_t n = 0; n < N; ++n) {
          const double g = on->grad[m * N + n] + on->grad[n * N + m];
          if (g == 0.0) continue;
          const double* xm = Xn->values.data() + m * F;
          const double* xn = Xn->values.data() + n * F;
          for (std::size_t f = 0; f < F; ++f) {
            Xn->grad[m * F + f] += g * 2.0 * (xm[f] - xn[f]);
          }
        }
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  if (x.rank() != 2 || W.rank() != 2 || b.rank() != 1 || x.dim(1) != W.dim(0) ||
      W.dim(1) != b.dim(0)) {
    throw DimensionError("linear: shapes " + shape_str(x.shape()) + ", " +
                         shape_str(W.shape()) + ", " + shape_str(b.shape()));
  }
  const std::size_t B = x.dim(0), F = x.dim(1), O = W.dim(1);
  Tensor out = Tensor::zeros({B, O});
  EMap(out.data(), B, O).noalias() =
      ECMap(x.data(), B, F) * ECMap(W.data(), F, O);
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < O; ++j) out.data()[i * O + j] += b.data()[j];
  }
  Tape* tp = Tape::active();
  if (wants(tp, x) || wants(tp, W) || wants(tp, b)) {
    NodePtr xn = x.node(), Wn = W.node(), bn = b.node(), on = out.node();
    const bool gx = wants(tp, x), gw = wants(tp, W), gb = wants(tp, b);
    tp->record({xn, Wn, bn}, on, [xn, Wn, bn, on, gx, gw, gb, B, F, O]() {
      ECMap g(on->grad.data(), B, O);
      if (gx) {
        xn->ensure_grad();
        EMap(xn->grad.data(), B, F).noalias() +=
            g * ECMap(Wn->values.data(), F, O).transpose();
      }
      if (gw) {
        Wn->ensure_grad();
        EMap(Wn->grad.data(), F, O).noalias() +=
            ECMap(xn->values.data(), B, F).transpose() * g;
      }
      if (gb) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < B; ++i) {
          for (std::size_t j = 0; j < O; ++j)
            bn->grad[j] += on->grad[i * O + j];
        }
      }
    });
  }
  return out;
}

}  // namespace mstgcn
