#include "mstgcn/stgcn.hpp"

#include <Eigen/Core>

#include <cmath>

namespace mstgcn {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;
using detail::NodePtr;

void check_nct(const Tensor& x, const StBlockConfig& cfg) {
  if (x.rank() != 3 || x.dim(0) != cfg.nodes || x.dim(1) != cfg.c_in ||
      x.dim(2) != cfg.t) {
    throw DimensionError("st block: input " + shape_str(x.shape()) +
                         " does not match configured [N,C,T] = [" +
                         std::to_string(cfg.nodes) + "x" +
                         std::to_string(cfg.c_in) + "x" +
                         std::to_string(cfg.t) + "]");
  }
}

Tensor glorot(Shape shape, Rng& rng) {
  std::size_t fan = 0;
  for (std::size_t d : shape) fan += d;
  const double sd = std::sqrt(2.0 / static_cast<double>(fan));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = sd * rng.normal();
  return t;
}

}  // namespace

void StBlockParams::init(const StBlockConfig& c, Rng& rng) {
  cfg = c;
  const std::size_t N = c.nodes, C = c.c_in, T = c.t;
  Vp = glorot({N, N}, rng);
  bp = Tensor::zeros({N, N}, true);
  Z1 = glorot({T}, rng);
  Z2 = glorot({C, T}, rng);
  Z3 = glorot({C}, rng);
  Vq = glorot({T, T}, rng);
  bq = Tensor::zeros({T, T}, true);
  M1 = glorot({N}, rng);
  M2 = glorot({C, N}, rng);
  M3 = glorot({C}, rng);
  thetas.clear();
  for (std::size_t k = 0; k < c.K; ++k) {
    thetas.push_back(glorot({C, c.c_out}, rng));
  }
  phi_w = glorot({c.c_out, c.c_out, c.kappa}, rng);
  phi_b = Tensor::zeros({c.c_out}, true);
}

std::vector<Tensor> StBlockParams::parameters() {
  std::vector<Tensor> out{Vp, bp, Z1, Z2, Z3, Vq, bq, M1, M2, M3};
  for (auto& t : thetas) out.push_back(t);
  out.push_back(phi_w);
  out.push_back(phi_b);
  return out;
}

Tensor spatial_attention(const Tensor& x, const StBlockParams& p) {
  check_nct(x, p.cfg);
  const std::size_t N = p.cfg.nodes, C = p.cfg.c_in, T = p.cfg.t;
  // (X Z1): contract T -> [N,C]
  Tensor xz1 = reshape(matmul(reshape(x, {N * C, T}), reshape(p.Z1, {T, 1})),
                       {N, C});
  // (X Z1) Z2 -> [N,T]
  Tensor left = matmul(xz1, p.Z2);
  // (Z3 X): contract C -> [N,T]
  Tensor xt = permute(x, {0, 2, 1});  // [N,T,C]
  Tensor z3x = reshape(matmul(reshape(xt, {N * T, C}), reshape(p.Z3, {C, 1})),
                       {N, T});
  Tensor inner = add(matmul(left, transpose(z3x)), p.bp);
  Tensor P = matmul(p.Vp, sigmoid(inner));
  return softmax_rows(P);
}

Tensor temporal_attention_apply(const Tensor& x, const StBlockParams& p,
                                Tensor* q_prime) {
  check_nct(x, p.cfg);
  const std::size_t N = p.cfg.nodes, C = p.cfg.c_in, T = p.cfg.t;
  // (X^T M1): contract N -> [T,C]
  Tensor xc = permute(x, {1, 2, 0});  // [C,T,N]
  Tensor xm1 = reshape(matmul(reshape(xc, {C * T, N}), reshape(p.M1, {N, 1})),
                       {C, T});
  Tensor left = transpose(xm1);  // [T,C]
  // left M2 -> [T,N]
  Tensor lm = matmul(left, p.M2);
  // (M3 X): contract C -> [N,T]
  Tensor xt = permute(x, {0, 2, 1});  // [N,T,C]
  Tensor m3x = reshape(matmul(reshape(xt, {N * T, C}), reshape(p.M3, {C, 1})),
                       {N, T});
  Tensor inner = add(matmul(lm, m3x), p.bq);  // [T,T]
  Tensor Q = matmul(p.Vq, sigmoid(inner));
  Tensor Qp = softmax_rows(Q);
  if (q_prime) *q_prime = Qp;
  // mix time: Xhat[:, :, t] = sum_u X[:, :, u] Q'[u,t]
  Tensor mixed = reshape(matmul(reshape(x, {N * C, T}), Qp), {N, C, T});
  return mixed;
}

Tensor cheb_graph_conv(const Tensor& xhat,
                       const std::vector<ChebStack>& stacks,
                       const std::vector<Tensor>& thetas,
                       const Tensor& attention) {
  if (xhat.rank() != 3) {
    throw DimensionError("cheb_graph_conv: expected [N,C,T], got " +
                         shape_str(xhat.shape()));
  }
  const std::size_t N = xhat.dim(0), C = xhat.dim(1), T = xhat.dim(2);
  if (stacks.empty() || (stacks.size() != 1 && stacks.size() != T)) {
    throw ParameterError("cheb_graph_conv: need 1 or T Chebyshev stacks");
  }
  const std::size_t K = stacks[0].K;
  for (const auto& st : stacks) {
    if (st.K != K) {
      throw ParameterError("cheb_graph_conv: stack order mismatch: " +
                           std::to_string(st.K) + " vs K=" +
                           std::to_string(K));
    }
  }
  if (thetas.size() != K) {
    throw ParameterError("cheb_graph_conv: got " +
                         std::to_string(thetas.size()) +
                         " kernels for K=" + std::to_string(K));
  }
  if (attention.rank() != 2 || attention.dim(0) != N ||
      attention.dim(1) != N) {
    throw DimensionError("cheb_graph_conv: attention " +
                         shape_str(attention.shape()) + " for N=" +
                         std::to_string(N));
  }
  const std::size_t Cout = thetas[0].dim(1);

  Tensor out = Tensor::zeros({N, Cout, T});
  // forward, saving M_{t,k} = T_k o P' and X_t for the backward pass
  auto Ms = std::make_shared<std::vector<double>>(T * K * N * N);
  auto MX = std::make_shared<std::vector<double>>(T * K * N * C);
  for (std::size_t t = 0; t < T; ++t) {
    const ChebStack& st = stacks[stacks.size() == 1 ? 0 : t];
    // X_t [N,C] gathered from xhat[:, :, t]
    EMat Xt(N, C);
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t c = 0; c < C; ++c) {
        Xt(i, c) = xhat.at(i, c, t);
      }
    }
    EMat acc = EMat::Zero(N, Cout);
    for (std::size_t k = 0; k < K; ++k) {
      double* Mtk = Ms->data() + (t * K + k) * N * N;
      const double* Tk = st.polys[k].data();
      const double* P = attention.data();
      for (std::size_t i = 0; i < N * N; ++i) Mtk[i] = Tk[i] * P[i];
      EMap Mk(Mtk, N, N);
      EMap MXtk(MX->data() + (t * K + k) * N * C, N, C);
      MXtk.noalias() = Mk * Xt;
      acc.noalias() += MXtk * ECMap(thetas[k].data(), C, Cout);
    }
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t c = 0; c < Cout; ++c) {
        out.ref(i, c, t) = acc(i, c);
      }
    }
  }

  Tape* tp = Tape::active();
  bool any = false;
  if (tp) {
    any = tp->participates(xhat) || tp->participates(attention);
    for (const auto& th : thetas) any = any || tp->participates(th);
    for (const auto& st : stacks) {
      for (const auto& poly : st.polys) any = any || tp->participates(poly);
    }
  }
  if (tp && any) {
    struct Saved {
      NodePtr xhat, attention, out;
      std::vector<NodePtr> thetas;
      std::vector<std::vector<NodePtr>> polys;  // [T or 1][K]
      bool g_x, g_att;
      std::vector<bool> g_theta;
      std::vector<std::vector<bool>> g_poly;
      std::size_t N, C, T, K, Cout;
      std::shared_ptr<std::vector<double>> Ms, MX;
    };
    auto sv = std::make_shared<Saved>();
    sv->xhat = xhat.node();
    sv->attention = attention.node();
    sv->out = out.node();
    sv->g_x = tp->participates(xhat);
    sv->g_att = tp->participates(attention);
    for (const auto& th : thetas) {
      sv->thetas.push_back(th.node());
      sv->g_theta.push_back(tp->participates(th));
    }
    for (const auto& st : stacks) {
      std::vector<NodePtr> ps;
      std::vector<bool> gs;
      for (const auto& poly : st.polys) {
        ps.push_back(poly.node());
        gs.push_back(tp->participates(poly));
      }
      sv->polys.push_back(std::move(ps));
      sv->g_poly.push_back(std::move(gs));
    }
    sv->N = N; sv->C = C; sv->T = T; sv->K = K; sv->Cout = Cout;
    sv->Ms = Ms;
    sv->MX = MX;

    std::vector<NodePtr> inputs{sv->xhat, sv->attention};
    for (auto& n : sv->thetas) inputs.push_back(n);
    for (auto& ps : sv->polys) {
      for (auto& n : ps) inputs.push_back(n);
    }
    tp->record(inputs, out.node(), [sv]() {
      const std::size_t N = sv->N, C = sv->C, T = sv->T, K = sv->K,
                        Cout = sv->Cout;
      if (sv->g_x) sv->xhat->ensure_grad();
      if (sv->g_att) sv->attention->ensure_grad();
      for (std::size_t k = 0; k < K; ++k) {
        if (sv->g_theta[k]) sv->thetas[k]->ensure_grad();
      }
      for (auto& ps : sv->polys) {
        for (std::size_t k = 0; k < K; ++k) {
          // ensured lazily below
          (void)ps;
        }
      }
      for (std::size_t t = 0; t < T; ++t) {
        const std::size_t si = sv->polys.size() == 1 ? 0 : t;
        // G_t [N,Cout] from out grad
        EMat Gt(N, Cout);
        for (std::size_t i = 0; i < N; ++i) {
          for (std::size_t c = 0; c < Cout; ++c) {
            Gt(i, c) = sv->out->grad[(i * Cout + c) * T + t];
          }
        }
        EMat Xt(N, C);
        if (sv->g_x || sv->g_att ||
            std::any_of(sv->g_poly[si].begin(), sv->g_poly[si].end(),
                        [](bool b) { return b; })) {
          for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t c = 0; c < C; ++c) {
              Xt(i, c) = sv->xhat->values[(i * C + c) * T + t];
            }
          }
        }
        for (std::size_t k = 0; k < K; ++k) {
          EMap Mk(sv->Ms->data() + (t * K + k) * N * N, N, N);
          ECMap Th(sv->thetas[k]->values.data(), C, Cout);
          if (sv->g_theta[k]) {
            // dTheta_k += (M_k X_t)^T G_t
            ECMap MXtk(sv->MX->data() + (t * K + k) * N * C, N, C);
            EMap(sv->thetas[k]->grad.data(), C, Cout).noalias() +=
                MXtk.transpose() * Gt;
          }
          const bool need_dM = sv->g_att || sv->g_poly[si][k];
          EMat dM;
          if (need_dM) {
            // dM_k = G_t (X_t Theta_k)^T = G_t Theta_k^T X_t^T
            dM.noalias() = Gt * Th.transpose() * Xt.transpose();
          }
          if (sv->g_att) {
            const double* Tk = sv->polys[si][k]->values.data();
            for (std::size_t i = 0; i < N * N; ++i) {
              sv->attention->grad[i] += dM.data()[i] * Tk[i];
            }
          }
          if (sv->g_poly[si][k]) {
            sv->polys[si][k]->ensure_grad();
            const double* P = sv->attention->values.data();
            for (std::size_t i = 0; i < N * N; ++i) {
              sv->polys[si][k]->grad[i] += dM.data()[i] * P[i];
            }
          }
          if (sv->g_x) {
            // dX_t += M_k^T G_t Theta_k^T
            EMat dX(N, C);
            dX.noalias() = Mk.transpose() * Gt * Th.transpose();
            for (std::size_t i = 0; i < N; ++i) {
              for (std::size_t c = 0; c < C; ++c) {
                sv->xhat->grad[(i * C + c) * T + t] += dX(i, c);
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor cheb_graph_conv(const Tensor& xhat, const ChebStack& stack,
                       const std::vector<Tensor>& thetas,
                       const Tensor& attention) {
  return cheb_graph_conv(xhat, std::vector<ChebStack>{stack}, thetas,
                         attention);
}

Tensor temporal_conv(const Tensor& x, const Tensor& phi_w,
                     const Tensor& phi_b) {
  if (x.rank() != 3 || phi_w.rank() != 3) {
    throw DimensionError("temporal_conv: shapes " + shape_str(x.shape()) +
                         " and " + shape_str(phi_w.shape()));
  }
  if (phi_w.dim(2) > x.dim(2)) {
    throw ParameterError("temporal_conv: kernel width " +
                         std::to_string(phi_w.dim(2)) +
                         " exceeds temporal length " +
                         std::to_string(x.dim(2)));
  }
  // [N,C,T]: node axis is the batch of the 1-D conv over time
  return relu(conv1d_mc(relu(x), phi_w, phi_b, 1, true));
}

Tensor fuse_views(const Tensor& fc, const Tensor& dc) {
  if (fc.rank() != 3 || dc.rank() != 3 || fc.dim(0) != dc.dim(0) ||
      fc.dim(2) != dc.dim(2)) {
    throw DimensionError("fuse_views: " + shape_str(fc.shape()) + " vs " +
                         shape_str(dc.shape()));
  }
  return concat({fc, dc}, 1);
}

Tensor global_avg_nct(const Tensor& x) {
  if (x.rank() != 3) {
    throw DimensionError("global_avg_nct: expected [N,C,T], got " +
                         shape_str(x.shape()));
  }
  const std::size_t N = x.dim(0), C = x.dim(1), T = x.dim(2);
  Tensor out = Tensor::zeros({C});
  const double inv = 1.0 / static_cast<double>(N * T);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t t = 0; t < T; ++t) s += x.at(i, c, t);
    }
    out.ref(c) = s * inv;
  }
  Tape* tp = Tape::active();
  if (tp && tp->participates(x)) {
    NodePtr xn = x.node(), on = out.node();
    tp->record({xn}, on, [xn, on, N, C, T, inv]() {
      xn->ensure_grad();
      for (std::size_t c = 0; c < C; ++c) {
        const double g = on->grad[c] * inv;
        for (std::size_t i = 0; i < N; ++i) {
          for (std::size_t t = 0; t < T; ++t) {
            xn->grad[(i * C + c) * T + t] += g;
          }
        }
      }
    });
  }
  return out;
}

}  // namespace mstgcn
