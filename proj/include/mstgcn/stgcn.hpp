#pragma once

#include <vector>

#include "mstgcn/graph.hpp"
#include "mstgcn/ops.hpp"
#include "mstgcn/rng.hpp"
#include "mstgcn/tensor.hpp"

namespace mstgcn {

// Shapes one attention-modulated spatial-temporal block.
struct StBlockConfig {
  std::size_t nodes;      // N
  std::size_t c_in;       // input channels
  std::size_t c_out;      // graph/temporal conv channels
  std::size_t t;          // temporal steps
  std::size_t K;          // Chebyshev order count
  std::size_t kappa;      // temporal kernel width
};

struct StBlockParams {
  StBlockConfig cfg;
  // spatial attention
  Tensor Vp, bp;  // [N,N]
  Tensor Z1;      // [T]
  Tensor Z2;      // [C_in,T]
  Tensor Z3;      // [C_in]
  // temporal attention
  Tensor Vq, bq;  // [T,T]
  Tensor M1;      // [N]
  Tensor M2;      // [C_in,N]
  Tensor M3;      // [C_in]
  // graph convolution kernels
  std::vector<Tensor> thetas;  // K x [C_in, C_out]
  // temporal convolution (1 x kappa over time, full channel mixing)
  Tensor phi_w;  // [C_out, C_out, kappa]
  Tensor phi_b;  // [C_out]

  void init(const StBlockConfig& c, Rng& rng);
  std::vector<Tensor> parameters();
};

// P' = row-softmax(V_p sigmoid((X Z1) Z2 (Z3 X)^T + b_p)); rows sum to 1.
Tensor spatial_attention(const Tensor& x, const StBlockParams& p);

// Mixes the temporal axis by Q' = row-softmax(Q); optionally exposes Q'.
Tensor temporal_attention_apply(const Tensor& x, const StBlockParams& p,
                                Tensor* q_prime = nullptr);

// out[:,:,t] = sum_k (T_k o P') xhat[:,:,t] Theta_k, with o elementwise.
// stacks holds one ChebStack per time step (or a single shared stack).
Tensor cheb_graph_conv(const Tensor& xhat,
                       const std::vector<ChebStack>& stacks,
                       const std::vector<Tensor>& thetas,
                       const Tensor& attention);
Tensor cheb_graph_conv(const Tensor& xhat, const ChebStack& stack,
                       const std::vector<Tensor>& thetas,
                       const Tensor& attention);

// ReLU(phi * ReLU(x)) with same padding in time; [N,C,T] -> [N,C_out,T].
Tensor temporal_conv(const Tensor& x, const Tensor& phi_w,
                     const Tensor& phi_b);

// Channel-axis concatenation, FC block first.
Tensor fuse_views(const Tensor& fc, const Tensor& dc);

// Mean over node and time axes: [N,C,T] -> [C].
Tensor global_avg_nct(const Tensor& x);

}  // namespace mstgcn
