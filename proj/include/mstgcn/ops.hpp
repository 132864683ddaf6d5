#pragma once

#include <functional>
#include <vector>

#include "mstgcn/rng.hpp"
#include "mstgcn/tensor.hpp"

namespace mstgcn {

// ---- linear algebra ----

// [m,k] x [k,n] -> [m,n]. Backward accumulates g*b^T and a^T*g.
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor abs_op(const Tensor& a);  // subgradient 0 at 0
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// ---- reductions / structure ----

Tensor reduce_sum(const Tensor& a);   // -> scalar
Tensor reduce_mean(const Tensor& a);  // -> scalar
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);                        // 2-D
Tensor permute(const Tensor& a, std::vector<std::size_t> perm);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice_rows(const Tensor& a, std::size_t row0, std::size_t row1);
Tensor stack_rows(const std::vector<Tensor>& rows);  // k x [n] -> [k,n]

// Row-wise softmax with max subtraction; rows sum to 1.
Tensor softmax_rows(const Tensor& a);

// -(1/L) sum y*log(max(p,1e-12)). probs rows must sum to 1 within 1e-6
// (NormalizationError) and onehot rows must be valid one-hot (LabelError).
Tensor cross_entropy(const Tensor& probs, const Tensor& onehot);
inline constexpr double kLogFloor = 1e-12;

// ---- regularized / stateful layers ----

// Identity in Eval. In Train: inverted dropout, mask and scale by
// 1/(1-rate); rate in [0,1).
Tensor dropout(const Tensor& a, double rate, Mode mode, Rng* rng);

// Per-channel batch normalization over [B,C,L] (stats across B*L).
struct BatchNorm1d {
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;
  double eps = 1e-5;

  explicit BatchNorm1d(std::size_t channels = 0);
};

Tensor batch_norm(const Tensor& x, BatchNorm1d& bn, Mode mode);

// ---- convolution / pooling primitives ----

// Valid cross-correlation of a single signal: [L] x [k] -> [floor((L-k)/s)+1].
Tensor conv1d_valid(const Tensor& signal, const Tensor& kernel,
                    std::size_t stride);

// Max over windows, gradient to the first argmax: [L] -> [floor((L-w)/s)+1].
Tensor maxpool1d(const Tensor& signal, std::size_t window, std::size_t stride);

// Batched multichannel versions used by the network layers.
// x [B,Cin,L], w [Cout,Cin,k], bias [Cout]; same_pad requires stride 1 and
// pads symmetrically with the extra zero on the right.
Tensor conv1d_mc(const Tensor& x, const Tensor& w, const Tensor& bias,
                 std::size_t stride, bool same_pad);
Tensor maxpool1d_mc(const Tensor& x, std::size_t window, std::size_t stride);

// ---- gradient reversal ----

// Forward is the identity; backward multiplies upstream by -scale.
Tensor grl(const Tensor& x, double scale);

// ---- pairwise ops backing the graph-learning equations ----

// logits[m,n] = sum_f w[f]*|X[m,f]-X[n,f]|;  X [N,F], w [F] -> [N,N]
Tensor pairwise_absdiff_dot(const Tensor& X, const Tensor& w);
// D[m,n] = ||x_m - x_n||_2^2;  X [N,F] -> [N,N]
Tensor pairwise_sqdist(const Tensor& X);

// ---- linear layer ----

// x [B,F] * W [F,O] + b [O] broadcast per row.
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);

// ---- gradient checking ----

// Max over coordinates of |analytic - numeric| / max(1,|numeric|), with
// central differences (f(x+h)-f(x-h))/2h. f must return a scalar tensor.
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& point, double h = 1e-5);

// Same check for a nullary function of several leaf parameters.
double grad_check_params(const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params, double h = 1e-5);

}  // namespace mstgcn
