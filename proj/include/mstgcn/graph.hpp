#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mstgcn/tensor.hpp"

namespace mstgcn {

enum class AdjacencyKind { LearnedFC, DistanceDC, Full, Knn, Pcc, Plv, Mi };

std::string to_string(AdjacencyKind k);
std::optional<AdjacencyKind> adjacency_kind_from_string(const std::string& s);

// N x N non-negative connection weights. Learned-FC matrices are
// row-stochastic; every other kind is symmetric.
struct AdjacencyMatrix {
  std::size_t n = 0;
  Tensor weights;  // [n,n]
  AdjacencyKind kind = AdjacencyKind::Full;
};

struct ElectrodeLayout {
  std::vector<std::string> names;
  std::vector<std::array<double, 3>> coords;

  std::size_t size() const { return names.size(); }
  double distance(std::size_t a, std::size_t b) const;
};

// Learnable weight vector of the adaptive graph-learning layer.
struct GraphLearnParams {
  Tensor w;  // [F_d]
  explicit GraphLearnParams(std::size_t feature_dim = 0);
};

struct ChebStack {
  std::size_t K = 0;
  std::vector<Tensor> polys;  // T_0..T_{K-1}, each [n,n]
};

// A_mn = softmax_n(ReLU(w^T |x_m - x_n|)). Differentiable w.r.t. X and w.
AdjacencyMatrix learn_fc_adjacency(const Tensor& X,
                                   const GraphLearnParams& params);

// sum_{m,n} ||x_m - x_n||^2 A_mn + lambda ||A||_F^2
Tensor graph_learning_loss(const Tensor& X, const AdjacencyMatrix& A,
                           double lambda);

// Gaussian distance kernel; sigma defaults to the mean pairwise distance.
AdjacencyMatrix build_dc_adjacency(const ElectrodeLayout& layout,
                                   std::optional<double> sigma = std::nullopt);

AdjacencyMatrix full_adjacency(std::size_t n);
AdjacencyMatrix knn_adjacency(const Tensor& features, std::size_t k);
AdjacencyMatrix pcc_adjacency(const Tensor& signals);            // [N,L]
AdjacencyMatrix plv_adjacency(const Tensor& signals);            // [N,L]
AdjacencyMatrix mi_adjacency(const Tensor& signals, std::size_t bins = 16);

// Symmetrizes A, forms L = D - A, estimates lambda_max by power
// iteration (tol 1e-9, <= 1e4 iters) and returns (2/lambda_max)L - I.
// An edgeless graph falls back to lambda_max = 2 with a warning.
// Differentiable, including through lambda_max.
Tensor scaled_laplacian(const Tensor& A);
Tensor scaled_laplacian(const AdjacencyMatrix& A);

// T_0 = I, T_1 = L, T_k = 2 L T_{k-1} - T_{k-2}
ChebStack cheb_stack(const Tensor& scaled_laplacian, std::size_t K);

}  // namespace mstgcn
