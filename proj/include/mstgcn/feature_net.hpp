#pragma once

#include <vector>

#include "mstgcn/ops.hpp"
#include "mstgcn/rng.hpp"
#include "mstgcn/tensor.hpp"

namespace mstgcn {

// One branch: valid conv -> BN -> ReLU -> pool [-> dropout] ->
// (same-pad conv -> BN -> ReLU) x mid_count -> pool -> flatten.
struct BranchConfig {
  std::size_t head_filters;
  std::size_t head_kernel;
  std::size_t head_stride;
  std::size_t pool1_window;
  std::size_t pool1_stride;
  double dropout_rate;  // 0 disables
  std::size_t mid_filters;
  std::size_t mid_kernel;
  std::size_t mid_count;
  std::size_t pool2_window;
  std::size_t pool2_stride;

  std::size_t head_out_len(std::size_t input_len) const;
  std::size_t out_len(std::size_t input_len) const;
  std::size_t out_dim(std::size_t input_len) const;  // flattened
};

struct FeatureNetConfig {
  std::size_t input_len = 3000;
  BranchConfig small;
  BranchConfig large;

  // The two-branch topology: small kernels resolve waveform timing,
  // the large kernel resolves frequency content.
  static FeatureNetConfig default_config();
  // Tiny variants for gradient checking.
  static FeatureNetConfig shortened();          // input length 300
  static FeatureNetConfig toy(std::size_t input_len, std::size_t filters);

  std::size_t feature_dim() const {
    return small.out_dim(input_len) + large.out_dim(input_len);
  }
};

struct ConvBn {
  Tensor w;  // [Cout, Cin, k]
  Tensor b;  // [Cout]
  BatchNorm1d bn;
};

struct BranchParams {
  ConvBn head;
  std::vector<ConvBn> mid;
};

struct FeatureNetParams {
  FeatureNetConfig config;
  BranchParams small;
  BranchParams large;

  void init(const FeatureNetConfig& cfg, Rng& rng);
  std::vector<Tensor> parameters();

  // x [B,1,L] -> [B, F_d]; trace, when given, collects the shape after
  // every stage of each branch.
  Tensor forward(const Tensor& x, Mode mode, Rng* rng,
                 std::vector<Shape>* trace = nullptr);
};

// Per-epoch entry point: [N, L] -> [N, F_d] with shared weights.
Tensor extract_features(const Tensor& epoch, FeatureNetParams& params,
                        Mode mode, Rng* rng = nullptr);

}  // namespace mstgcn
