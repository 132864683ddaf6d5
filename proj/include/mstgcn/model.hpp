#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mstgcn/data.hpp"
#include "mstgcn/domain.hpp"
#include "mstgcn/feature_net.hpp"
#include "mstgcn/graph.hpp"
#include "mstgcn/stgcn.hpp"

namespace mstgcn {

struct ModelConfig {
  std::size_t channels = 0;            // N
  std::size_t samples_per_epoch = 3000;
  std::size_t classes = kNumStages;
  std::size_t domains = 1;             // R_d = training subjects
  std::size_t d = 2;                   // temporal context, T_n = 2d+1
  std::size_t K = 3;
  std::size_t layers = 1;
  std::size_t kernels = 10;            // conv channels per block
  std::size_t kappa = 3;
  double lambda = 0.001;               // graph-learning sparsity weight
  double mu = 1e-4;                    // graph loss weight in the total loss
  GrlConfig grl;
  FeatureNetConfig feature_net = FeatureNetConfig::default_config();
  bool head_hidden = false;
  std::size_t head_hidden_width = 64;
  // learned adaptive graph by default; any other kind fixes the FC view
  AdjacencyKind fc_mode = AdjacencyKind::LearnedFC;

  std::size_t t_n() const { return 2 * d + 1; }
  std::size_t fused_dim() const { return 2 * kernels; }

  std::string serialize() const;
  static ModelConfig deserialize(const std::string& text);
};

// Everything the forward pass produces for one batch of windows.
struct ForwardResult {
  Tensor class_probs;   // [B, classes]
  Tensor domain_probs;  // [B, domains]
  Tensor features;      // [B, fused_dim] pooled fused features
  Tensor graph_loss;    // scalar, mean per window-epoch (0 for fixed FC)
  // aux snapshots for export (detached values; layer-0 attention)
  std::vector<Tensor> fc_adjacency;  // per window, center epoch [N,N]
  std::vector<Tensor> p_fc, p_dc;    // per window [N,N]
  std::vector<Tensor> q_fc, q_dc;    // per window [T,T]
};

struct ModelParams {
  ModelConfig cfg;
  FeatureNetParams feature_net;
  GraphLearnParams graph_learn;
  std::vector<StBlockParams> fc_blocks, dc_blocks;
  HeadParams label_head, domain_head;
  // fixed structures (not trained)
  Tensor dc_adjacency;        // [N,N]
  Tensor fixed_fc_adjacency;  // [N,N], defined when fc_mode != LearnedFC
  ChebStack dc_stack;
  ChebStack fixed_fc_stack;

  void init(const ModelConfig& config, const ElectrodeLayout& layout,
            Rng& rng);
  // install a fixed functional-connectivity graph (Fig. 7 baselines)
  void set_fixed_fc(const AdjacencyMatrix& adj);

  std::vector<Tensor> parameters();
  ModelParams clone_detached() const;
};

// Full pipeline on a batch of windows: signals [B, T_n, N, L].
ForwardResult mstgcn_forward(ModelParams& model, const Tensor& signals,
                             Mode mode, Rng* rng, double grl_scale,
                             bool want_aux = false);

void save_checkpoint(const ModelParams& model, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace mstgcn
