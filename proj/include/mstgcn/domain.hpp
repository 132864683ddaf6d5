#pragma once

#include <vector>

#include "mstgcn/ops.hpp"
#include "mstgcn/rng.hpp"
#include "mstgcn/tensor.hpp"

namespace mstgcn {

// Dense softmax head, optionally with one hidden ReLU layer.
struct HeadParams {
  Tensor W;   // [F, out]
  Tensor b;   // [out]
  Tensor Wh;  // [F, hidden], undefined when no hidden layer
  Tensor bh;  // [hidden]

  bool has_hidden() const { return Wh.defined(); }
  void init(std::size_t in_dim, std::size_t out_dim, bool hidden,
            std::size_t hidden_width, Rng& rng);
  std::vector<Tensor> parameters();
};

// Reversal scale with optional linear warm-up over the first epochs.
struct GrlConfig {
  double beta = 0.1;
  std::size_t warmup_epochs = 10;

  // epoch is 1-indexed; scale grows linearly from beta/warmup to beta
  double scale_at(std::size_t epoch) const {
    if (beta == 0.0) return 0.0;
    if (warmup_epochs == 0) return beta;
    const double m = static_cast<double>(epoch) /
                     static_cast<double>(warmup_epochs);
    return beta * (m < 1.0 ? m : 1.0);
  }
};

// Softmax class probabilities over 5 stages.
Tensor label_predictor(const Tensor& features, const HeadParams& p);

// Softmax domain probabilities; features pass through the gradient
// reversal layer with the given scale first.
Tensor domain_classifier(const Tensor& features, const HeadParams& p,
                         double grl_scale);

// CE_y + CE_d + mu * graph_loss. The adversarial sign of the domain
// term lives in the GRL scale applied inside domain_classifier, not in
// this scalar; the reported domain loss is plain cross-entropy.
Tensor total_loss(const Tensor& class_probs, const Tensor& y_onehot,
                  const Tensor& domain_probs, const Tensor& d_onehot,
                  const Tensor& graph_loss, double mu);

}  // namespace mstgcn
