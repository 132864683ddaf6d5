#include "mstgcn/domain.hpp"

#include <cmath>

namespace mstgcn {

void HeadParams::init(std::size_t in_dim, std::size_t out_dim, bool hidden,
                      std::size_t hidden_width, Rng& rng) {
  auto glorot = [&](std::size_t rows, std::size_t cols) {
    Tensor t = Tensor::zeros({rows, cols}, true);
    const double sd = std::sqrt(2.0 / static_cast<double>(rows + cols));
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = sd * rng.normal();
    return t;
  };
  if (hidden) {
    Wh = glorot(in_dim, hidden_width);
    bh = Tensor::zeros({hidden_width}, true);
    W = glorot(hidden_width, out_dim);
  } else {
    Wh = Tensor();
    bh = Tensor();
    W = glorot(in_dim, out_dim);
  }
  b = Tensor::zeros({out_dim}, true);
}

std::vector<Tensor> HeadParams::parameters() {
  std::vector<Tensor> out;
  if (has_hidden()) {
    out.push_back(Wh);
    out.push_back(bh);
  }
  out.push_back(W);
  out.push_back(b);
  return out;
}

namespace {

Tensor head_logits(const Tensor& features, const HeadParams& p) {
  if (features.rank() != 2) {
    throw DimensionError("head: expected [B,F], got " +
                         shape_str(features.shape()));
  }
  Tensor h = features;
  if (p.has_hidden()) h = relu(linear(h, p.Wh, p.bh));
  return linear(h, p.W, p.b);
}

}  // namespace

Tensor label_predictor(const Tensor& features, const HeadParams& p) {
  return softmax_rows(head_logits(features, p));
}

Tensor domain_classifier(const Tensor& features, const HeadParams& p,
                         double grl_scale) {
  return softmax_rows(head_logits(grl(features, grl_scale), p));
}

Tensor total_loss(const Tensor& class_probs, const Tensor& y_onehot,
                  const Tensor& domain_probs, const Tensor& d_onehot,
                  const Tensor& graph_loss, double mu) {
  if (mu < 0) throw ParameterError("total_loss: mu must be >= 0");
  Tensor loss = add(cross_entropy(class_probs, y_onehot),
                    cross_entropy(domain_probs, d_onehot));
  if (mu != 0.0) loss = add(loss, scale(graph_loss, mu));
  return loss;
}

}  // namespace mstgcn
