#include "mstgcn/feature_net.hpp"

#include <cmath>

namespace mstgcn {

namespace {

std::size_t valid_len(std::size_t L, std::size_t k, std::size_t s) {
  if (k > L) {
    throw ParameterError("feature net stage: kernel/window " +
                         std::to_string(k) + " exceeds length " +
                         std::to_string(L));
  }
  return (L - k) / s + 1;
}

void init_conv(ConvBn& c, std::size_t cout, std::size_t cin, std::size_t k,
               Rng& rng) {
  c.w = Tensor::zeros({cout, cin, k}, true);
  const double sd = std::sqrt(2.0 / static_cast<double>(cin * k));
  for (std::size_t i = 0; i < c.w.size(); ++i)
    c.w.data()[i] = sd * rng.normal();
  c.b = Tensor::zeros({cout}, true);
  c.bn = BatchNorm1d(cout);
}

Tensor branch_forward(const Tensor& x, const BranchConfig& cfg,
                      BranchParams& p, Mode mode, Rng* rng,
                      std::vector<Shape>* trace) {
  auto note = [&](const Tensor& t) {
    if (trace) trace->push_back(t.shape());
  };
  Tensor h = conv1d_mc(x, p.head.w, p.head.b, cfg.head_stride, false);
  h = relu(batch_norm(h, p.head.bn, mode));
  note(h);
  h = maxpool1d_mc(h, cfg.pool1_window, cfg.pool1_stride);
  note(h);
  if (cfg.dropout_rate > 0.0) {
    h = dropout(h, cfg.dropout_rate, mode, rng);
  }
  for (auto& m : p.mid) {
    h = relu(batch_norm(conv1d_mc(h, m.w, m.b, 1, true), m.bn, mode));
    note(h);
  }
  h = maxpool1d_mc(h, cfg.pool2_window, cfg.pool2_stride);
  note(h);
  h = reshape(h, {h.dim(0), h.dim(1) * h.dim(2)});
  note(h);
  return h;
}

}  // namespace

std::size_t BranchConfig::head_out_len(std::size_t input_len) const {
  return valid_len(input_len, head_kernel, head_stride);
}

std::size_t BranchConfig::out_len(std::size_t input_len) const {
  std::size_t L = head_out_len(input_len);
  L = valid_len(L, pool1_window, pool1_stride);
  // same-pad convs keep the length
  L = valid_len(L, pool2_window, pool2_stride);
  return L;
}

std::size_t BranchConfig::out_dim(std::size_t input_len) const {
  return out_len(input_len) * mid_filters;
}

FeatureNetConfig FeatureNetConfig::default_config() {
  FeatureNetConfig cfg;
  cfg.input_len = 3000;
  cfg.small = {32, 50, 6, 16, 16, 0.5, 64, 8, 3, 8, 8};
  cfg.large = {64, 400, 50, 8, 8, 0.0, 64, 6, 3, 4, 4};
  return cfg;
}

FeatureNetConfig FeatureNetConfig::shortened() {
  FeatureNetConfig cfg;
  cfg.input_len = 300;
  cfg.small = {8, 5, 6, 4, 4, 0.0, 8, 3, 2, 4, 4};
  cfg.large = {8, 40, 5, 8, 8, 0.0, 8, 3, 2, 4, 4};
  return cfg;
}

FeatureNetConfig FeatureNetConfig::toy(std::size_t input_len,
                                       std::size_t filters) {
  FeatureNetConfig cfg;
  cfg.input_len = input_len;
  cfg.small = {filters, 5, 4, 4, 4, 0.0, filters, 3, 1, 4, 4};
  cfg.large = {filters, 16, 8, 4, 4, 0.0, filters, 3, 1, 2, 2};
  return cfg;
}

void FeatureNetParams::init(const FeatureNetConfig& cfg, Rng& rng) {
  config = cfg;
  auto init_branch = [&](const BranchConfig& b, BranchParams& p) {
    init_conv(p.head, b.head_filters, 1, b.head_kernel, rng);
    p.mid.clear();
    std::size_t cin = b.head_filters;
    for (std::size_t i = 0; i < b.mid_count; ++i) {
      ConvBn c;
      init_conv(c, b.mid_filters, cin, b.mid_kernel, rng);
      p.mid.push_back(std::move(c));
      cin = b.mid_filters;
    }
  };
  init_branch(cfg.small, small);
  init_branch(cfg.large, large);
}

std::vector<Tensor> FeatureNetParams::parameters() {
  std::vector<Tensor> out;
  auto add = [&](BranchParams& p) {
    auto add_conv = [&](ConvBn& c) {
      out.push_back(c.w);
      out.push_back(c.b);
      out.push_back(c.bn.gamma);
      out.push_back(c.bn.beta);
    };
    add_conv(p.head);
    for (auto& m : p.mid) add_conv(m);
  };
  add(small);
  add(large);
  return out;
}

Tensor FeatureNetParams::forward(const Tensor& x, Mode mode, Rng* rng,
                                 std::vector<Shape>* trace) {
  if (x.rank() != 3 || x.dim(1) != 1 || x.dim(2) != config.input_len) {
    throw DimensionError("feature net: expected [B,1," +
                         std::to_string(config.input_len) + "], got " +
                         shape_str(x.shape()));
  }
  Tensor s = branch_forward(x, config.small, small, mode, rng, trace);
  Tensor l = branch_forward(x, config.large, large, mode, rng, trace);
  Tensor out = concat({s, l}, 1);  // small branch first
  if (trace) trace->push_back(out.shape());
  return out;
}

Tensor extract_features(const Tensor& epoch, FeatureNetParams& params,
                        Mode mode, Rng* rng) {
  if (epoch.rank() != 2 || epoch.dim(1) != params.config.input_len) {
    throw DimensionError("extract_features: expected [N," +
                         std::to_string(params.config.input_len) + "], got " +
                         shape_str(epoch.shape()));
  }
  Tensor x = reshape(epoch, {epoch.dim(0), 1, epoch.dim(1)});
  return params.forward(x, mode, rng);
}

}  // namespace mstgcn
