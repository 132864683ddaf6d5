#include "mstgcn/model.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <sstream>

#include "binio.hpp"

namespace mstgcn {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string branch_str(const BranchConfig& b) {
  std::ostringstream os;
  os << b.head_filters << "," << b.head_kernel << "," << b.head_stride << ","
     << b.pool1_window << "," << b.pool1_stride << ","
     << fmt_double(b.dropout_rate) << "," << b.mid_filters << ","
     << b.mid_kernel << "," << b.mid_count << "," << b.pool2_window << ","
     << b.pool2_stride;
  return os.str();
}

BranchConfig branch_from_str(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 11) {
    throw FormatError("bad branch config '" + s + "'");
  }
  BranchConfig b;
  b.head_filters = std::stoul(parts[0]);
  b.head_kernel = std::stoul(parts[1]);
  b.head_stride = std::stoul(parts[2]);
  b.pool1_window = std::stoul(parts[3]);
  b.pool1_stride = std::stoul(parts[4]);
  b.dropout_rate = std::stod(parts[5]);
  b.mid_filters = std::stoul(parts[6]);
  b.mid_kernel = std::stoul(parts[7]);
  b.mid_count = std::stoul(parts[8]);
  b.pool2_window = std::stoul(parts[9]);
  b.pool2_stride = std::stoul(parts[10]);
  return b;
}

}  // namespace

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "channels = " << channels << "\n"
     << "samples_per_epoch = " << samples_per_epoch << "\n"
     << "classes = " << classes << "\n"
     << "domains = " << domains << "\n"
     << "d = " << d << "\n"
     << "K = " << K << "\n"
     << "layers = " << layers << "\n"
     << "kernels = " << kernels << "\n"
     << "kappa = " << kappa << "\n"
     << "lambda = " << fmt_double(lambda) << "\n"
     << "mu = " << fmt_double(mu) << "\n"
     << "beta = " << fmt_double(grl.beta) << "\n"
     << "beta_warmup = " << grl.warmup_epochs << "\n"
     << "head_hidden = " << (head_hidden ? 1 : 0) << "\n"
     << "head_hidden_width = " << head_hidden_width << "\n"
     << "fc_mode = " << to_string(fc_mode) << "\n"
     << "fn_input_len = " << feature_net.input_len << "\n"
     << "fn_small = " << branch_str(feature_net.small) << "\n"
     << "fn_large = " << branch_str(feature_net.large) << "\n";
  return os.str();
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto req = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw FormatError("model config missing key '" + key + "'");
    }
    return it->second;
  };
  ModelConfig cfg;
  cfg.channels = std::stoul(req("channels"));
  cfg.samples_per_epoch = std::stoul(req("samples_per_epoch"));
  cfg.classes = std::stoul(req("classes"));
  cfg.domains = std::stoul(req("domains"));
  cfg.d = std::stoul(req("d"));
  cfg.K = std::stoul(req("K"));
  cfg.layers = std::stoul(req("layers"));
  cfg.kernels = std::stoul(req("kernels"));
  cfg.kappa = std::stoul(req("kappa"));
  cfg.lambda = std::stod(req("lambda"));
  cfg.mu = std::stod(req("mu"));
  cfg.grl.beta = std::stod(req("beta"));
  cfg.grl.warmup_epochs = std::stoul(req("beta_warmup"));
  cfg.head_hidden = req("head_hidden") == "1";
  cfg.head_hidden_width = std::stoul(req("head_hidden_width"));
  auto kind = adjacency_kind_from_string(req("fc_mode"));
  if (!kind) throw FormatError("model config: bad fc_mode");
  cfg.fc_mode = *kind;
  cfg.feature_net.input_len = std::stoul(req("fn_input_len"));
  cfg.feature_net.small = branch_from_str(req("fn_small"));
  cfg.feature_net.large = branch_from_str(req("fn_large"));
  return cfg;
}

void ModelParams::init(const ModelConfig& config, const ElectrodeLayout& layout,
                       Rng& rng) {
  cfg = config;
  if (cfg.channels == 0) throw ParameterError("model: channels must be > 0");
  if (layout.size() != cfg.channels) {
    throw ParameterError("model: layout has " + std::to_string(layout.size()) +
                         " electrodes for " + std::to_string(cfg.channels) +
                         " channels");
  }
  if (cfg.feature_net.input_len != cfg.samples_per_epoch) {
    cfg.feature_net.input_len = cfg.samples_per_epoch;
  }
  feature_net.init(cfg.feature_net, rng);
  const std::size_t Fd = cfg.feature_net.feature_dim();
  graph_learn = GraphLearnParams(Fd);
  for (std::size_t i = 0; i < Fd; ++i) {
    graph_learn.w.data()[i] = 0.1 * rng.normal();
  }

  fc_blocks.clear();
  dc_blocks.clear();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    StBlockConfig bc;
    bc.nodes = cfg.channels;
    bc.c_in = l == 0 ? Fd : cfg.kernels;
    bc.c_out = cfg.kernels;
    bc.t = cfg.t_n();
    bc.K = cfg.K;
    bc.kappa = cfg.kappa;
    if (bc.kappa > bc.t) {
      throw ParameterError("model: temporal kernel width " +
                           std::to_string(bc.kappa) + " exceeds T_n = " +
                           std::to_string(bc.t));
    }
    StBlockParams fcb, dcb;
    fcb.init(bc, rng);
    dcb.init(bc, rng);
    fc_blocks.push_back(std::move(fcb));
    dc_blocks.push_back(std::move(dcb));
  }

  label_head.init(cfg.fused_dim(), cfg.classes, cfg.head_hidden,
                  cfg.head_hidden_width, rng);
  domain_head.init(cfg.fused_dim(), cfg.domains, cfg.head_hidden,
                   cfg.head_hidden_width, rng);

  AdjacencyMatrix dc = build_dc_adjacency(layout);
  dc_adjacency = dc.weights;
  dc_stack = cheb_stack(scaled_laplacian(dc_adjacency), cfg.K);
  fixed_fc_adjacency = Tensor();
  fixed_fc_stack = ChebStack{};
}

void ModelParams::set_fixed_fc(const AdjacencyMatrix& adj) {
  if (adj.n != cfg.channels) {
    throw ParameterError("set_fixed_fc: adjacency is " + std::to_string(adj.n) +
                         "-node for " + std::to_string(cfg.channels) +
                         " channels");
  }
  cfg.fc_mode = adj.kind;
  fixed_fc_adjacency = adj.weights.clone();
  fixed_fc_stack = cheb_stack(scaled_laplacian(fixed_fc_adjacency), cfg.K);
}

std::vector<Tensor> ModelParams::parameters() {
  std::vector<Tensor> out = feature_net.parameters();
  if (cfg.fc_mode == AdjacencyKind::LearnedFC) {
    out.push_back(graph_learn.w);
  }
  for (auto& b : fc_blocks) {
    auto p = b.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  for (auto& b : dc_blocks) {
    auto p = b.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  auto ly = label_head.parameters();
  out.insert(out.end(), ly.begin(), ly.end());
  auto ld = domain_head.parameters();
  out.insert(out.end(), ld.begin(), ld.end());
  return out;
}

namespace {

void walk_state(ModelParams& m,
                const std::function<void(const std::string&, Tensor&)>& tensor,
                const std::function<void(const std::string&,
                                         std::vector<double>&)>& buffer) {
  auto conv = [&](const std::string& prefix, ConvBn& c) {
    tensor(prefix + ".w", c.w);
    tensor(prefix + ".b", c.b);
    tensor(prefix + ".bn.gamma", c.bn.gamma);
    tensor(prefix + ".bn.beta", c.bn.beta);
    buffer(prefix + ".bn.rmean", c.bn.running_mean);
    buffer(prefix + ".bn.rvar", c.bn.running_var);
  };
  auto branch = [&](const std::string& prefix, BranchParams& b) {
    conv(prefix + ".head", b.head);
    for (std::size_t i = 0; i < b.mid.size(); ++i) {
      conv(prefix + ".mid" + std::to_string(i), b.mid[i]);
    }
  };
  branch("fn.small", m.feature_net.small);
  branch("fn.large", m.feature_net.large);
  tensor("gl.w", m.graph_learn.w);
  auto block = [&](const std::string& prefix, StBlockParams& b) {
    tensor(prefix + ".Vp", b.Vp);
    tensor(prefix + ".bp", b.bp);
    tensor(prefix + ".Z1", b.Z1);
    tensor(prefix + ".Z2", b.Z2);
    tensor(prefix + ".Z3", b.Z3);
    tensor(prefix + ".Vq", b.Vq);
    tensor(prefix + ".bq", b.bq);
    tensor(prefix + ".M1", b.M1);
    tensor(prefix + ".M2", b.M2);
    tensor(prefix + ".M3", b.M3);
    for (std::size_t k = 0; k < b.thetas.size(); ++k) {
      tensor(prefix + ".theta" + std::to_string(k), b.thetas[k]);
    }
    tensor(prefix + ".phi_w", b.phi_w);
    tensor(prefix + ".phi_b", b.phi_b);
  };
  for (std::size_t l = 0; l < m.fc_blocks.size(); ++l) {
    block("fc" + std::to_string(l), m.fc_blocks[l]);
  }
  for (std::size_t l = 0; l < m.dc_blocks.size(); ++l) {
    block("dc" + std::to_string(l), m.dc_blocks[l]);
  }
  auto head = [&](const std::string& prefix, HeadParams& h) {
    if (h.has_hidden()) {
      tensor(prefix + ".Wh", h.Wh);
      tensor(prefix + ".bh", h.bh);
    }
    tensor(prefix + ".W", h.W);
    tensor(prefix + ".b", h.b);
  };
  head("head_y", m.label_head);
  head("head_d", m.domain_head);
  tensor("dc.adjacency", m.dc_adjacency);
  if (m.fixed_fc_adjacency.defined()) {
    tensor("fcfix.adjacency", m.fixed_fc_adjacency);
  }
}

}  // namespace

ModelParams ModelParams::clone_detached() const {
  ModelParams copy;
  copy.cfg = cfg;
  // rebuild the structure with a throwaway stream, then overwrite values
  Rng zero(0);
  ElectrodeLayout dummy;
  for (std::size_t i = 0; i < cfg.channels; ++i) {
    dummy.names.push_back("c" + std::to_string(i));
    dummy.coords.push_back({static_cast<double>(i), 0.0, 0.0});
  }
  copy.init(cfg, dummy, zero);
  copy.cfg.fc_mode = cfg.fc_mode;
  if (fixed_fc_adjacency.defined()) {
    copy.fixed_fc_adjacency =
        Tensor::zeros({cfg.channels, cfg.channels});
  }
  auto& self = const_cast<ModelParams&>(*this);
  std::map<std::string, Tensor*> mine;
  std::map<std::string, std::vector<double>*> mine_buf;
  walk_state(self,
             [&](const std::string& n, Tensor& t) { mine[n] = &t; },
             [&](const std::string& n, std::vector<double>& b) {
               mine_buf[n] = &b;
             });
  walk_state(copy,
             [&](const std::string& n, Tensor& t) {
               t = mine.at(n)->clone();
               t.set_requires_grad(mine.at(n)->requires_grad());
             },
             [&](const std::string& n, std::vector<double>& b) {
               b = *mine_buf.at(n);
             });
  copy.dc_stack = cheb_stack(scaled_laplacian(copy.dc_adjacency), cfg.K);
  if (copy.fixed_fc_adjacency.defined()) {
    copy.fixed_fc_stack =
        cheb_stack(scaled_laplacian(copy.fixed_fc_adjacency), cfg.K);
  }
  return copy;
}

ForwardResult mstgcn_forward(ModelParams& model, const Tensor& signals,
                             Mode mode, Rng* rng, double grl_scale,
                             bool want_aux) {
  const ModelConfig& cfg = model.cfg;
  if (signals.rank() != 4) {
    throw DimensionError("mstgcn_forward: expected [B,T_n,N,L], got " +
                         shape_str(signals.shape()));
  }
  const std::size_t B = signals.dim(0), Tn = signals.dim(1),
                    N = signals.dim(2), L = signals.dim(3);
  if (Tn != cfg.t_n()) {
    throw DimensionError("mstgcn_forward: window has " + std::to_string(Tn) +
                         " epochs, temporal context requires 2d+1 = " +
                         std::to_string(cfg.t_n()));
  }
  if (N != cfg.channels || L != cfg.samples_per_epoch) {
    throw DimensionError("mstgcn_forward: window " + shape_str(signals.shape()) +
                         " does not match model [N,L] = [" +
                         std::to_string(cfg.channels) + "," +
                         std::to_string(cfg.samples_per_epoch) + "]");
  }
  const bool learned = cfg.fc_mode == AdjacencyKind::LearnedFC;
  if (!learned && !model.fixed_fc_stack.K) {
    throw ParameterError("mstgcn_forward: fixed FC mode without a fixed "
                         "adjacency installed");
  }

  ForwardResult res;

  // shared feature extraction over every (window, epoch, channel) signal
  Tensor flat = reshape(signals, {B * Tn * N, 1, L});
  Tensor feats = model.feature_net.forward(flat, mode, rng);
  const std::size_t Fd = feats.dim(1);

  Tensor gl_sum;
  std::vector<Tensor> pooled;
  pooled.reserve(B);

  for (std::size_t b = 0; b < B; ++b) {
    Tensor wf = slice_rows(feats, b * Tn * N, (b + 1) * Tn * N);
    Tensor w3 = reshape(wf, {Tn, N, Fd});

    std::vector<Tensor> epoch_feats;
    std::vector<Tensor> x_parts;
    epoch_feats.reserve(Tn);
    for (std::size_t t = 0; t < Tn; ++t) {
      Tensor Xt = reshape(slice_rows(w3, t, t + 1), {N, Fd});
      epoch_feats.push_back(Xt);
      x_parts.push_back(reshape(Xt, {N, Fd, 1}));
    }
    Tensor x0 = concat(x_parts, 2);  // [N, Fd, Tn]

    std::vector<ChebStack> fc_stacks;
    if (learned) {
      for (std::size_t t = 0; t < Tn; ++t) {
        AdjacencyMatrix A = learn_fc_adjacency(epoch_feats[t],
                                               model.graph_learn);
        Tensor term = graph_learning_loss(epoch_feats[t], A, cfg.lambda);
        gl_sum = gl_sum.defined() ? add(gl_sum, term) : term;
        fc_stacks.push_back(cheb_stack(scaled_laplacian(A.weights), cfg.K));
        if (want_aux && t == cfg.d) {
          res.fc_adjacency.push_back(A.weights.clone());
        }
      }
    } else {
      fc_stacks.push_back(model.fixed_fc_stack);
      if (want_aux) {
        res.fc_adjacency.push_back(model.fixed_fc_adjacency.clone());
      }
    }

    Tensor xf = x0, xd = x0;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      Tensor qf, qd;
      Tensor xf_hat = temporal_attention_apply(xf, model.fc_blocks[l], &qf);
      Tensor pf = spatial_attention(xf_hat, model.fc_blocks[l]);
      Tensor xf_g = cheb_graph_conv(xf_hat, fc_stacks,
                                    model.fc_blocks[l].thetas, pf);
      xf = temporal_conv(xf_g, model.fc_blocks[l].phi_w,
                         model.fc_blocks[l].phi_b);

      Tensor xd_hat = temporal_attention_apply(xd, model.dc_blocks[l], &qd);
      Tensor pd = spatial_attention(xd_hat, model.dc_blocks[l]);
      Tensor xd_g = cheb_graph_conv(xd_hat, model.dc_stack,
                                    model.dc_blocks[l].thetas, pd);
      xd = temporal_conv(xd_g, model.dc_blocks[l].phi_w,
                         model.dc_blocks[l].phi_b);

      if (want_aux && l == 0) {
        res.p_fc.push_back(pf.clone());
        res.q_fc.push_back(qf.clone());
        res.p_dc.push_back(pd.clone());
        res.q_dc.push_back(qd.clone());
      }
    }

    Tensor fused = fuse_views(xf, xd);
    pooled.push_back(global_avg_nct(fused));
  }

  res.features = stack_rows(pooled);  // [B, fused_dim]
  res.class_probs = label_predictor(res.features, model.label_head);
  res.domain_probs =
      domain_classifier(res.features, model.domain_head, grl_scale);
  if (learned) {
    res.graph_loss = scale(gl_sum, 1.0 / static_cast<double>(B * Tn));
  } else {
    res.graph_loss = Tensor::scalar(0.0);
  }
  return res;
}

void save_checkpoint(const ModelParams& model, const std::string& path) {
  binio::Writer w;
  w.bytes("MSTP", 4);
  w.u16(1);
  const std::string cfg_text = model.cfg.serialize();
  w.u32(static_cast<std::uint32_t>(cfg_text.size()));
  w.bytes(cfg_text.data(), cfg_text.size());

  std::vector<std::pair<std::string, std::vector<double>>> entries;
  auto& m = const_cast<ModelParams&>(model);
  walk_state(m,
             [&](const std::string& n, Tensor& t) {
               entries.emplace_back(n, t.values());
               // shape recorded alongside the data below
             },
             [&](const std::string& n, std::vector<double>& b) {
               entries.emplace_back(n, b);
             });
  // second walk to capture shapes in the same order
  std::vector<Shape> shapes;
  walk_state(m,
             [&](const std::string&, Tensor& t) { shapes.push_back(t.shape()); },
             [&](const std::string&, std::vector<double>& b) {
               shapes.push_back(Shape{b.size()});
             });

  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    w.str(entries[i].first);
    w.u8(static_cast<std::uint8_t>(shapes[i].size()));
    for (std::size_t dd : shapes[i]) w.u32(static_cast<std::uint32_t>(dd));
    for (double v : entries[i].second) w.f64(v);
  }
  w.u32(crc32(w.buf.data(), w.buf.size()));
  binio::write_file(path, w.buf);
}

ModelParams load_checkpoint(const std::string& path) {
  std::vector<unsigned char> buf = binio::read_file(path);
  binio::Reader r{buf.data(), buf.size()};
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "MSTP", 4) != 0) {
    throw FormatError("bad magic at byte offset 0; not a checkpoint");
  }
  const std::uint16_t version = r.u16("version");
  if (version != 1) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));
  }
  const std::uint32_t cfg_len = r.u32("config length");
  std::string cfg_text(cfg_len, '\0');
  r.bytes(cfg_text.data(), cfg_len, "config");
  ModelConfig cfg = ModelConfig::deserialize(cfg_text);

  const std::uint32_t count = r.u32("entry count");
  std::map<std::string, std::pair<Shape, std::vector<double>>> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str("entry name");
    const std::uint8_t rank = r.u8("entry rank");
    Shape shape;
    std::size_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      shape.push_back(r.u32("entry dim"));
      n *= shape.back();
    }
    std::vector<double> data(n);
    for (std::size_t k = 0; k < n; ++k) data[k] = r.f64("entry data");
    loaded[name] = {std::move(shape), std::move(data)};
  }
  const std::size_t crc_offset = r.pos;
  const std::uint32_t stored = r.u32("crc32");
  if (stored != crc32(buf.data(), crc_offset)) {
    throw FormatError("checksum mismatch at byte offset " +
                      std::to_string(crc_offset));
  }

  ModelParams model;
  Rng zero(0);
  ElectrodeLayout dummy;
  for (std::size_t i = 0; i < cfg.channels; ++i) {
    dummy.names.push_back("c" + std::to_string(i));
    dummy.coords.push_back({static_cast<double>(i), 0.0, 0.0});
  }
  model.init(cfg, dummy, zero);
  if (cfg.fc_mode != AdjacencyKind::LearnedFC) {
    model.fixed_fc_adjacency = Tensor::zeros({cfg.channels, cfg.channels});
  }

  walk_state(model,
             [&](const std::string& n, Tensor& t) {
               auto it = loaded.find(n);
               if (it == loaded.end()) {
                 throw FormatError("checkpoint missing tensor '" + n + "'");
               }
               if (it->second.first != t.shape()) {
                 throw FormatError("checkpoint tensor '" + n +
                                   "' has shape " +
                                   shape_str(it->second.first) +
                                   ", expected " + shape_str(t.shape()));
               }
               std::copy(it->second.second.begin(), it->second.second.end(),
                         t.data());
             },
             [&](const std::string& n, std::vector<double>& b) {
               auto it = loaded.find(n);
               if (it == loaded.end()) {
                 throw FormatError("checkpoint missing buffer '" + n + "'");
               }
               b = it->second.second;
             });
  model.dc_stack = cheb_stack(scaled_laplacian(model.dc_adjacency), cfg.K);
  if (model.fixed_fc_adjacency.defined()) {
    model.fixed_fc_stack =
        cheb_stack(scaled_laplacian(model.fixed_fc_adjacency), cfg.K);
  }
  return model;
}

}  // namespace mstgcn
