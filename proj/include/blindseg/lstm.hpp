#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "blindseg/common.hpp"

namespace blindseg {

enum class OutputHead { softmax, linear };
enum class CellKind { lstm, rnn };  // rnn = single-gate tanh cell, config knob only
enum class RunMode { train, eval };

struct NetworkConfig {
  int input_dim = 8;
  int hidden_dim = 40;
  int n_layers = 2;
  int output_dim = 8;
  OutputHead head = OutputHead::softmax;
  CellKind cell = CellKind::lstm;
  double dropout_p = 0.2;
  double skip_prob = 0.8;  // categorical training only
  long bptt_len = 64;
  double lr = 1e-3;
  double rho = 0.9;
  double eps = 1e-8;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim < 1 || hidden_dim < 1 || output_dim < 1 || n_layers < 1) {
      throw ConfigError("NetworkConfig: dimensions must be positive");
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("NetworkConfig: dropout_p in [0,1)");
    if (skip_prob < 0.0 || skip_prob > 1.0) throw ConfigError("NetworkConfig: skip_prob in [0,1]");
    if (bptt_len < 1) throw ConfigError("NetworkConfig: bptt_len must be >= 1");
  }
};

// One recurrent layer. For LSTM cells W/U/b stack the four gates as
// [input; forget; cell; output], each hidden_dim rows. For the plain tanh
// cell they are single blocks.
struct LayerParams {
  Eigen::MatrixXd W;  // gates x input
  Eigen::MatrixXd U;  // gates x hidden
  Eigen::VectorXd b;
};

struct NetParams {
  std::vector<LayerParams> layers;
  Eigen::MatrixXd W_out;
  Eigen::VectorXd b_out;
};

namespace detail {

template <class Params, class Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  for (auto& layer : p.layers) {
    fn(layer.W.data(), layer.W.size());
    fn(layer.U.data(), layer.U.size());
    fn(layer.b.data(), layer.b.size());
  }
  fn(p.W_out.data(), p.W_out.size());
  fn(p.b_out.data(), p.b_out.size());
}

inline NetParams zeros_like(const NetParams& p) {
  NetParams z;
  z.layers.reserve(p.layers.size());
  for (const auto& layer : p.layers) {
    z.layers.push_back({Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()),
                        Eigen::MatrixXd::Zero(layer.U.rows(), layer.U.cols()),
                        Eigen::VectorXd::Zero(layer.b.size())});
  }
  z.W_out = Eigen::MatrixXd::Zero(p.W_out.rows(), p.W_out.cols());
  z.b_out = Eigen::VectorXd::Zero(p.b_out.size());
  return z;
}

inline bool all_finite(const NetParams& p) {
  bool ok = true;
  for_each_tensor(const_cast<NetParams&>(p), [&](double* d, std::ptrdiff_t n) {
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      if (!std::isfinite(d[i])) ok = false;
    }
  });
  return ok;
}

}  // namespace detail

struct LstmNetwork {
  NetworkConfig config;
  NetParams params;
  NetParams rms_cache;  // running mean of squared gradients, per parameter

  int gate_rows() const {
    return config.cell == CellKind::lstm ? 4 * config.hidden_dim : config.hidden_dim;
  }
};

inline std::vector<double> flatten_params(const NetParams& p) {
  std::vector<double> flat;
  detail::for_each_tensor(const_cast<NetParams&>(p), [&](double* d, std::ptrdiff_t n) {
    flat.insert(flat.end(), d, d + n);
  });
  return flat;
}

inline void unflatten_params(NetParams& p, const std::vector<double>& flat) {
  std::size_t pos = 0;
  detail::for_each_tensor(p, [&](double* d, std::ptrdiff_t n) {
    if (pos + n > flat.size()) throw IoError("parameter vector too short");
    std::copy(flat.begin() + pos, flat.begin() + pos + n, d);
    pos += n;
  });
  if (pos != flat.size()) throw IoError("parameter vector size mismatch");
}

// Weights uniform in [-s, s] with s = 1/sqrt(hidden_dim); biases zero except
// the LSTM forget gate, which starts at 1.
inline LstmNetwork init_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  LstmNetwork net;
  net.config = config;
  net.config.seed = seed;

  const double s = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
  std::mt19937_64 rng(derive_seed(seed, seed_stream::net_init));
  std::uniform_real_distribution<double> dist(-s, s);
  auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  };

  const int g = net.gate_rows();
  for (int l = 0; l < config.n_layers; ++l) {
    const int in = l == 0 ? config.input_dim : config.hidden_dim;
    LayerParams layer;
    layer.W.resize(g, in);
    layer.U.resize(g, config.hidden_dim);
    layer.b = Eigen::VectorXd::Zero(g);
    fill(layer.W);
    fill(layer.U);
    if (config.cell == CellKind::lstm) {
      layer.b.segment(config.hidden_dim, config.hidden_dim).setOnes();  // forget gate
    }
    net.params.layers.push_back(std::move(layer));
  }
  net.params.W_out.resize(config.output_dim, config.hidden_dim);
  net.params.b_out = Eigen::VectorXd::Zero(config.output_dim);
  fill(net.params.W_out);

  net.rms_cache = detail::zeros_like(net.params);
  return net;
}

// Hidden/cell state per layer; reset to zeros at each utterance start.
struct NetState {
  std::vector<Eigen::VectorXd> h;
  std::vector<Eigen::VectorXd> c;
};

inline NetState zero_state(const NetworkConfig& config) {
  NetState st;
  st.h.assign(config.n_layers, Eigen::VectorXd::Zero(config.hidden_dim));
  st.c.assign(config.n_layers, Eigen::VectorXd::Zero(config.hidden_dim));
  return st;
}

// Inverted-dropout scale factors per (timestep, layer); empty plan = no dropout.
using DropoutPlan = std::vector<std::vector<Eigen::ArrayXd>>;

inline DropoutPlan make_dropout_plan(const NetworkConfig& config, long n_steps,
                                     std::mt19937_64& rng) {
  DropoutPlan plan;
  if (config.dropout_p <= 0.0) return plan;
  const double keep = 1.0 - config.dropout_p;
  std::bernoulli_distribution drop(config.dropout_p);
  plan.resize(n_steps);
  for (long t = 0; t < n_steps; ++t) {
    plan[t].resize(config.n_layers);
    for (int l = 0; l < config.n_layers; ++l) {
      Eigen::ArrayXd mask(config.hidden_dim);
      for (int i = 0; i < config.hidden_dim; ++i) mask[i] = drop(rng) ? 0.0 : 1.0 / keep;
      plan[t][l] = mask;
    }
  }
  return plan;
}

namespace detail {

inline Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& z) { return 1.0 / (1.0 + (-z).exp()); }

inline Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  Eigen::ArrayXd shifted = z.array() - z.maxCoeff();
  Eigen::ArrayXd e = shifted.exp();
  return (e / e.sum()).matrix();
}

// Everything the backward pass needs, per timestep and layer.
struct ForwardCache {
  std::vector<std::vector<Eigen::VectorXd>> layer_in;  // input vector to each layer
  std::vector<std::vector<Eigen::ArrayXd>> gate_i, gate_f, gate_g, gate_o;
  std::vector<std::vector<Eigen::VectorXd>> c;       // cell state
  std::vector<std::vector<Eigen::VectorXd>> h;       // hidden, pre-dropout
  std::vector<std::vector<Eigen::VectorXd>> h_drop;  // hidden after dropout
  std::vector<Eigen::VectorXd> outputs;              // head outputs
  NetState entry;
  NetState exit;
};

inline ForwardCache run_forward(const LstmNetwork& net, const std::vector<Eigen::VectorXd>& inputs,
                                const NetState& entry, const DropoutPlan& plan) {
  const auto& cfg = net.config;
  const long T = static_cast<long>(inputs.size());
  const int L = cfg.n_layers;
  const int H = cfg.hidden_dim;

  ForwardCache cache;
  cache.entry = entry;
  auto resize2 = [&](auto& v) {
    v.resize(T);
    for (auto& row : v) row.resize(L);
  };
  resize2(cache.layer_in);
  resize2(cache.gate_i);
  resize2(cache.gate_f);
  resize2(cache.gate_g);
  resize2(cache.gate_o);
  resize2(cache.c);
  resize2(cache.h);
  resize2(cache.h_drop);
  cache.outputs.resize(T);

  NetState st = entry;
  for (long t = 0; t < T; ++t) {
    Eigen::VectorXd x = inputs[t];
    if (x.size() != cfg.input_dim) throw ConfigError("forward: input dimension mismatch");
    for (int l = 0; l < L; ++l) {
      const auto& p = net.params.layers[l];
      cache.layer_in[t][l] = x;
      if (cfg.cell == CellKind::lstm) {
        Eigen::VectorXd z = p.W * x + p.U * st.h[l] + p.b;
        Eigen::ArrayXd zi = z.segment(0, H).array();
        Eigen::ArrayXd zf = z.segment(H, H).array();
        Eigen::ArrayXd zg = z.segment(2 * H, H).array();
        Eigen::ArrayXd zo = z.segment(3 * H, H).array();
        Eigen::ArrayXd gi = sigmoid(zi), gf = sigmoid(zf), gg = zg.tanh(), go = sigmoid(zo);
        Eigen::VectorXd c_new = (gf * st.c[l].array() + gi * gg).matrix();
        Eigen::VectorXd h_new = (go * c_new.array().tanh()).matrix();
        cache.gate_i[t][l] = gi;
        cache.gate_f[t][l] = gf;
        cache.gate_g[t][l] = gg;
        cache.gate_o[t][l] = go;
        st.c[l] = c_new;
        st.h[l] = h_new;
      } else {
        Eigen::VectorXd z = p.W * x + p.U * st.h[l] + p.b;
        st.h[l] = z.array().tanh().matrix();
        st.c[l].setZero();
      }
      cache.c[t][l] = st.c[l];
      cache.h[t][l] = st.h[l];
      Eigen::VectorXd dropped = st.h[l];
      if (!plan.empty()) dropped = (dropped.array() * plan[t][l]).matrix();
      cache.h_drop[t][l] = dropped;
      x = dropped;
    }
    if (!st.h[L - 1].allFinite()) throw NumericError("forward: non-finite activation (divergence)");
    Eigen::VectorXd y = net.params.W_out * x + net.params.b_out;
    cache.outputs[t] = cfg.head == OutputHead::softmax ? softmax(y) : y;
  }
  cache.exit = st;
  return cache;
}

}  // namespace detail

// One output per time step t, predicting step t+1's target. Softmax head
// emits a distribution, linear head a raw vector. Train mode applies
// inverted dropout after each recurrent layer; rng is required when
// dropout_p > 0.
inline std::vector<Eigen::VectorXd> forward(const LstmNetwork& net,
                                            const std::vector<Eigen::VectorXd>& inputs,
                                            RunMode mode, std::mt19937_64* rng = nullptr) {
  DropoutPlan plan;
  if (mode == RunMode::train && net.config.dropout_p > 0.0) {
    if (!rng) throw ConfigError("forward: train mode with dropout needs an RNG");
    plan = make_dropout_plan(net.config, static_cast<long>(inputs.size()), *rng);
  }
  return detail::run_forward(net, inputs, zero_state(net.config), plan).outputs;
}

inline double loss_categorical(const Eigen::VectorXd& predicted, int target) {
  if (target < 0 || target >= predicted.size()) throw ConfigError("loss_categorical: target out of range");
  return -std::log(std::max(predicted[target], 1e-12));  // floor guards exact zeros
}

inline double loss_mse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& target) {
  if (predicted.size() != target.size()) throw ConfigError("loss_mse: dimension mismatch");
  return (predicted - target).squaredNorm() / static_cast<double>(predicted.size());
}

// Step targets for one BPTT chunk; exactly one of the two vectors is used,
// matching the network's head.
struct StepTargets {
  std::vector<int> categorical;
  std::vector<Eigen::VectorXd> continuous;

  long size(OutputHead head) const {
    return head == OutputHead::softmax ? static_cast<long>(categorical.size())
                                       : static_cast<long>(continuous.size());
  }
};

struct BpttResult {
  NetParams gradients;
  double loss = 0.0;      // total masked loss over the chunk
  long n_masked = 0;      // steps that contributed loss
  NetState final_state;   // carried to the next chunk without gradient flow
};

// Gradients of the total masked loss. Steps with mask=false contribute no
// loss but still advance the recurrent state.
inline BpttResult bptt_gradients(const LstmNetwork& net, const std::vector<Eigen::VectorXd>& inputs,
                                 const StepTargets& targets, const std::vector<std::uint8_t>& loss_mask,
                                 const NetState& initial_state, const DropoutPlan& plan = {}) {
  const auto& cfg = net.config;
  const long T = static_cast<long>(inputs.size());
  if (T > cfg.bptt_len) throw ConfigError("bptt_gradients: chunk longer than bptt_len");
  if (targets.size(cfg.head) != T || static_cast<long>(loss_mask.size()) != T) {
    throw ConfigError("bptt_gradients: inputs/targets/mask length mismatch");
  }
  const int L = cfg.n_layers;
  const int H = cfg.hidden_dim;

  detail::ForwardCache cache = detail::run_forward(net, inputs, initial_state, plan);

  BpttResult res;
  res.gradients = detail::zeros_like(net.params);
  res.final_state = cache.exit;

  // Head deltas (d loss / d pre-head output).
  std::vector<Eigen::VectorXd> dz(T);
  for (long t = 0; t < T; ++t) {
    if (!loss_mask[t]) {
      dz[t] = Eigen::VectorXd::Zero(cfg.output_dim);
      continue;
    }
    ++res.n_masked;
    if (cfg.head == OutputHead::softmax) {
      const int y = targets.categorical[t];
      res.loss += loss_categorical(cache.outputs[t], y);
      dz[t] = cache.outputs[t];
      dz[t][y] -= 1.0;
    } else {
      const auto& y = targets.continuous[t];
      res.loss += loss_mse(cache.outputs[t], y);
      dz[t] = (2.0 / cfg.output_dim) * (cache.outputs[t] - y);
    }
  }
  if (!std::isfinite(res.loss)) throw NumericError("bptt_gradients: non-finite loss (divergence)");

  std::vector<Eigen::VectorXd> dh_rec(L, Eigen::VectorXd::Zero(H));
  std::vector<Eigen::VectorXd> dc_rec(L, Eigen::VectorXd::Zero(H));
  std::vector<Eigen::VectorXd> from_above(L);

  for (long t = T - 1; t >= 0; --t) {
    res.gradients.W_out += dz[t] * cache.h_drop[t][L - 1].transpose();
    res.gradients.b_out += dz[t];
    from_above[L - 1] = net.params.W_out.transpose() * dz[t];

    for (int l = L - 1; l >= 0; --l) {
      Eigen::VectorXd dh_above = from_above[l];
      if (!plan.empty()) dh_above = (dh_above.array() * plan[t][l]).matrix();
      Eigen::VectorXd dh = dh_above + dh_rec[l];

      auto& grads = res.gradients.layers[l];
      const auto& p = net.params.layers[l];
      const Eigen::VectorXd& h_prev = t > 0 ? cache.h[t - 1][l] : cache.entry.h[l];

      Eigen::VectorXd dz_gates;
      if (cfg.cell == CellKind::lstm) {
        const Eigen::VectorXd& c_prev = t > 0 ? cache.c[t - 1][l] : cache.entry.c[l];
        const Eigen::ArrayXd& gi = cache.gate_i[t][l];
        const Eigen::ArrayXd& gf = cache.gate_f[t][l];
        const Eigen::ArrayXd& gg = cache.gate_g[t][l];
        const Eigen::ArrayXd& go = cache.gate_o[t][l];
        Eigen::ArrayXd tc = cache.c[t][l].array().tanh();

        Eigen::ArrayXd dc = dc_rec[l].array() + dh.array() * go * (1.0 - tc * tc);
        Eigen::ArrayXd d_o = dh.array() * tc;
        Eigen::ArrayXd d_i = dc * gg;
        Eigen::ArrayXd d_g = dc * gi;
        Eigen::ArrayXd d_f = dc * c_prev.array();

        dz_gates.resize(4 * H);
        dz_gates.segment(0, H) = (d_i * gi * (1.0 - gi)).matrix();
        dz_gates.segment(H, H) = (d_f * gf * (1.0 - gf)).matrix();
        dz_gates.segment(2 * H, H) = (d_g * (1.0 - gg * gg)).matrix();
        dz_gates.segment(3 * H, H) = (d_o * go * (1.0 - go)).matrix();

        dc_rec[l] = (dc * gf).matrix();
      } else {
        Eigen::ArrayXd h_now = cache.h[t][l].array();
        dz_gates = (dh.array() * (1.0 - h_now * h_now)).matrix();
      }

      grads.W += dz_gates * cache.layer_in[t][l].transpose();
      grads.U += dz_gates * h_prev.transpose();
      grads.b += dz_gates;
      dh_rec[l] = p.U.transpose() * dz_gates;
      if (l > 0) from_above[l - 1] = p.W.transpose() * dz_gates;
    }
  }

  if (!detail::all_finite(res.gradients)) {
    throw NumericError("bptt_gradients: non-finite gradient (divergence)");
  }
  return res;
}

// cache <- rho*cache + (1-rho)*g^2;  param <- param - lr*g/(sqrt(cache)+eps)
inline void rmsprop_step(LstmNetwork& net, const NetParams& gradients, double lr, double rho = 0.9,
                         double eps = 1e-8) {
  NetParams& p = net.params;
  NetParams& c = net.rms_cache;
  const NetParams& g = gradients;
  for (std::size_t l = 0; l <= p.layers.size(); ++l) {
    auto update = [&](Eigen::MatrixXd& pm, Eigen::MatrixXd& cm, const Eigen::MatrixXd& gm) {
      cm.array() = rho * cm.array() + (1.0 - rho) * gm.array().square();
      pm.array() -= lr * gm.array() / (cm.array().sqrt() + eps);
    };
    auto update_v = [&](Eigen::VectorXd& pv, Eigen::VectorXd& cv, const Eigen::VectorXd& gv) {
      cv.array() = rho * cv.array() + (1.0 - rho) * gv.array().square();
      pv.array() -= lr * gv.array() / (cv.array().sqrt() + eps);
    };
    if (l < p.layers.size()) {
      update(p.layers[l].W, c.layers[l].W, g.layers[l].W);
      update(p.layers[l].U, c.layers[l].U, g.layers[l].U);
      update_v(p.layers[l].b, c.layers[l].b, g.layers[l].b);
    } else {
      update(p.W_out, c.W_out, g.W_out);
      update_v(p.b_out, c.b_out, g.b_out);
    }
  }
  if (!detail::all_finite(net.params)) throw NumericError("rmsprop_step: non-finite parameter");
}

inline Eigen::VectorXd one_hot(int symbol, int dim) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  if (symbol < 0 || symbol >= dim) throw ConfigError("one_hot: symbol out of range");
  v[symbol] = 1.0;
  return v;
}

// --- checkpoint format: versioned config header + flat parameter list ---

inline std::string serialize_network(const LstmNetwork& net) {
  const auto& c = net.config;
  std::string s = "blindseg-rnn 1\n";
  s += std::to_string(c.input_dim) + " " + std::to_string(c.hidden_dim) + " " +
       std::to_string(c.n_layers) + " " + std::to_string(c.output_dim) + " " +
       (c.head == OutputHead::softmax ? std::string("softmax") : std::string("linear")) + " " +
       (c.cell == CellKind::lstm ? std::string("lstm") : std::string("rnn")) + "\n";
  s += detail::format_double(c.dropout_p) + " " + detail::format_double(c.skip_prob) + " " +
       std::to_string(c.bptt_len) + " " + detail::format_double(c.lr) + " " +
       detail::format_double(c.rho) + " " + detail::format_double(c.eps) + " " +
       std::to_string(c.max_epochs) + " " + std::to_string(c.patience) + " " +
       std::to_string(c.seed) + "\n";
  const std::vector<double> flat = flatten_params(net.params);
  s += std::to_string(flat.size()) + "\n";
  for (double v : flat) {
    s += detail::format_double(v);
    s += '\n';
  }
  return s;
}

inline LstmNetwork parse_network(const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "blindseg-rnn" || version != 1) {
    throw IoError("not a blindseg network checkpoint");
  }
  NetworkConfig c;
  std::string head, cell;
  if (!(in >> c.input_dim >> c.hidden_dim >> c.n_layers >> c.output_dim >> head >> cell)) {
    throw IoError("malformed checkpoint header");
  }
  c.head = head == "softmax" ? OutputHead::softmax : OutputHead::linear;
  c.cell = cell == "lstm" ? CellKind::lstm : CellKind::rnn;
  if (!(in >> c.dropout_p >> c.skip_prob >> c.bptt_len >> c.lr >> c.rho >> c.eps >> c.max_epochs >>
        c.patience >> c.seed)) {
    throw IoError("malformed checkpoint hyperparameters");
  }
  std::size_t n = 0;
  if (!(in >> n)) throw IoError("malformed checkpoint parameter count");
  std::vector<double> flat(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in >> flat[i])) throw IoError("truncated checkpoint parameters");
  }
  LstmNetwork net = init_network(c, c.seed);
  unflatten_params(net.params, flat);
  net.rms_cache = detail::zeros_like(net.params);
  return net;
}

inline void save_network(const std::filesystem::path& path, const LstmNetwork& net) {
  detail::write_text_file(path, serialize_network(net));
}

inline LstmNetwork load_network(const std::filesystem::path& path) {
  return parse_network(detail::read_text_file(path));
}

}  // namespace blindseg
