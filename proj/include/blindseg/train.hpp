#pragma once

#include <algorithm>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "blindseg/common.hpp"
#include "blindseg/lstm.hpp"
#include "blindseg/mfcc.hpp"
#include "blindseg/quantize.hpp"
#include "blindseg/segment.hpp"

namespace blindseg {

// Loss gate per target step: flag j gates the loss on target x_{j+1}.
// Repeated symbols (x_t = x_{t-1}) keep their loss with probability
// 1 - skip_prob; transitions always keep it. This skews backpropagation
// toward category changes and away from the copy-the-last-frame minimum.
inline std::vector<std::uint8_t> make_skip_mask(const CategoricalSequence& sequence,
                                                double skip_prob, std::uint64_t seed) {
  const long T = sequence.size();
  std::vector<std::uint8_t> mask(T > 0 ? T - 1 : 0, 1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (long j = 0; j + 1 < T; ++j) {
    if (sequence.symbols[j + 1] == sequence.symbols[j]) {
      mask[j] = u(rng) >= skip_prob ? 1 : 0;
    }
  }
  return mask;
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;         // mean masked loss per backpropagated frame
  double val_loss = 0.0;           // mean unmasked loss per frame
  double backprop_fraction = 1.0;  // masked frames / total target frames
};

struct TrainingReport {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;     // 1-based epoch whose parameters are returned
  int stopped_epoch = -1;  // last epoch that ran
  double best_val_loss = std::numeric_limits<double>::infinity();
};

struct TrainResult {
  LstmNetwork network;
  TrainingReport report;
};

inline std::string serialize_training_report(const TrainingReport& report) {
  std::string s = "epoch,train_loss,val_loss,backprop_fraction\n";
  for (const auto& e : report.epochs) {
    s += std::to_string(e.epoch) + "," + detail::format_double(e.train_loss) + "," +
         detail::format_double(e.val_loss) + "," + detail::format_double(e.backprop_fraction) + "\n";
  }
  return s;
}

namespace detail {

struct TrainExample {
  std::vector<Eigen::VectorXd> inputs;  // steps 0..T-2
  StepTargets targets;                  // targets 1..T-1
  const std::vector<int>* symbols = nullptr;  // set in categorical mode
  std::size_t ordinal = 0;
};

inline std::vector<TrainExample> build_examples(const std::vector<CategoricalSequence>& seqs,
                                                const NetworkConfig& cfg) {
  std::vector<TrainExample> out;
  for (std::size_t u = 0; u < seqs.size(); ++u) {
    const auto& seq = seqs[u];
    if (seq.size() < 2) continue;
    TrainExample ex;
    ex.ordinal = u;
    ex.symbols = &seq.symbols;
    for (long t = 0; t + 1 < seq.size(); ++t) {
      ex.inputs.push_back(one_hot(seq.symbols[t], cfg.input_dim));
      ex.targets.categorical.push_back(seq.symbols[t + 1]);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<TrainExample> build_examples(const std::vector<FrameSequence>& seqs,
                                                const NetworkConfig& cfg) {
  std::vector<TrainExample> out;
  for (std::size_t u = 0; u < seqs.size(); ++u) {
    const auto& fs = seqs[u];
    if (fs.n_frames() < 2) continue;
    if (fs.dim() != cfg.input_dim) {
      throw ConfigError("train_predictor: frame dim " + std::to_string(fs.dim()) +
                        " != input_dim " + std::to_string(cfg.input_dim));
    }
    TrainExample ex;
    ex.ordinal = u;
    for (long t = 0; t + 1 < fs.n_frames(); ++t) {
      ex.inputs.push_back(fs.frames.row(t).transpose());
      ex.targets.continuous.push_back(fs.frames.row(t + 1).transpose());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

inline StepTargets slice_targets(const StepTargets& t, OutputHead head, long begin, long len) {
  StepTargets s;
  if (head == OutputHead::softmax) {
    s.categorical.assign(t.categorical.begin() + begin, t.categorical.begin() + begin + len);
  } else {
    s.continuous.assign(t.continuous.begin() + begin, t.continuous.begin() + begin + len);
  }
  return s;
}

inline double mean_eval_loss(const LstmNetwork& net, const std::vector<TrainExample>& examples) {
  double total = 0.0;
  long count = 0;
  for (const auto& ex : examples) {
    const auto outputs = forward(net, ex.inputs, RunMode::eval);
    for (std::size_t t = 0; t < outputs.size(); ++t) {
      total += net.config.head == OutputHead::softmax
                   ? loss_categorical(outputs[t], ex.targets.categorical[t])
                   : loss_mse(outputs[t], ex.targets.continuous[t]);
      ++count;
    }
  }
  return count > 0 ? total / count : 0.0;
}

inline TrainResult train_loop(std::vector<TrainExample> train, std::vector<TrainExample> val,
                              const NetworkConfig& config) {
  if (train.empty()) throw ConfigError("train_predictor: no usable training sequences");
  if (val.empty()) throw ConfigError("train_predictor: no usable validation sequences");
  config.validate();

  LstmNetwork net = init_network(config, config.seed);
  const bool categorical = config.head == OutputHead::softmax;

  TrainResult result;
  result.network = net;
  NetParams best_params = net.params;
  int epochs_since_best = 0;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, seed_stream::shuffle + 1000003ULL * epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    long epoch_masked = 0, epoch_targets = 0;

    for (std::size_t oi : order) {
      const TrainExample& ex = train[oi];
      const long T = static_cast<long>(ex.inputs.size());

      std::vector<std::uint8_t> mask(T, 1);
      if (categorical && ex.symbols && config.skip_prob > 0.0) {
        CategoricalSequence tmp;
        tmp.symbols = *ex.symbols;
        mask = make_skip_mask(tmp, config.skip_prob,
                              derive_seed(config.seed, seed_stream::skip_mask +
                                                           1000003ULL * epoch + 7919ULL * ex.ordinal));
      }

      std::mt19937_64 drop_rng(derive_seed(config.seed, seed_stream::dropout + 1000003ULL * epoch +
                                                            7919ULL * ex.ordinal));
      NetState state = zero_state(config);
      for (long begin = 0; begin < T; begin += config.bptt_len) {
        const long len = std::min<long>(config.bptt_len, T - begin);
        std::vector<Eigen::VectorXd> in_chunk(ex.inputs.begin() + begin,
                                              ex.inputs.begin() + begin + len);
        StepTargets tgt_chunk = slice_targets(ex.targets, config.head, begin, len);
        std::vector<std::uint8_t> mask_chunk(mask.begin() + begin, mask.begin() + begin + len);

        DropoutPlan plan;
        if (config.dropout_p > 0.0) plan = make_dropout_plan(config, len, drop_rng);

        BpttResult bp = bptt_gradients(net, in_chunk, tgt_chunk, mask_chunk, state, plan);
        state = bp.final_state;
        epoch_loss += bp.loss;
        epoch_masked += bp.n_masked;
        epoch_targets += len;
        if (bp.n_masked == 0) continue;

        const double scale = 1.0 / static_cast<double>(bp.n_masked);
        detail::for_each_tensor(bp.gradients, [&](double* d, std::ptrdiff_t n) {
          for (std::ptrdiff_t i = 0; i < n; ++i) d[i] *= scale;
        });
        rmsprop_step(net, bp.gradients, config.lr, config.rho, config.eps);
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_masked > 0 ? epoch_loss / epoch_masked : 0.0;
    stats.backprop_fraction =
        epoch_targets > 0 ? static_cast<double>(epoch_masked) / epoch_targets : 0.0;
    stats.val_loss = mean_eval_loss(net, val);
    result.report.epochs.push_back(stats);
    result.report.stopped_epoch = epoch;

    if (stats.val_loss < result.report.best_val_loss) {
      result.report.best_val_loss = stats.val_loss;
      result.report.best_epoch = epoch;
      best_params = net.params;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    if (epochs_since_best >= config.patience) break;
  }

  net.params = std::move(best_params);
  result.network = std::move(net);
  return result;
}

}  // namespace detail

// Categorical next-symbol predictor (softmax head, cross-entropy, skip
// sampling of repeated symbols).
inline TrainResult train_predictor(const std::vector<CategoricalSequence>& train,
                                   const std::vector<CategoricalSequence>& val,
                                   const NetworkConfig& config) {
  if (config.head != OutputHead::softmax) {
    throw ConfigError("train_predictor: categorical sequences need a softmax head");
  }
  return detail::train_loop(detail::build_examples(train, config),
                            detail::build_examples(val, config), config);
}

// Continuous next-frame regressor (linear head, mean squared error, no skip
// sampling: the sequences vary continuously).
inline TrainResult train_predictor(const std::vector<FrameSequence>& train,
                                   const std::vector<FrameSequence>& val,
                                   const NetworkConfig& config) {
  if (config.head != OutputHead::linear) {
    throw ConfigError("train_predictor: frame sequences need a linear head");
  }
  return detail::train_loop(detail::build_examples(train, config),
                            detail::build_examples(val, config), config);
}

// E(t) = loss between the prediction made from x_0..x_{t-1} and the realized
// x_t, for t >= 1; E(0) = 0.
inline ErrorSignal nn_error_signal(const LstmNetwork& net, const CategoricalSequence& sequence) {
  if (net.config.head != OutputHead::softmax) {
    throw ConfigError("nn_error_signal: network has no softmax head");
  }
  ErrorSignal err;
  err.hop_ms = sequence.hop_ms;
  err.utterance_id = sequence.utterance_id;
  err.values.assign(sequence.size(), 0.0);
  if (sequence.size() < 2) return err;

  std::vector<Eigen::VectorXd> inputs;
  for (long t = 0; t + 1 < sequence.size(); ++t) {
    inputs.push_back(one_hot(sequence.symbols[t], net.config.input_dim));
  }
  const auto outputs = forward(net, inputs, RunMode::eval);
  for (long t = 1; t < sequence.size(); ++t) {
    err.values[t] = loss_categorical(outputs[t - 1], sequence.symbols[t]);
  }
  return err;
}

inline ErrorSignal nn_error_signal(const LstmNetwork& net, const FrameSequence& frames) {
  if (net.config.head != OutputHead::linear) {
    throw ConfigError("nn_error_signal: network has no linear head");
  }
  ErrorSignal err;
  err.hop_ms = frames.hop_ms;
  err.utterance_id = frames.utterance_id;
  err.values.assign(frames.n_frames(), 0.0);
  if (frames.n_frames() < 2) return err;

  std::vector<Eigen::VectorXd> inputs;
  for (long t = 0; t + 1 < frames.n_frames(); ++t) {
    inputs.push_back(frames.frames.row(t).transpose());
  }
  const auto outputs = forward(net, inputs, RunMode::eval);
  for (long t = 1; t < frames.n_frames(); ++t) {
    err.values[t] = loss_mse(outputs[t - 1], frames.frames.row(t).transpose());
  }
  return err;
}

}  // namespace blindseg
