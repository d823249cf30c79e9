#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "blindseg/common.hpp"
#include "blindseg/quantize.hpp"
#include "blindseg/segment.hpp"

namespace blindseg {

// K-order Markov chain approximated by K lag-conditional first-order tables:
// lag_tables[i-1](a, b) = p(x_t = b | x_{t-i} = a), additively smoothed.
struct MarkovModel {
  std::vector<Eigen::MatrixXd> lag_tables;
  std::vector<Eigen::MatrixXd> counts;  // raw pair counts per lag, kept for audit
  int n_symbols = 8;
  double alpha = 1.0;

  int order() const { return static_cast<int>(lag_tables.size()); }
};

// Pair counts accumulate within utterances only; probabilities are
// (count + alpha) / (context_total + alpha * n_symbols).
inline MarkovModel fit_markov(const std::vector<CategoricalSequence>& sequences, int order = 6,
                              double alpha = 1.0, int n_symbols = 8) {
  if (order < 1) throw ConfigError("fit_markov: order must be >= 1");
  if (alpha <= 0.0) throw ConfigError("fit_markov: alpha must be positive");

  bool usable = false;
  for (const auto& seq : sequences) {
    if (seq.size() > order) usable = true;
  }
  if (!usable) throw ConfigError("fit_markov: no sequence longer than the model order");

  MarkovModel model;
  model.n_symbols = n_symbols;
  model.alpha = alpha;
  model.counts.assign(order, Eigen::MatrixXd::Zero(n_symbols, n_symbols));

  for (const auto& seq : sequences) {
    const long T = seq.size();
    for (long t = 1; t < T; ++t) {
      for (int lag = 1; lag <= order && lag <= t; ++lag) {
        const int a = seq.symbols[t - lag];
        const int b = seq.symbols[t];
        if (a < 0 || a >= n_symbols || b < 0 || b >= n_symbols) {
          throw ConfigError("fit_markov: symbol out of range in utterance " + seq.utterance_id);
        }
        model.counts[lag - 1](a, b) += 1.0;
      }
    }
  }

  model.lag_tables.assign(order, Eigen::MatrixXd::Zero(n_symbols, n_symbols));
  for (int lag = 0; lag < order; ++lag) {
    for (int a = 0; a < n_symbols; ++a) {
      const double context_total = model.counts[lag].row(a).sum();
      for (int b = 0; b < n_symbols; ++b) {
        model.lag_tables[lag](a, b) =
            (model.counts[lag](a, b) + alpha) / (context_total + alpha * n_symbols);
      }
    }
  }
  return model;
}

// E(t) = -log sum_{i=1..K} p(x_t | x_{t-i}) for t >= K, 0 before that.
// The lag sum is unnormalized exactly as the error formula states, so the
// signal is the averaged-lag surprisal shifted by the constant log K; peak
// prominence is unaffected.
inline ErrorSignal markov_error(const MarkovModel& model, const CategoricalSequence& sequence) {
  const int K = model.order();
  if (sequence.size() <= K) {
    throw ConfigError("markov_error: sequence shorter than model order in utterance " +
                      sequence.utterance_id);
  }
  ErrorSignal err;
  err.hop_ms = sequence.hop_ms;
  err.utterance_id = sequence.utterance_id;
  err.values.assign(sequence.size(), 0.0);
  for (long t = K; t < sequence.size(); ++t) {
    double prob_sum = 0.0;
    for (int lag = 1; lag <= K; ++lag) {
      prob_sum += model.lag_tables[lag - 1](sequence.symbols[t - lag], sequence.symbols[t]);
    }
    err.values[t] = -std::log(prob_sum);
  }
  return err;
}

inline std::string serialize_markov(const MarkovModel& model) {
  std::string s = std::to_string(model.order()) + " " + std::to_string(model.n_symbols) + " " +
                  detail::format_double(model.alpha) + "\n";
  for (const auto& table : model.lag_tables) {
    for (int a = 0; a < model.n_symbols; ++a) {
      for (int b = 0; b < model.n_symbols; ++b) {
        if (b) s += ' ';
        s += detail::format_double(table(a, b));
      }
      s += '\n';
    }
  }
  return s;
}

inline MarkovModel parse_markov(const std::string& text) {
  std::istringstream in(text);
  int order = 0, n_symbols = 0;
  double alpha = 0.0;
  if (!(in >> order >> n_symbols >> alpha) || order < 1 || n_symbols < 1) {
    throw IoError("malformed markov model header");
  }
  MarkovModel model;
  model.n_symbols = n_symbols;
  model.alpha = alpha;
  model.lag_tables.assign(order, Eigen::MatrixXd::Zero(n_symbols, n_symbols));
  for (int lag = 0; lag < order; ++lag) {
    for (int a = 0; a < n_symbols; ++a) {
      for (int b = 0; b < n_symbols; ++b) {
        if (!(in >> model.lag_tables[lag](a, b))) throw IoError("truncated markov model");
      }
    }
  }
  return model;
}

inline void save_markov(const std::filesystem::path& path, const MarkovModel& model) {
  detail::write_text_file(path, serialize_markov(model));
}

inline MarkovModel load_markov(const std::filesystem::path& path) {
  return parse_markov(detail::read_text_file(path));
}

}  // namespace blindseg
