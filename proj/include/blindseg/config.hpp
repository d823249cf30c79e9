#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "blindseg/common.hpp"
#include "blindseg/corpus.hpp"
#include "blindseg/evaluate.hpp"
#include "blindseg/lstm.hpp"
#include "blindseg/mfcc.hpp"
#include "blindseg/segment.hpp"

namespace blindseg {

// Every default below is the published configuration, so an empty config
// file runs the reference pipeline end to end.
struct PipelineConfig {
  // [corpus]
  std::string corpus_root;
  std::string work_dir = "work";
  double val_fraction = 0.1;

  // [mfcc]
  MfccConfig mfcc;

  // [quantizer]
  int quant_k = 8;
  int quant_n_init = 10;
  long quant_sample = 10000;
  int quant_max_iters = 300;

  // [model]
  std::string model = "markov";  // markov | rnn-cat | rnn-mfcc | periodic

  // [markov]
  int markov_order = 6;
  double markov_alpha = 1.0;

  // [rnn]
  int rnn_hidden = 0;  // 0 resolves to 40 (categorical) or 20 (continuous)
  int rnn_layers = 2;
  std::string rnn_cell = "lstm";  // lstm | rnn
  double rnn_dropout = 0.2;
  double rnn_skip_prob = 0.8;
  long rnn_bptt_len = 64;
  double rnn_lr = 1e-3;
  double rnn_rho = 0.9;
  double rnn_eps = 1e-8;
  int rnn_max_epochs = 50;
  int rnn_patience = 5;

  // [segmenter]
  double delta = 0.2;
  long prefix_frames = 7;
  std::string prominence = "prev-local-min";  // prev-local-min | reset-on-emit
  double period_ms = 5.0;                     // periodic baseline spacing
  std::string sweep_deltas = "0:1.5:0.05";    // lo:hi:step or comma list

  // [evaluation]
  double tolerance_ms = 20.0;
  std::string eval_mode = "cropped";  // cropped | overlapping | both
  bool include_edges = true;
  bool trim_silence = false;
  std::string silence_label = "h#";

  // [synth]
  SynthSpec synth;

  // [pipeline]
  std::uint64_t seed = 42;

  ProminenceMode prominence_mode() const {
    if (prominence == "prev-local-min") return ProminenceMode::prev_local_min;
    if (prominence == "reset-on-emit") return ProminenceMode::reset_on_emit;
    throw ConfigError("unknown prominence mode: " + prominence);
  }

  NetworkConfig network_config(bool categorical) const {
    NetworkConfig nc;
    nc.input_dim = categorical ? quant_k : mfcc.dim();
    nc.output_dim = nc.input_dim;
    nc.hidden_dim = rnn_hidden > 0 ? rnn_hidden : (categorical ? 40 : 20);
    nc.n_layers = rnn_layers;
    nc.head = categorical ? OutputHead::softmax : OutputHead::linear;
    if (rnn_cell == "lstm") {
      nc.cell = CellKind::lstm;
    } else if (rnn_cell == "rnn") {
      nc.cell = CellKind::rnn;
    } else {
      throw ConfigError("unknown rnn cell: " + rnn_cell);
    }
    nc.dropout_p = rnn_dropout;
    nc.skip_prob = categorical ? rnn_skip_prob : 0.0;
    nc.bptt_len = rnn_bptt_len;
    nc.lr = rnn_lr;
    nc.rho = rnn_rho;
    nc.eps = rnn_eps;
    nc.max_epochs = rnn_max_epochs;
    nc.patience = rnn_patience;
    nc.seed = seed;
    return nc;
  }

  std::vector<double> parse_sweep_deltas() const {
    std::vector<double> out;
    if (sweep_deltas.find(':') != std::string::npos) {
      const auto parts = detail::split_string(sweep_deltas, ':');
      if (parts.size() != 3) throw ConfigError("sweep_deltas range needs lo:hi:step");
      const double lo = std::stod(parts[0]), hi = std::stod(parts[1]), step = std::stod(parts[2]);
      if (step <= 0.0) throw ConfigError("sweep_deltas step must be positive");
      for (double d = lo; d <= hi + 1e-12; d += step) out.push_back(d);
    } else {
      for (const auto& tok : detail::split_string(sweep_deltas, ',')) {
        const std::string cell = detail::trim(tok);
        if (!cell.empty()) out.push_back(std::stod(cell));
      }
    }
    if (out.empty()) throw ConfigError("sweep_deltas is empty");
    return out;
  }
};

namespace detail {

using IniMap = std::map<std::string, std::string>;  // "section.key" -> value

inline IniMap parse_ini(const std::string& text) {
  IniMap map;
  std::string section;
  long line_no = 0;
  for (const std::string& raw : split_string(text, '\n')) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    map[section.empty() ? key : section + "." + key] = value;
  }
  return map;
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected boolean, got '" + v + "'");
}

}  // namespace detail

inline void apply_config_entry(PipelineConfig& c, const std::string& key, const std::string& v) {
  try {
    if (key == "corpus.root") c.corpus_root = v;
    else if (key == "corpus.work_dir") c.work_dir = v;
    else if (key == "corpus.val_fraction") c.val_fraction = std::stod(v);
    else if (key == "mfcc.window_ms") c.mfcc.window_ms = std::stod(v);
    else if (key == "mfcc.hop_ms") c.mfcc.hop_ms = std::stod(v);
    else if (key == "mfcc.n_cepstra") c.mfcc.n_cepstra = std::stoi(v);
    else if (key == "mfcc.include_energy") c.mfcc.include_energy = detail::parse_bool(v);
    else if (key == "mfcc.n_mel_filters") c.mfcc.n_mel_filters = std::stoi(v);
    else if (key == "mfcc.pre_emphasis") c.mfcc.pre_emphasis = std::stod(v);
    else if (key == "mfcc.log_floor") c.mfcc.log_floor = std::stod(v);
    else if (key == "quantizer.k") c.quant_k = std::stoi(v);
    else if (key == "quantizer.n_init") c.quant_n_init = std::stoi(v);
    else if (key == "quantizer.sample") c.quant_sample = std::stol(v);
    else if (key == "quantizer.max_iters") c.quant_max_iters = std::stoi(v);
    else if (key == "model.type") c.model = v;
    else if (key == "markov.order") c.markov_order = std::stoi(v);
    else if (key == "markov.alpha") c.markov_alpha = std::stod(v);
    else if (key == "rnn.hidden_dim") c.rnn_hidden = std::stoi(v);
    else if (key == "rnn.n_layers") c.rnn_layers = std::stoi(v);
    else if (key == "rnn.cell") c.rnn_cell = v;
    else if (key == "rnn.dropout") c.rnn_dropout = std::stod(v);
    else if (key == "rnn.skip_prob") c.rnn_skip_prob = std::stod(v);
    else if (key == "rnn.bptt_len") c.rnn_bptt_len = std::stol(v);
    else if (key == "rnn.lr") c.rnn_lr = std::stod(v);
    else if (key == "rnn.rho") c.rnn_rho = std::stod(v);
    else if (key == "rnn.eps") c.rnn_eps = std::stod(v);
    else if (key == "rnn.max_epochs") c.rnn_max_epochs = std::stoi(v);
    else if (key == "rnn.patience") c.rnn_patience = std::stoi(v);
    else if (key == "segmenter.delta") c.delta = std::stod(v);
    else if (key == "segmenter.prefix_frames") c.prefix_frames = std::stol(v);
    else if (key == "segmenter.prominence") c.prominence = v;
    else if (key == "segmenter.period_ms") c.period_ms = std::stod(v);
    else if (key == "segmenter.sweep_deltas") c.sweep_deltas = v;
    else if (key == "evaluation.tolerance_ms") c.tolerance_ms = std::stod(v);
    else if (key == "evaluation.mode") c.eval_mode = v;
    else if (key == "evaluation.include_edges") c.include_edges = detail::parse_bool(v);
    else if (key == "evaluation.trim_silence") c.trim_silence = detail::parse_bool(v);
    else if (key == "evaluation.silence_label") c.silence_label = v;
    else if (key == "synth.n_train") c.synth.n_train = std::stoi(v);
    else if (key == "synth.n_test") c.synth.n_test = std::stoi(v);
    else if (key == "synth.min_segments") c.synth.min_segments = std::stoi(v);
    else if (key == "synth.max_segments") c.synth.max_segments = std::stoi(v);
    else if (key == "synth.min_seg_len") c.synth.min_seg_len = std::stoi(v);
    else if (key == "synth.max_seg_len") c.synth.max_seg_len = std::stoi(v);
    else if (key == "synth.n_symbols") c.synth.n_symbols = std::stoi(v);
    else if (key == "synth.continuous") c.synth.continuous = detail::parse_bool(v);
    else if (key == "synth.dominant_prob") c.synth.dominant_prob = std::stod(v);
    else if (key == "synth.dim") c.synth.dim = std::stoi(v);
    else if (key == "synth.mean_scale") c.synth.mean_scale = std::stod(v);
    else if (key == "synth.sigma") c.synth.sigma = std::stod(v);
    else if (key == "synth.hop_ms") c.synth.hop_ms = std::stod(v);
    else if (key == "pipeline.seed") c.seed = std::stoull(v);
    else throw ConfigError("unknown config key: " + key);
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad value for " + key + ": '" + v + "'");
  } catch (const std::out_of_range&) {
    throw ConfigError("value out of range for " + key + ": '" + v + "'");
  }
}

inline PipelineConfig parse_config(const std::string& text) {
  PipelineConfig c;
  for (const auto& [key, value] : detail::parse_ini(text)) apply_config_entry(c, key, value);
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(detail::read_text_file(path));
}

// Overrides take the same "section.key=value" form on the command line.
inline void apply_override(PipelineConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like section.key=value");
  apply_config_entry(c, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

inline std::string dump_config(const PipelineConfig& c) {
  using detail::format_double;
  std::string s;
  s += "[corpus]\n";
  s += "root = " + c.corpus_root + "\n";
  s += "work_dir = " + c.work_dir + "\n";
  s += "val_fraction = " + format_double(c.val_fraction) + "\n\n";
  s += "[mfcc]\n";
  s += "window_ms = " + format_double(c.mfcc.window_ms) + "\n";
  s += "hop_ms = " + format_double(c.mfcc.hop_ms) + "\n";
  s += "n_cepstra = " + std::to_string(c.mfcc.n_cepstra) + "\n";
  s += "include_energy = " + std::string(c.mfcc.include_energy ? "true" : "false") + "\n";
  s += "n_mel_filters = " + std::to_string(c.mfcc.n_mel_filters) + "\n";
  s += "pre_emphasis = " + format_double(c.mfcc.pre_emphasis) + "\n";
  s += "log_floor = " + format_double(c.mfcc.log_floor) + "\n\n";
  s += "[quantizer]\n";
  s += "k = " + std::to_string(c.quant_k) + "\n";
  s += "n_init = " + std::to_string(c.quant_n_init) + "\n";
  s += "sample = " + std::to_string(c.quant_sample) + "\n";
  s += "max_iters = " + std::to_string(c.quant_max_iters) + "\n\n";
  s += "[model]\n";
  s += "type = " + c.model + "\n\n";
  s += "[markov]\n";
  s += "order = " + std::to_string(c.markov_order) + "\n";
  s += "alpha = " + format_double(c.markov_alpha) + "\n\n";
  s += "[rnn]\n";
  s += "hidden_dim = " + std::to_string(c.rnn_hidden) + "\n";
  s += "n_layers = " + std::to_string(c.rnn_layers) + "\n";
  s += "cell = " + c.rnn_cell + "\n";
  s += "dropout = " + format_double(c.rnn_dropout) + "\n";
  s += "skip_prob = " + format_double(c.rnn_skip_prob) + "\n";
  s += "bptt_len = " + std::to_string(c.rnn_bptt_len) + "\n";
  s += "lr = " + format_double(c.rnn_lr) + "\n";
  s += "rho = " + format_double(c.rnn_rho) + "\n";
  s += "eps = " + format_double(c.rnn_eps) + "\n";
  s += "max_epochs = " + std::to_string(c.rnn_max_epochs) + "\n";
  s += "patience = " + std::to_string(c.rnn_patience) + "\n\n";
  s += "[segmenter]\n";
  s += "delta = " + format_double(c.delta) + "\n";
  s += "prefix_frames = " + std::to_string(c.prefix_frames) + "\n";
  s += "prominence = " + c.prominence + "\n";
  s += "period_ms = " + format_double(c.period_ms) + "\n";
  s += "sweep_deltas = " + c.sweep_deltas + "\n\n";
  s += "[evaluation]\n";
  s += "tolerance_ms = " + format_double(c.tolerance_ms) + "\n";
  s += "mode = " + c.eval_mode + "\n";
  s += "include_edges = " + std::string(c.include_edges ? "true" : "false") + "\n";
  s += "trim_silence = " + std::string(c.trim_silence ? "true" : "false") + "\n";
  s += "silence_label = " + c.silence_label + "\n\n";
  s += "[synth]\n";
  s += "n_train = " + std::to_string(c.synth.n_train) + "\n";
  s += "n_test = " + std::to_string(c.synth.n_test) + "\n";
  s += "min_segments = " + std::to_string(c.synth.min_segments) + "\n";
  s += "max_segments = " + std::to_string(c.synth.max_segments) + "\n";
  s += "min_seg_len = " + std::to_string(c.synth.min_seg_len) + "\n";
  s += "max_seg_len = " + std::to_string(c.synth.max_seg_len) + "\n";
  s += "n_symbols = " + std::to_string(c.synth.n_symbols) + "\n";
  s += "continuous = " + std::string(c.synth.continuous ? "true" : "false") + "\n";
  s += "dominant_prob = " + format_double(c.synth.dominant_prob) + "\n";
  s += "dim = " + std::to_string(c.synth.dim) + "\n";
  s += "mean_scale = " + format_double(c.synth.mean_scale) + "\n";
  s += "sigma = " + format_double(c.synth.sigma) + "\n";
  s += "hop_ms = " + format_double(c.synth.hop_ms) + "\n\n";
  s += "[pipeline]\n";
  s += "seed = " + std::to_string(c.seed) + "\n";
  return s;
}

}  // namespace blindseg
