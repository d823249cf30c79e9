#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "blindseg/audio.hpp"
#include "blindseg/common.hpp"
#include "blindseg/mfcc.hpp"
#include "blindseg/quantize.hpp"
#include "blindseg/segment.hpp"

namespace blindseg {

struct Utterance {
  std::string id;
  AudioSignal audio;
  BoundarySet gold;
  std::vector<std::string> phone_labels;
};

struct PhnAnnotation {
  BoundarySet boundaries;  // segment starts plus the final end, in seconds
  std::vector<std::string> labels;
};

// TIMIT-style annotation: one "start_sample end_sample label" line per
// contiguous segment.
inline PhnAnnotation parse_phn(const std::string& text, int sample_rate) {
  if (sample_rate <= 0) throw ConfigError("parse_phn: sample_rate must be positive");
  PhnAnnotation ann;
  ann.boundaries.kind = BoundaryKind::gold;
  long prev_end = -1;
  long line_no = 0;
  for (const std::string& raw : detail::split_string(text, '\n')) {
    ++line_no;
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    std::istringstream in(line);
    long start = 0, end = 0;
    std::string label;
    if (!(in >> start >> end >> label) || start < 0 || end < start) {
      throw IoError("malformed .phn line " + std::to_string(line_no) + ": '" + line + "'");
    }
    if (prev_end >= 0 && start != prev_end) {
      throw IoError("non-contiguous segments at .phn line " + std::to_string(line_no) +
                    " (segment starts at " + std::to_string(start) + ", previous ended at " +
                    std::to_string(prev_end) + ")");
    }
    ann.boundaries.times.push_back(static_cast<double>(start) / sample_rate);
    ann.labels.push_back(label);
    prev_end = end;
  }
  if (ann.labels.empty()) throw IoError("empty .phn annotation");
  ann.boundaries.times.push_back(static_cast<double>(prev_end) / sample_rate);
  return ann;
}

inline PhnAnnotation read_phn(const std::filesystem::path& path, int sample_rate) {
  try {
    return parse_phn(detail::read_text_file(path), sample_rate);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline std::string serialize_phn(const PhnAnnotation& ann, int sample_rate) {
  if (ann.boundaries.size() != static_cast<long>(ann.labels.size()) + 1) {
    throw ConfigError("serialize_phn: need one more boundary than labels");
  }
  std::string s;
  for (std::size_t i = 0; i < ann.labels.size(); ++i) {
    const long start = std::lround(ann.boundaries.times[i] * sample_rate);
    const long end = std::lround(ann.boundaries.times[i + 1] * sample_rate);
    s += std::to_string(start) + " " + std::to_string(end) + " " + ann.labels[i] + "\n";
  }
  return s;
}

inline void write_phn(const std::filesystem::path& path, const PhnAnnotation& ann, int sample_rate) {
  detail::write_text_file(path, serialize_phn(ann, sample_rate));
}

// Evaluation window excluding leading/trailing silence segments (h# in
// TIMIT). Returns {0, last_boundary} when no silence padding is present.
inline std::pair<double, double> speech_window(const PhnAnnotation& ann,
                                               const std::vector<std::string>& silence_labels = {"h#"}) {
  auto is_sil = [&](const std::string& l) {
    return std::find(silence_labels.begin(), silence_labels.end(), l) != silence_labels.end();
  };
  std::size_t first = 0;
  while (first < ann.labels.size() && is_sil(ann.labels[first])) ++first;
  std::size_t last = ann.labels.size();
  while (last > first && is_sil(ann.labels[last - 1])) --last;
  return {ann.boundaries.times[first], ann.boundaries.times[last]};
}

struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

// Validation utterances are drawn from the training ids deterministically;
// the test set is whatever the corpus layout declares.
inline SplitSpec split_corpus(std::vector<std::string> train_ids, std::vector<std::string> test_ids,
                              double val_fraction, std::uint64_t seed) {
  if (train_ids.empty()) throw ConfigError("split_corpus: empty corpus");
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ConfigError("split_corpus: val_fraction must be in [0, 1)");
  }
  std::sort(train_ids.begin(), train_ids.end());
  std::sort(test_ids.begin(), test_ids.end());

  const long n = static_cast<long>(train_ids.size());
  const long n_val = std::lround(val_fraction * static_cast<double>(n));
  std::mt19937_64 rng(derive_seed(seed, seed_stream::split));
  std::vector<std::string> pool = train_ids;
  for (long i = 0; i < n_val; ++i) {
    std::uniform_int_distribution<long> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }

  SplitSpec spec;
  spec.seed = seed;
  spec.validation.assign(pool.begin(), pool.begin() + n_val);
  spec.train.assign(pool.begin() + n_val, pool.end());
  std::sort(spec.validation.begin(), spec.validation.end());
  std::sort(spec.train.begin(), spec.train.end());
  spec.test = std::move(test_ids);
  return spec;
}

// --- corpus layout -----------------------------------------------------

enum class CorpusKind { wav, frames, categorical };

struct CorpusIndex {
  std::filesystem::path root;
  CorpusKind kind = CorpusKind::wav;
  int sample_rate = 16000;  // nominal rate for .phn times in non-wav corpora
  double hop_ms = 10.0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

inline std::string corpus_kind_name(CorpusKind k) {
  switch (k) {
    case CorpusKind::wav: return "wav";
    case CorpusKind::frames: return "frames";
    case CorpusKind::categorical: return "categorical";
  }
  return "wav";
}

inline CorpusKind corpus_kind_from_name(const std::string& s) {
  if (s == "wav") return CorpusKind::wav;
  if (s == "frames") return CorpusKind::frames;
  if (s == "categorical") return CorpusKind::categorical;
  throw ConfigError("unknown corpus kind: " + s);
}

inline std::string serialize_manifest(const CorpusIndex& index) {
  std::string s = "blindseg-corpus 1\n";
  s += "kind " + corpus_kind_name(index.kind) + "\n";
  s += "sample_rate " + std::to_string(index.sample_rate) + "\n";
  s += "hop_ms " + detail::format_double(index.hop_ms) + "\n";
  for (const auto& id : index.train_ids) s += "train " + id + "\n";
  for (const auto& id : index.test_ids) s += "test " + id + "\n";
  return s;
}

inline CorpusIndex parse_manifest(const std::string& text, const std::filesystem::path& root) {
  CorpusIndex index;
  index.root = root;
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "blindseg-corpus" || version != 1) {
    throw IoError("not a blindseg corpus manifest");
  }
  std::string key;
  while (in >> key) {
    std::string value;
    if (!(in >> value)) throw IoError("manifest: missing value for key " + key);
    if (key == "kind") {
      index.kind = corpus_kind_from_name(value);
    } else if (key == "sample_rate") {
      index.sample_rate = std::stoi(value);
    } else if (key == "hop_ms") {
      index.hop_ms = std::stod(value);
    } else if (key == "train") {
      index.train_ids.push_back(value);
    } else if (key == "test") {
      index.test_ids.push_back(value);
    } else {
      throw IoError("manifest: unknown key " + key);
    }
  }
  return index;
}

// A corpus root either carries a manifest (synthetic corpora) or train/ and
// test/ subtrees of paired .wav/.phn files (TIMIT layout, possibly nested).
inline CorpusIndex scan_corpus(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::exists(root)) throw IoError("corpus root does not exist: " + root.string());
  const fs::path manifest = root / "manifest.txt";
  if (fs::exists(manifest)) {
    CorpusIndex index = parse_manifest(detail::read_text_file(manifest), root);
    std::sort(index.train_ids.begin(), index.train_ids.end());
    std::sort(index.test_ids.begin(), index.test_ids.end());
    return index;
  }

  CorpusIndex index;
  index.root = root;
  index.kind = CorpusKind::wav;
  auto scan = [&](const char* sub, std::vector<std::string>& out) {
    const fs::path dir = root / sub;
    if (!fs::exists(dir)) return;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      fs::path p = entry.path();
      std::string ext = p.extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext != ".wav") continue;
      out.push_back(fs::relative(p, root).replace_extension().generic_string());
    }
    std::sort(out.begin(), out.end());
  };
  scan("train", index.train_ids);
  scan("test", index.test_ids);
  if (index.train_ids.empty() && index.test_ids.empty()) {
    throw IoError("no manifest and no train/ or test/ wav files under " + root.string());
  }
  return index;
}

// --- per-utterance artifact io ------------------------------------------

inline std::string serialize_frames_csv(const FrameSequence& frames) {
  std::string s;
  for (long t = 0; t < frames.n_frames(); ++t) {
    for (int j = 0; j < frames.dim(); ++j) {
      if (j) s += ',';
      s += detail::format_double(frames.frames(t, j));
    }
    s += '\n';
  }
  return s;
}

inline FrameSequence parse_frames_csv(const std::string& text, double hop_ms,
                                      const std::string& utterance_id) {
  std::vector<std::vector<double>> rows;
  for (const std::string& raw : detail::split_string(text, '\n')) {
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    std::vector<double> row;
    for (const std::string& cell : detail::split_string(line, ',')) {
      row.push_back(std::strtod(cell.c_str(), nullptr));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("ragged frame CSV near line " + std::to_string(rows.size() + 1));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty frame CSV");
  FrameSequence fs;
  fs.hop_ms = hop_ms;
  fs.utterance_id = utterance_id;
  fs.frames.resize(static_cast<long>(rows.size()), static_cast<long>(rows.front().size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t j = 0; j < rows[t].size(); ++j) fs.frames(t, j) = rows[t][j];
  }
  return fs;
}

inline std::string serialize_symbols(const CategoricalSequence& seq) {
  std::string s;
  for (int sym : seq.symbols) {
    s += std::to_string(sym);
    s += '\n';
  }
  return s;
}

inline CategoricalSequence parse_symbols(const std::string& text, double hop_ms,
                                         const std::string& utterance_id) {
  CategoricalSequence seq;
  seq.hop_ms = hop_ms;
  seq.utterance_id = utterance_id;
  for (const std::string& raw : detail::split_string(text, '\n')) {
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    seq.symbols.push_back(std::stoi(line));
  }
  return seq;
}

// --- synthetic corpora ----------------------------------------------------

// Piecewise-stationary sequences with known segment joins. Categorical
// segments emit a dominant symbol (different from the previous segment's)
// with probability dominant_prob, anything else uniformly. Continuous
// segments emit Gaussian noise around one of n_symbols prototype mean
// vectors.
struct SynthSpec {
  int n_train = 200;
  int n_test = 50;
  int min_segments = 10;
  int max_segments = 20;
  int min_seg_len = 4;
  int max_seg_len = 15;
  int n_symbols = 8;
  bool continuous = false;
  double dominant_prob = 0.9;
  int dim = 13;
  double mean_scale = 3.0;
  double sigma = 0.3;
  double hop_ms = 10.0;
  int sample_rate = 16000;  // nominal, for .phn output

  void validate() const {
    if (n_train < 1 || n_test < 0) throw ConfigError("synth: need at least one train utterance");
    if (min_segments < 1 || max_segments < min_segments) throw ConfigError("synth: bad segment counts");
    if (min_seg_len < 1 || max_seg_len < min_seg_len) throw ConfigError("synth: bad segment lengths");
    if (n_symbols < 2) throw ConfigError("synth: need at least two symbols");
    if (dominant_prob <= 1.0 / n_symbols || dominant_prob > 1.0) {
      throw ConfigError("synth: dominant_prob must exceed the uniform rate");
    }
  }
};

struct SynthUtterance {
  std::string id;
  bool is_test = false;
  CategoricalSequence cats;       // categorical mode
  FrameSequence frames;           // continuous mode
  BoundarySet gold;               // interior joins only, seconds
  PhnAnnotation annotation;       // segment spans incl. utterance edges
};

inline std::vector<SynthUtterance> synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<SynthUtterance> out;
  const int total = spec.n_train + spec.n_test;
  for (int u = 0; u < total; ++u) {
    std::mt19937_64 rng(derive_seed(seed, seed_stream::synth + 1000003ULL * u));
    SynthUtterance utt;
    utt.is_test = u >= spec.n_train;
    char name[32];
    std::snprintf(name, sizeof(name), "u%04d", utt.is_test ? u - spec.n_train : u);
    utt.id = std::string(utt.is_test ? "test/" : "train/") + name;

    std::uniform_int_distribution<int> n_seg_dist(spec.min_segments, spec.max_segments);
    std::uniform_int_distribution<int> seg_len_dist(spec.min_seg_len, spec.max_seg_len);
    std::uniform_int_distribution<int> sym_dist(0, spec.n_symbols - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, spec.sigma);

    const int n_segments = n_seg_dist(rng);
    utt.gold.kind = BoundaryKind::gold;
    utt.annotation.boundaries.kind = BoundaryKind::gold;

    std::vector<int> dominants(n_segments);
    std::vector<int> lengths(n_segments);
    int prev_dom = -1;
    for (int s = 0; s < n_segments; ++s) {
      int dom = sym_dist(rng);
      while (dom == prev_dom) dom = sym_dist(rng);
      dominants[s] = dom;
      prev_dom = dom;
      lengths[s] = seg_len_dist(rng);
    }

    long frame = 0;
    std::vector<int> symbols;
    std::vector<Eigen::RowVectorXd> rows;
    for (int s = 0; s < n_segments; ++s) {
      utt.annotation.boundaries.times.push_back(frame * spec.hop_ms / 1000.0);
      utt.annotation.labels.push_back("s" + std::to_string(dominants[s]));
      if (s > 0) utt.gold.times.push_back(frame * spec.hop_ms / 1000.0);
      for (int i = 0; i < lengths[s]; ++i) {
        if (spec.continuous) {
          Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(spec.dim);
          row[dominants[s] % spec.dim] = spec.mean_scale;
          for (int j = 0; j < spec.dim; ++j) row[j] += gauss(rng);
          rows.push_back(row);
        } else {
          int sym = dominants[s];
          if (unit(rng) >= spec.dominant_prob) {
            int other = sym_dist(rng);
            while (other == dominants[s]) other = sym_dist(rng);
            sym = other;
          }
          symbols.push_back(sym);
        }
        ++frame;
      }
    }
    utt.annotation.boundaries.times.push_back(frame * spec.hop_ms / 1000.0);

    if (spec.continuous) {
      utt.frames.hop_ms = spec.hop_ms;
      utt.frames.utterance_id = utt.id;
      utt.frames.frames.resize(static_cast<long>(rows.size()), spec.dim);
      for (std::size_t t = 0; t < rows.size(); ++t) utt.frames.frames.row(t) = rows[t];
    } else {
      utt.cats.hop_ms = spec.hop_ms;
      utt.cats.utterance_id = utt.id;
      utt.cats.symbols = std::move(symbols);
    }
    out.push_back(std::move(utt));
  }
  return out;
}

// Materializes a synthetic corpus in the on-disk layout scan_corpus reads.
inline CorpusIndex write_synth_corpus(const std::filesystem::path& root, const SynthSpec& spec,
                                      std::uint64_t seed) {
  const auto utts = synth_corpus(spec, seed);
  CorpusIndex index;
  index.root = root;
  index.kind = spec.continuous ? CorpusKind::frames : CorpusKind::categorical;
  index.sample_rate = spec.sample_rate;
  index.hop_ms = spec.hop_ms;
  for (const auto& utt : utts) {
    (utt.is_test ? index.test_ids : index.train_ids).push_back(utt.id);
    if (spec.continuous) {
      detail::write_text_file(root / (utt.id + ".csv"), serialize_frames_csv(utt.frames));
    } else {
      detail::write_text_file(root / (utt.id + ".sym"), serialize_symbols(utt.cats));
    }
    write_phn(root / (utt.id + ".phn"), utt.annotation, spec.sample_rate);
  }
  detail::write_text_file(root / "manifest.txt", serialize_manifest(index));
  return index;
}

}  // namespace blindseg
