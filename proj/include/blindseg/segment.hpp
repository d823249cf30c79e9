#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "blindseg/common.hpp"

namespace blindseg {

struct ErrorSignal {
  std::vector<double> values;
  double hop_ms = 10.0;
  std::string utterance_id;

  long size() const { return static_cast<long>(values.size()); }
};

enum class BoundaryKind { gold, hypothesis };

// Boundary times in seconds, strictly increasing.
struct BoundarySet {
  std::vector<double> times;
  BoundaryKind kind = BoundaryKind::hypothesis;

  long size() const { return static_cast<long>(times.size()); }
};

// Frame-indexed boundaries as emitted by the peak detector.
struct FrameBoundaries {
  std::vector<long> frames;
  double hop_ms = 10.0;
};

// Models conditioned on previous frames say nothing useful at utterance
// start, so the first n frames of the error signal are forced to zero.
inline ErrorSignal zero_prefix(ErrorSignal error, long n = 7) {
  const long stop = std::min<long>(n, error.size());
  for (long t = 0; t < stop; ++t) error.values[t] = 0.0;
  return error;
}

// How the "previous minimum" of a peak is tracked.
//
// prev_local_min measures each local maximum against the valley floor since
// the preceding local maximum. Prominence is then a per-peak constant, so
// the emitted set shrinks monotonically as delta grows.
// reset_on_emit measures against the running minimum since the last emitted
// peak; the emitted set is *not* monotone in delta (dropping an early peak
// can unstarve a later one), which is why it is not the default.
enum class ProminenceMode { prev_local_min, reset_on_emit };

namespace detail {

// Candidate peaks: first frame of each maximal plateau with a strict descent
// on both sides. Endpoints never qualify (no neighbor to compare against).
inline std::vector<long> candidate_peaks(const std::vector<double>& v) {
  const long T = static_cast<long>(v.size());
  std::vector<long> out;
  long t = 1;
  while (t <= T - 2) {
    long e = t;
    while (e + 1 <= T - 1 && v[e + 1] == v[t]) ++e;
    if (e <= T - 2 && v[t - 1] < v[t] && v[e + 1] < v[t]) out.push_back(t);
    t = e + 1;
  }
  return out;
}

}  // namespace detail

inline FrameBoundaries detect_boundaries(const ErrorSignal& error, double delta,
                                         ProminenceMode mode = ProminenceMode::prev_local_min) {
  if (delta < 0.0) throw ConfigError("detect_boundaries: delta must be nonnegative");
  const auto& v = error.values;
  const std::vector<long> cands = detail::candidate_peaks(v);

  FrameBoundaries out;
  out.hop_ms = error.hop_ms;
  if (mode == ProminenceMode::prev_local_min) {
    long prev = 0;  // scan start, then the previous candidate peak
    for (long p : cands) {
      double valley = v[prev];
      for (long j = prev; j <= p; ++j) valley = std::min(valley, v[j]);
      if (v[p] - valley > delta) out.frames.push_back(p);
      prev = p;
    }
  } else {
    double run_min = v.empty() ? 0.0 : v[0];
    std::size_t ci = 0;
    for (long t = 0; t < static_cast<long>(v.size()); ++t) {
      run_min = std::min(run_min, v[t]);
      if (ci < cands.size() && cands[ci] == t) {
        if (v[t] - run_min > delta) {
          out.frames.push_back(t);
          run_min = v[t];
        }
        ++ci;
      }
    }
  }
  return out;
}

// Naive periodic baseline: one boundary every period_ms, strictly inside
// the utterance.
inline BoundarySet periodic_boundaries(long n_frames, double hop_ms, double period_ms = 5.0) {
  if (period_ms <= 0.0) throw ConfigError("periodic_boundaries: period must be positive");
  const double duration_ms = static_cast<double>(n_frames) * hop_ms;
  BoundarySet out;
  out.kind = BoundaryKind::hypothesis;
  for (long k = 1; static_cast<double>(k) * period_ms < duration_ms; ++k) {
    out.times.push_back(static_cast<double>(k) * period_ms / 1000.0);
  }
  return out;
}

inline BoundarySet boundaries_to_seconds(const FrameBoundaries& b,
                                         BoundaryKind kind = BoundaryKind::hypothesis) {
  BoundarySet out;
  out.kind = kind;
  out.times.reserve(b.frames.size());
  for (long f : b.frames) out.times.push_back(static_cast<double>(f) * b.hop_ms / 1000.0);
  return out;
}

inline FrameBoundaries seconds_to_frames(const BoundarySet& b, double hop_ms) {
  FrameBoundaries out;
  out.hop_ms = hop_ms;
  out.frames.reserve(b.times.size());
  for (double t : b.times) out.frames.push_back(std::lround(t * 1000.0 / hop_ms));
  return out;
}

// One boundary per line, seconds with 6 decimals; optional frame index column.
inline std::string serialize_boundaries(const BoundarySet& b, const FrameBoundaries* frames = nullptr) {
  std::string s;
  char buf[64];
  for (long i = 0; i < b.size(); ++i) {
    if (frames && i < static_cast<long>(frames->frames.size())) {
      std::snprintf(buf, sizeof(buf), "%.6f %ld\n", b.times[i], frames->frames[i]);
    } else {
      std::snprintf(buf, sizeof(buf), "%.6f\n", b.times[i]);
    }
    s += buf;
  }
  return s;
}

inline BoundarySet parse_boundaries(const std::string& text, BoundaryKind kind) {
  BoundarySet out;
  out.kind = kind;
  for (const std::string& raw : detail::split_string(text, '\n')) {
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    out.times.push_back(std::strtod(line.c_str(), nullptr));
  }
  for (std::size_t i = 1; i < out.times.size(); ++i) {
    if (out.times[i] <= out.times[i - 1]) throw IoError("boundary times not strictly increasing");
  }
  return out;
}

inline void save_boundaries(const std::filesystem::path& path, const BoundarySet& b,
                            const FrameBoundaries* frames = nullptr) {
  detail::write_text_file(path, serialize_boundaries(b, frames));
}

inline BoundarySet load_boundaries(const std::filesystem::path& path, BoundaryKind kind) {
  return parse_boundaries(detail::read_text_file(path), kind);
}

}  // namespace blindseg
