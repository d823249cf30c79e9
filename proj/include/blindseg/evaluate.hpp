#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "blindseg/common.hpp"
#include "blindseg/segment.hpp"

namespace blindseg {

enum class MatchMode { cropped, overlapping };

struct MatchResult {
  long n_gold = 0;
  long n_hyp = 0;
  long n_hit = 0;  // gold boundaries detected
  MatchMode mode = MatchMode::cropped;
  double tolerance_ms = 20.0;
};

struct EvaluationReport {
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  double over_segmentation = 0.0;
  double r_value = 0.0;
};

namespace detail {

struct Window {
  double lo = 0.0, hi = 0.0;
  bool hi_exclusive = false;  // cropped upper edges hand the midpoint to the right window
};

// Each gold boundary owns [g - tol, g + tol]; where consecutive windows
// would overlap, both are cut at the midpoint of the two gold boundaries.
inline std::vector<Window> cropped_windows(const std::vector<double>& gold, double tol_s) {
  const std::size_t n = gold.size();
  std::vector<Window> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i].lo = gold[i] - tol_s;
    w[i].hi = gold[i] + tol_s;
    w[i].hi_exclusive = false;
    if (i > 0 && gold[i] - gold[i - 1] < 2.0 * tol_s) {
      w[i].lo = 0.5 * (gold[i - 1] + gold[i]);
    }
    if (i + 1 < n && gold[i + 1] - gold[i] < 2.0 * tol_s) {
      w[i].hi = 0.5 * (gold[i] + gold[i + 1]);
      w[i].hi_exclusive = true;
    }
  }
  return w;
}

inline bool in_window(const Window& w, double t) {
  if (t < w.lo) return false;
  return w.hi_exclusive ? t < w.hi : t <= w.hi;
}

inline void require_sorted(const std::vector<double>& v, const char* what) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[i - 1]) throw ConfigError(std::string("match_boundaries: unsorted ") + what);
  }
}

}  // namespace detail

// Cropped mode: hypotheses are consumed one-to-one by disjoint (post-crop)
// windows, scanning left to right. Overlapping mode: a gold boundary is hit
// if any hypothesis lies within its full +-tolerance window; one hypothesis
// may hit several gold boundaries.
inline MatchResult match_boundaries(const BoundarySet& gold, const BoundarySet& hyp,
                                    double tolerance_ms = 20.0,
                                    MatchMode mode = MatchMode::cropped) {
  detail::require_sorted(gold.times, "gold boundaries");
  detail::require_sorted(hyp.times, "hypothesis boundaries");

  MatchResult res;
  res.mode = mode;
  res.tolerance_ms = tolerance_ms;
  res.n_gold = gold.size();
  res.n_hyp = hyp.size();
  const double tol_s = tolerance_ms / 1000.0;

  if (mode == MatchMode::cropped) {
    const auto windows = detail::cropped_windows(gold.times, tol_s);
    std::size_t h = 0;
    for (const auto& w : windows) {
      while (h < hyp.times.size() && hyp.times[h] < w.lo) ++h;
      if (h < hyp.times.size() && detail::in_window(w, hyp.times[h])) {
        ++res.n_hit;
        ++h;  // consumed
      }
    }
  } else {
    for (double g : gold.times) {
      auto it = std::lower_bound(hyp.times.begin(), hyp.times.end(), g - tol_s);
      if (it != hyp.times.end() && *it <= g + tol_s) ++res.n_hit;
    }
  }
  return res;
}

// F, OS and R-value from precision/recall. Eq. 3 as printed in the paper
// (numerator R + 1 - OS) does not reproduce its own result tables; the
// original definition from the cited source, r2 = (-OS + R - 1)/sqrt(2),
// does, and is what this uses.
inline EvaluationReport metrics_from_pr(double precision, double recall, double over_segmentation) {
  EvaluationReport rep;
  rep.precision = precision;
  rep.recall = recall;
  rep.over_segmentation = over_segmentation;
  rep.f_score =
      (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  const double r1 = std::sqrt((1.0 - recall) * (1.0 - recall) +
                              over_segmentation * over_segmentation);
  const double r2 = (-over_segmentation + recall - 1.0) / std::sqrt(2.0);
  rep.r_value = 1.0 - (std::abs(r1) + std::abs(r2)) / 2.0;
  return rep;
}

inline EvaluationReport metrics_from_pr(double precision, double recall) {
  if (precision <= 0.0) throw ConfigError("metrics_from_pr: precision must be positive");
  return metrics_from_pr(precision, recall, recall / precision - 1.0);
}

// P = 1 when there are no hypotheses at all (vacuous precision keeps
// threshold sweeps total). OS comes from the counts, n_hyp/n_gold - 1,
// which equals R/P - 1 whenever any hit exists and stays finite otherwise.
inline EvaluationReport compute_metrics(const MatchResult& m) {
  if (m.n_gold <= 0) throw ConfigError("compute_metrics: no gold boundaries");
  const double recall = static_cast<double>(m.n_hit) / static_cast<double>(m.n_gold);
  const double precision =
      m.n_hyp > 0 ? static_cast<double>(m.n_hit) / static_cast<double>(m.n_hyp) : 1.0;
  const double over_seg =
      static_cast<double>(m.n_hyp) / static_cast<double>(m.n_gold) - 1.0;
  return metrics_from_pr(precision, recall, over_seg);
}

// Corpus-level counts: metrics are computed on the pooled counts, never
// averaged per file.
inline MatchResult aggregate(const std::vector<MatchResult>& per_utterance) {
  if (per_utterance.empty()) throw ConfigError("aggregate: no results");
  MatchResult total = per_utterance.front();
  total.n_gold = total.n_hyp = total.n_hit = 0;
  for (const auto& m : per_utterance) {
    if (m.mode != total.mode || m.tolerance_ms != total.tolerance_ms) {
      throw ConfigError("aggregate: mixed match modes or tolerances");
    }
    total.n_gold += m.n_gold;
    total.n_hyp += m.n_hyp;
    total.n_hit += m.n_hit;
  }
  return total;
}

struct SweepPoint {
  double delta = 0.0;
  MatchResult match;
  EvaluationReport report;
};

// detect + match + pooled metrics for every delta; errors must already be
// prefix-zeroed and gold sets filtered the way the caller wants them scored.
inline std::vector<SweepPoint> sweep_threshold(const std::vector<ErrorSignal>& errors,
                                               const std::vector<BoundarySet>& gold,
                                               const std::vector<double>& deltas,
                                               double tolerance_ms = 20.0,
                                               MatchMode mode = MatchMode::cropped,
                                               ProminenceMode prominence = ProminenceMode::prev_local_min) {
  if (errors.size() != gold.size()) throw ConfigError("sweep_threshold: errors/gold size mismatch");
  if (deltas.empty()) throw ConfigError("sweep_threshold: no deltas");
  std::vector<SweepPoint> out;
  out.reserve(deltas.size());
  for (double delta : deltas) {
    std::vector<MatchResult> per_utt;
    per_utt.reserve(errors.size());
    for (std::size_t u = 0; u < errors.size(); ++u) {
      const BoundarySet hyp = boundaries_to_seconds(detect_boundaries(errors[u], delta, prominence));
      per_utt.push_back(match_boundaries(gold[u], hyp, tolerance_ms, mode));
    }
    SweepPoint pt;
    pt.delta = delta;
    pt.match = aggregate(per_utt);
    pt.report = compute_metrics(pt.match);
    out.push_back(pt);
  }
  return out;
}

// --- gold-set filters behind the evaluation flags ---

// Drops the utterance-initial boundary at t=0 and, when the utterance
// duration is known, the utterance-final boundary.
inline BoundarySet drop_edge_boundaries(const BoundarySet& gold, double duration_s = -1.0) {
  BoundarySet out;
  out.kind = gold.kind;
  for (long i = 0; i < gold.size(); ++i) {
    const double t = gold.times[i];
    if (std::abs(t) < 1e-9) continue;
    if (duration_s > 0.0 && std::abs(t - duration_s) < 1e-6) continue;
    out.times.push_back(t);
  }
  return out;
}

// Keeps only boundaries inside [lo, hi]; used to cut leading/trailing silence.
inline BoundarySet trim_to_window(const BoundarySet& b, double lo, double hi) {
  BoundarySet out;
  out.kind = b.kind;
  for (double t : b.times) {
    if (t >= lo && t <= hi) out.times.push_back(t);
  }
  return out;
}

// --- report formatting: percent with 1 decimal, like the result tables ---

inline std::string report_csv_header() { return "delta,precision,recall,f_score,os,r_value\n"; }

inline std::string report_csv_row(double delta, const EvaluationReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%g,%.1f,%.1f,%.1f,%.1f,%.1f\n", delta, 100.0 * r.precision,
                100.0 * r.recall, 100.0 * r.f_score, 100.0 * r.over_segmentation,
                100.0 * r.r_value);
  return buf;
}

inline std::string report_text(const std::string& label, const MatchResult& m,
                               const EvaluationReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%-12s P %5.1f  R %5.1f  F %5.1f  OS %6.1f  R-val %5.1f   (hit %ld / gold %ld, hyp %ld)\n",
                label.c_str(), 100.0 * r.precision, 100.0 * r.recall, 100.0 * r.f_score,
                100.0 * r.over_segmentation, 100.0 * r.r_value, m.n_hit, m.n_gold, m.n_hyp);
  return buf;
}

}  // namespace blindseg
