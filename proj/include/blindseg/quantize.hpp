#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "blindseg/common.hpp"
#include "blindseg/mfcc.hpp"

namespace blindseg {

struct Codebook {
  Eigen::MatrixXd centroids;  // k x dim
  double inertia = 0.0;       // assignment cost on the training sample
  std::uint64_t seed = 0;

  int k() const { return static_cast<int>(centroids.rows()); }
  int dim() const { return static_cast<int>(centroids.cols()); }
};

// Per-frame cluster indices; the one-hot view is the k-dim indicator vector.
struct CategoricalSequence {
  std::vector<int> symbols;
  std::string utterance_id;
  double hop_ms = 10.0;

  long size() const { return static_cast<long>(symbols.size()); }
};

// Uniform sample of n frames without replacement, pooled over the corpus.
// When the corpus holds fewer than n frames, all of them are returned.
inline Eigen::MatrixXd sample_frames(const std::vector<FrameSequence>& corpus, long n,
                                     std::uint64_t seed) {
  long total = 0;
  for (const auto& fs : corpus) total += fs.n_frames();
  if (total == 0) throw ConfigError("sample_frames: empty corpus");
  const int dim = corpus.front().dim();

  std::vector<std::pair<int, long>> index;  // (utterance, frame)
  index.reserve(total);
  for (std::size_t u = 0; u < corpus.size(); ++u) {
    for (long t = 0; t < corpus[u].n_frames(); ++t) index.emplace_back(static_cast<int>(u), t);
  }

  const long take = std::min(n, total);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first `take` slots end up a uniform sample.
  for (long i = 0; i < take; ++i) {
    std::uniform_int_distribution<long> pick(i, total - 1);
    std::swap(index[i], index[pick(rng)]);
  }

  Eigen::MatrixXd sample(take, dim);
  for (long i = 0; i < take; ++i) {
    sample.row(i) = corpus[index[i].first].frames.row(index[i].second);
  }
  return sample;
}

namespace detail {

struct LloydResult {
  Eigen::MatrixXd centroids;
  double inertia = std::numeric_limits<double>::infinity();
};

inline long nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& x,
                             double* dist_out = nullptr) {
  long best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (long c = 0; c < centroids.rows(); ++c) {
    double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {  // ties resolve to the lowest index
      best_d = d;
      best = c;
    }
  }
  if (dist_out) *dist_out = best_d;
  return best;
}

inline Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd& sample, int k, std::mt19937_64& rng) {
  const long n = sample.rows();
  Eigen::MatrixXd centroids(k, sample.cols());
  std::uniform_int_distribution<long> first(0, n - 1);
  centroids.row(0) = sample.row(first(rng));

  Eigen::VectorXd d2(n);
  for (long i = 0; i < n; ++i) d2[i] = (sample.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    double total = d2.sum();
    long chosen;
    if (total <= 0.0) {
      chosen = first(rng);  // all mass on existing centroids; any point works
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      double acc = 0.0;
      chosen = n - 1;
      for (long i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target) {
          chosen = i;
          break;
        }
      }
    }
    centroids.row(c) = sample.row(chosen);
    for (long i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (sample.row(i) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

inline LloydResult lloyd(const Eigen::MatrixXd& sample, int k, std::mt19937_64& rng, int max_iters) {
  const long n = sample.rows();
  LloydResult res;
  res.centroids = kmeanspp_init(sample, k, rng);

  std::vector<long> assign(n, -1);
  double prev_inertia = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (long i = 0; i < n; ++i) {
      double d;
      long c = nearest_centroid(res.centroids, sample.row(i), &d);
      inertia += d;
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    if (inertia > prev_inertia + 1e-9 * std::max(1.0, prev_inertia)) {
      throw NumericError("k-means inertia increased; numerical breakdown");
    }
    prev_inertia = inertia;
    res.inertia = inertia;
    if (!changed && iter > 0) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, sample.cols());
    std::vector<long> counts(k, 0);
    for (long i = 0; i < n; ++i) {
      sums.row(assign[i]) += sample.row(i);
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        res.centroids.row(c) = sums.row(c) / static_cast<double>(counts[c]);
      } else {
        // Re-seed an emptied cluster to the point farthest from its centroid.
        long worst = 0;
        double worst_d = -1.0;
        for (long i = 0; i < n; ++i) {
          double d = (sample.row(i) - res.centroids.row(assign[i])).squaredNorm();
          if (d > worst_d) {
            worst_d = d;
            worst = i;
          }
        }
        res.centroids.row(c) = sample.row(worst);
        prev_inertia = std::numeric_limits<double>::infinity();  // cost may jump after re-seed
      }
    }
  }
  // Final pass so the stored inertia matches the returned centroids.
  double inertia = 0.0;
  for (long i = 0; i < n; ++i) {
    double d;
    nearest_centroid(res.centroids, sample.row(i), &d);
    inertia += d;
  }
  res.inertia = inertia;
  return res;
}

inline long count_distinct_rows(const Eigen::MatrixXd& m, long stop_at) {
  std::vector<long> distinct;
  for (long i = 0; i < m.rows() && static_cast<long>(distinct.size()) < stop_at; ++i) {
    bool fresh = true;
    for (long j : distinct) {
      if ((m.row(i) - m.row(j)).squaredNorm() == 0.0) {
        fresh = false;
        break;
      }
    }
    if (fresh) distinct.push_back(i);
  }
  return static_cast<long>(distinct.size());
}

}  // namespace detail

// Best of n_init k-means++ runs; each run iterates Lloyd updates to an
// assignment fixed point or max_iters.
inline Codebook fit_codebook(const Eigen::MatrixXd& sample, int k = 8, int n_init = 10,
                             std::uint64_t seed = 0, int max_iters = 300) {
  if (sample.rows() < k) {
    throw ConfigError("fit_codebook: need at least k=" + std::to_string(k) + " sample frames");
  }
  if (detail::count_distinct_rows(sample, k) < k) {
    throw ConfigError("insufficient distinct points for k=" + std::to_string(k));
  }

  detail::LloydResult best;
  for (int run = 0; run < n_init; ++run) {
    std::mt19937_64 rng(derive_seed(seed, seed_stream::kmeans + 1000ULL * run));
    detail::LloydResult res = detail::lloyd(sample, k, rng, max_iters);
    if (res.inertia < best.inertia) best = std::move(res);
  }

  Codebook cb;
  cb.centroids = std::move(best.centroids);
  cb.inertia = best.inertia;
  cb.seed = seed;
  return cb;
}

// Nearest centroid by squared Euclidean distance, ties to the lowest index.
inline CategoricalSequence quantize(const Codebook& codebook, const FrameSequence& frames) {
  if (frames.dim() != codebook.dim()) {
    throw ConfigError("quantize: frame dim " + std::to_string(frames.dim()) +
                      " != codebook dim " + std::to_string(codebook.dim()));
  }
  CategoricalSequence seq;
  seq.utterance_id = frames.utterance_id;
  seq.hop_ms = frames.hop_ms;
  seq.symbols.resize(frames.n_frames());
  for (long t = 0; t < frames.n_frames(); ++t) {
    seq.symbols[t] = static_cast<int>(detail::nearest_centroid(codebook.centroids, frames.frames.row(t)));
  }
  return seq;
}

inline std::string serialize_codebook(const Codebook& cb) {
  std::string s = std::to_string(cb.k()) + " " + std::to_string(cb.dim()) + " " +
                  std::to_string(cb.seed) + " " + detail::format_double(cb.inertia) + "\n";
  for (int c = 0; c < cb.k(); ++c) {
    for (int j = 0; j < cb.dim(); ++j) {
      if (j) s += ' ';
      s += detail::format_double(cb.centroids(c, j));
    }
    s += '\n';
  }
  return s;
}

inline Codebook parse_codebook(const std::string& text) {
  std::istringstream in(text);
  int k = 0, dim = 0;
  std::uint64_t seed = 0;
  double inertia = 0.0;
  if (!(in >> k >> dim >> seed >> inertia) || k <= 0 || dim <= 0) {
    throw IoError("malformed codebook header");
  }
  Codebook cb;
  cb.seed = seed;
  cb.inertia = inertia;
  cb.centroids.resize(k, dim);
  for (int c = 0; c < k; ++c) {
    for (int j = 0; j < dim; ++j) {
      if (!(in >> cb.centroids(c, j))) throw IoError("truncated codebook");
    }
  }
  return cb;
}

inline void save_codebook(const std::filesystem::path& path, const Codebook& cb) {
  detail::write_text_file(path, serialize_codebook(cb));
}

inline Codebook load_codebook(const std::filesystem::path& path) {
  return parse_codebook(detail::read_text_file(path));
}

}  // namespace blindseg
