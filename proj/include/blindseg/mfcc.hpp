#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "blindseg/audio.hpp"
#include "blindseg/common.hpp"

namespace blindseg {

// 12 mel-cepstral coefficients plus one log-energy coefficient at a 10 ms hop.
//
// Conventions (also implemented independently by the reference oracle in the
// test suite, so they are part of the contract):
//   - pre-emphasis y[t] = x[t] - pre_emphasis * x[t-1], y[0] = x[0]
//   - frame t covers samples [t*hop, t*hop + window); trailing partial
//     window dropped
//   - Hamming window, FFT size = next power of two >= window length
//   - mel(f) = 2595 * log10(1 + f/700); n_mel_filters triangular filters,
//     linear in Hz between band points spaced uniformly in mel from 0 to
//     Nyquist, evaluated at FFT bin frequencies on the power spectrum |X|^2
//   - orthonormal DCT-II of the log filterbank energies, coefficients 1..12
//     kept (c0 dropped, energy is carried separately)
//   - energy = log of the windowed frame's sum of squares, floored at
//     log_floor, appended as the last dimension
struct MfccConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_cepstra = 12;
  bool include_energy = true;
  int n_mel_filters = 26;
  double pre_emphasis = 0.97;
  double log_floor = 1e-10;

  int dim() const { return n_cepstra + (include_energy ? 1 : 0); }
};

struct FrameSequence {
  Eigen::MatrixXd frames;  // T x dim, time-major
  double hop_ms = 10.0;
  std::string utterance_id;

  long n_frames() const { return frames.rows(); }
  int dim() const { return static_cast<int>(frames.cols()); }
};

namespace detail {

// In-place iterative radix-2 Cooley-Tukey; n must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// n_filters x (nfft/2 + 1) triangular weights.
inline Eigen::MatrixXd mel_filterbank(int n_filters, int nfft, int sample_rate) {
  const int n_bins = nfft / 2 + 1;
  const double nyquist = sample_rate / 2.0;
  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> hz_points(n_filters + 2);
  for (int j = 0; j < n_filters + 2; ++j) {
    hz_points[j] = mel_to_hz(mel_max * j / (n_filters + 1));
  }
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_filters, n_bins);
  for (int j = 0; j < n_filters; ++j) {
    const double lo = hz_points[j], mid = hz_points[j + 1], hi = hz_points[j + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / nfft;
      double w = 0.0;
      if (f >= lo && f <= mid && mid > lo) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f <= hi && hi > mid) {
        w = (hi - f) / (hi - mid);
      }
      fb(j, k) = w;
    }
  }
  return fb;
}

}  // namespace detail

inline FrameSequence compute_mfcc(const AudioSignal& signal, const MfccConfig& config,
                                  const std::string& utterance_id = "") {
  if (signal.sample_rate <= 0) throw ConfigError("compute_mfcc: sample_rate must be positive");
  if (config.hop_ms > config.window_ms) throw ConfigError("compute_mfcc: hop must not exceed window");
  const int win = static_cast<int>(std::lround(config.window_ms * signal.sample_rate / 1000.0));
  const int hop = static_cast<int>(std::lround(config.hop_ms * signal.sample_rate / 1000.0));
  if (win <= 1 || hop < 1) throw ConfigError("compute_mfcc: degenerate window/hop");
  const long n = static_cast<long>(signal.samples.size());
  if (n < win) throw ConfigError("utterance too short: " + std::to_string(n) + " samples < one window");

  const long n_frames = (n - win) / hop + 1;
  int nfft = 1;
  while (nfft < win) nfft <<= 1;
  const int n_bins = nfft / 2 + 1;

  std::vector<double> emphasized(signal.samples.size());
  emphasized[0] = signal.samples[0];
  for (std::size_t t = 1; t < signal.samples.size(); ++t) {
    emphasized[t] = signal.samples[t] - config.pre_emphasis * signal.samples[t - 1];
  }

  Eigen::VectorXd window(win);
  for (int i = 0; i < win; ++i) {
    window[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (win - 1));
  }

  const Eigen::MatrixXd fb = detail::mel_filterbank(config.n_mel_filters, nfft, signal.sample_rate);
  const int M = config.n_mel_filters;
  // Orthonormal DCT-II rows for coefficients 1..n_cepstra.
  Eigen::MatrixXd dct(config.n_cepstra, M);
  for (int i = 1; i <= config.n_cepstra; ++i) {
    for (int j = 0; j < M; ++j) {
      dct(i - 1, j) = std::sqrt(2.0 / M) * std::cos(M_PI * i * (j + 0.5) / M);
    }
  }

  FrameSequence out;
  out.hop_ms = config.hop_ms;
  out.utterance_id = utterance_id;
  out.frames.resize(n_frames, config.dim());

  std::vector<std::complex<double>> buf(nfft);
  for (long t = 0; t < n_frames; ++t) {
    const long start = t * hop;
    double energy = 0.0;
    for (int i = 0; i < nfft; ++i) {
      double v = i < win ? emphasized[start + i] * window[i] : 0.0;
      buf[i] = {v, 0.0};
      energy += v * v;
    }
    detail::fft_radix2(buf);

    Eigen::VectorXd power(n_bins);
    for (int k = 0; k < n_bins; ++k) power[k] = std::norm(buf[k]);
    Eigen::VectorXd fbank = fb * power;
    for (int j = 0; j < M; ++j) fbank[j] = std::log(std::max(fbank[j], config.log_floor));
    Eigen::VectorXd cepstra = dct * fbank;

    out.frames.row(t).head(config.n_cepstra) = cepstra.transpose();
    if (config.include_energy) {
      out.frames(t, config.n_cepstra) = std::log(std::max(energy, config.log_floor));
    }
  }
  if (!out.frames.allFinite()) throw NumericError("compute_mfcc: non-finite coefficients");
  return out;
}

}  // namespace blindseg
