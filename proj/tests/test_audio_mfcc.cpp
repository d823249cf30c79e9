#include <blindseg/audio.hpp>
#include <blindseg/mfcc.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

using namespace blindseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "blindseg_audio_test";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Hand-rolled WAV writer, independent of save_wav, so load_wav is checked
// against raw bytes rather than our own serializer.
void write_pcm16_wav(const fs::path& path, const std::vector<std::int16_t>& samples, int rate,
                     int channels) {
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  u32(36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(rate));
  u32(static_cast<std::uint32_t>(rate * channels * 2));
  u16(static_cast<std::uint16_t>(channels * 2));
  u16(16);
  out.write("data", 4);
  u32(data_len);
  for (std::int16_t s : samples) u16(static_cast<std::uint16_t>(s));
}

// Reference MFCC pipeline: direct DFT, filterbank and DCT written as plain
// loops with no shared code, for the conventions documented in mfcc.hpp.
Eigen::MatrixXd reference_mfcc(const std::vector<double>& x, int rate, const MfccConfig& cfg) {
  const int win = static_cast<int>(std::lround(cfg.window_ms * rate / 1000.0));
  const int hop = static_cast<int>(std::lround(cfg.hop_ms * rate / 1000.0));
  const long n_frames = (static_cast<long>(x.size()) - win) / hop + 1;
  int nfft = 1;
  while (nfft < win) nfft *= 2;
  const int n_bins = nfft / 2 + 1;
  const int M = cfg.n_mel_filters;

  std::vector<double> y(x.size());
  y[0] = x[0];
  for (std::size_t t = 1; t < x.size(); ++t) y[t] = x[t] - cfg.pre_emphasis * x[t - 1];

  auto hz2mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto mel2hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };
  const double mel_max = hz2mel(rate / 2.0);
  std::vector<double> hz_pts(M + 2);
  for (int j = 0; j < M + 2; ++j) hz_pts[j] = mel2hz(mel_max * j / (M + 1));

  Eigen::MatrixXd out(n_frames, cfg.dim());
  for (long t = 0; t < n_frames; ++t) {
    std::vector<double> frame(win);
    double energy = 0.0;
    for (int i = 0; i < win; ++i) {
      const double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (win - 1));
      frame[i] = y[t * hop + i] * w;
      energy += frame[i] * frame[i];
    }
    std::vector<double> power(n_bins);
    for (int k = 0; k < n_bins; ++k) {
      double re = 0.0, im = 0.0;
      for (int i = 0; i < win; ++i) {
        const double ang = -2.0 * M_PI * k * i / nfft;
        re += frame[i] * std::cos(ang);
        im += frame[i] * std::sin(ang);
      }
      power[k] = re * re + im * im;
    }
    std::vector<double> logbank(M);
    for (int j = 0; j < M; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n_bins; ++k) {
        const double f = static_cast<double>(k) * rate / nfft;
        double w = 0.0;
        if (f >= hz_pts[j] && f <= hz_pts[j + 1]) {
          w = (f - hz_pts[j]) / (hz_pts[j + 1] - hz_pts[j]);
        } else if (f > hz_pts[j + 1] && f <= hz_pts[j + 2]) {
          w = (hz_pts[j + 2] - f) / (hz_pts[j + 2] - hz_pts[j + 1]);
        }
        acc += w * power[k];
      }
      logbank[j] = std::log(std::max(acc, cfg.log_floor));
    }
    for (int i = 1; i <= cfg.n_cepstra; ++i) {
      double c = 0.0;
      for (int j = 0; j < M; ++j) c += logbank[j] * std::cos(M_PI * i * (j + 0.5) / M);
      out(t, i - 1) = std::sqrt(2.0 / M) * c;
    }
    out(t, cfg.n_cepstra) = std::log(std::max(energy, cfg.log_floor));
  }
  return out;
}

}  // namespace

TEST_CASE("load_wav reads one second of silence") {
  const fs::path p = temp_dir() / "silence.wav";
  write_pcm16_wav(p, std::vector<std::int16_t>(16000, 0), 16000, 1);
  AudioSignal sig = load_wav(p);
  REQUIRE(sig.sample_rate == 16000);
  REQUIRE(sig.samples.size() == 16000);
  for (double s : sig.samples) REQUIRE(s == 0.0);
}

TEST_CASE("load_wav rejects stereo files") {
  const fs::path p = temp_dir() / "stereo.wav";
  write_pcm16_wav(p, std::vector<std::int16_t>(200, 0), 16000, 2);
  REQUIRE_THROWS_WITH(load_wav(p), Catch::Matchers::ContainsSubstring("unsupported channel count"));
}

TEST_CASE("load_wav error kinds are distinct") {
  REQUIRE_THROWS_WITH(load_wav(temp_dir() / "missing.wav"),
                      Catch::Matchers::ContainsSubstring("unreadable"));

  // 8-bit PCM: unsupported encoding
  const fs::path p = temp_dir() / "pcm8.wav";
  {
    std::ofstream out(p, std::ios::binary);
    std::vector<char> hdr = {'R', 'I', 'F', 'F', 40, 0, 0, 0, 'W', 'A', 'V', 'E',
                             'f', 'm', 't', ' ', 16, 0, 0, 0};
    out.write(hdr.data(), static_cast<long>(hdr.size()));
    const std::uint16_t fmt[] = {1, 1};
    out.write(reinterpret_cast<const char*>(fmt), 4);
    const std::uint32_t rates[] = {16000, 16000};
    out.write(reinterpret_cast<const char*>(rates), 8);
    const std::uint16_t tail[] = {1, 8};  // block align, 8 bits
    out.write(reinterpret_cast<const char*>(tail), 4);
    out.write("data", 4);
    const std::uint32_t len = 4;
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write("\0\0\0\0", 4);
  }
  REQUIRE_THROWS_WITH(load_wav(p), Catch::Matchers::ContainsSubstring("unsupported encoding"));
}

TEST_CASE("load_wav recovers a full-scale 440 Hz sine to quantization accuracy") {
  const int rate = 16000;
  std::vector<std::int16_t> raw(rate);
  std::vector<double> expect(rate);
  for (int i = 0; i < rate; ++i) {
    expect[i] = std::sin(2.0 * M_PI * 440.0 * i / rate);
    double scaled = std::round(expect[i] * 32768.0);
    raw[i] = static_cast<std::int16_t>(std::min(scaled, 32767.0));
  }
  const fs::path p = temp_dir() / "sine.wav";
  write_pcm16_wav(p, raw, rate, 1);
  AudioSignal sig = load_wav(p);
  REQUIRE(sig.samples.size() == expect.size());
  for (int i = 0; i < rate; ++i) {
    REQUIRE(std::abs(sig.samples[i] - expect[i]) <= 1.0 / 32768.0);
  }
}

TEST_CASE("save_wav round trip stays within quantization error") {
  AudioSignal sig;
  sig.sample_rate = 8000;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 800; ++i) sig.samples.push_back(u(rng));
  const fs::path p = temp_dir() / "roundtrip.wav";
  save_wav(p, sig);
  AudioSignal back = load_wav(p);
  REQUIRE(back.sample_rate == 8000);
  REQUIRE(back.samples.size() == sig.samples.size());
  for (std::size_t i = 0; i < sig.samples.size(); ++i) {
    REQUIRE(std::abs(back.samples[i] - sig.samples[i]) <= 1.5 / 32768.0);
  }
}

TEST_CASE("compute_mfcc frame count and dimension") {
  AudioSignal sig;
  sig.sample_rate = 16000;
  sig.samples.assign(16000, 0.01);
  const FrameSequence fsq = compute_mfcc(sig, MfccConfig{});
  REQUIRE(fsq.n_frames() == 98);  // floor((16000-400)/160)+1
  REQUIRE(fsq.dim() == 13);
}

TEST_CASE("compute_mfcc rejects signals shorter than one window") {
  AudioSignal sig;
  sig.sample_rate = 16000;
  sig.samples.assign(300, 0.0);
  REQUIRE_THROWS_WITH(compute_mfcc(sig, MfccConfig{}),
                      Catch::Matchers::ContainsSubstring("utterance too short"));
}

TEST_CASE("constant zero signal yields identical frames") {
  AudioSignal sig;
  sig.sample_rate = 16000;
  sig.samples.assign(8000, 0.0);
  const FrameSequence fsq = compute_mfcc(sig, MfccConfig{});
  for (long t = 1; t < fsq.n_frames(); ++t) {
    REQUIRE((fsq.frames.row(t) - fsq.frames.row(0)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("compute_mfcc matches the reference pipeline on a 440 Hz tone") {
  const int rate = 16000;
  AudioSignal sig;
  sig.sample_rate = rate;
  for (int i = 0; i < rate / 2; ++i) {
    sig.samples.push_back(0.8 * std::sin(2.0 * M_PI * 440.0 * i / rate));
  }
  const MfccConfig cfg;
  const FrameSequence fsq = compute_mfcc(sig, cfg);
  const Eigen::MatrixXd ref = reference_mfcc(sig.samples, rate, cfg);
  REQUIRE(fsq.frames.rows() == ref.rows());
  REQUIRE((fsq.frames - ref).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("compute_mfcc matches the reference pipeline on noise") {
  const int rate = 16000;
  AudioSignal sig;
  sig.sample_rate = rate;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 4800; ++i) sig.samples.push_back(u(rng));
  const MfccConfig cfg;
  const FrameSequence fsq = compute_mfcc(sig, cfg);
  const Eigen::MatrixXd ref = reference_mfcc(sig.samples, rate, cfg);
  REQUIRE((fsq.frames - ref).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("shifting the input by one hop shifts the frames by one index") {
  const int rate = 16000;
  AudioSignal sig;
  sig.sample_rate = rate;
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (int i = 0; i < 6400; ++i) sig.samples.push_back(u(rng));

  AudioSignal shifted;
  shifted.sample_rate = rate;
  shifted.samples.assign(160, 0.0);
  shifted.samples.insert(shifted.samples.end(), sig.samples.begin(), sig.samples.end());

  const FrameSequence a = compute_mfcc(sig, MfccConfig{});
  const FrameSequence b = compute_mfcc(shifted, MfccConfig{});
  REQUIRE(b.n_frames() == a.n_frames() + 1);
  for (long t = 1; t + 1 < a.n_frames(); ++t) {
    REQUIRE((b.frames.row(t + 1) - a.frames.row(t)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("compute_mfcc is deterministic") {
  AudioSignal sig;
  sig.sample_rate = 16000;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 4000; ++i) sig.samples.push_back(u(rng));
  const FrameSequence a = compute_mfcc(sig, MfccConfig{});
  const FrameSequence b = compute_mfcc(sig, MfccConfig{});
  REQUIRE(a.frames == b.frames);
}
