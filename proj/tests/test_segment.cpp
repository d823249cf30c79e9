#include <blindseg/segment.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>
#include <vector>

using namespace blindseg;

namespace {

ErrorSignal sig_of(std::vector<double> values, double hop_ms = 10.0) {
  ErrorSignal e;
  e.values = std::move(values);
  e.hop_ms = hop_ms;
  return e;
}

// Brute-force reference: enumerate plateau-resolved local maxima and their
// "previous minimum" explicitly, for both prominence bookkeeping modes.
std::vector<long> brute_force_peaks(const std::vector<double>& v, double delta,
                                    ProminenceMode mode) {
  const long T = static_cast<long>(v.size());
  std::vector<long> maxima;
  for (long t = 1; t + 1 < T; ++t) {
    if (!(v[t - 1] < v[t])) continue;  // plateau first frame needs a strict rise
    long e = t;
    while (e + 1 < T && v[e + 1] == v[t]) ++e;
    if (e + 1 < T && v[e + 1] < v[t]) maxima.push_back(t);
  }

  std::vector<long> out;
  if (mode == ProminenceMode::prev_local_min) {
    long prev = 0;
    for (long p : maxima) {
      double m = *std::min_element(v.begin() + prev, v.begin() + p + 1);
      if (v[p] - m > delta) out.push_back(p);
      prev = p;
    }
  } else {
    long since = 0;  // index of the last emitted peak, or signal start
    for (long p : maxima) {
      double m = *std::min_element(v.begin() + since, v.begin() + p + 1);
      if (v[p] - m > delta) {
        out.push_back(p);
        since = p;
      }
    }
  }
  return out;
}

std::vector<double> random_signal(std::mt19937_64& rng) {
  std::uniform_int_distribution<long> len_dist(10, 200);
  std::uniform_int_distribution<int> kind(0, 2);
  const long T = len_dist(rng);
  std::vector<double> v(T);
  switch (kind(rng)) {
    case 0: {  // iid uniform
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (auto& x : v) x = u(rng);
      break;
    }
    case 1: {  // random walk
      std::normal_distribution<double> step(0.0, 0.3);
      double acc = 0.0;
      for (auto& x : v) {
        acc += step(rng);
        x = acc;
      }
      break;
    }
    default: {  // quantized plateaus
      std::uniform_int_distribution<int> q(0, 4);
      for (auto& x : v) x = 0.5 * q(rng);
      break;
    }
  }
  return v;
}

}  // namespace

TEST_CASE("zero_prefix blanks the first seven frames") {
  const ErrorSignal e = zero_prefix(sig_of({5, 5, 5, 5, 5, 5, 5, 5, 5}));
  REQUIRE(e.values == std::vector<double>{0, 0, 0, 0, 0, 0, 0, 5, 5});
}

TEST_CASE("zero_prefix handles short signals and is idempotent") {
  const ErrorSignal shorty = zero_prefix(sig_of({3, 2, 1}));
  REQUIRE(shorty.values == std::vector<double>{0, 0, 0});

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(30);
  for (auto& x : v) x = u(rng);
  const ErrorSignal once = zero_prefix(sig_of(v));
  const ErrorSignal twice = zero_prefix(once);
  REQUIRE(once.values == twice.values);
}

TEST_CASE("a strictly increasing signal has no boundaries") {
  std::vector<double> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  for (auto mode : {ProminenceMode::prev_local_min, ProminenceMode::reset_on_emit}) {
    REQUIRE(detect_boundaries(sig_of(v), 0.0, mode).frames.empty());
  }
}

TEST_CASE("hand-traced prominence example") {
  // prominence 1 fails the 1.5 threshold, prominence 2 passes
  const ErrorSignal e = sig_of({0, 1, 0, 2, 0});
  for (auto mode : {ProminenceMode::prev_local_min, ProminenceMode::reset_on_emit}) {
    const FrameBoundaries b = detect_boundaries(e, 1.5, mode);
    REQUIRE(b.frames == std::vector<long>{3});
  }
  REQUIRE(detect_boundaries(e, 0.5).frames == std::vector<long>{1, 3});
}

TEST_CASE("plateaus are reported at their first frame") {
  const FrameBoundaries b = detect_boundaries(sig_of({0, 2, 2, 2, 0, 0}), 1.0);
  REQUIRE(b.frames == std::vector<long>{1});
  // plateau that keeps rising is not a maximum at its first step
  const FrameBoundaries c = detect_boundaries(sig_of({0, 1, 1, 3, 0}), 0.5);
  REQUIRE(c.frames == std::vector<long>{3});
}

TEST_CASE("endpoints are never peaks") {
  REQUIRE(detect_boundaries(sig_of({5, 1, 0, 0}), 0.5).frames.empty());
  REQUIRE(detect_boundaries(sig_of({0, 1, 2, 9}), 0.5).frames.empty());
}

TEST_CASE("detect_boundaries equals the brute-force scanner on random signals") {
  std::mt19937_64 rng(12345);
  for (int trial = 0; trial < 500; ++trial) {
    const std::vector<double> v = random_signal(rng);
    const double span = *std::max_element(v.begin(), v.end()) -
                        *std::min_element(v.begin(), v.end());
    std::uniform_real_distribution<double> dd(0.0, std::max(span, 1e-3));
    for (int k = 0; k < 4; ++k) {
      const double delta = dd(rng);
      for (auto mode : {ProminenceMode::prev_local_min, ProminenceMode::reset_on_emit}) {
        REQUIRE(detect_boundaries(sig_of(v), delta, mode).frames ==
                brute_force_peaks(v, delta, mode));
      }
    }
  }
}

TEST_CASE("default-mode boundary sets shrink as delta grows") {
  std::mt19937_64 rng(777);
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> v = random_signal(rng);
    const double span = *std::max_element(v.begin(), v.end()) -
                        *std::min_element(v.begin(), v.end());
    std::vector<double> deltas;
    std::uniform_real_distribution<double> dd(0.0, std::max(span, 1e-3));
    for (int k = 0; k < 5; ++k) deltas.push_back(dd(rng));
    std::sort(deltas.begin(), deltas.end());

    std::vector<long> prev;
    bool first = true;
    for (double delta : deltas) {
      const std::vector<long> cur = detect_boundaries(sig_of(v), delta).frames;
      if (!first) {
        const std::set<long> prev_set(prev.begin(), prev.end());
        for (long f : cur) REQUIRE(prev_set.count(f) == 1);
      }
      prev = cur;
      first = false;
    }
  }
}

TEST_CASE("delta zero emits every positive-prominence local maximum") {
  std::mt19937_64 rng(31);
  const std::vector<double> v = random_signal(rng);
  const std::vector<long> peaks = detect_boundaries(sig_of(v), 0.0).frames;
  REQUIRE(peaks == brute_force_peaks(v, 0.0, ProminenceMode::prev_local_min));
  // every candidate peak has positive prominence, so all of them fire
  std::vector<long> cands = detail::candidate_peaks(v);
  REQUIRE(peaks == cands);
}

TEST_CASE("no boundary lands inside the zeroed prefix of a flat-then-active signal") {
  std::vector<double> v(40, 0.0);
  for (int i = 8; i < 40; ++i) v[i] = std::sin(0.7 * i) + 1.0;
  const ErrorSignal e = zero_prefix(sig_of(v));
  for (long f : detect_boundaries(e, 0.1).frames) REQUIRE(f >= 7);
}

TEST_CASE("periodic boundaries at 5 ms inside a 100 ms utterance") {
  const BoundarySet b = periodic_boundaries(10, 10.0, 5.0);
  REQUIRE(b.size() == 19);
  REQUIRE(b.times.front() == Catch::Approx(0.005));
  REQUIRE(b.times.back() == Catch::Approx(0.095));
}

TEST_CASE("periodic boundaries edge cases") {
  REQUIRE(periodic_boundaries(10, 10.0, 200.0).size() == 0);
  const BoundarySet per_hop = periodic_boundaries(10, 10.0, 10.0);
  REQUIRE(per_hop.size() == 9);  // one per frame index >= 1
  for (long i = 0; i < per_hop.size(); ++i) {
    REQUIRE(per_hop.times[i] == Catch::Approx(0.010 * (i + 1)));
  }
}

TEST_CASE("frame/second conversions round-trip within half a hop") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  BoundarySet b;
  std::set<double> times;
  for (int i = 0; i < 40; ++i) times.insert(u(rng));
  b.times.assign(times.begin(), times.end());

  const FrameBoundaries f = seconds_to_frames(b, 10.0);
  const BoundarySet back = boundaries_to_seconds(f);
  REQUIRE(back.size() == b.size());
  for (long i = 0; i < b.size(); ++i) {
    REQUIRE(std::abs(back.times[i] - b.times[i]) <= 0.005 + 1e-12);
  }

  REQUIRE(boundaries_to_seconds(FrameBoundaries{{10}, 10.0}).times[0] == Catch::Approx(0.100));
  REQUIRE(boundaries_to_seconds(FrameBoundaries{{}, 10.0}).times.empty());
}

TEST_CASE("boundary files persist and reject unsorted input") {
  BoundarySet b;
  b.times = {0.08, 0.21, 1.05};
  const auto path = std::filesystem::temp_directory_path() / "blindseg_bounds_test.txt";
  save_boundaries(path, b);
  const BoundarySet back = load_boundaries(path, BoundaryKind::hypothesis);
  REQUIRE(back.size() == 3);
  for (long i = 0; i < 3; ++i) REQUIRE(back.times[i] == Catch::Approx(b.times[i]).margin(1e-6));

  REQUIRE_THROWS_AS(parse_boundaries("0.5\n0.2\n", BoundaryKind::gold), IoError);
}
