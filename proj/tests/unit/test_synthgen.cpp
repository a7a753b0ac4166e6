#include <chrono>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "support.hpp"

#include "daest/dataio/dataset.hpp"
#include "daest/error.hpp"
#include "daest/synthgen/synthgen.hpp"

using namespace daest;
using namespace daest::synth;
using nd::Tensor;

namespace {

SyntheticSpec single_component(const std::string& kind) {
  SyntheticSpec s;
  s.M = 6;
  s.transition = {{1.0}};
  ComponentSpec c;
  c.pattern.kind = kind;
  c.pattern.channel = 3;
  c.amplitude = 1.0;
  c.low = 5.0;
  c.high = 15.0;
  s.states = {StateSpec{{c}}};
  s.class_map = {"only"};
  s.noise_sigma = 0.0;
  s.trials_per_class = 2;
  s.trial_seconds = 4.0;
  return s;
}

std::vector<double> stationary(const Matrix& P) {
  std::vector<double> pi(P.size(), 1.0 / static_cast<double>(P.size()));
  for (int it = 0; it < 10000; ++it) {
    std::vector<double> next(P.size(), 0.0);
    for (std::size_t i = 0; i < P.size(); ++i) {
      for (std::size_t j = 0; j < P.size(); ++j) next[j] += pi[i] * P[i][j];
    }
    pi = next;
  }
  return pi;
}

}  // namespace

TEST_CASE("state sequences") {
  std::mt19937_64 rng(1);
  const auto constant = sample_state_sequence({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, 500, rng);
  for (int v : constant) CHECK(v == constant[0]);

  const auto uniform = sample_state_sequence({{0.5, 0.5}, {0.5, 0.5}}, 10000, rng);
  std::size_t switches = 0;
  for (std::size_t t = 1; t < uniform.size(); ++t) switches += uniform[t] != uniform[t - 1];
  CHECK(std::abs(static_cast<double>(switches) / 9999.0 - 0.5) < 0.05);

  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r(static_cast<std::uint64_t>(seed));
    const auto absorbed = sample_state_sequence({{0.9, 0.1}, {0.0, 1.0}}, 300, r);
    bool hit = false;
    for (int v : absorbed) {
      if (hit) CHECK(v == 1);
      hit = hit || v == 1;
    }
  }
  CHECK_THROWS_AS(sample_state_sequence({{0.5, 0.4}, {0.5, 0.5}}, 10, rng), ConfigError);
}

TEST_CASE("state occupancy matches the stationary distribution") {
  const Matrix P = {{0.5, 0.3, 0.2}, {0.2, 0.6, 0.2}, {0.3, 0.3, 0.4}};
  const auto pi = stationary(P);
  std::mt19937_64 rng(2);
  const auto seq = sample_state_sequence(P, 100000, rng);
  // Thinning by 10 leaves nearly independent draws (second eigenvalue 0.3).
  std::vector<double> counts(3, 0.0);
  double n = 0.0;
  for (std::size_t t = 0; t < seq.size(); t += 10, n += 1.0) counts[static_cast<std::size_t>(seq[t])] += 1.0;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < 3; ++i) chi2 += std::pow(counts[i] - n * pi[i], 2) / (n * pi[i]);
  CHECK(chi2 < 9.21);  // chi-square, 2 dof, alpha 0.01
}

TEST_CASE("point pattern without noise is the carrier on one channel") {
  const SyntheticSpec s = single_component("point");
  const GeneratedSubject g = gen_subject(s, 11, true);
  REQUIRE(g.subject.trials.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const Tensor& x = g.subject.trials[i].signal;
    const Tensor& c = g.truth.trials[i].carriers;
    for (std::size_t m = 0; m < s.M; ++m) {
      for (std::size_t t = 0; t < x.extent(1); ++t) CHECK(x.at(m, t) == (m == 3 ? c.at(0, t) : 0.0));
    }
  }
}

TEST_CASE("carriers have unit RMS and stay in band") {
  std::mt19937_64 rng(3);
  const Tensor c = carrier(8.0, 12.0, 2000, 125.0, rng);
  double ss = 0.0;
  for (double v : c.values()) ss += v * v;
  CHECK(std::sqrt(ss / 2000.0) == doctest::Approx(1.0).epsilon(1e-12));
  // Out-of-band power via a 30 Hz probe is small relative to a 10 Hz probe.
  auto power = [&](double f) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < 2000; ++t) {
      re += c[t] * std::cos(2.0 * std::numbers::pi * f * static_cast<double>(t) / 125.0);
      im += c[t] * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / 125.0);
    }
    return re * re + im * im;
  };
  CHECK(power(30.0) < 1e-3 * power(10.0));
}

TEST_CASE("least squares on the carrier recovers rotated patterns") {
  SyntheticSpec s = single_component("random");
  s.rotation = 0.5;
  const GeneratedSubject g = gen_subject(s, 12, true);
  const Tensor& x = g.subject.trials[0].signal;
  const Tensor& c = g.truth.trials[0].carriers;
  const Tensor& p = g.truth.patterns[0];
  double cc = 0.0;
  for (std::size_t t = 0; t < x.extent(1); ++t) cc += c.at(0, t) * c.at(0, t);
  double dot = 0.0, nh = 0.0, np = 0.0;
  for (std::size_t m = 0; m < s.M; ++m) {
    double b = 0.0;
    for (std::size_t t = 0; t < x.extent(1); ++t) b += x.at(m, t) * c.at(0, t);
    b /= cc;
    dot += b * p.at(m, 0);
    nh += b * b;
    np += p.at(m, 0) * p.at(m, 0);
  }
  CHECK(dot / std::sqrt(nh * np) >= 0.99);
  CHECK(np == doctest::Approx(1.0));
}

TEST_CASE("subject seeding contract") {
  const SyntheticSpec s = two_state_spec();
  const auto stimuli = make_stimuli(s);
  const GeneratedSubject a = gen_subject(s, stimuli, subject_seed(s, 0));
  const GeneratedSubject b = gen_subject(s, stimuli, subject_seed(s, 1));
  CHECK(subject_seed(s, 0) != subject_seed(s, 1));
  CHECK(testing::max_abs_diff(a.truth.patterns[0], b.truth.patterns[0]) > 1e-3);
  for (std::size_t t = 0; t < stimuli.size(); ++t) {
    CHECK(a.truth.trials[t].states == b.truth.trials[t].states);
    CHECK(a.truth.trials[t].gates == b.truth.trials[t].gates);
    CHECK(a.subject.trials[t].label == b.subject.trials[t].label);
  }
  const GeneratedSubject again = gen_subject(s, stimuli, subject_seed(s, 0));
  for (std::size_t t = 0; t < stimuli.size(); ++t) CHECK(again.subject.trials[t].signal == a.subject.trials[t].signal);
}

TEST_CASE("without perturbation subjects differ only by noise") {
  SyntheticSpec s = two_state_spec();
  s.rotation = 0.0;
  s.amplitude_jitter = 0.0;
  s.carrier_sharing = "stimulus";
  s.trials_per_class = 2;
  s.noise_sigma = 0.0;
  const GeneratedSubject a = gen_subject(s, subject_seed(s, 0));
  const GeneratedSubject b = gen_subject(s, subject_seed(s, 1));
  for (std::size_t t = 0; t < a.subject.trials.size(); ++t) CHECK(a.subject.trials[t].signal == b.subject.trials[t].signal);

  s.noise_sigma = 2.0;
  const GeneratedSubject na = gen_subject(s, subject_seed(s, 0));
  const GeneratedSubject nb = gen_subject(s, subject_seed(s, 1));
  const Tensor& xa = na.subject.trials[0].signal;
  const Tensor& xb = nb.subject.trials[0].signal;
  double var = 0.0;
  for (std::size_t i = 0; i < xa.size(); ++i) var += std::pow(xa[i] - xb[i], 2);
  var /= static_cast<double>(xa.size());
  CHECK(var == doctest::Approx(8.0).epsilon(0.05));  // difference of two sd-2 noises
}

TEST_CASE("gates and labels follow the state sequence") {
  const SyntheticSpec s = two_state_spec();
  const Generated g = generate(s);
  REQUIRE(g.dataset.subjects.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& trials = g.dataset.subjects[i].trials;
    REQUIRE(trials.size() == 16);
    for (std::size_t t = 0; t < trials.size(); ++t) {
      const TrialTruth& truth = g.truth[i].trials[t];
      std::size_t in_label = 0;
      for (std::size_t u = 0; u < truth.states.size(); ++u) {
        for (std::size_t k = 0; k < 2; ++k) CHECK_EQ(truth.gates.at(k, u), truth.states[u] == static_cast<int>(k) ? 1.0 : 0.0);
        in_label += truth.states[u] == trials[t].label;
      }
      CHECK(2 * in_label > truth.states.size());
      CHECK(trials[t].signal.shape() == nd::Shape{8, 1500});
    }
  }
}

TEST_CASE("reverse_of pattern") {
  const SyntheticSpec s = multi_step_transition_spec();
  const auto p = base_patterns(s);
  REQUIRE(p.size() == 2);
  CHECK(p[0].shape() == nd::Shape{8, 2});
  for (std::size_t m = 0; m < 8; ++m) {
    CHECK(p[1].at(m, 0) == p[0].at(m, 1));
    CHECK(p[1].at(m, 1) == p[0].at(m, 0));
  }
  SyntheticSpec j = s;
  j.amplitude_jitter = 0.5;
  j.trials_per_class = 1;
  for (std::size_t subject = 0; subject < 4; ++subject) {
    const auto amps = gen_subject(j, subject_seed(j, subject)).truth.amplitudes;
    CHECK(amps[1] == amps[0]);
    CHECK(amps[0] != doctest::Approx(j.states[0].components[0].amplitude).epsilon(1e-9));
  }
}

TEST_CASE("spec validation and JSON round trip") {
  SyntheticSpec s = multi_step_transition_spec();
  s.seed = 99;
  const SyntheticSpec r = spec_from_json(spec_to_json(s));
  CHECK(spec_to_json(r) == spec_to_json(s));
  CHECK(spec_from_json(R"({"preset": "two_state", "subjects": 3})").subjects == 3);

  SyntheticSpec bad = two_state_spec();
  bad.class_transitions[0][0] = {0.5, 0.6};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = two_state_spec();
  bad.states[1].components[0].high = 70.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = two_state_spec();
  bad.states[0].components[0].pattern.kind = "spiral";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(spec_from_json("{"), ConfigError);
}

TEST_CASE("written datasets reload and generation is fast") {
  SyntheticSpec s = two_state_spec();
  s.trials_per_class = 10;
  const auto start = std::chrono::steady_clock::now();
  const Generated g = generate(s);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs < 60.0);

  const auto dir = std::filesystem::temp_directory_path() / "daest_synth_test";
  std::filesystem::remove_all(dir);
  write_generated(dir, s, g);
  CHECK(std::filesystem::exists(dir / "truth.json"));
  CHECK(std::filesystem::exists(dir / "gates" / "s00_t0.f32"));
  const io::Dataset back = io::load_dataset(dir / "manifest.json");
  REQUIRE(back.subjects.size() == 8);
  const Tensor& a = g.dataset.subjects[7].trials[19].signal;
  const Tensor& b = back.subjects[7].trials[19].signal;
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == static_cast<double>(static_cast<float>(a[i])));
  std::filesystem::remove_all(dir);
}
