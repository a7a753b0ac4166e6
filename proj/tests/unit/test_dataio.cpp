#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "support.hpp"

#include "daest/dataio/dataset.hpp"
#include "daest/dataio/signal.hpp"
#include "daest/dataio/windows.hpp"
#include "daest/error.hpp"
#include "daest/ndcore/snapshot.hpp"

using namespace daest;
using namespace daest::io;
using nd::Shape;
using nd::Tensor;

namespace {

Tensor sinusoid(double freq, double fs, std::size_t n, double amp = 1.0, double phase = 0.0,
                double offset = 0.0) {
  Tensor x(Shape{1, n});
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = offset + amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / fs + phase);
  }
  return x;
}

// Least-squares amplitude of a known-frequency sinusoid over [begin, end).
double fitted_amplitude(const Tensor& x, double freq, double fs, std::size_t begin, std::size_t end) {
  double ss = 0, cc = 0, sc = 0, xs = 0, xc = 0;
  for (std::size_t i = begin; i < end; ++i) {
    const double w = 2.0 * std::numbers::pi * freq * static_cast<double>(i) / fs;
    const double s = std::sin(w), c = std::cos(w);
    ss += s * s;
    cc += c * c;
    sc += s * c;
    xs += x[i] * s;
    xc += x[i] * c;
  }
  const double det = ss * cc - sc * sc;
  const double a = (xs * cc - xc * sc) / det;
  const double b = (xc * ss - xs * sc) / det;
  return std::hypot(a, b);
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("daest_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("resample") {
  std::mt19937_64 rng(1);
  const Tensor x = testing::random_tensor({3, 100}, rng);
  CHECK(resample(x, 125, 125) == x);
  CHECK(resample(Tensor(Shape{2, 10000}), 1000, 125).shape() == Shape{2, 1250});
  CHECK(resample(Tensor(Shape{1, 1001}), 250, 125).shape() == Shape{1, 500});
  CHECK_THROWS_AS(resample(x, 100, 125), ConfigError);

  const Tensor s = sinusoid(5.0, 250.0, 2500, 1.0, 0.3);
  const Tensor y = resample(s, 250.0, 125.0);
  const double amp = fitted_amplitude(y, 5.0, 125.0, 100, 1150);
  CHECK(std::abs(amp - 1.0) < 0.01);
  // Samples line up in time with the decimated input.
  for (std::size_t n = 200; n < 1000; n += 97) CHECK(std::abs(y[n] - s[2 * n]) < 0.01);

  // Content above the new Nyquist rate is suppressed.
  const Tensor hi = sinusoid(70.0, 250.0, 2500);
  const Tensor yh = resample(hi, 250.0, 125.0);
  double peak = 0.0;
  for (std::size_t n = 100; n < 1150; ++n) peak = std::max(peak, std::abs(yh[n]));
  CHECK(peak < 0.05);
}

TEST_CASE("bandpass passband, stopband and DC behaviour") {
  const double fs = 125.0;
  CHECK(fitted_amplitude(bandpass(sinusoid(10, fs, 2500), 0.5, 47, fs), 10, fs, 0, 2500) ==
        doctest::Approx(1.0).epsilon(0.05));
  const double centre = (0.5 + 47.0) / 2.0;
  const double gain_centre = fitted_amplitude(bandpass(sinusoid(centre, fs, 2500), 0.5, 47, fs),
                                              centre, fs, 200, 2300);
  CHECK(std::abs(20.0 * std::log10(gain_centre)) < 1.0);

  const Tensor slow = sinusoid(0.1, fs, 25000);
  const double g_slow = fitted_amplitude(bandpass(slow, 0.5, 47, fs), 0.1, fs, 5000, 20000);
  CHECK(20.0 * std::log10(g_slow) <= -20.0);
  const double g_fast = fitted_amplitude(bandpass(sinusoid(60, fs, 2500), 0.5, 47, fs), 60, fs, 200, 2300);
  CHECK(20.0 * std::log10(g_fast) <= -20.0);

  const Tensor dc = sinusoid(10, fs, 2500, 1.0, 0.0, 5.0);
  const Tensor y = bandpass(dc, 0.5, 47, fs);
  double mean = 0.0;
  for (double v : y.values()) mean += v;
  mean /= static_cast<double>(y.size());
  CHECK(std::abs(mean) < 0.01 * 5.0);
  const Tensor flat(Shape{1, 500}, 3.0);
  double worst = 0.0;
  const Tensor flat_out = bandpass(flat, 0.5, 47, fs);
  for (double v : flat_out.values()) worst = std::max(worst, std::abs(v));
  CHECK(worst < 0.03);

  const Tensor zero(Shape{2, 300});
  CHECK(bandpass(zero, 0.5, 47, fs) == zero);

  CHECK_THROWS_AS(bandpass(zero, 0.0, 47, fs), ConfigError);
  CHECK_THROWS_AS(bandpass(zero, 10, 5, fs), ConfigError);
  CHECK_THROWS_AS(bandpass(zero, 0.5, 70, fs), ConfigError);
}

TEST_CASE("bandpass is zero phase") {
  const double fs = 125.0;
  const Tensor x = sinusoid(7.3, fs, 3000, 1.0, 0.4);
  const Tensor y = bandpass(x, 0.5, 47, fs);
  int best_lag = 100;
  double best = -1e300;
  for (int lag = -20; lag <= 20; ++lag) {
    double acc = 0.0;
    for (std::size_t i = 500; i < 2500; ++i) acc += x[i] * y[static_cast<std::size_t>(static_cast<int>(i) + lag)];
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("common average reference") {
  Tensor same(Shape{4, 6});
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::size_t t = 0; t < 6; ++t) same.at(c, t) = static_cast<double>(t) * 1.5 - 2.0;
  }
  const Tensor zeroed = rereference_common_average(same);
  for (double v : zeroed.values()) CHECK(std::abs(v) < 1e-15);

  const Tensor centred(Shape{2, 3}, {1, -2, 0.5, -1, 2, -0.5});
  CHECK(rereference_common_average(centred) == centred);

  std::mt19937_64 rng(3);
  const Tensor r = rereference_common_average(testing::random_tensor({8, 50}, rng, -100, 100));
  for (std::size_t t = 0; t < 50; ++t) {
    double s = 0.0;
    for (std::size_t c = 0; c < 8; ++c) s += r.at(c, t);
    CHECK(std::abs(s) < 1e-12);
  }
}

TEST_CASE("windowing arithmetic") {
  const WindowingPlan secs{5, 2};
  CHECK(secs.count(34) == 15);
  const WindowingPlan faced = WindowingPlan::half_overlap(625);
  CHECK(faced.step == 312);
  CHECK(faced.count(625) == 1);
  const Tensor trial(Shape{32, 30 * 125});
  const auto windows = extract_windows(trial, faced);
  CHECK(windows.size() == (30 * 125 - 625) / 312 + 1);
  for (const Tensor& w : windows) CHECK(w.shape() == Shape{32, 625});
  CHECK_THROWS_AS(extract_windows(Tensor(Shape{32, 600}), faced, "subject 3 trial 7"), DimensionError);
  try {
    extract_windows(Tensor(Shape{32, 600}), faced, "subject 3 trial 7");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("subject 3 trial 7") != std::string::npos);
  }
}

TEST_CASE("windows start every step samples and copy the right columns") {
  Tensor trial(Shape{2, 23});
  for (std::size_t i = 0; i < trial.size(); ++i) trial[i] = static_cast<double>(i);
  const WindowingPlan plan = WindowingPlan::half_overlap(7);
  const auto w = extract_windows(trial, plan);
  REQUIRE(w.size() == 6);
  for (std::size_t k = 0; k < w.size(); ++k) {
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t t = 0; t < 7; ++t) CHECK(w[k].at(c, t) == trial.at(c, k * 3 + t));
    }
  }
}

TEST_CASE("manifest json round trip and validation") {
  DatasetManifest m{"toy", 125.0, {"a", "b"}, {"neg", "pos"},
                    {{"s1", {{0, 3, "x.f32", 5, 100}, {1, 4, "y.f32", 0, 90}}},
                     {"s2", {{0, 3, "z.f32", 0, 100}}}}};
  const DatasetManifest back = manifest_from_json(manifest_to_json(m));
  CHECK(manifest_to_json(back) == manifest_to_json(m));
  CHECK(back.subjects[0].trials[0].offset == 5);

  DatasetManifest bad = m;
  bad.subjects[1].trials[0].label = 1;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = m;
  bad.subjects[0].trials[1].label = 2;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  CHECK_THROWS_AS(manifest_from_json("{\"dvers\":2}"), FormatError);
  CHECK_THROWS_AS(manifest_from_json("not json"), FormatError);
}

TEST_CASE("dataset save/load round trip through f32 files") {
  const auto dir = scratch_dir("dataset");
  std::mt19937_64 rng(5);
  Dataset d{"toy", 125.0, {"a", "b", "c"}, {"neg", "pos"}, {}};
  for (int s = 0; s < 2; ++s) {
    Subject subj{"sub" + std::to_string(s), {}};
    for (int t = 0; t < 3; ++t) {
      Tensor sig = testing::random_tensor({3, 50 + 10 * static_cast<std::size_t>(t)}, rng);
      for (double& v : sig.values()) v = static_cast<float>(v);
      subj.trials.push_back(Trial{t % 2, t, std::move(sig)});
    }
    d.subjects.push_back(std::move(subj));
  }
  save_dataset(dir, d);
  const Dataset back = load_dataset(dir / "manifest.json");
  REQUIRE(back.subjects.size() == 2);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(back.subjects[s].trials[t].signal == d.subjects[s].trials[t].signal);
      CHECK(back.subjects[s].trials[t].label == d.subjects[s].trials[t].label);
    }
  }

  DatasetManifest m = read_manifest(dir / "manifest.json");
  m.subjects[0].trials[0].length = 1000;
  write_manifest(dir / "manifest.json", m);
  CHECK_THROWS_AS(load_dataset(dir / "manifest.json"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("convert maps a directory tree to a manifest") {
  const auto dir = scratch_dir("convert");
  nd::write_file(dir / "labels.csv", "stimulus_id,label\n1,0\n2,1\n");
  for (const char* subj : {"s01", "s02"}) {
    std::filesystem::create_directories(dir / subj);
    write_f32_matrix(dir / subj / "1.f32", Tensor(Shape{2, 40}, 1.0));
    write_f32_matrix(dir / subj / "2.f32", Tensor(Shape{2, 30}, 2.0));
  }
  const DatasetManifest m = convert_directory(dir, 125.0, 2, {"neg", "pos"});
  REQUIRE(m.subjects.size() == 2);
  CHECK(m.subjects[1].id == "s02");
  CHECK(m.subjects[0].trials[1].length == 30);
  CHECK(m.subjects[0].trials[1].label == 1);
  write_manifest(dir / "manifest.json", m);
  const Dataset d = load_dataset(dir / "manifest.json");
  CHECK(d.subjects[1].trials[0].signal == Tensor(Shape{2, 40}, 1.0));
  std::filesystem::remove_all(dir);
}
