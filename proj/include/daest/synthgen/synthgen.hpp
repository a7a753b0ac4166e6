#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "daest/dataio/dataset.hpp"
#include "daest/ndcore/tensor.hpp"

namespace daest::synth {

using Matrix = std::vector<std::vector<double>>;

/// Spatial (steps = 1) or spatial-transition (steps > 1) pattern of one component.
/// kind: "random" (unit-norm steps drawn from the dataset seed), "point" (one channel),
/// "explicit" (M x steps values, channel-major) or "reverse_of" (steps of an earlier
/// component in reverse order, sharing its amplitude jitter).
struct PatternSpec {
  std::string kind = "random";
  std::size_t steps = 1;
  std::size_t dilation = 1;
  std::size_t channel = 0;
  std::vector<double> values;
  std::size_t source = 0;
};

struct ComponentSpec {
  PatternSpec pattern;
  double low = 4.0;
  double high = 8.0;
  double amplitude = 10.0;
};

struct StateSpec {
  std::vector<ComponentSpec> components;
};

struct SyntheticSpec {
  std::string name = "synthetic";
  std::size_t M = 8;
  double fs = 125.0;
  /// Per-sample transition matrix used when class_transitions is empty.
  Matrix transition;
  /// Optional per-class matrices; trials of class c are drawn from entry c.
  std::vector<Matrix> class_transitions;
  std::vector<StateSpec> states;
  /// Label rule "dominant_state": a trial of class c spends most samples in state c.
  std::vector<std::string> class_map;
  double noise_sigma = 1.0;
  std::size_t subjects = 8;
  std::size_t trials_per_class = 8;
  double trial_seconds = 12.0;
  /// Maximum per-subject rotation angle (radians) of every pattern.
  double rotation = 0.0;
  /// Log-normal sd of per-subject amplitude factors.
  double amplitude_jitter = 0.0;
  double gate_ramp_seconds = 0.04;
  /// "subject": carriers drawn per subject; "stimulus": shared by every subject.
  std::string carrier_sharing = "subject";
  std::uint64_t seed = 1;

  std::size_t n_states() const { return states.size(); }
  std::size_t n_components() const;
  std::size_t trial_samples() const;
  void validate() const;
};

SyntheticSpec two_state_spec();
SyntheticSpec multi_step_transition_spec();

std::string spec_to_json(const SyntheticSpec& s);
SyntheticSpec spec_from_json(const std::string& text);

/// Markov chain with a uniform initial state.
std::vector<int> sample_state_sequence(const Matrix& transition, std::size_t length, std::mt19937_64& rng);

/// White noise bandpassed to (low, high) and scaled to unit RMS.
nd::Tensor carrier(double low, double high, std::size_t length, double fs, std::mt19937_64& rng);

/// State sequence shared by every subject watching the stimulus.
struct Stimulus {
  int id = 0;
  int label = 0;
  std::vector<int> states;
};

std::vector<Stimulus> make_stimuli(const SyntheticSpec& s);

std::uint64_t subject_seed(const SyntheticSpec& s, std::size_t subject);

/// Unrotated component patterns, each M x steps.
std::vector<nd::Tensor> base_patterns(const SyntheticSpec& s);
/// Patterns after the subject's rotation.
std::vector<nd::Tensor> subject_patterns(const SyntheticSpec& s, std::uint64_t seed);

struct TrialTruth {
  std::vector<int> states;
  nd::Tensor gates;     // components x T, binary
  nd::Tensor carriers;  // components x T, only when requested
};

struct SubjectTruth {
  std::vector<nd::Tensor> patterns;
  std::vector<double> amplitudes;
  std::vector<TrialTruth> trials;
};

struct GeneratedSubject {
  io::Subject subject;
  SubjectTruth truth;
};

GeneratedSubject gen_subject(const SyntheticSpec& s, const std::vector<Stimulus>& stimuli,
                             std::uint64_t seed, bool keep_carriers = false);
GeneratedSubject gen_subject(const SyntheticSpec& s, std::uint64_t seed, bool keep_carriers = false);

struct Generated {
  io::Dataset dataset;
  std::vector<SubjectTruth> truth;
};

/// Every subject, generated in parallel with independent seed streams.
Generated generate(const SyntheticSpec& s, std::size_t threads = 0);

/// Writes the dataset, `truth.json` and one gate file per trial under `dir/gates`.
void write_generated(const std::filesystem::path& dir, const SyntheticSpec& s, const Generated& g);

}  // namespace daest::synth
