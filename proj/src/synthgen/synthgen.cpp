#include "daest/synthgen/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"

#include "daest/dataio/signal.hpp"
#include "daest/error.hpp"
#include "daest/ndcore/parallel.hpp"
#include "daest/ndcore/snapshot.hpp"

namespace daest::synth {
namespace {

using json = nlohmann::json;

std::mt19937_64 stream(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c),
                    static_cast<std::uint32_t>(c >> 32)};
  return std::mt19937_64(seq);
}

void check_matrix(const Matrix& t, std::size_t n, const std::string& what) {
  if (t.size() != n) throw ConfigError(what + ": expected " + std::to_string(n) + " rows");
  for (const auto& row : t) {
    if (row.size() != n) throw ConfigError(what + ": row length mismatch");
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0)) throw ConfigError(what + ": negative or NaN probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError(what + ": row does not sum to 1");
  }
}

struct Flat {
  const ComponentSpec* spec;
  int state;
};

std::vector<Flat> flatten(const SyntheticSpec& s) {
  std::vector<Flat> out;
  for (std::size_t i = 0; i < s.states.size(); ++i) {
    for (const auto& c : s.states[i].components) out.push_back({&c, static_cast<int>(i)});
  }
  return out;
}

std::vector<double> hann_ramp(double seconds, double fs) {
  const auto n = static_cast<std::size_t>(std::max(1.0, std::round(seconds * fs)));
  std::vector<double> w(n);
  for (std::size_t j = 0; j < n; ++j) {
    w[j] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(j + 1) / static_cast<double>(n + 1));
  }
  return w;
}

// Normalized centered convolution; edge windows renormalize over in-bounds taps.
std::vector<double> smooth_gate(const std::vector<double>& g, const std::vector<double>& w) {
  if (w.size() == 1) return g;
  const auto n = static_cast<std::ptrdiff_t>(g.size());
  const auto half = static_cast<std::ptrdiff_t>(w.size() / 2);
  std::vector<double> out(g.size());
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    double acc = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const std::ptrdiff_t u = t + static_cast<std::ptrdiff_t>(j) - half;
      if (u < 0 || u >= n) continue;
      acc += w[j] * g[static_cast<std::size_t>(u)];
      norm += w[j];
    }
    out[static_cast<std::size_t>(t)] = acc / norm;
  }
  return out;
}

nd::Tensor rotate(const nd::Tensor& p, const std::vector<double>& u, const std::vector<double>& v, double angle) {
  const std::size_t M = p.extent(0), steps = p.extent(1);
  nd::Tensor out = p;
  const double c = std::cos(angle) - 1.0, s = std::sin(angle);
  for (std::size_t l = 0; l < steps; ++l) {
    double pu = 0.0, pv = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      pu += u[m] * p.at(m, l);
      pv += v[m] * p.at(m, l);
    }
    for (std::size_t m = 0; m < M; ++m) out.at(m, l) += c * (u[m] * pu + v[m] * pv) + s * (v[m] * pu - u[m] * pv);
  }
  return out;
}

json matrix_json(const Matrix& m) { return json(m); }

json tensor_rows(const nd::Tensor& t) {
  json rows = json::array();
  for (std::size_t i = 0; i < t.extent(0); ++i) {
    const auto r = t.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

}  // namespace

std::size_t SyntheticSpec::n_components() const {
  std::size_t n = 0;
  for (const auto& st : states) n += st.components.size();
  return n;
}

std::size_t SyntheticSpec::trial_samples() const {
  return static_cast<std::size_t>(std::llround(trial_seconds * fs));
}

void SyntheticSpec::validate() const {
  if (M == 0) throw ConfigError("synthetic spec: M must be positive");
  if (!(fs > 0.0)) throw ConfigError("synthetic spec: fs must be positive");
  if (states.empty()) throw ConfigError("synthetic spec: no states");
  if (class_map.empty()) throw ConfigError("synthetic spec: empty class map");
  if (class_map.size() > states.size()) throw ConfigError("synthetic spec: more classes than states");
  if (class_transitions.empty()) {
    check_matrix(transition, states.size(), "transition");
  } else {
    if (class_transitions.size() != class_map.size()) {
      throw ConfigError("synthetic spec: one class transition matrix per class required");
    }
    for (const auto& t : class_transitions) check_matrix(t, states.size(), "class transition");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("synthetic spec: noise_sigma must be >= 0");
  if (subjects == 0 || trials_per_class == 0) throw ConfigError("synthetic spec: need subjects and trials");
  if (trial_samples() == 0) throw ConfigError("synthetic spec: trial shorter than one sample");
  if (!(rotation >= 0.0) || !(amplitude_jitter >= 0.0) || !(gate_ramp_seconds >= 0.0)) {
    throw ConfigError("synthetic spec: rotation, jitter and ramp must be >= 0");
  }
  if (carrier_sharing != "subject" && carrier_sharing != "stimulus") {
    throw ConfigError("synthetic spec: carrier_sharing must be subject or stimulus");
  }
  std::size_t k = 0;
  for (const auto& st : states) {
    for (const auto& c : st.components) {
      const auto& p = c.pattern;
      if (!(c.low > 0.0) || !(c.high > c.low) || !(c.high < fs / 2.0)) {
        throw ConfigError("synthetic spec: band must satisfy 0 < low < high < fs/2");
      }
      if (!(c.amplitude > 0.0)) throw ConfigError("synthetic spec: amplitude must be positive");
      if (p.steps == 0 || p.dilation == 0) throw ConfigError("synthetic spec: steps and dilation must be >= 1");
      if (p.kind == "point") {
        if (p.channel >= M) throw ConfigError("synthetic spec: point channel out of range");
      } else if (p.kind == "explicit") {
        if (p.values.size() != M * p.steps) throw ConfigError("synthetic spec: explicit pattern needs M*steps values");
      } else if (p.kind == "reverse_of") {
        if (p.source >= k) throw ConfigError("synthetic spec: reverse_of must name an earlier component");
      } else if (p.kind != "random") {
        throw ConfigError("synthetic spec: unknown pattern kind '" + p.kind + "'");
      }
      ++k;
    }
  }
}

SyntheticSpec two_state_spec() {
  SyntheticSpec s;
  s.name = "two_state";
  s.M = 8;
  s.fs = 125.0;
  s.transition = {{0.99, 0.01}, {0.01, 0.99}};
  s.class_transitions = {{{0.998, 0.002}, {0.03, 0.97}}, {{0.97, 0.03}, {0.002, 0.998}}};
  ComponentSpec theta;
  theta.low = 4.0;
  theta.high = 8.0;
  theta.amplitude = 15.0;
  ComponentSpec beta = theta;
  beta.low = 14.0;
  beta.high = 22.0;
  s.states = {StateSpec{{theta}}, StateSpec{{beta}}};
  s.class_map = {"state0", "state1"};
  s.noise_sigma = 5.0;
  s.subjects = 8;
  s.trials_per_class = 8;
  s.trial_seconds = 12.0;
  s.rotation = 0.3;
  s.amplitude_jitter = 0.1;
  return s;
}

SyntheticSpec multi_step_transition_spec() {
  SyntheticSpec s = two_state_spec();
  s.name = "multi_step_transition";
  ComponentSpec forward;
  forward.pattern.steps = 2;
  forward.pattern.dilation = 12;
  forward.low = 8.0;
  forward.high = 13.0;
  forward.amplitude = 15.0;
  ComponentSpec backward = forward;
  backward.pattern.kind = "reverse_of";
  backward.pattern.source = 0;
  s.states = {StateSpec{{forward}}, StateSpec{{backward}}};
  return s;
}

std::string spec_to_json(const SyntheticSpec& s) {
  json states = json::array();
  for (const auto& st : s.states) {
    json comps = json::array();
    for (const auto& c : st.components) {
      json p = {{"kind", c.pattern.kind}, {"steps", c.pattern.steps}, {"dilation", c.pattern.dilation}};
      if (c.pattern.kind == "point") p["channel"] = c.pattern.channel;
      if (c.pattern.kind == "explicit") p["values"] = c.pattern.values;
      if (c.pattern.kind == "reverse_of") p["source"] = c.pattern.source;
      comps.push_back({{"pattern", p}, {"band", {c.low, c.high}}, {"amplitude", c.amplitude}});
    }
    states.push_back({{"components", comps}});
  }
  json j = {{"name", s.name},
            {"M", s.M},
            {"fs", s.fs},
            {"transition", matrix_json(s.transition)},
            {"class_transitions", s.class_transitions},
            {"states", states},
            {"class_map", s.class_map},
            {"noise_sigma", s.noise_sigma},
            {"subjects", s.subjects},
            {"trials_per_class", s.trials_per_class},
            {"trial_seconds", s.trial_seconds},
            {"rotation", s.rotation},
            {"amplitude_jitter", s.amplitude_jitter},
            {"gate_ramp_seconds", s.gate_ramp_seconds},
            {"carrier_sharing", s.carrier_sharing},
            {"seed", s.seed}};
  return j.dump(2);
}

SyntheticSpec spec_from_json(const std::string& text) {
  SyntheticSpec s;
  try {
    const json j = json::parse(text);
    if (j.contains("preset")) {
      const std::string preset = j.at("preset");
      if (preset == "two_state") {
        s = two_state_spec();
      } else if (preset == "multi_step_transition") {
        s = multi_step_transition_spec();
      } else {
        throw ConfigError("unknown synthetic preset '" + preset + "'");
      }
    }
    s.name = j.value("name", s.name);
    s.M = j.value("M", s.M);
    s.fs = j.value("fs", s.fs);
    if (j.contains("transition")) s.transition = j.at("transition").get<Matrix>();
    if (j.contains("class_transitions")) s.class_transitions = j.at("class_transitions").get<std::vector<Matrix>>();
    if (j.contains("states")) {
      s.states.clear();
      for (const auto& st : j.at("states")) {
        StateSpec state;
        for (const auto& c : st.at("components")) {
          ComponentSpec comp;
          const auto band = c.at("band").get<std::vector<double>>();
          if (band.size() != 2) throw ConfigError("synthetic spec: band needs two values");
          comp.low = band[0];
          comp.high = band[1];
          comp.amplitude = c.value("amplitude", comp.amplitude);
          if (c.contains("pattern")) {
            const auto& p = c.at("pattern");
            comp.pattern.kind = p.value("kind", comp.pattern.kind);
            comp.pattern.steps = p.value("steps", comp.pattern.steps);
            comp.pattern.dilation = p.value("dilation", comp.pattern.dilation);
            comp.pattern.channel = p.value("channel", comp.pattern.channel);
            comp.pattern.source = p.value("source", comp.pattern.source);
            if (p.contains("values")) comp.pattern.values = p.at("values").get<std::vector<double>>();
          }
          state.components.push_back(comp);
        }
        s.states.push_back(state);
      }
    }
    if (j.contains("class_map")) s.class_map = j.at("class_map").get<std::vector<std::string>>();
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.subjects = j.value("subjects", s.subjects);
    s.trials_per_class = j.value("trials_per_class", s.trials_per_class);
    s.trial_seconds = j.value("trial_seconds", s.trial_seconds);
    s.rotation = j.value("rotation", s.rotation);
    s.amplitude_jitter = j.value("amplitude_jitter", s.amplitude_jitter);
    s.gate_ramp_seconds = j.value("gate_ramp_seconds", s.gate_ramp_seconds);
    s.carrier_sharing = j.value("carrier_sharing", s.carrier_sharing);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<int> sample_state_sequence(const Matrix& transition, std::size_t length, std::mt19937_64& rng) {
  check_matrix(transition, transition.size(), "transition");
  if (transition.empty()) throw ConfigError("transition: empty matrix");
  std::vector<std::discrete_distribution<int>> rows;
  for (const auto& r : transition) rows.emplace_back(r.begin(), r.end());
  std::vector<int> out(length);
  if (length == 0) return out;
  std::uniform_int_distribution<int> init(0, static_cast<int>(transition.size()) - 1);
  out[0] = init(rng);
  for (std::size_t t = 1; t < length; ++t) out[t] = rows[static_cast<std::size_t>(out[t - 1])](rng);
  return out;
}

nd::Tensor carrier(double low, double high, std::size_t length, double fs, std::mt19937_64& rng) {
  const auto margin = static_cast<std::size_t>(std::ceil(fs));
  nd::Tensor white(nd::Shape{1, length + 2 * margin});
  std::normal_distribution<double> n01;
  for (double& v : white.values()) v = n01(rng);
  const nd::Tensor band = io::bandpass(white, low, high, fs);
  nd::Tensor out(nd::Shape{1, length});
  double ss = 0.0;
  for (std::size_t t = 0; t < length; ++t) {
    out[t] = band[t + margin];
    ss += out[t] * out[t];
  }
  const double rms = std::sqrt(ss / static_cast<double>(length));
  if (rms > 0.0) {
    for (double& v : out.values()) v /= rms;
  }
  return out;
}

std::vector<Stimulus> make_stimuli(const SyntheticSpec& s) {
  s.validate();
  auto rng = stream(s.seed, 0x57171);
  const std::size_t C = s.class_map.size(), T = s.trial_samples();
  std::vector<Stimulus> out;
  for (std::size_t i = 0; i < s.trials_per_class; ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      const Matrix& chain = s.class_transitions.empty() ? s.transition : s.class_transitions[c];
      Stimulus st;
      st.id = static_cast<int>(out.size());
      st.label = static_cast<int>(c);
      for (int attempt = 0;; ++attempt) {
        if (attempt == 10000) throw ConfigError("synthetic spec: class " + std::to_string(c) + " is unreachable");
        st.states = sample_state_sequence(chain, T, rng);
        std::vector<std::size_t> occupancy(s.n_states(), 0);
        for (int v : st.states) ++occupancy[static_cast<std::size_t>(v)];
        const auto dominant = std::max_element(occupancy.begin(), occupancy.end()) - occupancy.begin();
        if (static_cast<std::size_t>(dominant) == c) break;
      }
      out.push_back(std::move(st));
    }
  }
  return out;
}

std::uint64_t subject_seed(const SyntheticSpec& s, std::size_t subject) {
  auto rng = stream(s.seed, 0x5eed, subject);
  return rng();
}

std::vector<nd::Tensor> base_patterns(const SyntheticSpec& s) {
  auto rng = stream(s.seed, 0xba5e);
  std::normal_distribution<double> n01;
  std::vector<nd::Tensor> out;
  for (const auto& f : flatten(s)) {
    const auto& p = f.spec->pattern;
    nd::Tensor pat;
    if (p.kind == "reverse_of") {
      const nd::Tensor& src = out.at(p.source);
      const std::size_t steps = src.extent(1);
      pat = nd::Tensor(src.shape());
      for (std::size_t m = 0; m < s.M; ++m) {
        for (std::size_t l = 0; l < steps; ++l) pat.at(m, l) = src.at(m, steps - 1 - l);
      }
    } else if (p.kind == "point") {
      pat = nd::Tensor(nd::Shape{s.M, p.steps});
      for (std::size_t l = 0; l < p.steps; ++l) pat.at(p.channel, l) = 1.0;
    } else if (p.kind == "explicit") {
      pat = nd::Tensor(nd::Shape{s.M, p.steps}, p.values);
    } else {
      pat = nd::Tensor(nd::Shape{s.M, p.steps});
      for (std::size_t l = 0; l < p.steps; ++l) {
        double norm = 0.0;
        for (std::size_t m = 0; m < s.M; ++m) {
          pat.at(m, l) = n01(rng);
          norm += pat.at(m, l) * pat.at(m, l);
        }
        for (std::size_t m = 0; m < s.M; ++m) pat.at(m, l) /= std::sqrt(norm);
      }
    }
    out.push_back(std::move(pat));
  }
  return out;
}

std::vector<nd::Tensor> subject_patterns(const SyntheticSpec& s, std::uint64_t seed) {
  std::vector<nd::Tensor> pats = base_patterns(s);
  if (s.rotation == 0.0 || s.M < 2) return pats;
  auto rng = stream(seed, 0x0707);
  std::normal_distribution<double> n01;
  std::vector<double> u(s.M), v(s.M);
  for (double& x : u) x = n01(rng);
  for (double& x : v) x = n01(rng);
  double uu = 0.0;
  for (double x : u) uu += x * x;
  for (double& x : u) x /= std::sqrt(uu);
  double uv = 0.0;
  for (std::size_t m = 0; m < s.M; ++m) uv += u[m] * v[m];
  double vv = 0.0;
  for (std::size_t m = 0; m < s.M; ++m) {
    v[m] -= uv * u[m];
    vv += v[m] * v[m];
  }
  for (double& x : v) x /= std::sqrt(vv);
  const double angle = std::uniform_real_distribution<double>(-s.rotation, s.rotation)(rng);
  for (auto& p : pats) p = rotate(p, u, v, angle);
  return pats;
}

GeneratedSubject gen_subject(const SyntheticSpec& s, const std::vector<Stimulus>& stimuli, std::uint64_t seed,
                             bool keep_carriers) {
  s.validate();
  const auto comps = flatten(s);
  const std::size_t K = comps.size(), T = s.trial_samples();

  GeneratedSubject out;
  out.truth.patterns = subject_patterns(s, seed);
  auto rng = stream(seed, 0xa3a3);
  std::normal_distribution<double> n01;
  std::vector<double> jitter;
  for (const auto& f : comps) {
    jitter.push_back(std::exp(s.amplitude_jitter * n01(rng)));
    // A reversed transition shares its source's jitter.
    if (f.spec->pattern.kind == "reverse_of") jitter.back() = jitter.at(f.spec->pattern.source);
    out.truth.amplitudes.push_back(f.spec->amplitude * jitter.back());
  }
  const auto ramp = hann_ramp(s.gate_ramp_seconds, s.fs);

  for (const auto& stim : stimuli) {
    TrialTruth truth;
    truth.states = stim.states;
    truth.gates = nd::Tensor(nd::Shape{K, T});
    if (keep_carriers) truth.carriers = nd::Tensor(nd::Shape{K, T});
    nd::Tensor x(nd::Shape{s.M, T});
    auto shared = stream(s.seed, 0xca77, static_cast<std::uint64_t>(stim.id));
    for (std::size_t k = 0; k < K; ++k) {
      const auto& spec = *comps[k].spec;
      const nd::Tensor& pat = out.truth.patterns[k];
      const std::size_t steps = pat.extent(1), d = spec.pattern.dilation;
      const std::size_t lag = (steps - 1) * d;
      const nd::Tensor c = carrier(spec.low, spec.high, T + lag, s.fs,
                                   s.carrier_sharing == "stimulus" ? shared : rng);
      std::vector<double> gate(T);
      for (std::size_t t = 0; t < T; ++t) {
        gate[t] = stim.states[t] == comps[k].state ? 1.0 : 0.0;
        truth.gates.at(k, t) = gate[t];
        if (keep_carriers) truth.carriers.at(k, t) = c[t + lag];
      }
      const auto g = smooth_gate(gate, ramp);
      const double a = out.truth.amplitudes[k];
      for (std::size_t t = 0; t < T; ++t) {
        if (g[t] == 0.0) continue;
        for (std::size_t l = 0; l < steps; ++l) {
          const double v = a * g[t] * c[t + lag - l * d];
          for (std::size_t m = 0; m < s.M; ++m) x.at(m, t) += pat.at(m, l) * v;
        }
      }
    }
    if (s.noise_sigma > 0.0) {
      for (double& v : x.values()) v += s.noise_sigma * n01(rng);
    }
    out.subject.trials.push_back(io::Trial{stim.label, stim.id, std::move(x)});
    out.truth.trials.push_back(std::move(truth));
  }
  return out;
}

GeneratedSubject gen_subject(const SyntheticSpec& s, std::uint64_t seed, bool keep_carriers) {
  return gen_subject(s, make_stimuli(s), seed, keep_carriers);
}

Generated generate(const SyntheticSpec& s, std::size_t threads) {
  const auto stimuli = make_stimuli(s);
  std::vector<GeneratedSubject> subjects(s.subjects);
  nd::parallel_for(
      s.subjects, [&](std::size_t i) { subjects[i] = gen_subject(s, stimuli, subject_seed(s, i)); }, threads);
  Generated g;
  g.dataset.name = s.name;
  g.dataset.fs = s.fs;
  for (std::size_t m = 0; m < s.M; ++m) g.dataset.channels.push_back("ch" + std::to_string(m));
  g.dataset.class_map = s.class_map;
  for (std::size_t i = 0; i < s.subjects; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "s%02zu", i);
    subjects[i].subject.id = id;
    g.dataset.subjects.push_back(std::move(subjects[i].subject));
    g.truth.push_back(std::move(subjects[i].truth));
  }
  return g;
}

void write_generated(const std::filesystem::path& dir, const SyntheticSpec& s, const Generated& g) {
  io::save_dataset(dir, g.dataset);
  std::error_code ec;
  std::filesystem::create_directories(dir / "gates", ec);
  if (ec) throw IoError("cannot create " + (dir / "gates").string() + ": " + ec.message());
  json subjects = json::array();
  for (std::size_t i = 0; i < g.truth.size(); ++i) {
    const auto& truth = g.truth[i];
    const auto& subject = g.dataset.subjects[i];
    json patterns = json::array();
    for (const auto& p : truth.patterns) patterns.push_back(tensor_rows(p));
    json trials = json::array();
    for (std::size_t t = 0; t < truth.trials.size(); ++t) {
      const std::string file = "gates/" + subject.id + "_t" + std::to_string(t) + ".f32";
      io::write_f32_matrix(dir / file, truth.trials[t].gates);
      trials.push_back({{"stimulus_id", subject.trials[t].stimulus_id},
                        {"label", subject.trials[t].label},
                        {"gates", file},
                        {"states", truth.trials[t].states}});
    }
    subjects.push_back({{"id", subject.id},
                        {"seed", subject_seed(s, i)},
                        {"amplitudes", truth.amplitudes},
                        {"patterns", patterns},
                        {"trials", trials}});
  }
  const json j = {{"spec", json::parse(spec_to_json(s))}, {"subjects", subjects}};
  nd::write_file(dir / "truth.json", j.dump());
}

}  // namespace daest::synth
