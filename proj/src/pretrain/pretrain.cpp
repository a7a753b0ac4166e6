#include "daest/pretrain/pretrain.hpp"

#include <algorithm>
#include <array>
#include <numeric>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

#include "json.hpp"

#include "daest/error.hpp"
#include "daest/ndcore/ops.hpp"
#include "daest/ndcore/optim.hpp"
#include "daest/ndcore/parallel.hpp"
#include "daest/ndcore/snapshot.hpp"

namespace daest::pretrain {

using encoder::EncoderParams;
using encoder::Geometry;
using nd::Shape;
using nd::Tape;
using nd::Tensor;
using nd::Var;

std::size_t ProjectorGeometry::output_length(std::size_t T) const {
  if (pool < 1 || kernel < 1 || groups < 1) throw ConfigError("projector: pool, kernel and groups must be >= 1");
  if (T < pool) {
    throw DimensionError("projector: window of " + std::to_string(T) + " samples is shorter than the pool " +
                         std::to_string(pool));
  }
  const std::size_t pooled = (T - pool) / pool + 1;
  const std::size_t shrink = 2 * (kernel - 1);
  if (pooled <= shrink) {
    throw DimensionError("projector: pooled length " + std::to_string(pooled) + " too short for two " +
                         std::to_string(kernel) + "-tap valid convolutions");
  }
  return pooled - shrink;
}

namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.values()) v = u(rng);
  return t;
}

void check_groups(std::size_t K, const ProjectorGeometry& pg) {
  if (pg.groups < 1 || K % pg.groups != 0) {
    throw ConfigError("projector: groups " + std::to_string(pg.groups) + " must divide K = " + std::to_string(K));
  }
}

nd::ConvSpec valid_conv(const ProjectorGeometry& pg) {
  return nd::ConvSpec{pg.kernel, 1, pg.groups, nd::Padding::none};
}

}  // namespace

ProjectorParams ProjectorParams::init(std::size_t K, const ProjectorGeometry& pg, std::uint64_t seed) {
  check_groups(K, pg);
  std::mt19937_64 rng(seed);
  const std::size_t in1 = K / pg.groups, in2 = 2 * K / pg.groups;
  ProjectorParams p;
  p.conv1 = uniform({2 * K, in1, pg.kernel}, std::sqrt(1.0 / static_cast<double>(in1 * pg.kernel)), rng);
  p.conv2 = uniform({4 * K, in2, pg.kernel}, std::sqrt(1.0 / static_cast<double>(in2 * pg.kernel)), rng);
  return p;
}

std::size_t projector_parameter_count(std::size_t K, const ProjectorGeometry& pg) {
  check_groups(K, pg);
  return 2 * K * (K / pg.groups) * pg.kernel + 4 * K * (2 * K / pg.groups) * pg.kernel;
}

ProjectorVars bind(Tape& tape, const ProjectorParams& p, bool trainable) {
  const auto put = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
  return {put(p.conv1), put(p.conv2)};
}

Var projector_forward(Var latent, const ProjectorVars& p, const ProjectorGeometry& pg) {
  const std::size_t K = latent.shape()[0], T = latent.shape()[1];
  const std::size_t out_length = pg.output_length(T);
  Var pooled = nd::moving_average(latent, pg.pool, pg.pool);
  Var h1 = nd::relu(nd::conv_time(pooled, p.conv1, valid_conv(pg)));
  Var h2 = nd::relu(nd::conv_time(h1, p.conv2, valid_conv(pg)));
  return nd::reshape(h2, Shape{1, 4 * K * out_length});
}

Var nt_xent(Var embeddings, std::span<const std::size_t> partner, double tau) {
  if (!(tau > 0.0)) throw ConfigError("nt_xent: temperature must be positive");
  if (embeddings.shape().size() != 2 || partner.size() != embeddings.shape()[0] || partner.size() < 2) {
    throw DimensionError("nt_xent: need one partner per embedding row and at least two rows");
  }
  return nd::softmax_cross_entropy(nd::scale(nd::cosine_similarity_matrix(embeddings), 1.0 / tau), partner,
                                   true);
}

Var nt_xent(Var embeddings, double tau) {
  const std::size_t rows = embeddings.shape().empty() ? 0 : embeddings.shape()[0];
  if (rows % 2 != 0 || rows < 4) {
    throw DimensionError("nt_xent: need an even number of rows and at least two pairs, got " +
                         std::to_string(rows));
  }
  const std::size_t n = rows / 2;
  std::vector<std::size_t> partner(rows);
  for (std::size_t i = 0; i < n; ++i) {
    partner[i] = i + n;
    partner[i + n] = i;
  }
  return nt_xent(embeddings, partner, tau);
}

namespace {

// Trial index of every stimulus id of a subject.
std::map<int, std::size_t> stimulus_index(const io::Subject& s) {
  std::map<int, std::size_t> out;
  for (std::size_t t = 0; t < s.trials.size(); ++t) {
    if (!out.emplace(s.trials[t].stimulus_id, t).second) {
      throw ConfigError("subject " + s.id + " has stimulus " + std::to_string(s.trials[t].stimulus_id) +
                        " more than once");
    }
  }
  return out;
}

}  // namespace

ContrastiveBatch make_batch(const ContrastiveData& data, std::size_t subject_a, std::size_t subject_b,
                            std::mt19937_64& rng) {
  if (subject_a == subject_b || subject_a >= data.subjects.size() || subject_b >= data.subjects.size()) {
    throw ConfigError("make_batch: need two distinct subjects");
  }
  const io::Subject& a = *data.subjects[subject_a];
  const io::Subject& b = *data.subjects[subject_b];
  const auto ia = stimulus_index(a), ib = stimulus_index(b);
  if (ia.size() != ib.size() || !std::equal(ia.begin(), ia.end(), ib.begin(),
                                            [](const auto& x, const auto& y) { return x.first == y.first; })) {
    throw ConfigError("make_batch: subjects " + a.id + " and " + b.id + " watched different stimuli");
  }
  if (ia.size() < 2) throw ConfigError("make_batch: at least two trials are needed for negatives");
  ContrastiveBatch batch;
  batch.subject_a = subject_a;
  batch.subject_b = subject_b;
  std::vector<WindowRef> second;
  for (const auto& [stimulus, ta] : ia) {
    const std::size_t tb = ib.at(stimulus);
    const std::size_t len_a = a.trials[ta].signal.extent(1), len_b = b.trials[tb].signal.extent(1);
    const std::size_t count = std::min(data.plan.count(len_a), data.plan.count(len_b));
    if (count == 0) {
      throw DimensionError("make_batch: stimulus " + std::to_string(stimulus) + " (subjects " + a.id + ", " + b.id +
                           ") is shorter than one window of " + std::to_string(data.plan.window) + " samples");
    }
    const std::size_t w = std::uniform_int_distribution<std::size_t>(0, count - 1)(rng);
    batch.windows.push_back({subject_a, ta, w});
    second.push_back({subject_b, tb, w});
  }
  batch.windows.insert(batch.windows.end(), second.begin(), second.end());
  return batch;
}

Tensor window_of(const ContrastiveData& data, const WindowRef& ref) {
  const Tensor& signal = data.subjects.at(ref.subject)->trials.at(ref.trial).signal;
  const std::size_t begin = data.plan.offset(ref.window);
  return io::slice_columns(signal, begin, begin + data.plan.window);
}

namespace {

Tensor embed(const Tensor& window, const EncoderParams& ep, const ProjectorParams& pp, const Geometry& g,
             const ProjectorGeometry& pg) {
  Tape tape;
  Var latent = tape.constant(encoder::encode(window, ep, g));
  return projector_forward(latent, bind(tape, pp, false), pg).value();
}

Tensor embeddings_of(const ContrastiveData& data, const ContrastiveBatch& batch, const EncoderParams& ep,
                     const ProjectorParams& pp, const Geometry& g, const ProjectorGeometry& pg,
                     std::size_t threads) {
  const std::size_t n = batch.windows.size();
  const std::size_t d = pg.embedding_length(g.K(), g.T);
  Tensor e(Shape{n, d});
  nd::parallel_for(n, [&](std::size_t i) {
    const Tensor row = embed(window_of(data, batch.windows[i]), ep, pp, g, pg);
    std::copy(row.values().begin(), row.values().end(), e.row(i).begin());
  }, threads);
  return e;
}

void add_into(Tensor& acc, const Tensor& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

}  // namespace

double batch_loss(const ContrastiveData& data, const ContrastiveBatch& batch, const EncoderParams& ep,
                  const ProjectorParams& pp, const Geometry& g, const ProjectorGeometry& pg, double tau,
                  std::size_t threads) {
  Tape tape;
  return nt_xent(tape.constant(embeddings_of(data, batch, ep, pp, g, pg, threads)), tau).value().item();
}

BatchGradients batch_gradients(const ContrastiveData& data, const ContrastiveBatch& batch, const EncoderParams& ep,
                               const ProjectorParams& pp, const Geometry& g, const ProjectorGeometry& pg,
                               double tau, std::size_t threads) {
  // Embeddings first, then the loss gradient per embedding row, then one
  // recomputed forward/backward per window seeded with its row.
  const Tensor e = embeddings_of(data, batch, ep, pp, g, pg, threads);
  Tape loss_tape;
  Var ev = loss_tape.parameter(e);
  Var loss = nt_xent(ev, tau);
  loss_tape.backward(loss);
  const Tensor de = loss_tape.grad(ev);

  const std::size_t n = batch.windows.size(), d = e.extent(1);
  std::vector<std::array<Tensor, 6>> per_window(n);
  nd::parallel_for(n, [&](std::size_t i) {
    Tape tape;
    const encoder::EncoderVars evars = encoder::bind(tape, ep, true);
    const ProjectorVars pvars = bind(tape, pp, true);
    Var x = tape.constant(window_of(data, batch.windows[i]));
    Var row = projector_forward(encoder::encoder_forward(x, evars, g).output, pvars, pg);
    Tensor seed(Shape{1, d});
    std::copy(de.row(i).begin(), de.row(i).end(), seed.values().begin());
    tape.backward(row, seed);
    per_window[i] = {tape.grad(evars.w_temp1), tape.grad(evars.w_spat), tape.grad(evars.w_temp2),
                     tape.grad(evars.beta),    tape.grad(pvars.conv1),  tape.grad(pvars.conv2)};
  }, threads);

  BatchGradients out;
  out.loss = loss.value().item();
  out.encoder = {nd::zeros_like(ep.w_temp1), nd::zeros_like(ep.w_spat), nd::zeros_like(ep.w_temp2),
                 nd::zeros_like(ep.beta)};
  out.projector = {nd::zeros_like(pp.conv1), nd::zeros_like(pp.conv2)};
  for (const auto& w : per_window) {
    add_into(out.encoder.w_temp1, w[0]);
    add_into(out.encoder.w_spat, w[1]);
    add_into(out.encoder.w_temp2, w[2]);
    add_into(out.encoder.beta, w[3]);
    add_into(out.projector.conv1, w[4]);
    add_into(out.projector.conv2, w[5]);
  }
  return out;
}

void PretrainConfig::validate() const {
  if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw ConfigError("pretrain: lr and weight_decay must be >= 0");
  if (epochs < 1) throw ConfigError("pretrain: epochs must be >= 1");
  if (patience < 1) throw ConfigError("pretrain: patience must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("pretrain: temperature must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("pretrain: val_fraction must be in [0, 1)");
  if (val_draws < 1) throw ConfigError("pretrain: val_draws must be >= 1");
  if (projector_pool < 1 || projector_kernel < 1) throw ConfigError("pretrain: projector pool and kernel must be >= 1");
}

namespace {

std::vector<Tensor*> param_list(EncoderParams& e, ProjectorParams& p) {
  return {&e.w_temp1, &e.w_spat, &e.w_temp2, &e.beta, &p.conv1, &p.conv2};
}

std::string save_rng(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 load_rng(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw FormatError("pretrain: corrupt random generator state");
  return rng;
}

struct Split {
  std::vector<const io::Subject*> train, val;
};

Split split_subjects(const std::vector<const io::Subject*>& subjects, const std::vector<std::string>& val_ids) {
  Split s;
  for (const io::Subject* subj : subjects) {
    const bool is_val = std::find(val_ids.begin(), val_ids.end(), subj->id) != val_ids.end();
    (is_val ? s.val : s.train).push_back(subj);
  }
  return s;
}

// Fixed pairs and offsets so that successive evaluations are comparable.
double evaluation_loss(const std::vector<const io::Subject*>& subjects, const Geometry& g,
                       const ProjectorGeometry& pg, const PretrainConfig& config, const EncoderParams& ep,
                       const ProjectorParams& pp) {
  const ContrastiveData data{subjects, io::WindowingPlan::half_overlap(g.T)};
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i + 1 < subjects.size(); i += 2) pairs.emplace_back(i, i + 1);
  if (subjects.size() % 2 == 1 && subjects.size() > 1) pairs.emplace_back(subjects.size() - 1, 0);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& [a, b] : pairs) {
    for (std::size_t k = 0; k < config.val_draws; ++k) {
      total += batch_loss(data, make_batch(data, a, b, rng), ep, pp, g, pg, config.temperature, config.threads);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

std::vector<std::pair<std::size_t, std::size_t>> epoch_pairs(std::size_t n, std::size_t wanted, std::mt19937_64& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const std::size_t target = wanted == 0 ? n / 2 : wanted;
  std::vector<std::size_t> order(n);
  while (pairs.size() < target) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i + 1 < n && pairs.size() < target; i += 2) pairs.emplace_back(order[i], order[i + 1]);
  }
  return pairs;
}

void dump_diagnostics(const PretrainConfig& config, const PretrainState& state, const std::string& why) {
  if (config.diagnostics_dir.empty()) return;
  std::filesystem::create_directories(config.diagnostics_dir);
  nd::Container c;
  c.header = nlohmann::json{{"reason", why}, {"epoch", state.epoch}}.dump();
  c.sections = {{"encoder.w_temp1", state.encoder.w_temp1}, {"encoder.w_spat", state.encoder.w_spat},
                {"encoder.w_temp2", state.encoder.w_temp2}, {"encoder.beta", state.encoder.beta},
                {"projector.conv1", state.projector.conv1}, {"projector.conv2", state.projector.conv2}};
  nd::write_container(config.diagnostics_dir / "nonfinite_snapshot.daest", c);
}

bool finite_grads(const BatchGradients& g) {
  return std::isfinite(g.loss) && nd::all_finite(g.encoder.w_temp1) && nd::all_finite(g.encoder.w_spat) &&
         nd::all_finite(g.encoder.w_temp2) && nd::all_finite(g.encoder.beta) &&
         nd::all_finite(g.projector.conv1) && nd::all_finite(g.projector.conv2);
}

}  // namespace

PretrainState init_state(const std::vector<const io::Subject*>& subjects, const Geometry& g,
                         const PretrainConfig& config) {
  config.validate();
  g.validate();
  if (subjects.size() < 2) throw ConfigError("pretrain: at least two training subjects are required");
  const ProjectorGeometry pg = config.projector(g);
  pg.embedding_length(g.K(), g.T);

  PretrainState s;
  std::mt19937_64 rng(config.seed);
  s.encoder = EncoderParams::init(g, rng());
  s.projector = ProjectorParams::init(g.K(), pg, rng());

  const std::size_t n = subjects.size();
  std::size_t n_val = static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(n)));
  if (config.val_fraction > 0.0) n_val = std::max<std::size_t>(n_val, 2);
  if (n_val > 0 && n - n_val < 2) n_val = 0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < n_val; ++i) s.val_subjects.push_back(subjects[order[i]]->id);
  std::sort(s.val_subjects.begin(), s.val_subjects.end());

  for (Tensor* p : param_list(s.encoder, s.projector)) {
    s.adam_m.emplace_back(p->shape(), 0.0);
    s.adam_v.emplace_back(p->shape(), 0.0);
  }
  s.rng_state = save_rng(rng);

  const Split split = split_subjects(subjects, s.val_subjects);
  const auto& eval_set = split.val.empty() ? split.train : split.val;
  const double initial = evaluation_loss(eval_set, g, pg, config, s.encoder, s.projector);
  s.log.push_back({0, std::numeric_limits<double>::quiet_NaN(), initial, config.lr});
  s.best_encoder = s.encoder;
  s.best_projector = s.projector;
  s.best_loss = initial;
  return s;
}

void run(const std::vector<const io::Subject*>& subjects, const Geometry& g, const PretrainConfig& config,
         PretrainState& state, const std::function<void(const PretrainState&)>& on_epoch) {
  config.validate();
  const ProjectorGeometry pg = config.projector(g);
  const Split split = split_subjects(subjects, state.val_subjects);
  if (split.train.size() < 2) throw ConfigError("pretrain: fewer than two subjects left for training");
  const ContrastiveData data{split.train, io::WindowingPlan::half_overlap(g.T)};
  std::mt19937_64 rng = load_rng(state.rng_state);
  nd::Adam adam({config.lr, 0.9, 0.999, 1e-8, config.weight_decay}, state.adam_m, state.adam_v, state.adam_steps);

  while (!state.finished && state.epoch < config.epochs) {
    const std::size_t epoch = state.epoch + 1;
    double train_total = 0.0;
    const auto pairs = epoch_pairs(split.train.size(), config.pairs_per_epoch, rng);
    for (const auto& [a, b] : pairs) {
      const ContrastiveBatch batch = make_batch(data, a, b, rng);
      const BatchGradients grads =
          batch_gradients(data, batch, state.encoder, state.projector, g, pg, config.temperature, config.threads);
      if (!finite_grads(grads)) {
        dump_diagnostics(config, state, "non-finite loss or gradient");
        throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch) + " (subjects " +
                           split.train[a]->id + ", " + split.train[b]->id + ")");
      }
      train_total += grads.loss;
      const std::vector<Tensor> glist{grads.encoder.w_temp1, grads.encoder.w_spat, grads.encoder.w_temp2,
                                      grads.encoder.beta,    grads.projector.conv1, grads.projector.conv2};
      const auto params = param_list(state.encoder, state.projector);
      adam.step(params, glist);
    }
    const double train_loss = train_total / static_cast<double>(pairs.size());
    const double val_loss = split.val.empty()
                                ? train_loss
                                : evaluation_loss(split.val, g, pg, config, state.encoder, state.projector);
    if (!std::isfinite(val_loss)) {
      dump_diagnostics(config, state, "non-finite validation loss");
      throw NumericError("pretrain: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    state.log.push_back({epoch, train_loss, val_loss, config.lr});
    if (val_loss < state.best_loss) {
      state.best_loss = val_loss;
      state.best_epoch = epoch;
      state.best_encoder = state.encoder;
      state.best_projector = state.projector;
      state.since_best = 0;
    } else {
      ++state.since_best;
    }
    state.epoch = epoch;
    state.adam_m = adam.first_moments();
    state.adam_v = adam.second_moments();
    state.adam_steps = adam.steps();
    state.rng_state = save_rng(rng);
    if (state.since_best >= config.patience) state.finished = true;
    if (on_epoch) on_epoch(state);
  }
}

PretrainResult pretrain(const std::vector<const io::Subject*>& subjects, const Geometry& g,
                        const PretrainConfig& config) {
  PretrainState state = init_state(subjects, g, config);
  run(subjects, g, config, state);
  return {state.best_encoder, state.best_projector, state.log, state.best_epoch, state.epoch < config.epochs};
}

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,train_loss,val_loss,lr\n";
  for (const EpochLog& e : log) {
    os << e.epoch << ',';
    if (std::isfinite(e.train_loss)) os << e.train_loss;
    os << ',' << e.val_loss << ',' << e.lr << '\n';
  }
  nd::write_file(path, os.str());
}

namespace {

using nlohmann::json;

json log_to_json(const std::vector<EpochLog>& log) {
  json arr = json::array();
  for (const EpochLog& e : log) {
    arr.push_back({{"epoch", e.epoch},
                   {"train_loss", std::isfinite(e.train_loss) ? json(e.train_loss) : json()},
                   {"val_loss", e.val_loss},
                   {"lr", e.lr}});
  }
  return arr;
}

std::vector<EpochLog> log_from_json(const json& arr) {
  std::vector<EpochLog> log;
  for (const json& e : arr) {
    log.push_back({e.at("epoch").get<std::size_t>(),
                   e.at("train_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                : e.at("train_loss").get<double>(),
                   e.at("val_loss").get<double>(), e.at("lr").get<double>()});
  }
  return log;
}

void put_params(nd::Container& c, const std::string& prefix, const EncoderParams& e, const ProjectorParams& p) {
  c.sections.push_back({prefix + "encoder.w_temp1", e.w_temp1});
  c.sections.push_back({prefix + "encoder.w_spat", e.w_spat});
  c.sections.push_back({prefix + "encoder.w_temp2", e.w_temp2});
  c.sections.push_back({prefix + "encoder.beta", e.beta});
  c.sections.push_back({prefix + "projector.conv1", p.conv1});
  c.sections.push_back({prefix + "projector.conv2", p.conv2});
}

void get_params(const nd::Container& c, const std::string& prefix, EncoderParams& e, ProjectorParams& p) {
  e.w_temp1 = c.get(prefix + "encoder.w_temp1");
  e.w_spat = c.get(prefix + "encoder.w_spat");
  e.w_temp2 = c.get(prefix + "encoder.w_temp2");
  e.beta = c.get(prefix + "encoder.beta");
  p.conv1 = c.get(prefix + "projector.conv1");
  p.conv2 = c.get(prefix + "projector.conv2");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PretrainState& state, const std::string& tag) {
  nd::Container c;
  c.header = json{{"kind", "pretrain-checkpoint"},
                  {"tag", tag},
                  {"epoch", state.epoch},
                  {"adam_steps", state.adam_steps},
                  {"rng_state", state.rng_state},
                  {"best_loss", state.best_loss},
                  {"best_epoch", state.best_epoch},
                  {"since_best", state.since_best},
                  {"finished", state.finished},
                  {"val_subjects", state.val_subjects},
                  {"moments", state.adam_m.size()},
                  {"log", log_to_json(state.log)}}
                 .dump();
  put_params(c, "", state.encoder, state.projector);
  put_params(c, "best.", state.best_encoder, state.best_projector);
  for (std::size_t i = 0; i < state.adam_m.size(); ++i) {
    c.sections.push_back({"adam.m." + std::to_string(i), state.adam_m[i]});
    c.sections.push_back({"adam.v." + std::to_string(i), state.adam_v[i]});
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  nd::write_container(tmp, c);
  std::filesystem::rename(tmp, path);
}

PretrainState load_checkpoint(const std::filesystem::path& path, const std::string& tag) {
  const nd::Container c = nd::read_container(path);
  PretrainState s;
  try {
    const json h = json::parse(c.header);
    if (h.at("kind").get<std::string>() != "pretrain-checkpoint") throw FormatError(path.string() + ": not a checkpoint");
    if (h.at("tag").get<std::string>() != tag) {
      throw ConfigError(path.string() + ": checkpoint was written for a different configuration");
    }
    s.epoch = h.at("epoch").get<std::size_t>();
    s.adam_steps = h.at("adam_steps").get<std::size_t>();
    s.rng_state = h.at("rng_state").get<std::string>();
    s.best_loss = h.at("best_loss").get<double>();
    s.best_epoch = h.at("best_epoch").get<std::size_t>();
    s.since_best = h.at("since_best").get<std::size_t>();
    s.finished = h.at("finished").get<bool>();
    s.val_subjects = h.at("val_subjects").get<std::vector<std::string>>();
    s.log = log_from_json(h.at("log"));
    const std::size_t moments = h.at("moments").get<std::size_t>();
    for (std::size_t i = 0; i < moments; ++i) {
      s.adam_m.push_back(c.get("adam.m." + std::to_string(i)));
      s.adam_v.push_back(c.get("adam.v." + std::to_string(i)));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header: " + e.what());
  }
  get_params(c, "", s.encoder, s.projector);
  get_params(c, "best.", s.best_encoder, s.best_projector);
  return s;
}

}  // namespace daest::pretrain
