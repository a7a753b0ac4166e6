#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "daest/app/config.hpp"
#include "daest/app/harness.hpp"
#include "daest/bundle/bundle.hpp"
#include "daest/dataio/dataset.hpp"
#include "daest/error.hpp"
#include "daest/interpret/interpret.hpp"
#include "daest/ndcore/snapshot.hpp"
#include "daest/synthgen/synthgen.hpp"
#include "plot.hpp"

namespace fs = std::filesystem;
using namespace daest;

namespace {

fs::path manifest_path(const fs::path& p) { return fs::is_directory(p) ? p / "manifest.json" : p; }

app::RunConfig run_config(const std::string& path, const std::vector<std::string>& sets) {
  return app::load_config(path, sets);
}

io::Dataset load_prepared(const app::RunConfig& c) {
  if (c.dataset.empty()) throw ConfigError("config has no dataset");
  return app::prepare_dataset(io::load_dataset(manifest_path(c.dataset)), c);
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& part : split(s)) {
    const auto dots = part.find("..");
    try {
      if (dots == std::string::npos) {
        out.push_back(std::stoull(part));
      } else {
        const auto lo = std::stoull(part.substr(0, dots)), hi = std::stoull(part.substr(dots + 2));
        for (auto v = lo; v <= hi; ++v) out.push_back(v);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad seed list '" + s + "'");
    }
  }
  return out;
}

void write_matrix_csv(const fs::path& path, const nd::Tensor& m, const std::vector<std::string>& row_names,
                      const std::string& col_prefix) {
  std::ostringstream os;
  os.precision(10);
  os << "row";
  for (std::size_t j = 0; j < m.extent(1); ++j) os << ',' << col_prefix << j;
  os << '\n';
  for (std::size_t i = 0; i < m.extent(0); ++i) {
    os << (i < row_names.size() ? row_names[i] : std::to_string(i));
    for (std::size_t j = 0; j < m.extent(1); ++j) {
      os << ',';
      if (std::isfinite(m.at(i, j))) os << m.at(i, j);
    }
    os << '\n';
  }
  nd::write_file(path, os.str());
}

int cmd_synth(const std::string& spec_path, const std::string& preset, const fs::path& out) {
  std::string text = spec_path.empty() ? nlohmann::json{{"preset", preset}}.dump() : nd::read_file(spec_path);
  const synth::SyntheticSpec s = synth::spec_from_json(text);
  const synth::Generated g = synth::generate(s);
  synth::write_generated(out, s, g);
  std::printf("wrote %zu subjects x %zu trials to %s\n", g.dataset.subjects.size(),
              g.dataset.subjects.empty() ? std::size_t{0} : g.dataset.subjects[0].trials.size(), out.string().c_str());
  return 0;
}

int cmd_convert(const fs::path& root, double fsr, std::size_t channels, const std::string& classes,
                const fs::path& out) {
  const io::DatasetManifest m = io::convert_directory(root, fsr, channels, split(classes));
  const fs::path dest = out.empty() ? root / "manifest.json" : out;
  io::write_manifest(dest, m);
  std::size_t trials = 0;
  for (const auto& s : m.subjects) trials += s.trials.size();
  std::printf("wrote %s (%zu subjects, %zu trials)\n", dest.string().c_str(), m.subjects.size(), trials);
  return 0;
}

int cmd_pretrain(const app::RunConfig& c, bool resume) {
  const io::Dataset d = load_prepared(c);
  if (c.geometry.M != d.channel_count()) throw ConfigError("geometry.M differs from the dataset channel count");
  fs::create_directories(c.output_dir);
  std::vector<const io::Subject*> subjects;
  for (const auto& s : d.subjects) subjects.push_back(&s);
  pretrain::PretrainConfig pc = c.pretrain;
  pc.seed = c.seed;
  pc.threads = c.threads;
  const std::string tag = app::config_hash(c);
  app::RunConfig open_ended = c;
  open_ended.pretrain.epochs = 0;
  const std::string resume_tag = app::config_hash(open_ended);
  const fs::path ckpt = c.output_dir / "pretrain.ckpt";
  pretrain::PretrainState state = resume && fs::exists(ckpt) ? pretrain::load_checkpoint(ckpt, resume_tag)
                                                             : pretrain::init_state(subjects, c.geometry, pc);
  if (resume) std::printf("resuming after epoch %zu\n", state.epoch);
  pretrain::run(subjects, c.geometry, pc, state, [&](const pretrain::PretrainState& s) {
    pretrain::save_checkpoint(ckpt, s, resume_tag);
    const auto& e = s.log.back();
    std::printf("epoch %zu train %.6f val %.6f\n", e.epoch, e.train_loss, e.val_loss);
    std::fflush(stdout);
  });
  pretrain::write_log_csv(c.output_dir / "pretrain_log.csv", state.log);

  bundle::ModelBundle b;
  b.geometry = c.geometry;
  b.encoder = state.best_encoder;
  b.projector = state.best_projector;
  b.projector_geometry = pc.projector(c.geometry);
  b.class_map = d.class_map;
  b.norm_strategy = c.features.norm;
  b.smooth = c.features.smooth;
  b.lds = c.features.lds;
  b.config_hash = tag;
  b.log_digest = bundle::digest(nd::read_file(c.output_dir / "pretrain_log.csv"));
  bundle::save(b, c.output_dir / "pretrain.daest");
  std::printf("best epoch %zu, wrote %s\n", state.best_epoch, (c.output_dir / "pretrain.daest").string().c_str());
  return 0;
}

int cmd_train_eval(app::RunConfig c, std::size_t parallel_folds) {
  if (parallel_folds > 0) c.parallel_folds = parallel_folds;
  const io::Dataset d = load_prepared(c);
  fs::create_directories(c.output_dir);
  const app::EvalReport r = app::train_eval(d, c, [](const app::FoldResult& f) {
    std::printf("fold %zu accuracy %.4f trial %.4f\n", f.fold, f.accuracy, f.trial_accuracy);
    std::fflush(stdout);
  });
  for (const auto& f : r.folds) {
    char name[32];
    std::snprintf(name, sizeof name, "fold_%02zu.daest", f.fold);
    bundle::save(f.model, c.output_dir / name);
  }
  nd::write_file(c.output_dir / "eval_report.json", r.to_json());
  std::printf("accuracy %.4f +- %.4f (subjects), %.4f +- %.4f (folds); trial %.4f; %.1f s\n",
              r.subject_accuracy.mean, r.subject_accuracy.std, r.fold_accuracy.mean, r.fold_accuracy.std,
              r.subject_trial_accuracy.mean, r.seconds);
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& sets, const std::string& param,
              const std::string& values, const std::string& seeds, const std::string& synth_spec) {
  std::string text = config_path.empty() ? std::string("{}") : nd::read_file(config_path);
  for (const auto& s : sets) text = app::apply_override(text, s);
  const app::RunConfig c = app::config_from_json(text);
  app::DataSource source;
  if (!synth_spec.empty()) {
    const synth::SyntheticSpec base = synth::spec_from_json(nd::read_file(synth_spec));
    source = [base](std::uint64_t seed) {
      synth::SyntheticSpec s = base;
      s.seed = seed;
      return synth::generate(s).dataset;
    };
  } else {
    const io::Dataset d = io::load_dataset(manifest_path(c.dataset));
    source = [d](std::uint64_t) { return d; };
  }
  const app::SweepResult r = app::sweep(source, text, param, split(values), parse_seeds(seeds));
  fs::create_directories(c.output_dir);
  nd::write_file(c.output_dir / ("sweep_" + param + ".csv"), r.to_csv());
  nd::write_file(c.output_dir / ("sweep_" + param + "_seeds.csv"), r.per_seed_csv());
  std::fputs(r.to_csv().c_str(), stdout);
  return 0;
}

int cmd_interpret(const fs::path& bundle_path, const fs::path& data, const std::string& config_path,
                  const std::vector<std::string>& sets, const fs::path& out, const std::string& subjects_arg,
                  std::size_t steps, double tol, bool plots) {
  const bundle::ModelBundle b = bundle::load(bundle_path);
  if (!b.classifier) throw ConfigError("bundle has no classifier; interpret needs a trained fold bundle");
  io::Dataset d = io::load_dataset(manifest_path(data));
  if (!config_path.empty() || !sets.empty()) d = app::prepare_dataset(d, app::load_config(config_path, sets));
  std::vector<std::size_t> subjects;
  if (subjects_arg.empty()) {
    for (std::size_t i = 0; i < d.subjects.size(); ++i) subjects.push_back(i);
  } else {
    for (const auto& id : split(subjects_arg)) {
      std::size_t i = 0;
      while (i < d.subjects.size() && d.subjects[i].id != id) ++i;
      if (i == d.subjects.size()) throw ConfigError("no subject '" + id + "' in the dataset");
      subjects.push_back(i);
    }
  }
  interpret::AnalysisOptions o;
  o.steps = steps;
  o.features.norm = b.norm_strategy;
  o.features.smooth = b.smooth;
  o.features.lds = b.lds;
  o.excerpt_subject = subjects.front();
  const interpret::Analysis a = interpret::analyze(d, subjects, b.geometry, b.encoder, *b.classifier, o);
  if (!(a.attributions.completeness_error <= tol)) {
    throw NumericError("integrated gradients completeness error " + std::to_string(a.attributions.completeness_error) +
                       " exceeds " + std::to_string(tol));
  }

  fs::create_directories(out);
  const auto& names = b.class_map.empty() ? d.class_map : b.class_map;
  write_matrix_csv(out / "attributions.csv", a.attributions.values, names, "dim");
  write_matrix_csv(out / "correlation.csv", a.correlation.values, names, "class");

  std::ostringstream spectra, attention;
  spectra.precision(10);
  attention.precision(10);
  spectra << "hz";
  for (const auto& r : a.reports) spectra << ',' << r.emotion_name << "_dim" << r.dimension;
  spectra << '\n';
  attention << "emotion,dimension";
  const std::size_t T = a.reports.empty() ? 0 : a.reports.front().attention.size();
  for (std::size_t t = 0; t < T; ++t) attention << ",t" << t;
  attention << '\n';
  std::vector<std::vector<double>> curves;
  for (const auto& r : a.reports) {
    nd::write_file(out / ("report_" + r.emotion_name + ".json"), interpret::report_to_json(r));
    const std::string stem = "topography_" + r.emotion_name + "_dim" + std::to_string(r.dimension);
    std::vector<std::string> channels = d.channels;
    write_matrix_csv(out / (stem + ".csv"), r.spatial_activation, channels, "step");
    attention << r.emotion_name << ',' << r.dimension;
    for (double v : r.attention) attention << ',' << v;
    attention << '\n';
    curves.push_back(r.response.magnitude);
    if (plots) plot::heatmap(out / (stem + ".png"), r.spatial_activation);
  }
  if (!a.reports.empty()) {
    const auto& hz = a.reports.front().response.hz;
    for (std::size_t i = 0; i < hz.size(); ++i) {
      spectra << hz[i];
      for (const auto& c : curves) spectra << ',' << c[i];
      spectra << '\n';
    }
    if (plots) plot::lines(out / "spectra.png", hz, curves);
  }
  nd::write_file(out / "spectra.csv", spectra.str());
  nd::write_file(out / "attention.csv", attention.str());
  if (plots) {
    plot::heatmap(out / "attributions.png", a.attributions.values);
    plot::heatmap(out / "correlation.png", a.correlation.values);
  }
  std::printf("completeness error %.3g; %zu reports in %s\n", a.attributions.completeness_error, a.reports.size(),
              out.string().c_str());
  return 0;
}

int cmd_inspect(const fs::path& path) {
  std::puts(bundle::metadata_json(bundle::load(path)).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"DAEST: EEG emotion recognition with dynamic attention over state transitions"};
  cli.require_subcommand(1);

  std::string config;
  std::vector<std::string> sets;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config, "JSON run config");
    sub->add_option("--set", sets, "Config override key.path=value (repeatable)");
  };

  std::string spec, preset = "two_state";
  fs::path out;
  auto* synth_cmd = cli.add_subcommand("synth", "Generate a synthetic dataset with ground truth");
  synth_cmd->add_option("--spec", spec, "Synthetic spec JSON");
  synth_cmd->add_option("--preset", preset, "two_state or multi_step_transition (when no --spec)");
  synth_cmd->add_option("-o,--out", out, "Output directory")->required();

  fs::path root;
  double rate = 125.0;
  std::size_t channels = 0;
  std::string classes;
  auto* convert_cmd = cli.add_subcommand("convert", "Build a manifest from labels.csv and <subject>/<stimulus>.f32");
  convert_cmd->add_option("root", root, "Directory tree")->required();
  convert_cmd->add_option("--fs", rate, "Sampling rate of the files");
  convert_cmd->add_option("--channels", channels, "Channel count")->required();
  convert_cmd->add_option("--classes", classes, "Comma-separated class names")->required();
  convert_cmd->add_option("-o,--out", out, "Manifest path (default root/manifest.json)");

  bool resume = false;
  auto* pretrain_cmd = cli.add_subcommand("pretrain", "Contrastive pretraining on every subject of the dataset");
  add_config(pretrain_cmd);
  pretrain_cmd->add_flag("--resume", resume, "Continue from output_dir/pretrain.ckpt");

  std::size_t parallel_folds = 0;
  auto* eval_cmd = cli.add_subcommand("train-eval", "Subject-wise cross-validation");
  add_config(eval_cmd);
  eval_cmd->add_option("--parallel-folds", parallel_folds, "Folds run concurrently");

  std::string param, values, seeds = "1..10", synth_spec;
  auto* sweep_cmd = cli.add_subcommand("sweep", "Accuracy against one parameter, paired over seeds");
  add_config(sweep_cmd);
  sweep_cmd->add_option("--param", param, "L2, L3, activation or a config key path")->required();
  sweep_cmd->add_option("--values", values, "Comma-separated values")->required();
  sweep_cmd->add_option("--seeds", seeds, "Seeds, e.g. 1..10 or 1,2,5");
  sweep_cmd->add_option("--synth-spec", synth_spec, "Regenerate this synthetic spec for every seed");

  fs::path bundle_path, data;
  std::string subjects;
  std::size_t steps = 256;
  double tol = 1e-3;
  bool plots = false;
  auto* interpret_cmd = cli.add_subcommand("interpret", "Attributions, filters and activation patterns");
  add_config(interpret_cmd);
  interpret_cmd->add_option("-b,--bundle", bundle_path, "Trained fold bundle")->required();
  interpret_cmd->add_option("-d,--data", data, "Dataset manifest or directory")->required();
  interpret_cmd->add_option("-o,--out", out, "Output directory")->required();
  interpret_cmd->add_option("--subjects", subjects, "Comma-separated subject ids (default all)");
  interpret_cmd->add_option("--steps", steps, "Integrated-gradient steps");
  interpret_cmd->add_option("--completeness-tol", tol, "Abort when completeness error exceeds this");
  interpret_cmd->add_flag("--emit-plots", plots, "Also write PNG plots");

  fs::path inspect_path;
  auto* inspect_cmd = cli.add_subcommand("inspect", "Print bundle metadata");
  inspect_cmd->add_option("bundle", inspect_path, "Bundle file")->required();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth_cmd) return cmd_synth(spec, preset, out);
    if (*convert_cmd) return cmd_convert(root, rate, channels, classes, out);
    if (*pretrain_cmd) return cmd_pretrain(run_config(config, sets), resume);
    if (*eval_cmd) return cmd_train_eval(run_config(config, sets), parallel_folds);
    if (*sweep_cmd) return cmd_sweep(config, sets, param, values, seeds, synth_spec);
    if (*interpret_cmd) {
      return cmd_interpret(bundle_path, data, config, sets, out, subjects, steps, tol, plots);
    }
    if (*inspect_cmd) return cmd_inspect(inspect_path);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
