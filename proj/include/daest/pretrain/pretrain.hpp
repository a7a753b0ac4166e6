#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "daest/dataio/dataset.hpp"
#include "daest/dataio/windows.hpp"
#include "daest/encoder/encoder.hpp"
#include "daest/ndcore/tape.hpp"

namespace daest::pretrain {

struct ProjectorGeometry {
  std::size_t pool = 15;
  std::size_t kernel = 3;
  /// Channel groups of both convolutions (K1 by default).
  std::size_t groups = 16;

  static ProjectorGeometry for_encoder(const encoder::Geometry& g) { return {15, 3, g.K1}; }
  /// Time length after pooling and the two valid convolutions; throws when too short.
  std::size_t output_length(std::size_t T) const;
  std::size_t embedding_length(std::size_t K, std::size_t T) const { return 4 * K * output_length(T); }
};

struct ProjectorParams {
  nd::Tensor conv1;  // 2K x K/groups x kernel
  nd::Tensor conv2;  // 4K x 2K/groups x kernel

  static ProjectorParams init(std::size_t K, const ProjectorGeometry& pg, std::uint64_t seed);
  std::size_t parameter_count() const { return conv1.size() + conv2.size(); }
  bool operator==(const ProjectorParams&) const = default;
};

std::size_t projector_parameter_count(std::size_t K, const ProjectorGeometry& pg);

struct ProjectorVars {
  nd::Var conv1, conv2;
};
ProjectorVars bind(nd::Tape& tape, const ProjectorParams& p, bool trainable);

/// pool -> conv+relu -> conv+relu -> flatten to a 1 x D row.
nd::Var projector_forward(nd::Var latent, const ProjectorVars& p, const ProjectorGeometry& pg);

/// Mean NT-Xent over all rows of `embeddings`; partner[i] is the positive of row i.
nd::Var nt_xent(nd::Var embeddings, std::span<const std::size_t> partner, double tau);
/// Rows [0, N) pair with rows [N, 2N).
nd::Var nt_xent(nd::Var embeddings, double tau);

/// Trials of the pretraining subjects with their windowing plan.
struct ContrastiveData {
  std::vector<const io::Subject*> subjects;
  io::WindowingPlan plan;
};

struct WindowRef {
  std::size_t subject = 0;  // index into ContrastiveData::subjects
  std::size_t trial = 0;
  std::size_t window = 0;
};

struct ContrastiveBatch {
  /// First N entries from subject a, next N from subject b, same trial order.
  std::vector<WindowRef> windows;
  std::size_t subject_a = 0, subject_b = 0;
  std::size_t pairs() const { return windows.size() / 2; }
};

/// One window per shared stimulus, the same offset for both subjects.
ContrastiveBatch make_batch(const ContrastiveData& data, std::size_t subject_a, std::size_t subject_b,
                            std::mt19937_64& rng);
nd::Tensor window_of(const ContrastiveData& data, const WindowRef& ref);

struct PretrainConfig {
  double lr = 7e-4;
  double weight_decay = 1.5e-4;
  std::size_t epochs = 30;
  std::size_t patience = 10;
  double temperature = 0.1;
  std::size_t projector_pool = 15;
  std::size_t projector_kernel = 3;
  /// 0 = one random disjoint pairing of all subjects per epoch.
  std::size_t pairs_per_epoch = 0;
  /// Fraction of subjects held out for the early-stopping loss (at least 2 when used).
  double val_fraction = 0.1;
  /// Offset draws per validation pair.
  std::size_t val_draws = 4;
  std::uint64_t seed = 1;
  std::size_t threads = 0;
  /// Where to dump parameters if the loss turns non-finite (empty = no dump).
  std::filesystem::path diagnostics_dir;

  void validate() const;
  /// Projector settings for an encoder geometry (groups = K1).
  ProjectorGeometry projector(const encoder::Geometry& g) const { return {projector_pool, projector_kernel, g.K1}; }
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // NaN for the initial evaluation row
  double val_loss = 0.0;
  double lr = 0.0;
};

/// Everything needed to continue training bit-consistently.
struct PretrainState {
  encoder::EncoderParams encoder;
  ProjectorParams projector;
  std::vector<nd::Tensor> adam_m, adam_v;
  std::size_t adam_steps = 0;
  std::string rng_state;
  std::size_t epoch = 0;  // completed epochs
  encoder::EncoderParams best_encoder;
  ProjectorParams best_projector;
  double best_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;
  bool finished = false;  // stopped early; an epoch limit alone can be raised on resume
  std::vector<EpochLog> log;
  /// Subjects (by id) used for the early-stopping loss.
  std::vector<std::string> val_subjects;
};

/// Initial parameters and validation split for the given training subjects.
PretrainState init_state(const std::vector<const io::Subject*>& subjects, const encoder::Geometry& g,
                         const PretrainConfig& config);

/// Runs epochs until the limit or early stop, calling `on_epoch` after each one.
void run(const std::vector<const io::Subject*>& subjects, const encoder::Geometry& g,
         const PretrainConfig& config, PretrainState& state,
         const std::function<void(const PretrainState&)>& on_epoch = {});

struct PretrainResult {
  encoder::EncoderParams encoder;
  ProjectorParams projector;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

PretrainResult pretrain(const std::vector<const io::Subject*>& subjects, const encoder::Geometry& g,
                        const PretrainConfig& config);

/// Loss and parameter gradients of one contrastive batch.
struct BatchGradients {
  double loss = 0.0;
  encoder::EncoderParams encoder;
  ProjectorParams projector;
};
BatchGradients batch_gradients(const ContrastiveData& data, const ContrastiveBatch& batch,
                               const encoder::EncoderParams& ep, const ProjectorParams& pp,
                               const encoder::Geometry& g, const ProjectorGeometry& pg, double tau,
                               std::size_t threads = 0);
double batch_loss(const ContrastiveData& data, const ContrastiveBatch& batch, const encoder::EncoderParams& ep,
                  const ProjectorParams& pp, const encoder::Geometry& g, const ProjectorGeometry& pg,
                  double tau, std::size_t threads = 0);

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

void save_checkpoint(const std::filesystem::path& path, const PretrainState& state, const std::string& tag);
/// `tag` must match the value stored at save time (typically a config hash).
PretrainState load_checkpoint(const std::filesystem::path& path, const std::string& tag);

}  // namespace daest::pretrain
