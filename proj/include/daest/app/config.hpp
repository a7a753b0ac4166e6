#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "daest/classify/features.hpp"
#include "daest/classify/mlp.hpp"
#include "daest/encoder/encoder.hpp"
#include "daest/pretrain/pretrain.hpp"

namespace daest::app {

struct CvSpec {
  /// "auto" (LOSO up to 20 subjects, else k-fold), "loso" or "kfold".
  std::string mode = "auto";
  std::size_t folds = 10;
};

struct RunConfig {
  std::filesystem::path dataset;
  std::string task;
  /// Dataset label -> task label; -1 drops the trial. Empty keeps labels as they are.
  std::vector<int> label_map;
  /// Task class names (defaults to the dataset's when label_map is empty).
  std::vector<std::string> class_map;
  encoder::Geometry geometry;
  pretrain::PretrainConfig pretrain;
  /// Use the seeded random encoder instead of contrastive pretraining.
  bool skip_pretrain = false;
  classify::ClassifierConfig classifier;
  classify::FeatureOptions features;
  CvSpec cv;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "daest_out";
  /// Permutation control: every subject's trial labels are shuffled independently.
  bool shuffle_labels = false;
  std::size_t parallel_folds = 1;
  std::size_t threads = 0;

  void validate() const;
};

/// Strict parse: unknown keys and wrong types are ConfigErrors.
RunConfig config_from_json(const std::string& text);
/// Canonical form (sorted keys, every field present).
std::string config_to_json(const RunConfig& c);

/// Applies "a.b.c=value" to a JSON config text; the value is parsed as JSON when
/// possible and taken as a string otherwise.
std::string apply_override(const std::string& json_text, const std::string& assignment);

/// Hex CRC32 of the canonical JSON without output_dir, threads, parallel_folds and
/// diagnostics_dir, which do not affect results.
std::string config_hash(const RunConfig& c);

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace daest::app
