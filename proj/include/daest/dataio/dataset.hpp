#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "daest/ndcore/tensor.hpp"

namespace daest::io {

inline constexpr int kManifestVersion = 1;

struct TrialEntry {
  int label = 0;
  int stimulus_id = 0;
  /// Relative to the manifest directory.
  std::string file;
  std::size_t offset = 0;
  std::size_t length = 0;
};

struct SubjectEntry {
  std::string id;
  std::vector<TrialEntry> trials;
};

struct DatasetManifest {
  std::string name;
  double fs = 125.0;
  std::vector<std::string> channels;
  std::vector<std::string> class_map;
  std::vector<SubjectEntry> subjects;

  std::size_t channel_count() const { return channels.size(); }
};

/// Checks label consistency per stimulus, class indices and non-empty geometry.
void validate(const DatasetManifest& m);

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);

struct Trial {
  int label = 0;
  int stimulus_id = 0;
  /// M x T
  nd::Tensor signal;
};

struct Subject {
  std::string id;
  std::vector<Trial> trials;
};

/// Manifest metadata plus every trial resident in memory.
struct Dataset {
  std::string name;
  double fs = 125.0;
  std::vector<std::string> channels;
  std::vector<std::string> class_map;
  std::vector<Subject> subjects;

  std::size_t channel_count() const { return channels.size(); }
  std::size_t class_count() const { return class_map.size(); }
};

/// Reads an M x columns little-endian float32 channel-major file.
nd::Tensor read_f32_matrix(const std::filesystem::path& path, std::size_t rows);
void write_f32_matrix(const std::filesystem::path& path, const nd::Tensor& x);

/// Loads the manifest and every referenced trial (files read in parallel).
Dataset load_dataset(const std::filesystem::path& manifest_path);
/// Writes one f32 file per trial under `dir` plus `dir/manifest.json`.
void save_dataset(const std::filesystem::path& dir, const Dataset& d);

/// Builds a manifest from `root/labels.csv` (stimulus_id,label) and
/// `root/<subject>/<stimulus_id>.f32` files holding whole trials.
DatasetManifest convert_directory(const std::filesystem::path& root, double fs,
                                  std::size_t channels, const std::vector<std::string>& class_map);

}  // namespace daest::io
