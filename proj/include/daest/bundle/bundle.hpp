#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "daest/classify/features.hpp"
#include "daest/classify/mlp.hpp"
#include "daest/encoder/encoder.hpp"
#include "daest/ndcore/snapshot.hpp"
#include "daest/pretrain/pretrain.hpp"

namespace daest::bundle {

inline constexpr int kBundleVersion = 1;

struct ModelBundle {
  encoder::Geometry geometry;
  encoder::EncoderParams encoder;
  std::optional<pretrain::ProjectorGeometry> projector_geometry;
  std::optional<pretrain::ProjectorParams> projector;
  std::optional<classify::ClassifierParams> classifier;
  std::vector<std::string> class_map;
  classify::NormStrategy norm_strategy = classify::NormStrategy::cumulative_zscore;
  /// Running statistics to continue from; empty means a new subject starts fresh.
  classify::NormState norm;
  bool smooth = true;
  classify::LdsParams lds;
  std::string config_hash;
  std::string log_digest;

  std::size_t encoder_parameters() const { return encoder.parameter_count(); }
  std::size_t projector_parameters() const { return projector ? projector->parameter_count() : 0; }
  std::size_t classifier_parameters() const { return classifier ? classifier->parameter_count() : 0; }
  std::size_t total_parameters() const;
};

std::string geometry_to_json(const encoder::Geometry& g);
encoder::Geometry geometry_from_json(const std::string& text);

/// Container with a JSON header and one tensor section per weight array.
std::string encode(const ModelBundle& b, nd::Dtype dtype = nd::Dtype::f64);
ModelBundle decode(std::string_view bytes);

void save(const ModelBundle& b, const std::filesystem::path& path, nd::Dtype dtype = nd::Dtype::f64);
ModelBundle load(const std::filesystem::path& path);

/// Header JSON with parameter counts, as printed by `daest inspect`.
std::string metadata_json(const ModelBundle& b);

/// Hex CRC32 of the bytes.
std::string digest(std::string_view bytes);

}  // namespace daest::bundle
