#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "daest/ndcore/tensor.hpp"

namespace daest::nd {

enum class Dtype : std::uint32_t { f32 = 1, f64 = 2 };

/// Tensor snapshot: "NDC1", u32 dtype code, u32 rank, u64 extents, then the
/// row-major payload. Every field is little-endian.
std::string encode_snapshot(const Tensor& t, Dtype dtype = Dtype::f64);
/// Decodes one snapshot starting at `bytes`; `consumed` receives its length.
Tensor decode_snapshot(std::string_view bytes, std::size_t* consumed = nullptr);

/// Named tensor sections behind a free-form text header, CRC32 per section.
struct Section {
  std::string name;
  Tensor tensor;
};

struct Container {
  std::string header;
  std::vector<Section> sections;

  const Tensor& get(std::string_view name) const;
  const Tensor* find(std::string_view name) const;
};

inline constexpr std::uint32_t kContainerVersion = 1;

std::string encode_container(const Container& c, Dtype dtype = Dtype::f64);
Container decode_container(std::string_view bytes);

void write_container(const std::filesystem::path& path, const Container& c,
                     Dtype dtype = Dtype::f64);
Container read_container(const std::filesystem::path& path);

std::uint32_t crc32(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace daest::nd
