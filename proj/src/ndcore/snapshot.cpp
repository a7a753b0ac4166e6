#include "daest/ndcore/snapshot.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "daest/error.hpp"

namespace daest::nd {

namespace {

constexpr std::string_view kSnapshotMagic = "NDC1";
constexpr std::string_view kContainerMagic = "DAESTPK1";

template <class U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffu));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class U>
  U le() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("truncated data: expected more bytes");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(std::string_view bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  c = ::crc32(c, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(c);
}

std::string encode_snapshot(const Tensor& t, Dtype dtype) {
  std::string out(kSnapshotMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dtype));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put_le<std::uint64_t>(out, e);
  out.reserve(out.size() + t.size() * (dtype == Dtype::f64 ? 8 : 4));
  for (double v : t.values()) {
    if (dtype == Dtype::f64) {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    } else {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

Tensor decode_snapshot(std::string_view bytes, std::size_t* consumed) {
  Reader r(bytes);
  if (r.take(4) != kSnapshotMagic) throw FormatError("snapshot: bad magic");
  const auto dtype = r.le<std::uint32_t>();
  if (dtype != static_cast<std::uint32_t>(Dtype::f32) &&
      dtype != static_cast<std::uint32_t>(Dtype::f64)) {
    throw FormatError("snapshot: unknown dtype code " + std::to_string(dtype));
  }
  const auto rank = r.le<std::uint32_t>();
  if (rank > 16) throw FormatError("snapshot: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<std::size_t>(r.le<std::uint64_t>());
  const std::size_t n = element_count(shape);
  const std::size_t width = dtype == static_cast<std::uint32_t>(Dtype::f64) ? 8 : 4;
  if (n > (bytes.size() - r.position()) / width) throw FormatError("snapshot: truncated payload");
  std::vector<double> vals(n);
  for (auto& v : vals) {
    if (width == 8) {
      v = std::bit_cast<double>(r.le<std::uint64_t>());
    } else {
      v = static_cast<double>(std::bit_cast<float>(r.le<std::uint32_t>()));
    }
  }
  if (consumed) *consumed = r.position();
  return Tensor(std::move(shape), std::move(vals));
}

const Tensor* Container::find(std::string_view name) const {
  for (const Section& s : sections) {
    if (s.name == name) return &s.tensor;
  }
  return nullptr;
}

const Tensor& Container::get(std::string_view name) const {
  const Tensor* t = find(name);
  if (!t) throw FormatError("container: missing section '" + std::string(name) + "'");
  return *t;
}

std::string encode_container(const Container& c, Dtype dtype) {
  std::string out(kContainerMagic);
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint64_t>(out, c.header.size());
  out += c.header;
  put_le<std::uint32_t>(out, crc32(c.header));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.sections.size()));
  for (const Section& s : c.sections) {
    const std::string payload = encode_snapshot(s.tensor, dtype);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.name.size()));
    out += s.name;
    put_le<std::uint64_t>(out, payload.size());
    out += payload;
    put_le<std::uint32_t>(out, crc32(s.name + payload));
  }
  return out;
}

Container decode_container(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kContainerMagic.size()) != kContainerMagic) throw FormatError("container: bad magic");
  const auto version = r.le<std::uint32_t>();
  if (version != kContainerVersion) {
    throw FormatError("container: format version " + std::to_string(version) +
                      " unsupported (expected " + std::to_string(kContainerVersion) + ")");
  }
  Container c;
  const auto header_len = r.le<std::uint64_t>();
  c.header = std::string(r.take(static_cast<std::size_t>(header_len)));
  if (r.le<std::uint32_t>() != crc32(c.header)) throw FormatError("container: header checksum mismatch");
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.le<std::uint32_t>();
    std::string name(r.take(name_len));
    const auto payload_len = r.le<std::uint64_t>();
    const std::string_view payload = r.take(static_cast<std::size_t>(payload_len));
    const auto crc = r.le<std::uint32_t>();
    if (crc != crc32(name + std::string(payload))) {
      throw FormatError("container: checksum mismatch in section '" + name + "'");
    }
    std::size_t used = 0;
    Tensor t = decode_snapshot(payload, &used);
    if (used != payload.size()) throw FormatError("container: trailing bytes in section '" + name + "'");
    c.sections.push_back({std::move(name), std::move(t)});
  }
  if (r.position() != bytes.size()) throw FormatError("container: trailing bytes after last section");
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

void write_container(const std::filesystem::path& path, const Container& c, Dtype dtype) {
  write_file(path, encode_container(c, dtype));
}

Container read_container(const std::filesystem::path& path) {
  return decode_container(read_file(path));
}

}  // namespace daest::nd
