#include "scalepart/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "scalepart/error.hpp"

namespace scalepart::data {

static_assert(std::endian::native == std::endian::little, "byte order helpers assume a little-endian host");

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Cursor {
 public:
  explicit Cursor(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  template <typename T>
  T get() {
    if (bytes_.size() - pos_ < sizeof(T)) throw FormatError("dataset: truncated file");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_dataset(const std::vector<AnnotatedCloud>& clouds) {
  std::vector<std::uint8_t> out{'P', 'C', 'P', 'D'};
  put<std::uint32_t>(out, kDatasetVersion);
  put<std::uint64_t>(out, clouds.size());
  for (const auto& c : clouds) {
    if (c.size() > 0xFFFFFFFFull) throw ValidationError("dataset: cloud too large");
    if (c.labels.part_count > 0xFFFF) throw ValidationError("dataset: more than 65535 parts");
    if (c.labeled() && c.labels.size() != c.size()) throw ValidationError("dataset: label count mismatch");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.size()));
    put<std::uint16_t>(out, static_cast<std::uint16_t>(c.labels.part_count));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(c.stage));
    for (std::size_t i = 0; i < c.size(); ++i) {
      put<float>(out, c.points[i].x);
      put<float>(out, c.points[i].y);
      put<float>(out, c.points[i].z);
      put<std::uint16_t>(out, c.labeled() ? static_cast<std::uint16_t>(c.labels.labels[i]) : std::uint16_t{0});
    }
  }
  return out;
}

std::vector<AnnotatedCloud> decode_dataset(const std::vector<std::uint8_t>& bytes) {
  if (bytes.empty()) return {};
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PCPD", 4) != 0) throw FormatError("dataset: bad magic");
  Cursor cur(bytes);
  cur.get<std::uint32_t>();  // magic
  const auto version = cur.get<std::uint32_t>();
  if (version != kDatasetVersion) throw FormatError("dataset: unsupported version " + std::to_string(version));
  const auto count = cur.get<std::uint64_t>();
  std::vector<AnnotatedCloud> clouds;
  for (std::uint64_t r = 0; r < count; ++r) {
    AnnotatedCloud c;
    c.source_id = "record-" + std::to_string(r);
    const auto n = cur.get<std::uint32_t>();
    const auto parts = cur.get<std::uint16_t>();
    const auto stage = cur.get<std::uint8_t>();
    if (stage > static_cast<std::uint8_t>(Stage::Refined)) throw FormatError("dataset: unknown stage tag");
    if (cur.remaining() / 14 < n) throw FormatError("dataset: truncated file");
    c.stage = static_cast<Stage>(stage);
    c.points.coords.resize(n);
    std::vector<std::uint32_t> labels(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      c.points.coords[i].x = cur.get<float>();
      c.points.coords[i].y = cur.get<float>();
      c.points.coords[i].z = cur.get<float>();
      labels[i] = cur.get<std::uint16_t>();
      if (parts > 0 && labels[i] >= parts) throw FormatError("dataset: label out of range");
    }
    if (parts > 0) {
      c.labels.labels = std::move(labels);
      c.labels.part_count = parts;
    }
    clouds.push_back(std::move(c));
  }
  if (cur.remaining() != 0) throw FormatError("dataset: trailing bytes after last record");
  return clouds;
}

void dataset_write(const std::vector<AnnotatedCloud>& clouds, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(clouds);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::vector<AnnotatedCloud> dataset_read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

}  // namespace scalepart::data
