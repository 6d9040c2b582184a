#include "scalepart/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "scalepart/error.hpp"

namespace scalepart {

static_assert(std::endian::native == std::endian::little, "byte order helpers assume a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint: truncated payload");
    const auto* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::vector<std::uint8_t> out;
  Writer w(out);
  w.bytes("S2AM", 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw ValidationError("checkpoint: tensor name too long");
    if (t.tensor.rank() > 0xFF) throw ValidationError("checkpoint: tensor rank too large");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.tensor.rank()));
    for (auto d : t.tensor.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.bytes(t.tensor.data(), t.tensor.size() * sizeof(float));
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(r.take(4), "S2AM", 4) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get<std::uint16_t>();
    const auto* name = r.take(name_len);
    t.name.assign(reinterpret_cast<const char*>(name), name_len);
    const auto ndim = r.get<std::uint8_t>();
    std::vector<std::size_t> shape(ndim);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.get<std::uint32_t>();
      n *= d;
    }
    if (n > (std::size_t{1} << 34)) throw FormatError("checkpoint: implausible tensor size");
    std::vector<float> data(n);
    std::memcpy(data.data(), r.take(n * sizeof(float)), n * sizeof(float));
    t.tensor = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(t));
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes after last tensor");
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::vector<NamedTensor> export_parameters(const nn::ParameterStore& store, std::string_view prefix) {
  std::vector<NamedTensor> out;
  for (const auto& p : store) out.push_back({std::string(prefix) + p.name, p.value});
  return out;
}

const NamedTensor* find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name) {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void import_parameters(nn::ParameterStore& store, const std::vector<NamedTensor>& tensors, std::string_view prefix) {
  for (auto& p : store) {
    const std::string full = std::string(prefix) + p.name;
    const auto* t = find_tensor(tensors, full);
    if (!t) throw FormatError("checkpoint: missing tensor '" + full + "'");
    if (t->tensor.size() != p.value.size()) {
      throw FormatError("checkpoint: tensor '" + full + "' has shape " + shape_string(t->tensor.shape()) +
                        ", expected " + shape_string(p.value.shape()));
    }
    p.value = Tensor(p.value.shape(), std::vector<float>(t->tensor.values().begin(), t->tensor.values().end()));
  }
}

}  // namespace scalepart
