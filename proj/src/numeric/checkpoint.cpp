#include "ascan/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace ascan {

namespace {

constexpr char kMagic[8] = {'A', 'S', 'C', 'A', 'N', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::ostream& out, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw std::runtime_error("checkpoint truncated");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

std::string get_string(std::istream& in, std::uint32_t len) {
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) throw std::runtime_error("checkpoint truncated");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.manifest.size()));
  out.write(ckpt.manifest.data(), static_cast<std::streamsize>(ckpt.manifest.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, value] : ckpt.tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(value.dtype()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(value.dim()));
    for (auto e : value.shape()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(e));
    if (value.dtype() == DType::kFloat32) {
      for (float v : value.data<float>()) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        put_le(out, bits);
      }
    } else {
      for (double v : value.data<double>()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        put_le(out, bits);
      }
    }
  }
  if (!out) throw std::runtime_error("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint (bad magic)");
  auto version = get_le<std::uint32_t>(in);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.manifest = get_string(in, get_le<std::uint32_t>(in));
  auto count = get_le<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor entry;
    entry.name = get_string(in, get_le<std::uint32_t>(in));
    auto tag = get_le<std::uint8_t>(in);
    if (tag > 1) throw std::runtime_error("unknown dtype tag in checkpoint entry " + entry.name);
    auto rank = get_le<std::uint32_t>(in);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::int64_t>(get_le<std::uint64_t>(in)));
    entry.value = Tensor::empty(shape, static_cast<DType>(tag));
    if (tag == 0) {
      for (auto& v : entry.value.mutable_data<float>()) {
        auto bits = get_le<std::uint32_t>(in);
        std::memcpy(&v, &bits, sizeof bits);
      }
    } else {
      for (auto& v : entry.value.mutable_data<double>()) {
        auto bits = get_le<std::uint64_t>(in);
        std::memcpy(&v, &bits, sizeof bits);
      }
    }
    ckpt.tensors.push_back(std::move(entry));
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace ascan
