#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "ascan/classifier.hpp"
#include "json.hpp"

namespace ascan {

namespace fs = std::filesystem;

Dataset make_blobs(int per_class, int num_classes, int channels, int size, double separation, std::uint64_t seed) {
  if (per_class < 1 || num_classes < 2) throw std::invalid_argument("blobs need >= 2 classes and >= 1 sample each");
  Rng rng(seed);
  const std::int64_t dim = std::int64_t(channels) * size * size;
  std::vector<std::vector<double>> centers(num_classes, std::vector<double>(dim));
  for (auto& c : centers)
    for (auto& v : c) v = rng.bernoulli(0.5) ? separation : -separation;
  const std::int64_t n = std::int64_t(per_class) * num_classes;
  std::vector<double> pixels(n * dim);
  Dataset d;
  d.num_classes = num_classes;
  // interleaved classes so any prefix is balanced
  for (std::int64_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % num_classes);
    d.labels.push_back(label);
    for (std::int64_t k = 0; k < dim; ++k) pixels[i * dim + k] = centers[label][k] + rng.normal();
  }
  d.images = Tensor::from_vector({n, channels, size, size}, pixels, DType::kFloat32);
  return d;
}

namespace {

template <typename T>
void write_raw(const fs::path& p, const std::vector<T>& v) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  for (T x : v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &x, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.write(reinterpret_cast<const char*>(b), sizeof(T));
  }
}

template <typename T>
std::vector<T> read_raw(const fs::path& p, std::size_t count) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::vector<T> v(count);
  for (auto& x : v) {
    unsigned char b[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw std::runtime_error(p.string() + " is truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    std::memcpy(&x, b, sizeof(T));
  }
  return v;
}

}  // namespace

void save_dataset_dir(const Dataset& d, const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json idx;
  idx["shape"] = d.images.shape();
  idx["num_classes"] = d.num_classes;
  idx["images"] = "images.f32";
  idx["labels"] = "labels.i32";
  std::ofstream(fs::path(dir) / "index.json") << idx.dump(2) << "\n";
  std::vector<float> px;
  for (double v : d.images.to_vector()) px.push_back(static_cast<float>(v));
  write_raw(fs::path(dir) / "images.f32", px);
  write_raw(fs::path(dir) / "labels.i32", std::vector<std::int32_t>(d.labels.begin(), d.labels.end()));
}

Dataset load_dataset_dir(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "index.json");
  if (!in) throw std::runtime_error("dataset " + dir + " has no index.json");
  nlohmann::json idx;
  try {
    idx = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("dataset index: " + std::string(e.what()));
  }
  Shape shape = idx.at("shape").get<Shape>();
  if (shape.size() != 4) throw std::runtime_error("dataset shape must be [N, C, H, W]");
  Dataset d;
  d.num_classes = idx.at("num_classes").get<int>();
  auto px = read_raw<float>(fs::path(dir) / idx.at("images").get<std::string>(), numel_of(shape));
  auto labels = read_raw<std::int32_t>(fs::path(dir) / idx.at("labels").get<std::string>(), shape[0]);
  d.images = Tensor::from_vector(shape, std::vector<double>(px.begin(), px.end()), DType::kFloat32);
  for (auto l : labels) {
    if (l < 0 || l >= d.num_classes) throw std::runtime_error("dataset label out of range");
    d.labels.push_back(l);
  }
  return d;
}

std::pair<Tensor, std::vector<int>> gather(const Dataset& d, const std::vector<std::int64_t>& idx, DType dtype) {
  std::vector<int> labels;
  for (auto i : idx) labels.push_back(d.labels.at(i));
  NoGradGuard g;
  return {index_select(d.images, 0, idx).to(dtype), labels};
}

}  // namespace ascan
