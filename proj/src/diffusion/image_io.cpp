#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ascan/diffusion.hpp"
#include "json.hpp"

namespace ascan {

void save_raw_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (double v : t.to_vector()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  nlohmann::json meta = {{"shape", t.shape()}, {"dtype", "float32"}, {"byte_order", "little"}};
  std::ofstream side(path + ".json");
  if (!side) throw std::runtime_error("cannot write " + path + ".json");
  side << meta.dump(2) << "\n";
}

void write_image(const std::string& path, const Tensor& t, std::int64_t n, double lo, double hi) {
  if (t.dim() != 4) throw ShapeError("write_image expects [N, C, H, W], got " + shape_str(t.shape()));
  const std::int64_t c = t.size(1), h = t.size(2), w = t.size(3);
  if (c != 1 && c != 3 && c != 4) throw std::invalid_argument("write_image supports 1, 3 or 4 channels, got " + std::to_string(c));
  if (n < 0 || n >= t.size(0)) throw std::out_of_range("sample index out of range");
  if (!(hi > lo)) throw std::invalid_argument("write_image needs hi > lo");
  const auto v = t.to_vector();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (c == 1)
    out << "P5\n" << w << " " << h << "\n255\n";
  else if (c == 3)
    out << "P6\n" << w << " " << h << "\n255\n";
  else
    out << "P7\nWIDTH " << w << "\nHEIGHT " << h << "\nDEPTH 4\nMAXVAL 255\nTUPLTYPE RGB_ALPHA\nENDHDR\n";
  const std::int64_t base = n * c * h * w;
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double u = (v[base + (ch * h + y) * w + x] - lo) / (hi - lo);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0))));
      }
}

}  // namespace ascan
