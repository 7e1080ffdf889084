#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ascan/tensor.hpp"

namespace ascan {

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::string manifest;  // JSON text; carries the architecture hash
  std::vector<NamedTensor> tensors;
};

// Layout: "ASCANCKP", u32 version, u32 manifest length, manifest bytes,
// u32 entry count, then per entry: u32 name length, name, u8 dtype tag
// (0 = f32, 1 = f64), u32 rank, i64 extents, little-endian payload.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ascan
