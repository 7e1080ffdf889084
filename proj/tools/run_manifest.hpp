#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace ascan::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";

/// Thrown for bad flags or configs; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// What a command did: its flags, seed, spec and every file it wrote with a
/// content hash. Written as "<command>.manifest.json" in the output
/// directory.
class RunManifest {
 public:
  RunManifest(std::string command, fs::path out_dir);

  ordered_json& config() { return config_; }
  void set_seed(std::uint64_t seed) {
    seed_ = seed;
    has_seed_ = true;
  }
  void set_spec(const std::string& spec_json, const std::string& hash);
  void set_checkpoint_hash(const std::string& hash) { checkpoint_hash_ = hash; }

  const fs::path& out_dir() const { return out_dir_; }
  /// Writes `bytes` to out_dir/name and records its hash.
  fs::path write(const std::string& name, const std::string& bytes);
  /// Records a file some library call already wrote into out_dir.
  void record(const std::string& name);
  /// Writes the manifest itself; returns its path.
  fs::path finish() const;

 private:
  std::string command_;
  fs::path out_dir_;
  ordered_json config_ = ordered_json::object();
  ordered_json spec_;
  std::string spec_hash_, checkpoint_hash_;
  std::uint64_t seed_ = 0;
  bool has_seed_ = false;
  std::vector<std::pair<std::string, std::string>> artifacts_;
};

std::string file_bytes(const fs::path& p);
std::string file_hash(const fs::path& p);
/// ASCAN_OUT_DIR, else "ascan-out".
fs::path default_out_dir();

}  // namespace ascan::cli
