#include "run_manifest.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ascan/config.hpp"

namespace ascan::cli {

RunManifest::RunManifest(std::string command, fs::path out_dir) : command_(std::move(command)), out_dir_(std::move(out_dir)) {
  fs::create_directories(out_dir_);
}

void RunManifest::set_spec(const std::string& spec_json, const std::string& hash) {
  spec_ = ordered_json::parse(spec_json);
  spec_hash_ = hash;
}

fs::path RunManifest::write(const std::string& name, const std::string& bytes) {
  const fs::path p = out_dir_ / name;
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << bytes;
  f.close();
  artifacts_.emplace_back(name, fnv1a_hex(bytes));
  return p;
}

void RunManifest::record(const std::string& name) { artifacts_.emplace_back(name, file_hash(out_dir_ / name)); }

fs::path RunManifest::finish() const {
  ordered_json j;
  j["command"] = command_;
  j["tool_version"] = kToolVersion;
  j["config"] = config_;
  if (!spec_.is_null()) j["config"]["spec"] = spec_;
  j["seed"] = has_seed_ ? ordered_json(seed_) : ordered_json(nullptr);
  j["spec_hash"] = spec_hash_.empty() ? ordered_json(nullptr) : ordered_json(spec_hash_);
  j["checkpoint_hash"] = checkpoint_hash_.empty() ? ordered_json(nullptr) : ordered_json(checkpoint_hash_);
  j["artifacts"] = ordered_json::array();
  for (const auto& [name, hash] : artifacts_) j["artifacts"].push_back({{"path", name}, {"fnv1a64", hash}});
  const fs::path p = out_dir_ / (command_ + ".manifest.json");
  std::ofstream f(p, std::ios::binary);
  f << j.dump(2) << "\n";
  return p;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string file_hash(const fs::path& p) { return fnv1a_hex(file_bytes(p)); }

fs::path default_out_dir() {
  const char* env = std::getenv("ASCAN_OUT_DIR");
  return env && *env ? fs::path(env) : fs::path("ascan-out");
}

}  // namespace ascan::cli
