#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ascan/config.hpp"

namespace ascan {

struct CostEntry {
  std::string path;  // module path as registered by the builder ("stage1.block0.qkv")
  std::string kind;  // conv, linear, norm, attention, table, gain, token
  std::int64_t params = 0;
  std::int64_t macs = 0;  // per sample
};

struct CostReport {
  std::string name;
  std::vector<CostEntry> entries;
  std::int64_t total_params = 0;
  std::int64_t total_macs = 0;
  int height = 0, width = 0;  // 0 when MACs were not requested
  std::map<std::string, std::string> conventions;

  std::int64_t params_under(const std::string& prefix) const;
  std::int64_t macs_of_kind(const std::string& kind) const;
};

/// Exact parameter count of what the builders instantiate.
CostReport count_params(const ArchSpec& spec);
/// Parameters and per-sample MACs at an input resolution. Throws
/// std::invalid_argument if the resolution does not divide by the total
/// downsampling factor.
CostReport count_macs(const ArchSpec& spec, int height, int width);

// Single-layer costs, exposed for closed-form checks.
std::int64_t conv_macs(int out_h, int out_w, int in, int out, int kernel);
std::int64_t linear_params(int in, int out, bool bias = true);

/// Total stride from input to the deepest feature map.
int total_downsampling(const ArchSpec& spec);

struct ReconcileRow {
  std::string name;
  std::string metric;  // "params" or "macs"
  double expected = 0, actual = 0, rel_error = 0, tol = 0;
  bool pass = false;
};

struct PaperValue {
  std::string name;
  std::string metric;
  double value;
  double tol;
};

/// Published parameter and MAC values with their reconciliation bands.
const std::vector<PaperValue>& paper_values();
ReconcileRow reconcile(const std::string& name, const std::string& metric, double actual, double expected,
                       double tol);
/// Reconciles every published value against the cost model.
std::vector<ReconcileRow> reconcile_presets(const std::vector<PaperValue>& expected);

std::string render_text(const CostReport& r);
std::string render_text(const std::vector<ReconcileRow>& rows);
/// Machine-readable report inside the shared metadata envelope.
std::string render_json(const CostReport& r, const std::string& config_hash);
/// {"schema", "tool", "version", "config_hash", "payload"} envelope.
std::string envelope_json(const std::string& schema, const std::string& config_hash, const std::string& payload_json);

}  // namespace ascan
