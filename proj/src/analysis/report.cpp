#include <cmath>
#include <cstdio>
#include <sstream>

#include "ascan/analysis.hpp"
#include "json.hpp"

namespace ascan {

using nlohmann::ordered_json;

const std::vector<PaperValue>& paper_values() {
  static const std::vector<PaperValue> table = [] {
    std::vector<PaperValue> t;
    const double ablation[] = {55, 73, 41, 50, 95, 51, 42, 34, 30, 72};
    for (int i = 0; i < 10; ++i) t.push_back({"c" + std::to_string(i + 1), "params", ablation[i] * 1e6, 0.02});
    const double order[] = {56, 57, 64, 55, 100};
    for (int i = 0; i < 5; ++i) t.push_back({"t" + std::to_string(i + 1), "params", order[i] * 1e6, 0.02});
    t.push_back({"ascan-t", "params", 55e6, 0.02});
    t.push_back({"ascan-b", "params", 98e6, 0.02});
    t.push_back({"ascan-l", "params", 173e6, 0.02});
    t.push_back({"ascan-t", "macs", 7.7e9, 0.05});
    t.push_back({"ascan-b", "macs", 16.7e9, 0.05});
    t.push_back({"ascan-l", "macs", 30.7e9, 0.05});
    t.push_back({"unet-class-cond", "params", 400e6, 0.10});
    return t;
  }();
  return table;
}

ReconcileRow reconcile(const std::string& name, const std::string& metric, double actual, double expected,
                       double tol) {
  ReconcileRow r{name, metric, expected, actual, 0.0, tol, false};
  r.rel_error = (actual - expected) / expected;
  r.pass = std::abs(r.rel_error) <= tol;
  return r;
}

std::vector<ReconcileRow> reconcile_presets(const std::vector<PaperValue>& expected) {
  std::vector<ReconcileRow> rows;
  for (const auto& v : expected) {
    const ArchSpec spec = build_preset(v.name);
    const double actual = v.metric == "macs"
                              ? static_cast<double>(count_macs(spec, spec.reference_resolution, spec.reference_resolution).total_macs)
                              : static_cast<double>(count_params(spec).total_params);
    rows.push_back(reconcile(v.name, v.metric, actual, v.value, v.tol));
  }
  return rows;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

std::string render_text(const CostReport& r) {
  std::ostringstream out;
  out << "model " << r.name;
  if (r.height) out << " @ " << r.height << "x" << r.width;
  out << "\n";
  std::size_t width = 4;
  for (const auto& e : r.entries) width = std::max(width, e.path.size());
  for (const auto& e : r.entries) {
    out << e.path << std::string(width + 2 - e.path.size(), ' ') << e.kind
        << std::string(10 - std::min<std::size_t>(e.kind.size(), 9), ' ') << e.params;
    if (r.height) out << "  " << e.macs;
    out << "\n";
  }
  out << "total params " << r.total_params << " (" << fmt("%.2f", r.total_params / 1e6) << "M)\n";
  if (r.height) out << "total macs " << r.total_macs << " (" << fmt("%.3f", r.total_macs / 1e9) << "G)\n";
  for (const auto& [k, v] : r.conventions) out << "# " << k << ": " << v << "\n";
  return out.str();
}

std::string render_text(const std::vector<ReconcileRow>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) {
    const double unit = r.metric == "macs" ? 1e9 : 1e6;
    out << (r.pass ? "PASS " : "FAIL ") << r.name << " " << r.metric << " expected "
        << fmt("%.1f", r.expected / unit) << (r.metric == "macs" ? "G" : "M") << " actual "
        << fmt("%.2f", r.actual / unit) << " rel " << fmt("%+.2f%%", 100 * r.rel_error) << " tol "
        << fmt("%.0f%%", 100 * r.tol) << "\n";
  }
  return out.str();
}

std::string envelope_json(const std::string& schema, const std::string& config_hash, const std::string& payload) {
  ordered_json j;
  j["schema"] = schema;
  j["tool"] = "ascan";
  j["version"] = "0.1.0";
  j["config_hash"] = config_hash;
  j["payload"] = ordered_json::parse(payload);
  return j.dump(2) + "\n";
}

std::string render_json(const CostReport& r, const std::string& config_hash) {
  ordered_json p;
  p["name"] = r.name;
  p["resolution"] = {r.height, r.width};
  p["totals"] = {{"params", r.total_params}, {"macs", r.total_macs}};
  p["conventions"] = ordered_json::object();
  for (const auto& [k, v] : r.conventions) p["conventions"][k] = v;
  p["per_layer"] = ordered_json::array();
  for (const auto& e : r.entries)
    p["per_layer"].push_back({{"path", e.path}, {"kind", e.kind}, {"params", e.params}, {"macs", e.macs}});
  return envelope_json("ascan.cost/1", config_hash, p.dump());
}

}  // namespace ascan
