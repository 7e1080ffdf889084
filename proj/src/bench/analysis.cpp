#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ascan/bench.hpp"
#include "json.hpp"

namespace ascan {

using nlohmann::json;

std::vector<ScalingRow> batch_scaling_curve(const BenchReport& report) {
  std::vector<const BenchCell*> ok;
  for (const auto& c : report.cells)
    if (c.ok && c.throughput_mean > 0) ok.push_back(&c);
  if (ok.size() < 2) throw std::invalid_argument("batch scaling needs >= 2 measured batch sizes");
  std::sort(ok.begin(), ok.end(), [](auto* a, auto* b) { return a->batch < b->batch; });
  std::vector<ScalingRow> out;
  for (const auto* c : ok)
    out.push_back({c->batch, c->throughput_mean, 1000.0 / c->throughput_mean,
                   c->throughput_mean / ok.front()->throughput_mean});
  return out;
}

std::vector<CompareRow> compare(const std::vector<BenchReport>& reports, const std::vector<CostReport>& costs,
                                int batch) {
  if (reports.size() != costs.size()) throw std::invalid_argument("compare needs one cost report per bench report");
  if (reports.empty()) return {};
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (reports[i].resolution != reports[0].resolution)
      throw std::invalid_argument("compare: resolution mismatch (" + std::to_string(reports[i].resolution) + " vs " +
                                  std::to_string(reports[0].resolution) + ")");
    if (costs[i].height != reports[i].resolution)
      throw std::invalid_argument("compare: cost report for " + reports[i].model_id + " is at " +
                                  std::to_string(costs[i].height) + ", bench at " +
                                  std::to_string(reports[i].resolution));
  }
  if (batch == 0) {
    std::set<int> common(reports[0].batch_sizes.begin(), reports[0].batch_sizes.end());
    for (const auto& r : reports) {
      std::set<int> here;
      for (const auto& c : r.cells)
        if (c.ok && common.count(c.batch)) here.insert(c.batch);
      common = here;
    }
    if (common.empty()) throw std::invalid_argument("compare: no batch size measured by every report");
    batch = *common.rbegin();
  }
  std::vector<CompareRow> rows;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const BenchCell* c = reports[i].cell(batch);
    if (!c || !c->ok) throw std::invalid_argument("compare: " + reports[i].model_id + " has no result at batch " +
                                                  std::to_string(batch));
    rows.push_back({reports[i].model_id, costs[i].total_params, costs[i].total_macs, c->throughput_mean});
  }
  for (auto& r : rows) {
    r.macs_rank = 1;
    r.throughput_rank = 1;
    for (const auto& o : rows) {
      r.macs_rank += o.macs < r.macs;
      r.throughput_rank += o.throughput > r.throughput;
      // fewer MACs yet slower than a model with more MACs
      r.inversion = r.inversion || (r.macs < o.macs && r.throughput < o.throughput);
    }
  }
  return rows;
}

namespace {

json cell_json(const BenchCell& c) {
  json j = {{"batch", c.batch}, {"ok", c.ok}};
  if (!c.ok) j["error"] = c.error;
  j["throughput"] = {{"mean", c.throughput_mean}, {"std", c.throughput_std}};
  j["latency_ms"] = {{"p50", c.latency_p50_ms}, {"p95", c.latency_p95_ms}};
  j["peak_bytes"] = c.peak_bytes;
  j["raw"] = {{"repeat_seconds", c.repeat_seconds}, {"iteration_ms", c.iteration_ms}};
  return j;
}

std::string fmt(double v, int prec) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

}  // namespace

std::string render_bench_json(const BenchReport& r) {
  json j;
  j["model_id"] = r.model_id;
  j["spec_hash"] = r.spec_hash;
  j["resolution"] = r.resolution;
  j["batch_sizes"] = r.batch_sizes;
  j["warmup_iters"] = r.warmup;
  j["timed_iters"] = r.iters;
  j["repeats"] = r.repeats;
  j["environment"] = {{"host", r.environment.host},
                      {"precision", r.environment.precision},
                      {"threads", r.environment.threads},
                      {"timestamp", r.environment.timestamp}};
  j["per_batch"] = json::array();
  for (const auto& c : r.cells) j["per_batch"].push_back(cell_json(c));
  return j.dump(2);
}

BenchReport parse_bench_json(const std::string& text) {
  const json j = json::parse(text);
  BenchReport r;
  r.model_id = j.at("model_id").get<std::string>();
  r.spec_hash = j.at("spec_hash").get<std::string>();
  r.resolution = j.at("resolution").get<int>();
  r.batch_sizes = j.at("batch_sizes").get<std::vector<int>>();
  r.warmup = j.at("warmup_iters").get<int>();
  r.iters = j.at("timed_iters").get<int>();
  r.repeats = j.at("repeats").get<int>();
  const auto& e = j.at("environment");
  r.environment = {e.at("host").get<std::string>(), e.at("precision").get<std::string>(),
                   e.at("timestamp").get<std::string>(), e.at("threads").get<int>()};
  for (const auto& c : j.at("per_batch")) {
    BenchCell cell;
    cell.batch = c.at("batch").get<int>();
    cell.ok = c.at("ok").get<bool>();
    if (c.contains("error")) cell.error = c["error"].get<std::string>();
    cell.throughput_mean = c.at("throughput").at("mean").get<double>();
    cell.throughput_std = c.at("throughput").at("std").get<double>();
    cell.latency_p50_ms = c.at("latency_ms").at("p50").get<double>();
    cell.latency_p95_ms = c.at("latency_ms").at("p95").get<double>();
    cell.peak_bytes = c.at("peak_bytes").get<std::size_t>();
    cell.repeat_seconds = c.at("raw").at("repeat_seconds").get<std::vector<double>>();
    cell.iteration_ms = c.at("raw").at("iteration_ms").get<std::vector<std::vector<double>>>();
    r.cells.push_back(std::move(cell));
  }
  return r;
}

std::string render_bench_table(const std::vector<BenchReport>& reports, const std::vector<CostReport>& costs) {
  if (reports.size() != costs.size()) throw std::invalid_argument("one cost report per bench report required");
  std::vector<int> batches;
  for (const auto& r : reports)
    for (int b : r.batch_sizes)
      if (std::find(batches.begin(), batches.end(), b) == batches.end()) batches.push_back(b);
  std::sort(batches.begin(), batches.end());
  std::ostringstream out;
  out << std::left << std::setw(18) << "model" << std::right << std::setw(10) << "Params" << std::setw(10) << "MACs";
  for (int b : batches) out << std::setw(18) << ("B=" + std::to_string(b));
  out << "\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    out << std::left << std::setw(18) << reports[i].model_id << std::right << std::setw(10)
        << (fmt(costs[i].total_params / 1e6, 2) + "M") << std::setw(10) << (fmt(costs[i].total_macs / 1e9, 3) + "G");
    for (int b : batches) {
      const BenchCell* c = reports[i].cell(b);
      std::string v = !c ? "-" : !c->ok ? "failed" : fmt(c->throughput_mean, 1) + "+-" + fmt(c->throughput_std, 1);
      out << std::setw(18) << v;
    }
    out << "\n";
  }
  out << "throughput in samples/s (mean+-std over repeats), resolution " << (reports.empty() ? 0 : reports[0].resolution)
      << "\n";
  return out.str();
}

std::string render_compare_text(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(18) << "model" << std::right << std::setw(14) << "MACs" << std::setw(14)
      << "samples/s" << std::setw(10) << "MACrank" << std::setw(10) << "TPrank" << std::setw(11) << "inversion"
      << "\n";
  for (const auto& r : rows)
    out << std::left << std::setw(18) << r.model << std::right << std::setw(14) << r.macs << std::setw(14)
        << fmt(r.throughput, 1) << std::setw(10) << r.macs_rank << std::setw(10) << r.throughput_rank << std::setw(11)
        << (r.inversion ? "yes" : "no") << "\n";
  return out.str();
}

}  // namespace ascan
