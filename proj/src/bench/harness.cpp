#include <sys/utsname.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <new>
#include <stdexcept>

#include "ascan/bench.hpp"
#include "ascan/memory.hpp"

namespace ascan {

namespace {

using Clock = std::chrono::steady_clock;

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  // linear interpolation between closest ranks
  const double pos = q * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - lo);
}

BenchEnvironment environment(const std::string& precision) {
  BenchEnvironment e;
  char host[256] = {0};
  if (gethostname(host, sizeof(host) - 1) == 0) e.host = host;
  utsname u{};
  if (uname(&u) == 0) e.host += std::string(" ") + u.sysname + " " + u.release + " " + u.machine;
  e.precision = precision;
  e.threads = 1;  // the backend is single-threaded
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  e.timestamp = buf;
  return e;
}

}  // namespace

const BenchCell* BenchReport::cell(int batch) const {
  for (const auto& c : cells)
    if (c.batch == batch) return &c;
  return nullptr;
}

void summarize_cell(BenchCell& cell, int iters) {
  std::vector<double> tp;
  for (double s : cell.repeat_seconds) tp.push_back(s > 0 ? cell.batch * static_cast<double>(iters) / s : 0.0);
  double mean = 0;
  for (double v : tp) mean += v;
  mean = tp.empty() ? 0 : mean / tp.size();
  double var = 0;
  for (double v : tp) var += (v - mean) * (v - mean);
  cell.throughput_mean = mean;
  cell.throughput_std = tp.size() > 1 ? std::sqrt(var / (tp.size() - 1)) : 0.0;
  std::vector<double> all;
  for (const auto& r : cell.iteration_ms) all.insert(all.end(), r.begin(), r.end());
  cell.latency_p50_ms = percentile(all, 0.50);
  cell.latency_p95_ms = percentile(all, 0.95);
}

BenchReport run_bench(BenchTarget& target, int resolution, const BenchOptions& opts) {
  if (opts.batch_sizes.empty()) throw std::invalid_argument("bench needs at least one batch size");
  if (opts.warmup < 1) throw std::invalid_argument("bench warmup must be at least 1");
  if (opts.iters < 1) throw std::invalid_argument("bench needs at least one timed iteration");
  if (opts.repeats < 3) throw std::invalid_argument("bench needs at least 3 repeats for a spread");
  for (int b : opts.batch_sizes)
    if (b < 1) throw std::invalid_argument("batch sizes must be positive");

  BenchReport rep;
  rep.model_id = target.id();
  rep.spec_hash = target.spec_hash();
  rep.resolution = resolution;
  rep.batch_sizes = opts.batch_sizes;
  rep.warmup = opts.warmup;
  rep.iters = opts.iters;
  rep.repeats = opts.repeats;
  rep.environment = environment(target.precision());

  for (int batch : opts.batch_sizes) {
    BenchCell cell;
    cell.batch = batch;
    const std::size_t base = MemoryStats::current_bytes();
    MemoryStats::reset_peak();
    try {
      target.prepare(batch);
      for (int i = 0; i < opts.warmup; ++i) target.run();
      for (int r = 0; r < opts.repeats; ++r) {
        std::vector<double> lat;
        lat.reserve(opts.iters);
        const auto start = Clock::now();
        auto prev = start;
        for (int i = 0; i < opts.iters; ++i) {
          target.run();
          const auto now = Clock::now();
          lat.push_back(std::chrono::duration<double, std::milli>(now - prev).count());
          prev = now;
        }
        cell.repeat_seconds.push_back(std::chrono::duration<double>(prev - start).count());
        cell.iteration_ms.push_back(std::move(lat));
      }
      summarize_cell(cell, opts.iters);
    } catch (const std::bad_alloc&) {
      cell.ok = false;
      cell.error = "out of memory";
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
    const std::size_t peak = MemoryStats::peak_bytes();
    cell.peak_bytes = peak > base ? peak - base : 0;
    rep.cells.push_back(std::move(cell));
  }
  return rep;
}

}  // namespace ascan
