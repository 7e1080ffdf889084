#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ascan/analysis.hpp"
#include "ascan/classifier.hpp"

namespace ascan {

/// Something the harness can time: `prepare` builds the pinned input for a
/// batch size (untimed), `run` performs one inference.
class BenchTarget {
 public:
  virtual ~BenchTarget() = default;
  virtual std::string id() const = 0;
  virtual std::string spec_hash() const { return ""; }
  virtual std::string precision() const { return "float32"; }
  virtual void prepare(int batch) = 0;
  virtual void run() = 0;
};

struct BenchCell {
  int batch = 0;
  bool ok = true;
  std::string error;                 // set when !ok
  std::vector<double> repeat_seconds;  // elapsed time of each repeat's timed loop
  std::vector<std::vector<double>> iteration_ms;  // per repeat, per timed iteration
  double throughput_mean = 0, throughput_std = 0;  // samples/s over repeats
  double latency_p50_ms = 0, latency_p95_ms = 0;   // over all timed iterations
  std::size_t peak_bytes = 0;                      // tensor storage above the pre-run level
};

struct BenchEnvironment {
  std::string host, precision, timestamp;
  int threads = 1;
};

struct BenchReport {
  std::string model_id, spec_hash;
  int resolution = 0;
  std::vector<int> batch_sizes;
  std::vector<BenchCell> cells;
  int warmup = 0, iters = 0, repeats = 0;
  BenchEnvironment environment;

  const BenchCell* cell(int batch) const;
};

struct BenchOptions {
  std::vector<int> batch_sizes{1, 16, 64};
  int warmup = 10, iters = 50, repeats = 5;
};

/// Times `iters` calls per repeat after `warmup` untimed calls; a failure at
/// one batch size (including allocation failure) is recorded and the sweep
/// continues.
BenchReport run_bench(BenchTarget& target, int resolution, const BenchOptions& opts);
/// Recomputes throughput mean/std and latency percentiles of a cell from
/// its raw timings.
void summarize_cell(BenchCell& cell, int iters);

struct ScalingRow {
  int batch = 0;
  double throughput = 0;
  double per_sample_ms = 0;
  double efficiency = 0;  // throughput relative to the smallest batch size
};
std::vector<ScalingRow> batch_scaling_curve(const BenchReport& report);

struct CompareRow {
  std::string model;
  std::int64_t params = 0, macs = 0;
  double throughput = 0;
  int macs_rank = 0;        // 1 = fewest MACs
  int throughput_rank = 0;  // 1 = fastest
  bool inversion = false;   // some model with more MACs is faster
};
/// Pairs reports with cost reports of the same resolution; throughput is
/// taken at `batch` (0: the largest batch size every report measured).
std::vector<CompareRow> compare(const std::vector<BenchReport>& reports, const std::vector<CostReport>& costs,
                                int batch = 0);

std::string render_bench_json(const BenchReport& r);
BenchReport parse_bench_json(const std::string& text);
/// Fixed-width table: model | Params | MACs | B=... throughput columns.
std::string render_bench_table(const std::vector<BenchReport>& reports, const std::vector<CostReport>& costs);
std::string render_compare_text(const std::vector<CompareRow>& rows);

// --- workloads -----------------------------------------------------------------

/// Eval-mode forwards of a classifier on fixed N(0, 1) input.
class ClassifierTarget : public BenchTarget {
 public:
  ClassifierTarget(std::shared_ptr<ClassifierModel> model, int resolution, std::uint64_t seed = 0);
  std::string id() const override;
  std::string spec_hash() const override;
  void prepare(int batch) override;
  void run() override;

 private:
  std::shared_ptr<ClassifierModel> model_;
  int resolution_;
  std::uint64_t seed_;
  Tensor input_;
};

/// Busy-waits overhead_us + per_sample_us * batch per call; optionally the
/// first call after prepare takes `first_call_factor` times as long.
class SpinTarget : public BenchTarget {
 public:
  SpinTarget(std::string id, double overhead_us, double per_sample_us, double first_call_factor = 1.0);
  std::string id() const override { return id_; }
  void prepare(int batch) override;
  void run() override;

 private:
  std::string id_;
  double overhead_us_, per_sample_us_, first_factor_;
  int batch_ = 1;
  bool first_ = true;
};

/// A stack of convolutions on [N, channels, size, size] input; with many
/// narrow layers the per-layer overhead dominates, with one wide layer the
/// arithmetic does.
class ConvStackTarget : public BenchTarget {
 public:
  ConvStackTarget(std::string id, int layers, int channels, int kernel, int size, std::uint64_t seed = 0);
  std::string id() const override { return id_; }
  void prepare(int batch) override;
  void run() override;
  /// Analytic cost at the target's own input size.
  CostReport cost() const;

 private:
  std::string id_;
  int layers_, channels_, kernel_, size_;
  std::vector<Tensor> weights_;
  Tensor input_;
};

}  // namespace ascan
