#include <doctest.h>

#include <cmath>
#include <new>

#include "ascan/bench.hpp"

using namespace ascan;

namespace {

BenchReport synthetic_report(const std::vector<int>& batches, double k_ms, double overhead_samples) {
  // every iteration of batch B takes k * (B + c) ms
  BenchReport r;
  r.model_id = "synthetic";
  r.resolution = 8;
  r.batch_sizes = batches;
  r.iters = 4;
  r.repeats = 3;
  for (int b : batches) {
    BenchCell c;
    c.batch = b;
    const double ms = k_ms * (b + overhead_samples);
    for (int rep = 0; rep < 3; ++rep) {
      c.iteration_ms.push_back(std::vector<double>(4, ms));
      c.repeat_seconds.push_back(4 * ms / 1000);
    }
    summarize_cell(c, 4);
    r.cells.push_back(c);
  }
  return r;
}

BenchOptions quick(std::vector<int> batches) {
  BenchOptions o;
  o.batch_sizes = std::move(batches);
  o.warmup = 1;
  o.iters = 20;
  o.repeats = 3;
  return o;
}

}  // namespace

TEST_CASE("one row per batch size and preconditions") {
  SpinTarget t("spin", 200, 5);
  auto rep = run_bench(t, 1, quick({1, 16, 64}));
  CHECK(rep.cells.size() == 3);
  for (const auto& c : rep.cells) {
    CHECK(c.ok);
    CHECK(c.repeat_seconds.size() == 3);
    CHECK(c.iteration_ms.size() == 3);
    CHECK(c.iteration_ms[0].size() == 20);
  }
  auto o = quick({1});
  o.warmup = 0;
  CHECK_THROWS_AS(run_bench(t, 1, o), std::invalid_argument);
  o = quick({});
  CHECK_THROWS_AS(run_bench(t, 1, o), std::invalid_argument);
  o = quick({1});
  o.repeats = 2;
  CHECK_THROWS_AS(run_bench(t, 1, o), std::invalid_argument);
}

TEST_CASE("repeat stability and run-to-run agreement on a deterministic dummy") {
  SpinTarget t("spin", 500, 20);
  auto a = run_bench(t, 1, quick({1, 16, 64}));
  auto b = run_bench(t, 1, quick({1, 16, 64}));
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    CHECK(a.cells[i].throughput_std / a.cells[i].throughput_mean < 0.2);
    const double band = 3 * std::max(a.cells[i].throughput_std, b.cells[i].throughput_std);
    CHECK(std::abs(a.cells[i].throughput_mean - b.cells[i].throughput_mean) <=
          std::max(band, 1e-3 * a.cells[i].throughput_mean));
  }
}

TEST_CASE("a slow first call is excluded by warmup") {
  SpinTarget plain("plain", 1000, 0), slow("slow", 1000, 0, 10.0);
  auto a = run_bench(plain, 1, quick({1}));
  auto b = run_bench(slow, 1, quick({1}));
  const auto& ca = a.cells[0];
  const auto& cb = b.cells[0];
  // including the 10 ms call in one 20-iteration repeat would cut its throughput by ~30%
  CHECK(std::abs(ca.throughput_mean - cb.throughput_mean) < 0.05 * ca.throughput_mean);
  for (const auto& r : cb.iteration_ms)
    for (double ms : r) CHECK(ms < 5.0);
}

TEST_CASE("statistics are recomputable from the raw timings") {
  SpinTarget t("spin", 300, 10);
  auto rep = run_bench(t, 1, quick({2, 8}));
  for (const auto& c : rep.cells) {
    BenchCell copy = c;
    copy.throughput_mean = copy.throughput_std = copy.latency_p50_ms = copy.latency_p95_ms = 0;
    summarize_cell(copy, rep.iters);
    CHECK(copy.throughput_mean == c.throughput_mean);
    CHECK(copy.throughput_std == c.throughput_std);
    CHECK(copy.latency_p95_ms == c.latency_p95_ms);
    double elapsed = 0;
    for (double s : c.repeat_seconds) elapsed += c.batch * rep.iters / s;
    CHECK(c.throughput_mean == doctest::Approx(elapsed / c.repeat_seconds.size()));
  }
  const auto text = render_bench_json(rep);
  CHECK(render_bench_json(parse_bench_json(text)) == text);
}

TEST_CASE("allocation failure marks the cell and the sweep continues") {
  struct Greedy : BenchTarget {
    int batch = 0;
    std::string id() const override { return "greedy"; }
    void prepare(int b) override {
      batch = b;
      if (b > 8) throw std::bad_alloc();
    }
    void run() override {}
  } t;
  auto rep = run_bench(t, 1, quick({1, 64, 4}));
  REQUIRE(rep.cells.size() == 3);
  CHECK(rep.cells[0].ok);
  CHECK_FALSE(rep.cells[1].ok);
  CHECK(rep.cells[1].error == "out of memory");
  CHECK(rep.cells[2].ok);
}

TEST_CASE("batch scaling curve") {
  for (const auto& row : batch_scaling_curve(synthetic_report({1, 16, 64}, 0.5, 0.0)))
    CHECK(row.efficiency == doctest::Approx(1.0));
  const double c = 12.0;
  auto curve = batch_scaling_curve(synthetic_report({1, 4, 16, 64}, 0.25, c));
  REQUIRE(curve.size() == 4);
  for (const auto& row : curve) {
    const double want = (row.batch / (row.batch + c)) / (1.0 / (1.0 + c));
    CHECK(row.efficiency == doctest::Approx(want).epsilon(1e-12));
  }
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].efficiency > curve[i - 1].efficiency);
  CHECK_THROWS_WITH_AS(batch_scaling_curve(synthetic_report({16}, 1, 0)), doctest::Contains(">= 2"),
                       std::invalid_argument);
}

TEST_CASE("a constructed low-MAC slow model is flagged") {
  ConvStackTarget narrow("narrow", 2000, 4, 1, 8), wide("wide", 1, 128, 3, 8);
  CHECK(narrow.cost().total_macs < wide.cost().total_macs);
  BenchOptions o = quick({1});
  o.iters = 5;
  auto a = run_bench(narrow, 8, o), b = run_bench(wide, 8, o);
  auto rows = compare({a, b}, {narrow.cost(), wide.cost()});
  CHECK(rows[0].macs_rank == 1);
  CHECK(rows[0].throughput_rank == 2);
  CHECK(rows[0].inversion);
  CHECK_FALSE(rows[1].inversion);
  auto same = compare({b, b}, {wide.cost(), wide.cost()});
  CHECK_FALSE(same[0].inversion);
  CHECK_FALSE(same[1].inversion);
  auto other = b;
  other.resolution = 16;
  CHECK_THROWS_AS(compare({a, other}, {narrow.cost(), wide.cost()}), std::invalid_argument);
  const auto table = render_bench_table({a, b}, {narrow.cost(), wide.cost()});
  CHECK(table.find("Params") != std::string::npos);
  CHECK(table.find("B=1") != std::string::npos);
}

TEST_CASE("classifier workload") {
  auto model = build_model(toy_classifier_spec(), 2, 1);
  ClassifierTarget t(model, 8);
  BenchOptions o = quick({1, 4});
  o.iters = 3;
  auto rep = run_bench(t, 8, o);
  CHECK(rep.spec_hash == spec_hash(model->spec()));
  CHECK(rep.model_id == "toy-classifier");
  for (const auto& c : rep.cells) {
    CHECK(c.ok);
    CHECK(c.throughput_mean > 0);
    CHECK(c.peak_bytes > 0);
  }
  CHECK(rep.cell(4)->peak_bytes > rep.cell(1)->peak_bytes);
}
