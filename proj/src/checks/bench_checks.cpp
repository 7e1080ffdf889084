#include <cmath>

#include "ascan/bench.hpp"
#include "common.hpp"

namespace ascan {

using checks_detail::fmt;

CheckSuite check_bench() {
  CheckSuite s{"bench", {}};
  BenchOptions o;
  o.batch_sizes = {1, 16, 64};
  o.warmup = 1;
  o.iters = 20;
  o.repeats = 3;

  SpinTarget spin("spin", 500, 20);
  const auto a = run_bench(spin, 1, o), b = run_bench(spin, 1, o);
  double worst = 0, worst_gap = 0;
  bool agree = true;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    worst = std::max(worst, a.cells[i].throughput_std / a.cells[i].throughput_mean);
    const double gap = std::abs(a.cells[i].throughput_mean - b.cells[i].throughput_mean);
    const double band = std::max(3 * std::max(a.cells[i].throughput_std, b.cells[i].throughput_std),
                                 1e-3 * a.cells[i].throughput_mean);
    agree = agree && gap <= band;
    worst_gap = std::max(worst_gap, gap / band);
  }
  s.items.push_back({"repeat stability std/mean < 0.2", worst < 0.2, fmt("worst %.4f", worst)});
  s.items.push_back({"consecutive runs agree within reported spread", agree, fmt("worst gap/band %.3f", worst_gap)});

  SpinTarget plain("plain", 1000, 0), slow("slow", 1000, 0, 10.0);
  BenchOptions one = o;
  one.batch_sizes = {1};
  const auto p = run_bench(plain, 1, one), q = run_bench(slow, 1, one);
  const double shift = std::abs(p.cells[0].throughput_mean - q.cells[0].throughput_mean) / p.cells[0].throughput_mean;
  s.items.push_back({"10x slow first call excluded by warmup", shift < 0.05, fmt("mean moved %.2f%%", 100 * shift)});

  ConvStackTarget narrow("narrow", 2000, 4, 1, 8), wide("wide", 1, 128, 3, 8);
  BenchOptions c = one;
  c.iters = 5;
  const auto rows = compare({run_bench(narrow, 8, c), run_bench(wide, 8, c)}, {narrow.cost(), wide.cost()});
  s.items.push_back({"constructed MACs/throughput rank inversion flagged",
                     rows[0].inversion && rows[0].macs_rank == 1 && rows[0].throughput_rank == 2,
                     fmt("narrow %.2fM MACs %.0f/s, wide %.2fM MACs %.0f/s", rows[0].macs / 1e6, rows[0].throughput,
                         rows[1].macs / 1e6, rows[1].throughput)});
  const auto same = compare({run_bench(wide, 8, c), run_bench(wide, 8, c)}, {wide.cost(), wide.cost()});
  s.items.push_back({"identical model twice: no inversion", !same[0].inversion && !same[1].inversion, ""});
  return s;
}

}  // namespace ascan
