#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "run_manifest.hpp"

namespace ascan::cli {

struct SummarizeOptions {
  std::string preset, layout, config;
  int resolution = 0;  // 0: the spec's reference resolution (32 for unets)
  bool json = false;
};

struct BenchCliOptions {
  std::vector<std::string> models{"ascan-t"};
  int resolution = 0;
  std::vector<int> batches{1, 16, 64};
  int warmup = 10, iters = 50, repeats = 5;
  std::uint64_t seed = 0;
};

struct TrainClsOptions {
  std::string preset = "toy-classifier";
  std::string dataset = "synthetic";
  std::uint64_t seed = 0;
  int epochs = -1;  // -1: the recipe's
  int batch_size = 0;
  std::string recipe;  // paper | toy; empty picks by preset
  int per_class = 128, classes = 2, image_size = 0;
};

struct TrainDiffOptions {
  std::string preset = "unet-class-cond";
  std::string stage = "s256";
  int toy_scale = 0;  // 0: full scale
  std::uint64_t seed = 0;
  std::int64_t iterations = -1;
  int batch_size = 0;
  std::string schedule = "linear";
};

struct SampleOptions {
  std::string checkpoint;
  int steps = 30;
  std::string guidance = "sampled";
  std::optional<double> scale;
  std::string sampler = "ddpm";
  std::uint64_t seed = 0;
  int num = 4;
  std::vector<int> ids;
};

struct CheckOptions {
  bool grad = false, counts = false, schedule = false, rope = false, toy = false, bench = false, all = false;
};

// Each returns the process exit code; UsageError escapes for bad input.
int cmd_summarize(const SummarizeOptions& o, RunManifest& m);
int cmd_bench(const BenchCliOptions& o, RunManifest& m);
int cmd_train_cls(const TrainClsOptions& o, RunManifest& m);
int cmd_train_diff(const TrainDiffOptions& o, RunManifest& m);
int cmd_sample(const SampleOptions& o, RunManifest& m);
int cmd_check(const CheckOptions& o, RunManifest& m);

}  // namespace ascan::cli
