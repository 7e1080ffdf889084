#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace ascan::cli;

int main(int argc, char** argv) {
  CLI::App app{"ascan: hybrid conv/attention backbones - cost analysis, training, sampling, benchmarking"};
  app.set_help_flag();
  app.add_flag_callback("-h,--help", [] { throw CLI::CallForAllHelp(); }, "Print this help (all subcommands) and exit");
  app.require_subcommand(1);
  app.fallthrough();
  std::string out_dir = default_out_dir().string();
  app.add_option("-o,--out", out_dir, "Output directory (default: $ASCAN_OUT_DIR or ./ascan-out)");

  SummarizeOptions so;
  auto* sum = app.add_subcommand("summarize", "Parameter and MAC report for a preset, layout string or config file");
  auto* preset_opt = sum->add_option("--preset", so.preset, "Preset name (ascan-t|b|l, c1..c10, t1..t5, unet-class-cond, unet-t2i)");
  auto* layout_opt = sum->add_option("--layout", so.layout, "Block layout such as CC-CCCT-CCTT-CTTT (classifier)");
  auto* config_opt = sum->add_option("--config", so.config, "JSON config file")->check(CLI::ExistingFile);
  preset_opt->excludes(layout_opt)->excludes(config_opt);
  layout_opt->excludes(config_opt);
  sum->add_option("--resolution", so.resolution, "Input side in pixels (default: 224; 32 latent for unets)");
  sum->add_flag("--json", so.json, "Print the JSON report instead of the table");

  BenchCliOptions bo;
  auto* bench = app.add_subcommand("bench", "Throughput/latency sweep over batch sizes");
  bench->add_option("--model", bo.models,
                    "Classifier preset, toy-classifier, or a harness workload (spin, narrow-convs, wide-conv); repeatable")
      ->delimiter(',');
  bench->add_option("--resolution", bo.resolution, "Input side (default: the model's)");
  bench->add_option("--batches", bo.batches, "Comma-separated batch sizes")->delimiter(',')->capture_default_str();
  bench->add_option("--warmup", bo.warmup, "Untimed calls per batch size")->capture_default_str();
  bench->add_option("--iters", bo.iters, "Timed calls per repeat")->capture_default_str();
  bench->add_option("--repeats", bo.repeats, "Repeats per batch size (>= 3)")->capture_default_str();
  bench->add_option("--seed", bo.seed, "Weight and input seed")->capture_default_str();

  TrainClsOptions co;
  auto* tcls = app.add_subcommand("train-cls", "Train a classifier (epochs 0 writes the initial checkpoint)");
  tcls->add_option("--preset", co.preset, "toy-classifier or a classifier preset")->capture_default_str();
  tcls->add_option("--dataset", co.dataset, "Dataset directory, or 'synthetic' for seeded blobs")->capture_default_str();
  tcls->add_option("--seed", co.seed, "Seed for data, init and training")->capture_default_str();
  tcls->add_option("--epochs", co.epochs, "Override the recipe's epoch count");
  tcls->add_option("--batch-size", co.batch_size, "Override the recipe's batch size");
  tcls->add_option("--recipe", co.recipe, "paper or toy (default: toy for toy-classifier)")
      ->check(CLI::IsMember({"paper", "toy"}));
  tcls->add_option("--per-class", co.per_class, "Synthetic samples per class")->capture_default_str();
  tcls->add_option("--classes", co.classes, "Synthetic class count")->capture_default_str();
  tcls->add_option("--image-size", co.image_size, "Synthetic image side (default: 8 toy, else the total stride)");

  TrainDiffOptions dO;
  auto* tdiff = app.add_subcommand("train-diff", "Train a diffusion unet on synthetic class latents (or the 2D toy)");
  tdiff->add_option("--preset", dO.preset, "unet-class-cond, unet-t2i or toy-2d")->capture_default_str();
  tdiff->add_option("--stage", dO.stage, "Curriculum stage: s256, s512, s1024, multi_aspect")->capture_default_str();
  tdiff->add_option("--toy-scale", dO.toy_scale, "Shrink widths, resolution, iterations and batch by this divisor (0: full scale)")
      ->capture_default_str();
  tdiff->add_option("--seed", dO.seed, "Seed for data, init and training")->capture_default_str();
  tdiff->add_option("--iterations", dO.iterations, "Override the stage's iteration count");
  tdiff->add_option("--batch-size", dO.batch_size, "Override the stage's batch size");
  tdiff->add_option("--schedule", dO.schedule, "Noise schedule: linear or scaled_linear")
      ->check(CLI::IsMember({"linear", "scaled_linear"}))
      ->capture_default_str();

  SampleOptions sa;
  auto* samp = app.add_subcommand("sample", "Draw samples from a diffusion checkpoint");
  samp->add_option("--checkpoint", sa.checkpoint, "Checkpoint written by train-diff");
  samp->add_option("--steps", sa.steps, "Sampling steps")->capture_default_str();
  samp->add_option("--guidance", sa.guidance, "sampled (1.1 -> 3.6 over steps 5..30), constant, or none")
      ->check(CLI::IsMember({"sampled", "constant", "none"}))
      ->capture_default_str();
  samp->add_option("--scale", sa.scale, "Guidance scale for --guidance constant (default 1)");
  samp->add_option("--sampler", sa.sampler, "ddpm or heun")->check(CLI::IsMember({"ddpm", "heun"}))->capture_default_str();
  samp->add_option("--seed", sa.seed, "Noise seed")->capture_default_str();
  samp->add_option("--num", sa.num, "Number of samples")->capture_default_str();
  samp->add_option("--ids", sa.ids, "Comma-separated class ids (default: cycle)")->delimiter(',');

  CheckOptions ko;
  auto* chk = app.add_subcommand("check", "Run property suites; exits 1 on any failure (no flags: all but toy and bench)");
  chk->add_flag("--grad", ko.grad, "Gradient checks: primitives, blocks, a two-level unet through the loss");
  chk->add_flag("--counts", ko.counts, "Parameter/MAC reconciliation against published values");
  chk->add_flag("--schedule", ko.schedule, "Noise schedule, guidance and Heun-order checks");
  chk->add_flag("--rope", ko.rope, "Rotary embedding and qk-norm checks");
  chk->add_flag("--toy", ko.toy, "Toy classification and 2D diffusion experiments (minutes)");
  chk->add_flag("--bench", ko.bench, "Benchmark-harness self-tests (timing based)");
  chk->add_flag("--all", ko.all, "Everything");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto* cmd = app.get_subcommands().front();
  try {
    RunManifest m(cmd->get_name(), out_dir);
    for (const auto* opt : cmd->get_options()) {
      if (opt->get_name().empty() || opt->get_name() == "--help") continue;
      const auto key = opt->get_single_name();
      const auto res = opt->results();
      if (opt->get_items_expected_max() == 0)
        m.config()[key] = opt->count() > 0;
      else if (!res.empty())
        m.config()[key] = res.size() == 1 ? nlohmann::ordered_json(res.front()) : nlohmann::ordered_json(res);
      else
        m.config()[key] = opt->get_default_str().empty() ? nlohmann::ordered_json(nullptr)
                                                         : nlohmann::ordered_json(opt->get_default_str());
    }
    int code = 1;
    if (cmd == sum) code = cmd_summarize(so, m);
    else if (cmd == bench) code = cmd_bench(bo, m);
    else if (cmd == tcls) code = cmd_train_cls(co, m);
    else if (cmd == tdiff) code = cmd_train_diff(dO, m);
    else if (cmd == samp) code = cmd_sample(sa, m);
    else if (cmd == chk) code = cmd_check(ko, m);
    m.finish();
    return code;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
