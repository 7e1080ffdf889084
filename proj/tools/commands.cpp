#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "ascan/analysis.hpp"
#include "ascan/bench.hpp"
#include "ascan/checks.hpp"
#include "ascan/classifier.hpp"
#include "ascan/diffusion.hpp"
#include "ascan/log.hpp"

namespace ascan::cli {

namespace {

template <typename... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, a...);
  return buf;
}

// Config resolution failures are usage errors, whatever the library threw.
template <typename F>
auto usage_on_error(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const ParseError& e) {
    throw UsageError(what + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(what + ": " + e.what());
  }
}

void require_valid(const ArchSpec& spec) {
  const auto diags = validate(spec);
  std::string errors;
  for (const auto& d : diags) {
    if (d.severity == Severity::kWarning)
      warn(spec.name + ": " + d.message);
    else
      errors += "\n  " + d.message;
  }
  if (!errors.empty()) throw UsageError("invalid spec '" + spec.name + "':" + errors);
}

void note_spec(RunManifest& m, const ArchSpec& spec) { m.set_spec(to_json(spec), spec_hash(spec)); }

std::string checkpoint_bytes(const Checkpoint& c) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, c);
  return out.str();
}

// --- summarize ---------------------------------------------------------------

ArchSpec resolve_spec(const SummarizeOptions& o) {
  const int given = !o.preset.empty() + !o.layout.empty() + !o.config.empty();
  if (given != 1) throw UsageError("summarize needs exactly one of --preset, --layout, --config");
  if (!o.preset.empty()) return usage_on_error("preset", [&] { return build_preset(o.preset); });
  if (!o.layout.empty())
    return usage_on_error("layout", [&] { return classifier_from_layout(parse_config_string(o.layout), o.layout); });
  return usage_on_error("config " + o.config, [&] { return load_config_file(o.config); });
}

// --- bench -------------------------------------------------------------------

struct BenchModel {
  std::unique_ptr<BenchTarget> target;
  CostReport cost;
  int resolution = 0;
};

BenchModel make_bench_model(const std::string& name, int resolution, std::uint64_t seed) {
  BenchModel b;
  if (name == "spin") {
    b.target = std::make_unique<SpinTarget>("spin", 500, 20);
    b.cost.name = "spin";
    b.resolution = 1;
    return b;
  }
  if (name == "narrow-convs" || name == "wide-conv") {
    auto t = name == "narrow-convs" ? std::make_unique<ConvStackTarget>(name, 2000, 4, 1, 8, seed)
                                    : std::make_unique<ConvStackTarget>(name, 1, 128, 3, 8, seed);
    b.cost = t->cost();
    b.target = std::move(t);
    b.resolution = 8;
    return b;
  }
  const ArchSpec spec = name == "toy-classifier" ? toy_classifier_spec()
                                                  : usage_on_error("bench", [&] { return build_preset(name); });
  if (spec.kind != ArchKind::kClassifier) throw UsageError("bench times classifier backbones; '" + name + "' is a unet");
  require_valid(spec);
  b.resolution = resolution ? resolution : (name == "toy-classifier" ? 8 : spec.reference_resolution);
  b.cost = usage_on_error("bench", [&] { return count_macs(spec, b.resolution, b.resolution); });
  b.target = std::make_unique<ClassifierTarget>(build_model(spec, spec.classifier.num_classes, seed), b.resolution, seed);
  return b;
}

// --- training data -----------------------------------------------------------

ArchSpec classifier_spec_for(const std::string& preset, int classes) {
  if (preset == "toy-classifier") return toy_classifier_spec(classes);
  ArchSpec s = usage_on_error("preset", [&] { return build_preset(preset); });
  if (s.kind != ArchKind::kClassifier) throw UsageError("train-cls needs a classifier preset; '" + preset + "' is a unet");
  return s;
}

// Latents: a fixed N(0, 0.8^2) pattern per class id plus N(0, 0.5^2) noise.
BatchSource class_latents(Shape per_sample, int num_classes, std::uint64_t seed) {
  auto patterns = std::make_shared<std::map<int, std::vector<double>>>();
  return [=](Rng& rng, int n) {
    LatentBatch b;
    Shape shape = per_sample;
    shape.insert(shape.begin(), n);
    const std::int64_t per = numel_of(per_sample);
    std::vector<double> v(n * per);
    for (int i = 0; i < n; ++i) {
      const int id = static_cast<int>(rng.uniform_int(0, num_classes - 1));
      b.ids.push_back(id);
      auto it = patterns->find(id);
      if (it == patterns->end()) {
        Rng p(seed ^ (0xD1B54A32D192ED03ULL * (static_cast<std::uint64_t>(id) + 1)));
        std::vector<double> pat(per);
        for (auto& x : pat) x = 0.8 * p.normal();
        it = patterns->emplace(id, std::move(pat)).first;
      }
      for (std::int64_t j = 0; j < per; ++j) v[i * per + j] = it->second[j] + 0.5 * rng.normal();
    }
    b.z = Tensor::from_vector(shape, v);
    return b;
  };
}

const char* schedule_name(ScheduleKind k) { return k == ScheduleKind::kLinear ? "linear" : "scaled_linear"; }

double tensor_mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / v.size();
}

}  // namespace

int cmd_summarize(const SummarizeOptions& o, RunManifest& m) {
  const ArchSpec spec = resolve_spec(o);
  require_valid(spec);
  note_spec(m, spec);
  const int res = o.resolution ? o.resolution : (spec.kind == ArchKind::kUnet ? 32 : spec.reference_resolution);
  m.config()["resolution"] = res;
  const CostReport r = usage_on_error("resolution", [&] { return count_macs(spec, res, res); });
  const std::string text = render_text(r), json = render_json(r, spec_hash(spec));
  m.write("summary.txt", text);
  m.write("summary.json", json);
  std::cout << (o.json ? json : text);
  return 0;
}

int cmd_bench(const BenchCliOptions& o, RunManifest& m) {
  if (o.models.empty()) throw UsageError("bench needs at least one --model");
  BenchOptions bo;
  bo.batch_sizes = o.batches;
  bo.warmup = o.warmup;
  bo.iters = o.iters;
  bo.repeats = o.repeats;
  std::vector<BenchReport> reports;
  std::vector<CostReport> costs;
  for (const auto& name : o.models) {
    auto b = make_bench_model(name, o.resolution, o.seed);
    auto rep = usage_on_error("bench", [&] { return run_bench(*b.target, b.resolution, bo); });
    m.write("bench_" + name + ".json", render_bench_json(rep));
    reports.push_back(std::move(rep));
    costs.push_back(b.cost);
  }
  std::string text = render_bench_table(reports, costs);
  if (reports.size() > 1) {
    try {
      text += "\n" + render_compare_text(compare(reports, costs));
    } catch (const std::invalid_argument& e) {
      text += "\n(no ranking: " + std::string(e.what()) + ")\n";
    }
  }
  m.write("bench.txt", text);
  std::cout << text;
  for (const auto& r : reports)
    for (const auto& c : r.cells)
      if (!c.ok) std::cerr << "warning: " << r.model_id << " B=" << c.batch << " failed: " << c.error << "\n";
  return 0;
}

int cmd_train_cls(const TrainClsOptions& o, RunManifest& m) {
  ArchSpec spec = classifier_spec_for(o.preset, o.classes);
  require_valid(spec);
  m.set_seed(o.seed);

  const bool toy = o.preset == "toy-classifier";
  const std::string recipe_name = o.recipe.empty() ? (toy ? "toy" : "paper") : o.recipe;
  TrainRecipe recipe;
  if (recipe_name == "toy") {
    recipe = toy_recipe();
  } else if (recipe_name == "paper") {
    try {
      recipe = paper_recipe(spec.name);
    } catch (const std::invalid_argument&) {
      recipe.stochastic_depth = spec.stochastic_depth;  // published values apart from the drop rate
    }
  } else {
    throw UsageError("--recipe must be paper or toy");
  }
  if (o.epochs >= 0) recipe.epochs = o.epochs;
  if (o.batch_size > 0) recipe.batch_size = o.batch_size;

  Dataset data;
  if (o.dataset == "synthetic") {
    const int size = o.image_size ? o.image_size : (toy ? 8 : total_downsampling(spec));
    data = usage_on_error("dataset", [&] { return make_blobs(o.per_class, o.classes, spec.input_channels, size, 0.3, o.seed); });
  } else {
    if (!fs::is_directory(o.dataset)) throw UsageError("dataset directory not found: " + o.dataset);
    data = usage_on_error("dataset", [&] { return load_dataset_dir(o.dataset); });
  }
  spec.classifier.num_classes = data.num_classes;
  note_spec(m, spec);
  m.config()["recipe"] = {{"name", recipe_name},          {"epochs", recipe.epochs},
                          {"batch_size", recipe.batch_size}, {"peak_lr", recipe.peak_lr},
                          {"warmup_epochs", recipe.warmup_epochs}, {"weight_decay", recipe.weight_decay},
                          {"label_smoothing", recipe.label_smoothing}, {"mixup_alpha", recipe.mixup_alpha},
                          {"ema_decay", recipe.ema_decay}, {"stochastic_depth", recipe.stochastic_depth}};
  m.config()["dataset"] = {{"source", o.dataset}, {"size", data.size()}, {"num_classes", data.num_classes},
                           {"shape", data.images.shape()}};

  auto model = build_model(spec, data.num_classes, o.seed);
  nlohmann::ordered_json man = {{"kind", "classifier"},
                                {"spec", nlohmann::ordered_json::parse(to_json(spec))},
                                {"spec_hash", spec_hash(spec)},
                                {"num_classes", data.num_classes},
                                {"weights", "raw"}};
  if (recipe.epochs == 0) {
    const auto bytes = checkpoint_bytes({man.dump(2), model->state()});
    m.write("init.ckpt", bytes);
    m.set_checkpoint_hash(fnv1a_hex(bytes));
    std::cout << "wrote initial checkpoint (" << model->parameter_count() << " parameters)\n";
    return 0;
  }
  if (auto p = check_recipe(recipe); !p.empty()) throw UsageError("recipe: " + p.front());

  std::ostringstream metrics;
  const auto res = train_epochs(*model, data, recipe, o.seed, {&metrics, nullptr});
  m.write("metrics.jsonl", metrics.str());
  nlohmann::ordered_json hist = nlohmann::ordered_json::array();
  for (const auto& e : res.history) {
    hist.push_back({{"epoch", e.epoch + 1}, {"loss", e.loss}, {"acc", e.acc}, {"ema_loss", e.ema_loss},
                    {"ema_acc", e.ema_acc}, {"train_loss", e.train_loss}});
    std::cout << fmt("epoch %3d  train_loss %.4f  loss %.4f  acc %.4f  ema_acc %.4f\n", e.epoch + 1, e.train_loss,
                     e.loss, e.acc, e.ema_acc);
  }
  m.write("history.json", hist.dump(2) + "\n");
  const auto bytes = checkpoint_bytes({man.dump(2), model->state()});
  m.write("model.ckpt", bytes);
  m.set_checkpoint_hash(fnv1a_hex(bytes));
  if (!res.ema_state.empty()) {
    man["weights"] = "ema";
    m.write("model_ema.ckpt", checkpoint_bytes({man.dump(2), res.ema_state}));
  }
  return 0;
}

int cmd_train_diff(const TrainDiffOptions& o, RunManifest& m) {
  const bool toy2d = o.preset == "toy-2d";
  ArchSpec spec = toy2d ? toy_2d_spec() : usage_on_error("preset", [&] { return build_preset(o.preset); });
  if (spec.kind != ArchKind::kUnet) throw UsageError("train-diff needs a unet preset; '" + o.preset + "' is a classifier");
  if (o.toy_scale < 0) throw UsageError("--toy-scale must be >= 0");
  if (toy2d && o.toy_scale > 0) throw UsageError("--toy-scale does not apply to toy-2d");
  if (o.toy_scale > 0) spec = toy_unet(spec, o.toy_scale);
  require_valid(spec);
  note_spec(m, spec);
  m.set_seed(o.seed);

  DiffusionRecipe r;
  NoiseSchedule sched;
  Shape latent;
  int num_classes;
  if (toy2d) {
    r = toy_2d_recipe();
    sched = make_schedule(1000, ScheduleKind::kLinear, 0.02);
    latent = {2, 1, 1};
    num_classes = 4;
  } else {
    StageRecipe st = usage_on_error("stage", [&] { return curriculum_config(o.stage); });
    if (o.toy_scale > 0) st = toy_stage(st, o.toy_scale);
    r.lr = st.lr;
    r.iterations = st.iterations;
    r.batch_size = st.batch_size;
    r.beta1 = st.beta1;
    r.beta2 = st.beta2;
    r.loss.offset_noise = st.offset_noise;
    r.warmup_steps = std::min<double>(100, std::max<std::int64_t>(1, st.iterations / 10));
    sched = usage_on_error("schedule", [&] { return make_schedule(1000, parse_schedule_kind(o.schedule), st.beta_end); });
    // latent side: image side / 8, at least one multiple of the unet's downsampling
    const int f = total_downsampling(spec);
    const int side = std::max(f, (st.resolution / 8 + f - 1) / f * f);
    latent = {spec.input_channels, side, side};
    num_classes = spec.unet.num_classes;
    m.config()["stage"] = {{"name", st.name},         {"resolution", st.resolution},   {"iterations", st.iterations},
                           {"batch_size", st.batch_size}, {"lr", st.lr},                {"beta_end", st.beta_end},
                           {"offset_noise", st.offset_noise}};
  }
  if (o.iterations >= 0) r.iterations = o.iterations;
  if (o.batch_size > 0) r.batch_size = o.batch_size;
  r.warmup_steps = std::min<double>(r.warmup_steps, static_cast<double>(r.iterations));
  m.config()["recipe"] = {{"lr", r.lr},
                          {"warmup_steps", r.warmup_steps},
                          {"cosine_decay", r.cosine_decay},
                          {"iterations", r.iterations},
                          {"batch_size", r.batch_size},
                          {"betas", {r.beta1, r.beta2}},
                          {"grad_clip_norm", r.grad_clip_norm},
                          {"ema_decay", r.ema_decay},
                          {"p_uncond", r.loss.p_uncond},
                          {"offset_noise", r.loss.offset_noise}};
  m.config()["latent"] = latent;

  BatchSource data;
  if (toy2d) {
    const auto mix = GaussianMixture2D::standard();
    data = [mix](Rng& rng, int n) { return mix.sample(rng, n); };
  } else {
    data = class_latents(latent, num_classes, o.seed);
  }
  Rng seeds(o.seed);
  const std::uint64_t init_seed = seeds.next_seed(), train_seed = seeds.next_seed();
  auto model = build_diffusion_model(spec, init_seed);

  nlohmann::ordered_json man = {
      {"kind", "unet"},
      {"spec", nlohmann::ordered_json::parse(to_json(spec))},
      {"spec_hash", spec_hash(spec)},
      {"schedule", {{"T", sched.T}, {"kind", schedule_name(sched.kind)}, {"beta_start", sched.beta_start}, {"beta_end", sched.beta_end}}},
      {"latent", latent},
      {"num_classes", num_classes},
      {"context_seed", o.seed},
      {"weights", "raw"}};

  std::ostringstream metrics;
  DiffusionTrainResult res;
  if (r.iterations > 0) {
    if (r.batch_size < 1) throw UsageError("--batch-size must be positive");
    DiffusionTrainOptions opts;
    opts.metrics = &metrics;
    opts.context_seed = o.seed;
    res = usage_on_error("recipe", [&] { return train_diffusion(*model, data, sched, r, train_seed, opts); });
  }
  m.write("metrics.jsonl", metrics.str());
  const auto bytes = checkpoint_bytes({man.dump(2), model->state()});
  m.write("model.ckpt", bytes);
  m.set_checkpoint_hash(fnv1a_hex(bytes));
  if (!res.ema_state.empty()) {
    man["weights"] = "ema";
    m.write("model_ema.ckpt", checkpoint_bytes({man.dump(2), res.ema_state}));
  }
  const auto& l = res.losses;
  std::cout << "model " << spec.name << " parameters " << model->parameter_count() << " iterations " << l.size() << "\n";
  if (!l.empty()) {
    const std::size_t k = std::max<std::size_t>(1, l.size() / 10);
    const std::vector<double> head(l.begin(), l.begin() + k), tail(l.end() - k, l.end());
    std::cout << fmt("mean loss first %zu: %.6f  last %zu: %.6f\n", k, tensor_mean(head), k, tensor_mean(tail));
  }
  return 0;
}

int cmd_sample(const SampleOptions& o, RunManifest& m) {
  if (o.checkpoint.empty()) throw UsageError("sample needs --checkpoint");
  if (!fs::is_regular_file(o.checkpoint)) throw UsageError("checkpoint not found: " + o.checkpoint);
  if (o.num < 1) throw UsageError("--num must be positive");

  GuidanceSchedule g;
  const GuidanceSchedule* guidance = &g;
  if (o.guidance == "sampled") {
    if (o.scale) throw UsageError("--scale conflicts with --guidance sampled (its scales are fixed)");
    g = GuidanceSchedule::sampled();
    if (auto p = check_guidance(g, o.steps); !p.empty()) throw UsageError("guidance: " + p.front());
  } else if (o.guidance == "constant") {
    g = GuidanceSchedule::constant(o.scale.value_or(1.0));
  } else if (o.guidance == "none") {
    if (o.scale) throw UsageError("--scale conflicts with --guidance none");
    guidance = nullptr;
  } else {
    throw UsageError("--guidance must be sampled, constant or none");
  }

  const Checkpoint ckpt = usage_on_error("checkpoint", [&] { return load_checkpoint(o.checkpoint); });
  m.set_checkpoint_hash(file_hash(o.checkpoint));
  const auto man = usage_on_error("checkpoint manifest", [&] { return nlohmann::json::parse(ckpt.manifest); });
  if (man.value("kind", "") != "unet") throw UsageError("checkpoint does not hold a diffusion model");
  const ArchSpec spec = usage_on_error("checkpoint spec", [&] { return from_json(man.at("spec").dump()); });
  note_spec(m, spec);
  m.set_seed(o.seed);
  auto model = build_diffusion_model(spec, 0);
  const auto missing = model->load_state(ckpt.tensors);
  if (!missing.empty()) throw std::runtime_error("checkpoint lacks " + missing.front());
  model->set_training(false);

  const auto& sj = man.at("schedule");
  const auto sched = make_schedule(sj.at("T").get<int>(), parse_schedule_kind(sj.at("kind").get<std::string>()),
                                   sj.at("beta_start").get<double>(), sj.at("beta_end").get<double>());
  const auto latent = man.at("latent").get<std::vector<std::int64_t>>();
  const int num_classes = man.at("num_classes").get<int>();
  std::vector<int> ids = o.ids;
  if (ids.empty())
    for (int i = 0; i < o.num; ++i) ids.push_back(i % num_classes);
  if (static_cast<int>(ids.size()) != o.num) throw UsageError("--ids must list exactly --num ids");
  for (int id : ids)
    if (id < 0 || id >= num_classes) throw UsageError("class id " + std::to_string(id) + " out of range");

  SampleRequest req;
  req.shape = {o.num, latent[0], latent[1], latent[2]};
  req.context = synthetic_context(ids, spec.unet.context_tokens, spec.unet.context_dim, man.at("context_seed").get<std::uint64_t>());
  req.steps = o.steps;
  req.seed = o.seed;
  req.guidance = guidance;
  m.config()["ids"] = ids;
  if (guidance) {
    std::vector<double> scales;
    for (int s = 1; s <= o.steps; ++s) scales.push_back(guidance_at(g, s, o.steps));
    m.config()["guidance_scales"] = scales;
  }

  Tensor out;
  if (o.sampler == "ddpm")
    out = usage_on_error("sample", [&] { return sample_ddpm(*model, sched, req); });
  else if (o.sampler == "heun")
    out = usage_on_error("sample", [&] { return sample_heun(*model, sched, req); });
  else
    throw UsageError("--sampler must be ddpm or heun");

  save_raw_tensor((m.out_dir() / "samples.f32").string(), out);
  m.record("samples.f32");
  m.record("samples.f32.json");
  const auto c = latent[0];
  if (c == 1 || c == 3 || c == 4) {
    const char* ext = c == 1 ? ".pgm" : c == 3 ? ".ppm" : ".pam";
    for (int n = 0; n < o.num; ++n) {
      const std::string name = "sample_" + std::to_string(n) + ext;
      write_image((m.out_dir() / name).string(), out, n);
      m.record(name);
    }
  }
  const auto v = out.to_vector();
  const double mu = tensor_mean(v);
  double var = 0;
  for (double x : v) var += (x - mu) * (x - mu);
  std::cout << "samples " << shape_str(out.shape()) << fmt(" mean %.6f std %.6f", mu, std::sqrt(var / v.size())) << "\n";
  if (c == 2 && latent[1] == 1 && latent[2] == 1) {
    const auto mo = empirical_second_moments(out);
    std::cout << fmt("second moments xx %.6f xy %.6f yy %.6f\n", mo[0], mo[1], mo[2]);
  }
  return 0;
}

int cmd_check(const CheckOptions& o, RunManifest& m) {
  const bool none = !(o.grad || o.counts || o.schedule || o.rope || o.toy || o.bench || o.all);
  std::vector<CheckSuite (*)()> suites;
  if (o.all || none || o.counts) suites.insert(suites.end(), {check_config_counts, check_variant_counts, check_unet_count});
  if (o.all || none || o.grad) suites.push_back(check_gradients);
  if (o.all || none || o.schedule) suites.insert(suites.end(), {check_schedule, check_guidance, check_heun});
  if (o.all || none || o.rope) suites.push_back(check_rope);
  if (o.all || o.toy) suites.insert(suites.end(), {check_toy_classifier, check_toy_diffusion});
  if (o.all || o.bench) suites.push_back(check_bench);
  std::string text;
  bool ok = true;
  for (auto f : suites) {
    const CheckSuite s = f();
    text += render_suite(s);
    ok = ok && s.passed();
  }
  text += ok ? "all checks passed\n" : "some checks FAILED\n";
  m.write("check.txt", text);
  std::cout << text;
  return ok ? 0 : 1;
}

}  // namespace ascan::cli
