#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "ascan/analysis.hpp"
#include "ascan/classifier.hpp"
#include "ascan/optim.hpp"

using namespace ascan;

namespace {

std::vector<double> flat_state(const Module& m) {
  std::vector<double> out;
  for (const auto& nt : m.state())
    for (double v : nt.value.to_vector()) out.push_back(v);
  return out;
}

Tensor param(const Module& m, const std::string& name) {
  for (const auto& nt : m.named_parameters())
    if (nt.name == name) return nt.value;
  FAIL("no parameter " << name);
  return {};
}

}  // namespace

TEST_CASE("registry totals equal the cost model for every classifier preset") {
  for (const auto& name : preset_names()) {
    auto spec = build_preset(name);
    if (spec.kind != ArchKind::kClassifier) continue;
    auto model = build_meta_model(spec);
    auto cost = count_params(spec);
    CHECK_MESSAGE(model->parameter_count() == cost.total_params, name);
    // per-module agreement, so the two cannot drift while totals coincide
    auto registry = params_by_module(*model);
    std::map<std::string, std::int64_t> analytic;
    for (const auto& e : cost.entries)
      if (e.params) analytic[e.path] += e.params;
    CHECK_MESSAGE(registry == analytic, name);
  }
}

TEST_CASE("materialized tiny variant matches its meta build") {
  auto spec = build_preset("ascan-t");
  auto real = build_model(spec, 1000, 3);
  CHECK(real->parameter_count() == count_params(spec).total_params);
}

TEST_CASE("seeded construction") {
  auto spec = toy_classifier_spec();
  auto a = build_model(spec, 2, 11), b = build_model(spec, 2, 11), c = build_model(spec, 2, 12);
  CHECK(flat_state(*a) == flat_state(*b));
  CHECK(flat_state(*a) != flat_state(*c));
  auto k2 = build_model(build_preset("ascan-t"), 2, 1);
  CHECK(param(*k2, "head.fc.weight").shape() == Shape{2, 512});
  CHECK(param(*k2, "stage1.block3.qkv.weight").shape() == Shape{576, 192});
  CHECK(param(*k2, "stage1.block3.pos.table").shape() == Shape{6, 55 * 55});
}

TEST_CASE("forward shapes and resolution errors") {
  auto model = build_model(toy_classifier_spec(), 2, 1);
  model->set_training(false);
  Rng rng(1);
  CHECK(model->forward(randn({3, 3, 8, 8}, rng)).shape() == Shape{3, 2});
  CHECK(model->forward(randn({1, 3, 16, 12}, rng)).shape() == Shape{1, 2});
  CHECK_THROWS_AS(model->forward(randn({1, 3, 6, 6}, rng)), std::invalid_argument);
  CHECK_THROWS_AS(build_model(build_preset("unet-class-cond"), 0, 1), std::invalid_argument);
}

TEST_CASE("learning-rate schedule") {
  TrainRecipe r;  // 300 epochs, 20 warmup
  const std::int64_t spe = 7;
  CHECK(lr_at(r, 0, spe) == 5e-7);
  CHECK(lr_at(r, 20 * spe, spe) == r.peak_lr);
  CHECK(lr_at(r, 10 * spe, spe) == doctest::Approx((5e-7 + 3e-3) / 2));
  CHECK(std::abs(lr_at(r, 300 * spe - 1, spe) - r.min_lr) < 1e-9);
  double prev = r.peak_lr;
  for (std::int64_t s = 20 * spe + 1; s < 300 * spe; s += 37) {
    const double lr = lr_at(r, s, spe);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("recipes") {
  CHECK(paper_recipe("ascan-t").stochastic_depth == 0.3);
  CHECK(paper_recipe("ascan-b").stochastic_depth == 0.4);
  CHECK(paper_recipe("ascan-l").stochastic_depth == 0.5);
  auto r = paper_recipe("ascan-t");
  CHECK(r.peak_lr == 3e-3);
  CHECK(r.batch_size == 4096);
  CHECK(r.mixup_alpha == 0.8);
  CHECK(r.ema_decay == 0.9999);
  CHECK(check_recipe(r).empty());
  CHECK(check_recipe(toy_recipe()).empty());
  r.min_lr = 1.0;
  r.grad_clip_norm = 0;
  CHECK(check_recipe(r).size() == 2);
  CHECK_THROWS_AS(paper_recipe("c1"), std::invalid_argument);
}

TEST_CASE("target rows sum to one") {
  auto t = smoothed_targets({0, 3, 9, 4}, 10, 0.1, DType::kFloat64);
  auto v = t.to_vector();
  for (int i = 0; i < 4; ++i) {
    double s = 0;
    for (int c = 0; c < 10; ++c) s += v[i * 10 + c];
    CHECK(std::abs(s - 1.0) < 1e-15);
  }
  CHECK(v[0] == doctest::Approx(0.91));
  CHECK(v[13] == doctest::Approx(0.91));
  CHECK(v[3] == doctest::Approx(0.01));
  Rng rng(3);
  auto mixed = mixup(randn({4, 2, 3, 3}, rng, DType::kFloat64), t, 0.8, rng);
  CHECK(mixed.lambda >= 0.0);
  CHECK(mixed.lambda <= 1.0);
  auto mv = mixed.targets.to_vector();
  for (int i = 0; i < 4; ++i) {
    double s = 0;
    for (int c = 0; c < 10; ++c) s += mv[i * 10 + c];
    CHECK(std::abs(s - 1.0) < 1e-15);
  }
  // images mix with the same partner and weight as the targets
  Tensor x = randn({4, 1, 1, 1}, rng, DType::kFloat64);
  auto m2 = mixup(x, t, 0.8, rng);
  auto xv = x.to_vector(), out = m2.images.to_vector();
  for (int i = 0; i < 4; ++i)
    CHECK(out[i] == doctest::Approx(m2.lambda * xv[i] + (1 - m2.lambda) * xv[m2.partner[i]]));
}

TEST_CASE("initial loss of a near-uniform model is ln K") {
  auto spec = toy_classifier_spec(10);
  auto model = build_model(spec, 10, 5);
  auto data = make_blobs(4, 10, 3, 8, 0.3, 6);
  TrainRecipe r = toy_recipe();
  r.epochs = 1;
  r.warmup_epochs = 0;
  r.mixup_alpha = 0;
  r.label_smoothing = 0;
  r.batch_size = 40;
  double first = -1;
  train_epochs(*model, data, r, 1, {nullptr, [&](const StepLog& s) {
                                      if (s.step == 0) first = s.loss;
                                    }});
  CHECK(first == doctest::Approx(std::log(10.0)).epsilon(0.02));
}

TEST_CASE("clipping bounds every step's gradient norm") {
  auto model = build_model(toy_classifier_spec(), 2, 7);
  auto data = make_blobs(16, 2, 3, 8, 1.0, 8);
  TrainRecipe r = toy_recipe();
  r.epochs = 3;
  r.batch_size = 8;
  r.grad_clip_norm = 0.05;
  int steps = 0, clipped = 0;
  train_epochs(*model, data, r, 2, {nullptr, [&](const StepLog& s) {
                                      ++steps;
                                      clipped += s.grad_norm > r.grad_clip_norm;
                                      CHECK(s.clipped_norm <= r.grad_clip_norm + 1e-6);
                                    }});
  CHECK(steps == 12);
  CHECK(clipped > 0);
}

TEST_CASE("zero gradients change weights only through decay") {
  Rng rng(9);
  Tensor w = randn({3, 4}, rng, DType::kFloat64).set_requires_grad(true);
  Tensor b = randn({4}, rng, DType::kFloat64).set_requires_grad(true);
  auto w0 = w.to_vector(), b0 = b.to_vector();
  AdamW opt({{"w", w}, {"b", b}}, 0.9, 0.999, 0.05);
  opt.step(1e-2);
  auto w1 = w.to_vector();
  for (std::size_t i = 0; i < w0.size(); ++i) CHECK(w1[i] == doctest::Approx(w0[i] * (1 - 1e-2 * 0.05)).epsilon(1e-14));
  CHECK(b.to_vector() == b0);
}

TEST_CASE("first adam step follows the bias-corrected closed form") {
  Tensor w = Tensor::from_vector({2, 1}, {1.0, -2.0}, DType::kFloat64).set_requires_grad(true);
  w.set_grad(Tensor::from_vector({2, 1}, {0.5, -3.0}, DType::kFloat64));
  AdamW opt({{"w", w}}, 0.9, 0.99, 0.1, 1e-8);
  opt.step(0.01);
  auto v = w.to_vector();
  CHECK(v[0] == doctest::Approx(1.0 * (1 - 0.001) - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(v[1] == doctest::Approx(-2.0 * (1 - 0.001) + 0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-14));
}

TEST_CASE("ema follows the geometric mixture") {
  ModuleGroup m;
  Tensor p = m.param("p", Tensor::from_vector({3}, {1.0, 2.0, 3.0}, DType::kFloat64));
  Ema zero(m, 0.0);
  Ema ema(m, 0.9);
  const std::vector<double> s0{1.0, 2.0, 3.0}, target{-1.0, 0.5, 4.0};
  std::copy(target.begin(), target.end(), p.mutable_data<double>().begin());
  for (int k = 0; k < 25; ++k) {
    ema.update(m);
    zero.update(m);
  }
  auto s = ema.shadow()[0].value.to_vector();
  const double dn = std::pow(0.9, 25);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(s[i] - (dn * s0[i] + (1 - dn) * target[i])) < 1e-10);
  CHECK(zero.shadow()[0].value.to_vector() == target);
  CHECK_THROWS_AS(Ema(m, 1.0), std::invalid_argument);
}

TEST_CASE("training is bit-reproducible") {
  auto data = make_blobs(8, 2, 3, 8, 0.5, 10);
  TrainRecipe r = toy_recipe();
  r.epochs = 2;
  r.warmup_epochs = 1;
  r.batch_size = 8;
  std::ostringstream log_a, log_b;
  auto a = build_model(toy_classifier_spec(), 2, 4), b = build_model(toy_classifier_spec(), 2, 4);
  train_epochs(*a, data, r, 77, {&log_a, nullptr});
  train_epochs(*b, data, r, 77, {&log_b, nullptr});
  CHECK(flat_state(*a) == flat_state(*b));
  CHECK(log_a.str() == log_b.str());
  CHECK(log_a.str().find("\"grad_norm\"") != std::string::npos);
}

TEST_CASE("training errors") {
  auto model = build_model(toy_classifier_spec(), 2, 4);
  Dataset empty;
  CHECK_THROWS_AS(train_epochs(*model, empty, toy_recipe(), 1), std::invalid_argument);
  auto data = make_blobs(4, 2, 3, 8, 0.5, 10);
  Tensor w = param(*model, "head.fc.bias");
  w.mutable_data<float>()[0] = NAN;
  CHECK_THROWS_AS(train_epochs(*model, data, toy_recipe(), 1), std::runtime_error);
}

TEST_CASE("dataset directory round trip") {
  auto d = make_blobs(3, 3, 2, 4, 1.0, 12);
  auto dir = (std::filesystem::temp_directory_path() / "ascan_dataset_test").string();
  save_dataset_dir(d, dir);
  auto back = load_dataset_dir(dir);
  CHECK(back.labels == d.labels);
  CHECK(back.num_classes == 3);
  CHECK(back.images.shape() == d.images.shape());
  CHECK(back.images.to_vector() == d.images.to_vector());
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_dataset_dir(dir), std::runtime_error);
}
