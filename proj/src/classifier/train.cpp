#include <cmath>
#include <stdexcept>

#include "ascan/classifier.hpp"
#include "ascan/optim.hpp"
#include "json.hpp"

namespace ascan {

namespace {

DType dtype_of(const Module& m) {
  auto p = m.named_parameters();
  return p.empty() ? DType::kFloat32 : p.front().value.dtype();
}

int correct(const Tensor& logits, const std::vector<int>& labels) {
  const auto k = logits.size(1);
  const auto v = logits.to_vector();
  int hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < k; ++c)
      if (v[i * k + c] > v[i * k + best]) best = c;
    hits += best == labels[i];
  }
  return hits;
}

}  // namespace

EvalResult evaluate(ClassifierModel& model, const Dataset& data, int batch_size) {
  if (data.size() == 0) throw std::invalid_argument("evaluate on an empty dataset");
  const bool was_training = model.training();
  model.set_training(false);
  NoGradGuard no_grad;
  const DType dt = dtype_of(model);
  double loss = 0;
  int hits = 0;
  for (std::int64_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = start; i < std::min<std::int64_t>(data.size(), start + batch_size); ++i) idx.push_back(i);
    auto [x, labels] = gather(data, idx, dt);
    Tensor logits = model.forward(x);
    Tensor ce = soft_cross_entropy(logits, smoothed_targets(labels, data.num_classes, 0.0, dt));
    loss += ce.item() * static_cast<double>(idx.size());
    hits += correct(logits, labels);
  }
  model.set_training(was_training);
  return {loss / static_cast<double>(data.size()), static_cast<double>(hits) / static_cast<double>(data.size())};
}

TrainResult train_epochs(ClassifierModel& model, const Dataset& data, const TrainRecipe& recipe, std::uint64_t seed,
                         const TrainOptions& opts) {
  auto problems = check_recipe(recipe);
  if (!problems.empty()) throw std::invalid_argument("recipe: " + problems.front());
  if (data.size() == 0) throw std::invalid_argument("training on an empty dataset");
  const int k = model.spec().classifier.num_classes;
  if (data.num_classes > k) throw std::invalid_argument("dataset has more classes than the model head");

  Rng rng(seed);
  const DType dt = dtype_of(model);
  const std::int64_t n = data.size();
  const std::int64_t batch = std::min<std::int64_t>(recipe.batch_size, n);
  const std::int64_t steps_per_epoch = n / batch;  // the ragged tail is dropped each epoch

  auto named = model.named_parameters();
  std::vector<Tensor> params;
  for (const auto& p : named) params.push_back(p.value);
  AdamW opt(named, recipe.beta1, recipe.beta2, recipe.weight_decay);
  Ema ema(model, recipe.ema_decay);
  auto shadow_model = build_model(model.spec(), k, 0, dt);

  TrainResult result;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < recipe.epochs; ++epoch) {
    model.set_training(true);
    const auto order = rng.permutation(n);
    double epoch_loss = 0;
    for (std::int64_t b = 0; b < steps_per_epoch; ++b, ++step) {
      std::vector<std::int64_t> idx(order.begin() + b * batch, order.begin() + (b + 1) * batch);
      auto [x, labels] = gather(data, idx, dt);
      Tensor targets = smoothed_targets(labels, k, recipe.label_smoothing, dt);
      if (recipe.mixup_alpha > 0) {
        auto mixed = mixup(x, targets, recipe.mixup_alpha, rng);
        x = mixed.images;
        targets = mixed.targets;
      }
      Tensor logits = model.forward(x, &rng);
      Tensor loss = soft_cross_entropy(logits, targets);
      StepLog log;
      log.step = step;
      log.loss = loss.item();
      if (!std::isfinite(log.loss))
        throw std::runtime_error("non-finite loss " + std::to_string(log.loss) + " at step " + std::to_string(step) +
                                 " (epoch " + std::to_string(epoch) + ")");
      log.acc = static_cast<double>(correct(logits, labels)) / static_cast<double>(batch);
      opt.zero_grad();
      loss.backward();
      log.grad_norm = clip_grad_norm(params, recipe.grad_clip_norm);
      log.clipped_norm = grad_norm(params);
      log.lr = lr_at(recipe, step, steps_per_epoch);
      opt.step(log.lr);
      ema.update(model);
      epoch_loss += log.loss;
      if (opts.metrics) {
        nlohmann::ordered_json j;
        j["step"] = step;
        j["epoch"] = epoch;
        j["lr"] = log.lr;
        j["loss"] = log.loss;
        j["acc"] = log.acc;
        j["grad_norm"] = log.grad_norm;
        *opts.metrics << j.dump() << "\n";
      }
      if (opts.on_step) opts.on_step(log);
    }
    EpochStats s;
    s.epoch = epoch;
    s.train_loss = steps_per_epoch ? epoch_loss / static_cast<double>(steps_per_epoch) : 0.0;
    const auto raw = evaluate(model, data, static_cast<int>(batch));
    ema.copy_to(*shadow_model);
    const auto avg = evaluate(*shadow_model, data, static_cast<int>(batch));
    s.loss = raw.loss;
    s.acc = raw.acc;
    s.ema_loss = avg.loss;
    s.ema_acc = avg.acc;
    result.history.push_back(s);
  }
  result.steps = step;
  result.ema_state = ema.shadow();
  model.set_training(false);
  return result;
}

}  // namespace ascan
