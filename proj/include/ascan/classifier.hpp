#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "ascan/blocks.hpp"
#include "ascan/config.hpp"
#include "ascan/module.hpp"

namespace ascan {

class ClassifierModel : public Module {
 public:
  ClassifierModel(const ArchSpec& spec, const InitContext& init);
  /// x: [N, C, H, W] with H, W divisible by the total downsampling factor.
  Tensor forward(const Tensor& x, Rng* rng = nullptr) const;
  Tensor features(const Tensor& x, Rng* rng = nullptr) const;  // last stage output
  const ArchSpec& spec() const { return spec_; }

 private:
  ArchSpec spec_;
  std::shared_ptr<Stem> stem_;
  std::vector<std::vector<std::shared_ptr<Block>>> stages_;
  std::shared_ptr<ClassifierHead> head_;
};

/// Seeded construction; `num_classes` overrides the spec's head size.
std::shared_ptr<ClassifierModel> build_model(const ArchSpec& spec, int num_classes, std::uint64_t seed,
                                             DType dtype = DType::kFloat32);
/// Shape-only model for counting; allocates no parameter storage.
std::shared_ptr<ClassifierModel> build_meta_model(const ArchSpec& spec);

/// Parameter scalars per module path (parameter name minus its last part).
std::map<std::string, std::int64_t> params_by_module(const Module& m);

/// Small two-stage classifier for 8x8 inputs used by the toy experiment.
ArchSpec toy_classifier_spec(int num_classes = 2, int input_channels = 3);

// --- recipe ----------------------------------------------------------------

struct TrainRecipe {
  double peak_lr = 3e-3;
  double min_lr = 5e-6;
  double warmup_start_lr = 5e-7;
  double warmup_epochs = 20;
  int epochs = 300;
  int batch_size = 4096;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double label_smoothing = 0.1;
  double mixup_alpha = 0.8;  // 0 disables MixUp
  double ema_decay = 0.9999;
  double grad_clip_norm = 1.0;
  double stochastic_depth = 0.3;
};

/// Published ImageNet recipe with the variant's stochastic-depth rate.
TrainRecipe paper_recipe(const std::string& variant);
/// Desk-scale recipe for the synthetic blob experiment.
TrainRecipe toy_recipe();
/// Problems with the recipe; empty when usable.
std::vector<std::string> check_recipe(const TrainRecipe& r);
/// Linear warmup from warmup_start_lr to peak_lr, then cosine to min_lr,
/// reached exactly at the last step of the last epoch.
double lr_at(const TrainRecipe& r, std::int64_t step, std::int64_t steps_per_epoch);

// --- targets and losses ----------------------------------------------------

/// Rows (1 - eps) * onehot + eps / K.
Tensor smoothed_targets(const std::vector<int>& labels, int num_classes, double eps, DType dtype);
/// Mean over rows of -sum(target * log_softmax(logits)).
Tensor soft_cross_entropy(const Tensor& logits, const Tensor& targets);

struct MixedBatch {
  Tensor images, targets;
  double lambda = 1.0;
  std::vector<std::int64_t> partner;
};
/// Convex combination with a shuffled copy of the batch, lambda ~ Beta(a, a).
MixedBatch mixup(const Tensor& images, const Tensor& targets, double alpha, Rng& rng);

// --- data --------------------------------------------------------------------

struct Dataset {
  Tensor images;  // [N, C, H, W] float32
  std::vector<int> labels;
  int num_classes = 0;
  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
};

/// Gaussian blobs around one random +-1 pattern per class, noise std 1.
Dataset make_blobs(int per_class, int num_classes, int channels, int size, double separation, std::uint64_t seed);
/// Directory with index.json ({"shape", "num_classes", "images", "labels"})
/// and raw little-endian float32 images / int32 labels.
Dataset load_dataset_dir(const std::string& dir);
void save_dataset_dir(const Dataset& d, const std::string& dir);
/// Rows `idx` of the dataset as a batch.
std::pair<Tensor, std::vector<int>> gather(const Dataset& d, const std::vector<std::int64_t>& idx, DType dtype);

// --- training ----------------------------------------------------------------

struct StepLog {
  std::int64_t step = 0;
  double lr = 0, loss = 0, acc = 0, grad_norm = 0, clipped_norm = 0;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0, acc = 0;          // raw weights, eval mode over the training set
  double ema_loss = 0, ema_acc = 0;  // EMA weights
  double train_loss = 0;             // mean minibatch loss during the epoch
};

struct TrainOptions {
  std::ostream* metrics = nullptr;  // JSON lines, one per step
  std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::int64_t steps = 0;
  std::vector<NamedTensor> ema_state;
};

struct EvalResult {
  double loss = 0, acc = 0;
};

TrainResult train_epochs(ClassifierModel& model, const Dataset& data, const TrainRecipe& recipe, std::uint64_t seed,
                         const TrainOptions& opts = {});
/// Eval-mode loss (no smoothing) and accuracy.
EvalResult evaluate(ClassifierModel& model, const Dataset& data, int batch_size);

}  // namespace ascan
