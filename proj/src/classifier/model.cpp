#include <stdexcept>

#include "ascan/classifier.hpp"

namespace ascan {

ClassifierModel::ClassifierModel(const ArchSpec& spec, const InitContext& init) : spec_(spec) {
  if (spec.kind != ArchKind::kClassifier) throw std::invalid_argument("build_model needs a classifier spec");
  auto diags = validate(spec);
  for (const auto& d : diags)
    if (d.severity == Severity::kError) throw std::invalid_argument("invalid spec: " + d.message);

  stem_ = add_child("stem", std::make_shared<Stem>(init, spec.input_channels, spec.stem.out_channels,
                                                   spec.stem.entry_stride));
  std::size_t total = 0;
  for (const auto& s : spec.stages) total += s.blocks.size();
  const auto rates = drop_rate_ramp(spec.stochastic_depth, static_cast<int>(total));

  int ch = spec.stem.out_channels;
  std::size_t k = 0;
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const auto& st = spec.stages[i];
    auto group = add_child("stage" + std::to_string(i), std::make_shared<ModuleGroup>());
    stages_.emplace_back();
    for (std::size_t j = 0; j < st.blocks.size(); ++j, ++k) {
      BlockOptions o;
      o.in_channels = ch;
      o.out_channels = st.out_channels;
      o.stride = j == 0 ? st.entry_stride : 1;
      o.drop_rate = rates[k];
      if (is_attention(st.blocks[j])) {
        o.heads = resolved_heads(spec, st);
        o.rel_grid = relative_grid(spec, i);
        const bool entry = o.stride != 1 || o.in_channels != o.out_channels;
        o.transition_only = entry && spec.entry_t == EntryT::kTransition;
      }
      stages_.back().push_back(group->add("block" + std::to_string(j), make_block(st.blocks[j], init, o)));
      ch = st.out_channels;
    }
  }
  head_ = add_child("head",
                    std::make_shared<ClassifierHead>(init, ch, spec.classifier.embed_dim, spec.classifier.num_classes));
}

Tensor ClassifierModel::features(const Tensor& x, Rng* rng) const {
  if (x.dim() != 4 || x.size(1) != spec_.input_channels)
    throw ShapeError("classifier expects [N, " + std::to_string(spec_.input_channels) + ", H, W], got " +
                     shape_str(x.shape()));
  int f = spec_.stem.entry_stride;
  for (const auto& s : spec_.stages) f *= s.entry_stride;
  if (x.size(2) % f || x.size(3) % f)
    throw std::invalid_argument("input " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                                " is too small or not divisible for the downsampling factor " + std::to_string(f));
  Tensor h = stem_->forward(x);
  for (const auto& stage : stages_)
    for (const auto& b : stage) h = b->forward(h, nullptr, rng);
  return h;
}

Tensor ClassifierModel::forward(const Tensor& x, Rng* rng) const { return head_->forward(features(x, rng)); }

std::shared_ptr<ClassifierModel> build_model(const ArchSpec& spec, int num_classes, std::uint64_t seed, DType dtype) {
  ArchSpec s = spec;
  if (num_classes > 0) s.classifier.num_classes = num_classes;
  Rng rng(seed);
  return std::make_shared<ClassifierModel>(s, InitContext{&rng, dtype, false});
}

std::shared_ptr<ClassifierModel> build_meta_model(const ArchSpec& spec) {
  return std::make_shared<ClassifierModel>(spec, InitContext{nullptr, DType::kFloat32, true});
}

std::map<std::string, std::int64_t> params_by_module(const Module& m) {
  std::map<std::string, std::int64_t> out;
  for (const auto& nt : m.named_parameters()) {
    const auto dot = nt.name.rfind('.');
    out[dot == std::string::npos ? nt.name : nt.name.substr(0, dot)] += nt.value.numel();
  }
  return out;
}

ArchSpec toy_classifier_spec(int num_classes, int input_channels) {
  ArchSpec s = classifier_from_layout(parse_config_string("CC-CT"), "toy-classifier");
  s.input_channels = input_channels;
  s.stem.out_channels = 16;
  s.stem.entry_stride = 2;
  s.stages[0].out_channels = 16;
  s.stages[0].entry_stride = 1;
  s.stages[1].out_channels = 32;
  s.stages[1].entry_stride = 2;
  s.stages[1].num_heads = 2;
  s.classifier = {64, num_classes};
  s.stochastic_depth = 0.0;
  s.reference_resolution = 8;
  return s;
}

}  // namespace ascan
