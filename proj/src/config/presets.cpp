#include <algorithm>
#include <map>
#include <stdexcept>

#include "ascan/config.hpp"

namespace ascan {

namespace {

const std::map<std::string, std::string>& ablations() {
  static const std::map<std::string, std::string> table = {
      {"c1", "CC-CCCT-CCTT-CTTT"}, {"c2", "CC-CCCT-CCTT-CCTT"},  {"c3", "CC-CCCT-CCTT-TTTT"},
      {"c4", "CC-CCCT-CCCC-TTTT"}, {"c5", "CC-CCCT-CCCT-CCCT"},  {"c6", "CC-CCCC-CCCC-TTTT"},
      {"c7", "CC-CCCC-CCTT-TTTT"}, {"c8", "CC-CCCC-TTTT-TTTT"},  {"c9", "CC-TTTT-TTTT-TTTT"},
      {"c10", "CC-CCTT-CCTT-CCTT"}, {"t1", "CC-TCCC-CCTT-CTTT"}, {"t2", "CC-CCCT-TTCC-CTTT"},
      {"t3", "CC-CCCT-CCTT-TTTC"}, {"t4", "TT-CCCT-CCTT-CTTT"},  {"t5", "TT-TTTC-TTCC-TTTC"},
  };
  return table;
}

StageSpec stage(const std::string& blocks, int channels, int stride) {
  StageSpec s;
  s.blocks = parse_config_string(blocks).at(0);
  s.out_channels = channels;
  s.entry_stride = stride;
  return s;
}

ArchSpec classifier(const std::string& name, int stem, std::vector<StageSpec> stages, int embed,
                    double sd) {
  ArchSpec spec;
  spec.name = name;
  spec.kind = ArchKind::kClassifier;
  spec.input_channels = 3;
  spec.stem.out_channels = stem;
  spec.stem.entry_stride = 2;
  spec.stages = std::move(stages);
  spec.classifier = {embed, 1000};
  spec.stochastic_depth = sd;
  return spec;
}

std::string repeat(char c, int n) { return std::string(static_cast<std::size_t>(n), c); }

// Down layout used by both unet presets: convolutions dominate the high
// resolution stage, attention the low resolution ones.
constexpr const char* kUnetDownLayout = "CCT-CCCCTTT-CCCCTTTTTTTTTT";
constexpr const char* kUnetMiddle = "CTC";

ArchSpec unet(const std::string& name, std::vector<int> channels, std::vector<int> heads, int context_dim,
              int input_channels) {
  ArchSpec spec;
  spec.name = name;
  spec.kind = ArchKind::kUnet;
  spec.input_channels = input_channels;
  spec.stem.out_channels = channels[0];
  spec.stem.entry_stride = 1;
  Layout down = parse_config_string(kUnetDownLayout);
  for (std::size_t i = 0; i < channels.size(); ++i) {
    StageSpec s;
    for (auto k : down[i]) s.blocks.push_back(conditioned(k));
    s.out_channels = channels[i];
    s.entry_stride = i == 0 ? 1 : 2;
    s.num_heads = heads[i];
    spec.stages.push_back(s);
  }
  spec.up_stages = mirror_stages(spec.stages);
  StageSpec mid;
  const Layout middle = parse_config_string(kUnetMiddle);
  for (auto k : middle.at(0)) mid.blocks.push_back(conditioned(k));
  mid.out_channels = channels.back();
  mid.num_heads = heads.back();
  spec.unet.middle = mid;
  spec.unet.time_embed_dim = 4 * channels[0];
  spec.unet.context_dim = context_dim;
  spec.unet.context_heads = 1;
  spec.stochastic_depth = 0.0;
  return spec;
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names{"ascan-t", "ascan-b", "ascan-l"};
  for (int i = 1; i <= 10; ++i) names.push_back("c" + std::to_string(i));
  for (int i = 1; i <= 5; ++i) names.push_back("t" + std::to_string(i));
  names.push_back("unet-class-cond");
  names.push_back("unet-t2i");
  return names;
}

std::optional<std::string> ablation_layout(const std::string& name) {
  auto it = ablations().find(name);
  if (it == ablations().end()) return std::nullopt;
  return it->second;
}

ArchSpec classifier_from_layout(const Layout& layout, const std::string& name) {
  static const int widths[] = {96, 192, 384, 768};
  std::vector<StageSpec> stages;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    StageSpec s;
    s.blocks = layout[i];
    s.out_channels = i < 4 ? widths[i] : widths[3];
    s.entry_stride = 2;
    stages.push_back(s);
  }
  return classifier(name, 64, std::move(stages), 512, 0.3);
}

ArchSpec build_preset(const std::string& name) {
  if (name == "ascan-t")
    return classifier(name, 64,
                      {stage("CC", 96, 2), stage("CCCT", 192, 2), stage("CCTT", 384, 2), stage("CTTT", 768, 2)},
                      512, 0.3);
  if (name == "ascan-b")
    return classifier(name, 64,
                      {stage("CC", 96, 2), stage("CCCC" + repeat('T', 2), 192, 2),
                       stage(repeat('C', 7) + repeat('T', 7), 384, 2), stage("CTTT", 768, 2)},
                      768, 0.4);
  if (name == "ascan-l")
    return classifier(name, 128,
                      {stage("CC", 128, 2), stage("CCCC" + repeat('T', 2), 256, 2),
                       stage(repeat('C', 7) + repeat('T', 7), 512, 2), stage("CTTT", 1024, 2)},
                      1024, 0.5);
  if (auto layout = ablation_layout(name)) return classifier_from_layout(parse_config_string(*layout), name);
  if (name == "unet-class-cond") return unet(name, {160, 320, 640}, {5, 10, 20}, 768, 4);
  if (name == "unet-t2i") return unet(name, {320, 640, 1280}, {5, 10, 20}, 4096, 4);
  throw std::invalid_argument("unknown preset '" + name + "'");
}

ArchSpec toy_unet(const ArchSpec& spec, int divisor) {
  if (spec.kind != ArchKind::kUnet) throw std::invalid_argument("toy_unet needs a unet spec");
  if (divisor < 1) throw std::invalid_argument("toy divisor must be positive");
  auto shrink = [divisor](int c) { return std::max(8, (c / divisor + 7) / 8 * 8); };
  ArchSpec toy = spec;
  toy.name = spec.name + "-toy" + std::to_string(divisor);
  toy.stem.out_channels = shrink(spec.stem.out_channels);
  for (auto& s : toy.stages) {
    s.out_channels = shrink(s.out_channels);
    s.num_heads = 1;
  }
  for (auto& s : toy.up_stages) {
    s.out_channels = shrink(s.out_channels);
    s.num_heads = 1;
  }
  toy.unet.middle.out_channels = shrink(toy.unet.middle.out_channels);
  toy.unet.middle.num_heads = 1;
  toy.unet.time_embed_dim = 4 * toy.stages.front().out_channels;
  toy.unet.context_dim = shrink(spec.unet.context_dim);
  toy.unet.context_heads = 1;
  return toy;
}

}  // namespace ascan
