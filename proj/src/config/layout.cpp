#include <algorithm>

#include "ascan/config.hpp"

namespace ascan {

char block_tag(BlockKind kind) { return is_conv(kind) ? 'C' : 'T'; }
bool is_conv(BlockKind kind) { return kind == BlockKind::kC || kind == BlockKind::kCcond; }
bool is_attention(BlockKind kind) { return !is_conv(kind); }
bool is_conditioned(BlockKind kind) { return kind == BlockKind::kCcond || kind == BlockKind::kTcond; }
BlockKind conditioned(BlockKind kind) { return is_conv(kind) ? BlockKind::kCcond : BlockKind::kTcond; }

const char* block_kind_name(BlockKind kind) {
  switch (kind) {
    case BlockKind::kC: return "C";
    case BlockKind::kT: return "T";
    case BlockKind::kCcond: return "Ccond";
    case BlockKind::kTcond: return "Tcond";
  }
  return "?";
}

ParseError::ParseError(const std::string& what, std::size_t column)
    : std::invalid_argument(what + " at column " + std::to_string(column)), column_(column) {}

Layout parse_config_string(std::string_view text) {
  if (text.empty()) throw ParseError("empty layout string", 1);
  Layout layout(1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    const std::size_t col = i + 1;
    switch (ch) {
      case 'C':
      case 'c': layout.back().push_back(BlockKind::kC); break;
      case 'T':
      case 't': layout.back().push_back(BlockKind::kT); break;
      case '-':
        if (layout.back().empty()) throw ParseError("empty stage", col);
        layout.emplace_back();
        break;
      default:
        throw ParseError(std::string("illegal character '") + ch + "'", col);
    }
  }
  if (layout.back().empty()) throw ParseError("empty stage", text.size() + 1);
  return layout;
}

std::string render_stage(const StageLayout& stage) {
  std::string s;
  for (auto k : stage) s += block_tag(k);
  return s;
}

std::string render_layout(const Layout& layout) {
  std::string s;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (i) s += '-';
    s += render_stage(layout[i]);
  }
  return s;
}

Symmetry classify_symmetry(const Layout& layout) {
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& stage = layout[i];
    auto convs = std::count_if(stage.begin(), stage.end(), is_conv);
    auto attn = static_cast<std::ptrdiff_t>(stage.size()) - convs;
    if (i == 0 && attn == 0) continue;  // fixed all-C first stage
    const bool homogeneous = convs == 0 || attn == 0;
    if (!homogeneous && convs != attn) return Symmetry::kAsymmetric;
  }
  return Symmetry::kSymmetric;
}

const char* symmetry_name(Symmetry s) { return s == Symmetry::kSymmetric ? "symmetric" : "asymmetric"; }

bool StageSpec::has_attention() const { return std::any_of(blocks.begin(), blocks.end(), is_attention); }

int resolved_heads(const ArchSpec& spec, const StageSpec& stage) {
  if (stage.num_heads) return *stage.num_heads;
  return std::max(1, stage.out_channels / std::max(1, spec.head_dim));
}

int resolved_time_dim(const ArchSpec& spec) {
  if (spec.unet.time_embed_dim > 0) return spec.unet.time_embed_dim;
  return spec.stages.empty() ? 0 : 4 * spec.stages.front().out_channels;
}

int relative_grid(const ArchSpec& spec, std::size_t stage) {
  int stride = spec.stem.entry_stride;
  for (std::size_t i = 0; i <= stage && i < spec.stages.size(); ++i) stride *= spec.stages[i].entry_stride;
  return std::max(1, spec.reference_resolution / std::max(1, stride));
}

std::vector<StageSpec> mirror_stages(const std::vector<StageSpec>& down) {
  std::vector<StageSpec> up;
  for (auto it = down.rbegin(); it != down.rend(); ++it) {
    StageSpec s = *it;
    std::reverse(s.blocks.begin(), s.blocks.end());
    s.entry_stride = 1;
    up.push_back(s);
  }
  return up;
}

}  // namespace ascan
