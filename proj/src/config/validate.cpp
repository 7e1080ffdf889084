#include <algorithm>

#include "ascan/config.hpp"

namespace ascan {

namespace {

std::string stage_name(const ArchSpec& spec, const char* prefix, std::size_t i) {
  return std::string(prefix) + std::to_string(i + (spec.kind == ArchKind::kClassifier ? 1 : 0));
}

// `ordered`: warn when a T block precedes a C block (not for the unet
// middle and Up stages, which mirror the Down order).
void check_stage(const ArchSpec& spec, const StageSpec& s, const std::string& where,
                 std::vector<Diagnostic>& out, bool ordered = true) {
  auto error = [&](const std::string& m) { out.push_back({Severity::kError, where + ": " + m}); };
  if (s.blocks.empty()) error("stage has no blocks");
  if (s.out_channels <= 0) error("out_channels must be positive");
  if (s.entry_stride != 1 && s.entry_stride != 2) error("entry_stride must be 1 or 2");
  if (s.num_heads && *s.num_heads <= 0) error("num_heads must be positive");
  if (s.has_attention() && s.out_channels > 0) {
    int heads = resolved_heads(spec, s);
    if (s.out_channels % heads != 0)
      error("channels " + std::to_string(s.out_channels) + " not divisible by " + std::to_string(heads) +
            " heads");
  }
  for (auto k : s.blocks) {
    if (spec.kind == ArchKind::kClassifier && is_conditioned(k))
      error(std::string("conditioned block ") + block_kind_name(k) + " outside a unet");
  }
  bool seen_t = false;
  for (auto k : s.blocks) {
    if (is_attention(k)) seen_t = true;
    if (ordered && is_conv(k) && seen_t) {
      out.push_back({Severity::kWarning, where + ": transformer before convolution within stage"});
      break;
    }
  }
}

}  // namespace

std::vector<Diagnostic> validate(const ArchSpec& spec) {
  std::vector<Diagnostic> out;
  auto error = [&](const std::string& m) { out.push_back({Severity::kError, m}); };
  if (spec.input_channels <= 0) error("input_channels must be positive");
  if (spec.stem.out_channels <= 0) error("stem: out_channels must be positive");
  if (spec.stem.entry_stride != 1 && spec.stem.entry_stride != 2) error("stem: entry_stride must be 1 or 2");
  if (!(spec.stochastic_depth >= 0.0 && spec.stochastic_depth < 1.0))
    error("stochastic_depth must lie in [0, 1)");
  if (spec.head_dim <= 0) error("head_dim must be positive");
  if (spec.stages.empty()) error("no stages");

  const char* prefix = spec.kind == ArchKind::kClassifier ? "stage" : "down";
  for (std::size_t i = 0; i < spec.stages.size(); ++i)
    check_stage(spec, spec.stages[i], stage_name(spec, prefix, i), out);

  if (spec.kind == ArchKind::kClassifier) {
    if (spec.stages.size() != 4)
      out.push_back({Severity::kWarning, "classifier has " + std::to_string(spec.stages.size()) +
                                             " stages; the family uses four"});
    if (!spec.stages.empty() && spec.stages[0].has_attention())
      out.push_back({Severity::kWarning, "stage1: transformer in first stage"});
    if (spec.classifier.embed_dim <= 0) error("head: embed_dim must be positive");
    if (spec.classifier.num_classes <= 0) error("head: num_classes must be positive");
    if (!spec.up_stages.empty()) error("classifier spec has up stages");
    if (spec.reference_resolution <= 0) error("reference_resolution must be positive");
  } else {
    const auto& u = spec.unet;
    check_stage(spec, u.middle, "middle", out, false);
    for (std::size_t i = 0; i < spec.up_stages.size(); ++i)
      check_stage(spec, spec.up_stages[i], "up" + std::to_string(i), out, false);
    for (const auto* group : {&spec.stages, &spec.up_stages})
      for (const auto& s : *group)
        for (auto k : s.blocks)
          if (!is_conditioned(k)) error("unet stages hold conditioned blocks only");
    const auto n = spec.stages.size();
    if (spec.up_stages.size() != n) {
      error("mirror violation: " + std::to_string(spec.up_stages.size()) + " up stages for " +
            std::to_string(n) + " down stages");
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const auto& up = spec.up_stages[i];
        const auto& down = spec.stages[n - 1 - i];
        auto a = up.blocks, b = down.blocks;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (up.out_channels != down.out_channels || a != b)
          error("mirror violation: up" + std::to_string(i) + " does not reflect down" + std::to_string(n - 1 - i));
      }
    }
    if (!spec.stages.empty() && u.middle.out_channels != spec.stages.back().out_channels)
      error("middle: channels must equal the deepest down stage");
    if (!spec.stages.empty() && spec.stem.out_channels != spec.stages.front().out_channels)
      error("stem: channels must equal the first down stage");
    if (u.time_embed_dim < 0) error("time_embed_dim must be nonnegative");
    if (u.context_dim <= 0) error("context_dim must be positive");
    if (u.context_tokens <= 0) error("context_tokens must be positive");
    if (u.context_heads <= 0 || u.context_dim % std::max(1, u.context_heads) != 0)
      error("context_dim not divisible by context_heads");
    if (u.cross_query == CrossQuery::kContext)
      error("cross_query=context cannot be added to the image stream; use image");
  }
  return out;
}

bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) { return d.severity == Severity::kError; });
}

}  // namespace ascan
