#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ascan {

enum class BlockKind { kC, kT, kCcond, kTcond };

char block_tag(BlockKind kind);  // 'C' or 'T'
bool is_conv(BlockKind kind);
bool is_attention(BlockKind kind);
bool is_conditioned(BlockKind kind);
BlockKind conditioned(BlockKind kind);
const char* block_kind_name(BlockKind kind);  // "C", "T", "Ccond", "Tcond"

using StageLayout = std::vector<BlockKind>;
using Layout = std::vector<StageLayout>;

/// Layout string error; `column` is 1-based.
class ParseError : public std::invalid_argument {
 public:
  ParseError(const std::string& what, std::size_t column);
  std::size_t column() const { return column_; }

 private:
  std::size_t column_;
};

/// "CC-CCCT-CCTT-CTTT" -> one list per dash-separated stage (case-insensitive).
Layout parse_config_string(std::string_view text);
std::string render_layout(const Layout& layout);
std::string render_stage(const StageLayout& stage);

enum class Symmetry { kSymmetric, kAsymmetric };
Symmetry classify_symmetry(const Layout& layout);
const char* symmetry_name(Symmetry s);

struct StageSpec {
  StageLayout blocks;
  int out_channels = 0;
  int entry_stride = 1;
  std::optional<int> num_heads;

  bool has_attention() const;
};

enum class ArchKind { kClassifier, kUnet };

// How a T block behaves when it opens a stage (stride 2 or channel change):
// as a pooled 1x1-conv transition only, or as a full attention block
// preceded by that transition.
enum class EntryT { kTransition, kFull };

enum class SkipMode { kConcat, kAdd };

// Which sequence supplies cross-attention queries. kImage is the only
// shape-consistent choice for adding the result to the image stream; kContext
// is accepted by the parser so configs can state the alternative, but the
// builder rejects it.
enum class CrossQuery { kImage, kContext };

struct ClassifierHeadSpec {
  int embed_dim = 512;
  int num_classes = 1000;
};

struct UnetHeadSpec {
  StageSpec middle;             // runs at the deepest Down resolution
  int time_embed_dim = 0;       // 0 -> 4 x first Down width
  int context_dim = 768;
  int context_tokens = 1;       // synthetic frozen tokens per condition
  int context_heads = 1;        // heads of the two adapter blocks
  int num_classes = 1000;       // class-conditional presets: one token set per class
  SkipMode skip = SkipMode::kConcat;
  CrossQuery cross_query = CrossQuery::kImage;
};

struct ArchSpec {
  std::string name;
  ArchKind kind = ArchKind::kClassifier;
  int input_channels = 3;
  StageSpec stem;                 // blocks unused; out_channels + entry_stride
  std::vector<StageSpec> stages;  // classifier stages, or unet Down stages
  std::vector<StageSpec> up_stages;
  ClassifierHeadSpec classifier;
  UnetHeadSpec unet;
  double stochastic_depth = 0.0;
  EntryT entry_t = EntryT::kTransition;
  int head_dim = 32;               // used when a stage gives no head count
  int reference_resolution = 224;  // sizes the relative-position tables
};

/// Heads for a stage: explicit count, else out_channels / head_dim.
int resolved_heads(const ArchSpec& spec, const StageSpec& stage);
/// Side of the relative-position table for classifier stage `stage`: the
/// token grid at the reference resolution.
int relative_grid(const ArchSpec& spec, std::size_t stage);
/// Time-embedding width of a unet: explicit, else 4 x first Down width.
int resolved_time_dim(const ArchSpec& spec);
/// Up stages mirroring the Down stages (reversed order, reversed blocks).
std::vector<StageSpec> mirror_stages(const std::vector<StageSpec>& down);

// --- presets ---------------------------------------------------------------

std::vector<std::string> preset_names();
/// Throws std::invalid_argument for an unknown name.
ArchSpec build_preset(const std::string& name);
/// Classifier spec with the tiny channel plan and the given block layout.
ArchSpec classifier_from_layout(const Layout& layout, const std::string& name = "custom");
/// Layout string behind an ablation preset (c1..c10, t1..t5).
std::optional<std::string> ablation_layout(const std::string& name);

/// Shrinks a unet spec for desk-scale runs: widths divided by `divisor`
/// (rounded up to a multiple of 8), one head per stage, context width
/// divided likewise.
ArchSpec toy_unet(const ArchSpec& spec, int divisor);

// --- validation ------------------------------------------------------------

enum class Severity { kWarning, kError };

struct Diagnostic {
  Severity severity;
  std::string message;
};

std::vector<Diagnostic> validate(const ArchSpec& spec);
bool has_errors(const std::vector<Diagnostic>& diags);

// --- serialization ---------------------------------------------------------

/// Canonical JSON text (sorted keys, fixed formatting); byte-stable.
std::string to_json(const ArchSpec& spec);
/// Parses the structured config format. Throws std::invalid_argument with
/// a field path on malformed input.
ArchSpec from_json(std::string_view text);
ArchSpec load_config_file(const std::string& path);
/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string spec_hash(const ArchSpec& spec);
std::string fnv1a_hex(std::string_view bytes);

}  // namespace ascan
