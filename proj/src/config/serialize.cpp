#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ascan/config.hpp"
#include "json.hpp"

namespace ascan {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw std::invalid_argument("config " + path + ": " + msg);
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!ok.count(it.key())) fail(path + "." + it.key(), "unknown field");
}

int get_int(const json& obj, const std::string& path, const char* key, int fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
  return v.get<int>();
}

std::string get_string(const json& obj, const std::string& path, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) fail(path + "." + key, "expected a string");
  return v.get<std::string>();
}

StageLayout parse_blocks(const std::string& text, const std::string& path, bool unet) {
  Layout l;
  try {
    l = parse_config_string(text);
  } catch (const ParseError& e) {
    fail(path, e.what());
  }
  if (l.size() != 1) fail(path, "a stage takes one dash-free block string");
  if (unet)
    for (auto& k : l[0]) k = conditioned(k);
  return l[0];
}

json stage_json(const StageSpec& s) {
  json j;
  j["blocks"] = render_stage(s.blocks);
  j["channels"] = s.out_channels;
  j["stride"] = s.entry_stride;
  if (s.num_heads) j["heads"] = *s.num_heads;
  return j;
}

StageSpec stage_from(const json& j, const std::string& path, bool unet) {
  check_keys(j, path, {"blocks", "channels", "stride", "heads"});
  StageSpec s;
  if (!j.contains("blocks")) fail(path + ".blocks", "missing");
  s.blocks = parse_blocks(get_string(j, path, "blocks", ""), path + ".blocks", unet);
  s.out_channels = get_int(j, path, "channels", 0);
  if (!j.contains("channels")) fail(path + ".channels", "missing");
  s.entry_stride = get_int(j, path, "stride", 1);
  if (j.contains("heads")) s.num_heads = get_int(j, path, "heads", 0);
  return s;
}

std::vector<StageSpec> stages_from(const json& j, const std::string& path, bool unet) {
  if (!j.is_array()) fail(path, "expected an array");
  std::vector<StageSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(stage_from(j[i], path + "[" + std::to_string(i) + "]", unet));
  return out;
}

std::vector<int> int_list(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of integers");
  std::vector<int> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) fail(path, "expected an array of integers");
    out.push_back(v.get<int>());
  }
  return out;
}

}  // namespace

std::string to_json(const ArchSpec& spec) {
  json j;
  const bool unet = spec.kind == ArchKind::kUnet;
  j["kind"] = unet ? "unet" : "classifier";
  j["name"] = spec.name;
  j["input_channels"] = spec.input_channels;
  j["stem"] = {{"channels", spec.stem.out_channels}, {"stride", spec.stem.entry_stride}};
  j["stages"] = json::array();
  for (const auto& s : spec.stages) j["stages"].push_back(stage_json(s));
  j["stochastic_depth"] = spec.stochastic_depth;
  j["head_dim"] = spec.head_dim;
  if (unet) {
    j["up_stages"] = json::array();
    for (const auto& s : spec.up_stages) j["up_stages"].push_back(stage_json(s));
    const auto& u = spec.unet;
    j["head"] = {{"middle", stage_json(u.middle)},
                 {"time_embed_dim", u.time_embed_dim},
                 {"context_dim", u.context_dim},
                 {"context_tokens", u.context_tokens},
                 {"context_heads", u.context_heads},
                 {"num_classes", u.num_classes},
                 {"skip", u.skip == SkipMode::kConcat ? "concat" : "add"},
                 {"cross_query", u.cross_query == CrossQuery::kImage ? "image" : "context"}};
  } else {
    j["head"] = {{"embed_dim", spec.classifier.embed_dim}, {"num_classes", spec.classifier.num_classes}};
    j["entry_t"] = spec.entry_t == EntryT::kTransition ? "transition" : "full";
    j["reference_resolution"] = spec.reference_resolution;
  }
  return j.dump(2);
}

ArchSpec from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  check_keys(j, "$", {"kind", "name", "input_channels", "stem", "stages", "up_stages", "layout", "channels",
                      "heads", "head", "stochastic_depth", "head_dim", "entry_t", "reference_resolution"});
  ArchSpec spec;
  const std::string kind = get_string(j, "$", "kind", "");
  if (kind == "classifier")
    spec.kind = ArchKind::kClassifier;
  else if (kind == "unet")
    spec.kind = ArchKind::kUnet;
  else
    fail("$.kind", "expected \"classifier\" or \"unet\"");
  const bool unet = spec.kind == ArchKind::kUnet;
  spec.name = get_string(j, "$", "name", "custom");
  spec.input_channels = get_int(j, "$", "input_channels", unet ? 4 : 3);
  spec.head_dim = get_int(j, "$", "head_dim", 32);

  if (j.contains("stages") && j.contains("layout")) fail("$", "give either stages or layout, not both");
  if (j.contains("stages")) {
    spec.stages = stages_from(j["stages"], "$.stages", unet);
  } else if (j.contains("layout")) {
    const std::string text = get_string(j, "$", "layout", "");
    Layout layout;
    try {
      layout = parse_config_string(text);
    } catch (const ParseError& e) {
      fail("$.layout", e.what());
    }
    if (unet) {
      if (!j.contains("channels")) fail("$.channels", "required with a unet layout");
    }
    ArchSpec base = classifier_from_layout(layout, spec.name);
    spec.stages = base.stages;
    if (j.contains("channels")) {
      auto widths = int_list(j["channels"], "$.channels");
      if (widths.size() != layout.size()) fail("$.channels", "one width per layout stage required");
      for (std::size_t i = 0; i < widths.size(); ++i) spec.stages[i].out_channels = widths[i];
    }
    if (j.contains("heads")) {
      auto heads = int_list(j["heads"], "$.heads");
      if (heads.size() != layout.size()) fail("$.heads", "one head count per layout stage required");
      for (std::size_t i = 0; i < heads.size(); ++i) spec.stages[i].num_heads = heads[i];
    }
    if (unet)
      for (std::size_t i = 0; i < spec.stages.size(); ++i) {
        for (auto& k : spec.stages[i].blocks) k = conditioned(k);
        spec.stages[i].entry_stride = i == 0 ? 1 : 2;
      }
  } else {
    fail("$", "missing stages or layout");
  }
  if (spec.stages.empty()) fail("$.stages", "at least one stage required");
  if (!j.contains("layout") && (j.contains("channels") || j.contains("heads")))
    fail("$", "channels/heads lists only apply to layout");

  if (j.contains("stem")) {
    check_keys(j["stem"], "$.stem", {"channels", "stride"});
    spec.stem.out_channels = get_int(j["stem"], "$.stem", "channels", 0);
    spec.stem.entry_stride = get_int(j["stem"], "$.stem", "stride", unet ? 1 : 2);
  } else {
    spec.stem.out_channels = unet ? spec.stages.front().out_channels : 64;
    spec.stem.entry_stride = unet ? 1 : 2;
  }

  if (j.contains("stochastic_depth")) {
    if (!j["stochastic_depth"].is_number()) fail("$.stochastic_depth", "expected a number");
    spec.stochastic_depth = j["stochastic_depth"].get<double>();
  } else {
    spec.stochastic_depth = unet ? 0.0 : 0.3;
  }

  const json head = j.contains("head") ? j["head"] : json::object();
  if (unet) {
    check_keys(head, "$.head", {"middle", "time_embed_dim", "context_dim", "context_tokens", "context_heads",
                                "num_classes", "skip", "cross_query"});
    if (j.contains("entry_t") || j.contains("reference_resolution"))
      fail("$", "entry_t/reference_resolution apply to classifiers only");
    auto& u = spec.unet;
    if (head.contains("middle")) {
      if (head["middle"].is_string()) {
        u.middle.blocks = parse_blocks(head["middle"].get<std::string>(), "$.head.middle", true);
        u.middle.out_channels = spec.stages.back().out_channels;
        u.middle.num_heads = spec.stages.back().num_heads;
      } else {
        u.middle = stage_from(head["middle"], "$.head.middle", true);
      }
    } else {
      u.middle.blocks = parse_blocks("CTC", "$.head.middle", true);
      u.middle.out_channels = spec.stages.back().out_channels;
      u.middle.num_heads = spec.stages.back().num_heads;
    }
    u.time_embed_dim = get_int(head, "$.head", "time_embed_dim", 4 * spec.stages.front().out_channels);
    u.context_dim = get_int(head, "$.head", "context_dim", 768);
    u.context_tokens = get_int(head, "$.head", "context_tokens", 1);
    u.context_heads = get_int(head, "$.head", "context_heads", 1);
    u.num_classes = get_int(head, "$.head", "num_classes", 1000);
    const auto skip = get_string(head, "$.head", "skip", "concat");
    if (skip == "concat")
      u.skip = SkipMode::kConcat;
    else if (skip == "add")
      u.skip = SkipMode::kAdd;
    else
      fail("$.head.skip", "expected \"concat\" or \"add\"");
    const auto q = get_string(head, "$.head", "cross_query", "image");
    if (q == "image")
      u.cross_query = CrossQuery::kImage;
    else if (q == "context")
      u.cross_query = CrossQuery::kContext;
    else
      fail("$.head.cross_query", "expected \"image\" or \"context\"");
    spec.up_stages = j.contains("up_stages") ? stages_from(j["up_stages"], "$.up_stages", true)
                                             : mirror_stages(spec.stages);
  } else {
    check_keys(head, "$.head", {"embed_dim", "num_classes"});
    if (j.contains("up_stages")) fail("$.up_stages", "classifiers have no up stages");
    spec.classifier.embed_dim = get_int(head, "$.head", "embed_dim", 512);
    spec.classifier.num_classes = get_int(head, "$.head", "num_classes", 1000);
    const auto e = get_string(j, "$", "entry_t", "transition");
    if (e == "transition")
      spec.entry_t = EntryT::kTransition;
    else if (e == "full")
      spec.entry_t = EntryT::kFull;
    else
      fail("$.entry_t", "expected \"transition\" or \"full\"");
    spec.reference_resolution = get_int(j, "$", "reference_resolution", 224);
  }
  return spec;
}

ArchSpec load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

std::string spec_hash(const ArchSpec& spec) { return fnv1a_hex(to_json(spec)); }

}  // namespace ascan
