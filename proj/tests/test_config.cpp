#include <doctest.h>

#include <algorithm>

#include "ascan/config.hpp"

using namespace ascan;

namespace {

std::string counts(const Layout& l) {
  std::string out;
  for (const auto& s : l) {
    auto c = std::count(s.begin(), s.end(), BlockKind::kC);
    out += std::to_string(c) + "C" + std::to_string(s.size() - c) + "T ";
  }
  return out;
}

bool mentions(const std::vector<Diagnostic>& d, Severity sev, const std::string& text) {
  return std::any_of(d.begin(), d.end(), [&](const Diagnostic& x) {
    return x.severity == sev && x.message.find(text) != std::string::npos;
  });
}

}  // namespace

TEST_CASE("layout strings parse stage by stage") {
  using K = BlockKind;
  CHECK(parse_config_string("CC-CCCT-CCTT-CTTT") ==
        Layout{{K::kC, K::kC}, {K::kC, K::kC, K::kC, K::kT}, {K::kC, K::kC, K::kT, K::kT}, {K::kC, K::kT, K::kT, K::kT}});
  CHECK(parse_config_string("C") == Layout{{K::kC}});
  CHECK(parse_config_string("CC-TTTT-TTTT-TTTT") ==
        Layout{{K::kC, K::kC}, {K::kT, K::kT, K::kT, K::kT}, {K::kT, K::kT, K::kT, K::kT}, {K::kT, K::kT, K::kT, K::kT}});
  CHECK(parse_config_string("cc-ct") == parse_config_string("CC-CT"));
}

TEST_CASE("layout errors carry a column") {
  auto column = [](const char* text) -> std::size_t {
    try {
      parse_config_string(text);
    } catch (const ParseError& e) {
      return e.column();
    }
    return 0;
  };
  CHECK(column("") == 1);
  CHECK(column("CX") == 2);
  CHECK(column("CC--C") == 4);
  CHECK(column("CC-") == 4);
  CHECK(column("-C") == 1);
}

TEST_CASE("render then parse is the identity") {
  for (const char* text : {"C", "CC-CCCT-CCTT-CTTT", "T-T-T", "TTTTTTTCCC-C"}) {
    auto l = parse_config_string(text);
    CHECK(render_layout(l) == text);
    CHECK(parse_config_string(render_layout(l)) == l);
  }
}

TEST_CASE("symmetry labels follow the ablation grouping") {
  for (const char* n : {"c1", "c2", "c3", "c4", "c5"})
    CHECK_MESSAGE(classify_symmetry(parse_config_string(*ablation_layout(n))) == Symmetry::kAsymmetric, n);
  for (const char* n : {"c6", "c7", "c8", "c9", "c10"})
    CHECK_MESSAGE(classify_symmetry(parse_config_string(*ablation_layout(n))) == Symmetry::kSymmetric, n);
  CHECK(classify_symmetry(parse_config_string("CC-CCTT-CCTT-CCTT")) == Symmetry::kSymmetric);
  CHECK(classify_symmetry(parse_config_string("TTTT")) == Symmetry::kSymmetric);
}

TEST_CASE("ablation presets reproduce the published strings") {
  const std::pair<const char*, const char*> expected[] = {
      {"c1", "CC-CCCT-CCTT-CTTT"}, {"c9", "CC-TTTT-TTTT-TTTT"}, {"c10", "CC-CCTT-CCTT-CCTT"},
      {"t4", "TT-CCCT-CCTT-CTTT"}};
  for (auto [name, text] : expected) {
    auto spec = build_preset(name);
    Layout l;
    for (const auto& s : spec.stages) l.push_back(s.blocks);
    CHECK(counts(l) == counts(parse_config_string(text)));
    CHECK(render_layout(l) == text);
  }
}

TEST_CASE("variant presets") {
  auto t = build_preset("ascan-t");
  CHECK(t.stem.out_channels == 64);
  CHECK(t.stem.entry_stride == 2);
  std::vector<int> widths;
  for (auto& s : t.stages) widths.push_back(s.out_channels);
  CHECK(widths == std::vector<int>{96, 192, 384, 768});
  CHECK(render_stage(t.stages[1].blocks) == "CCCT");
  CHECK(t.classifier.embed_dim == 512);

  auto b = build_preset("ascan-b");
  const auto& s3 = b.stages[2];
  CHECK(s3.out_channels == 384);
  CHECK(s3.entry_stride == 2);
  CHECK(s3.blocks.size() == 14);
  CHECK(s3.blocks.front() == BlockKind::kC);
  CHECK(std::count(s3.blocks.begin(), s3.blocks.end(), BlockKind::kC) == 7);
  CHECK(std::count(s3.blocks.begin() + 7, s3.blocks.end(), BlockKind::kT) == 7);

  auto l = build_preset("ascan-l");
  CHECK(l.stem.out_channels == 128);
  CHECK(l.stages.back().out_channels == 1024);
  CHECK(l.classifier.embed_dim == 1024);

  auto u = build_preset("unet-t2i");
  std::vector<int> ch, heads;
  for (auto& s : u.stages) {
    ch.push_back(s.out_channels);
    heads.push_back(resolved_heads(u, s));
  }
  CHECK(ch == std::vector<int>{320, 640, 1280});
  CHECK(heads == std::vector<int>{5, 10, 20});
  CHECK(u.unet.context_dim == 4096);
  auto cc = build_preset("unet-class-cond");
  CHECK(cc.stages.front().out_channels == 160);
  CHECK(cc.unet.context_dim == 768);
  for (const auto& s : cc.stages)
    for (auto k : s.blocks) CHECK(is_conditioned(k));

  CHECK_THROWS_AS(build_preset("ascan-xl"), std::invalid_argument);
}

TEST_CASE("every preset validates without errors") {
  for (const auto& name : preset_names()) {
    auto d = validate(build_preset(name));
    CHECK_MESSAGE(!has_errors(d), name);
  }
  CHECK(validate(build_preset("c1")).empty());
}

TEST_CASE("validation diagnostics") {
  auto t4 = validate(build_preset("t4"));
  CHECK(!has_errors(t4));
  CHECK(mentions(t4, Severity::kWarning, "transformer in first stage"));

  auto t1 = validate(build_preset("t1"));
  CHECK(!has_errors(t1));
  CHECK(mentions(t1, Severity::kWarning, "transformer before convolution"));

  auto u = build_preset("unet-class-cond");
  u.up_stages[0].out_channels += 8;
  CHECK(mentions(validate(u), Severity::kError, "mirror violation"));

  auto h = build_preset("ascan-t");
  h.stages[1].num_heads = 5;  // 192 is not a multiple of 5
  CHECK(has_errors(validate(h)));

  auto three = build_preset("ascan-t");
  three.stages.pop_back();
  auto d3 = validate(three);
  CHECK(!has_errors(d3));
  CHECK(mentions(d3, Severity::kWarning, "3 stages"));

  auto cond = build_preset("ascan-t");
  cond.stages[1].blocks[0] = BlockKind::kCcond;
  CHECK(has_errors(validate(cond)));
}

TEST_CASE("json round trip is byte stable") {
  for (const auto& name : preset_names()) {
    auto spec = build_preset(name);
    auto text = to_json(spec);
    auto again = from_json(text);
    CHECK_MESSAGE(to_json(again) == text, name);
    CHECK(spec_hash(again) == spec_hash(spec));
  }
  CHECK(spec_hash(build_preset("c1")) != spec_hash(build_preset("c2")));
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("json layout form and strict fields") {
  auto spec = from_json(R"({"kind": "classifier", "layout": "CC-CCCT-CCTT-CTTT"})");
  CHECK(to_json(spec) != "");
  CHECK(render_stage(spec.stages[3].blocks) == "CTTT");
  CHECK(spec.stages[3].out_channels == 768);

  auto wide = from_json(R"({"kind": "classifier", "layout": "C-T", "channels": [32, 64], "heads": [1, 2]})");
  CHECK(wide.stages[1].out_channels == 64);
  CHECK(*wide.stages[1].num_heads == 2);

  auto u = from_json(R"({"kind": "unet", "layout": "CT-CT", "channels": [16, 32], "heads": [1, 2]})");
  CHECK(u.stages[0].blocks[1] == BlockKind::kTcond);
  CHECK(u.up_stages.size() == 2);
  CHECK(u.up_stages[0].out_channels == 32);
  CHECK(!has_errors(validate(u)));

  auto message = [](const char* text) -> std::string {
    try {
      from_json(text);
    } catch (const std::invalid_argument& e) {
      return e.what();
    }
    return "";
  };
  CHECK(message(R"({"kind": "classifier", "layout": "CC", "bogus": 1})").find("$.bogus") != std::string::npos);
  CHECK(message(R"({"kind": "classifier", "layout": "CX"})").find("$.layout") != std::string::npos);
  CHECK(message(R"({"kind": "unet", "layout": "CT"})").find("$.channels") != std::string::npos);
  CHECK(message(R"({"kind": "toaster"})").find("$.kind") != std::string::npos);
  CHECK(message("{").find("malformed") != std::string::npos);
}
