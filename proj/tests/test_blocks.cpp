#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "ascan/blocks.hpp"
#include "ascan/grad_check.hpp"
#include "oracles.hpp"

using namespace ascan;
using oracle::Vec;

namespace {

const DType f64 = DType::kFloat64;

Tensor rnd(const Shape& s, std::uint64_t seed, double scale = 1.0) {
  return oracle::tensor(s, oracle::random_vec(numel_of(s), seed, scale));
}

Tensor find(const Module& m, const std::string& name) {
  for (const auto& nt : m.state())
    if (nt.name == name) return nt.value;
  FAIL("no tensor named " << name);
  return {};
}

void fill(Tensor t, double v) {
  for (auto& x : t.mutable_data<double>()) x = v;
}

// Gives every parameter and buffer a random value so identities are not
// satisfied by accident of initialization.
void randomize(Module& m, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& nt : m.state()) {
    const bool positive = nt.name.find("running_var") != std::string::npos;
    for (auto& x : nt.value.mutable_data<double>()) x = positive ? 0.5 + rng.uniform() : 0.3 * rng.normal();
  }
}

Vec vec(const Tensor& t) { return t.to_vector(); }

// --- composed C-block oracle on flat buffers, eval-mode batch norm ---------

struct Map {
  Vec v;
  int c, h, w;
};

Map bn(const Module& m, const std::string& p, Map x) {
  auto g = vec(find(m, p + ".weight")), b = vec(find(m, p + ".bias"));
  auto mu = vec(find(m, p + ".running_mean")), var = vec(find(m, p + ".running_var"));
  for (int c = 0; c < x.c; ++c)
    for (int i = 0; i < x.h * x.w; ++i) {
      double& e = x.v[c * x.h * x.w + i];
      e = (e - mu[c]) / std::sqrt(var[c] + 1e-5) * g[c] + b[c];
    }
  return x;
}

Map conv(const Module& m, const std::string& p, const Map& x, int out, int k, int stride) {
  auto w = vec(find(m, p + ".weight"));
  Map y{oracle::conv2d(x.v, w, nullptr, 1, x.c, x.h, x.w, out, k, stride, k / 2), out, 0, 0};
  y.h = (x.h + 2 * (k / 2) - k) / stride + 1;
  y.w = (x.w + 2 * (k / 2) - k) / stride + 1;
  return y;
}

Vec dense(const Module& m, const std::string& p, const Vec& x, int out) {
  auto w = vec(find(m, p + ".weight")), b = vec(find(m, p + ".bias"));
  Vec y(out);
  for (int o = 0; o < out; ++o) {
    y[o] = b[o];
    for (std::size_t i = 0; i < x.size(); ++i) y[o] += w[o * x.size() + i] * x[i];
  }
  return y;
}

Vec c_block_oracle(const Module& m, const Map& x, int cout, int stride, bool use_se) {
  const int mid = 4 * cout;
  Map e = bn(m, "expand.norm", conv(m, "expand.conv", x, mid, 3, stride));
  for (auto& v : e.v) v = oracle::gelu(v);
  if (use_se) {
    Vec pooled(mid, 0.0);
    for (int c = 0; c < mid; ++c)
      for (int i = 0; i < e.h * e.w; ++i) pooled[c] += e.v[c * e.h * e.w + i] / (e.h * e.w);
    Vec hidden = dense(m, "se.reduce", pooled, se_hidden_width(cout));
    for (auto& v : hidden) v = oracle::gelu(v);
    Vec gate = dense(m, "se.expand", hidden, mid);
    for (int c = 0; c < mid; ++c)
      for (int i = 0; i < e.h * e.w; ++i) e.v[c * e.h * e.w + i] *= oracle::sigmoid(gate[c]);
  }
  Map y = bn(m, "project.norm", conv(m, "project.conv", e, cout, 1, 1));
  Map s = x;
  if (stride == 2) {
    Map p{Vec(x.c * (x.h / 2) * (x.w / 2)), x.c, x.h / 2, x.w / 2};
    for (int c = 0; c < x.c; ++c)
      for (int i = 0; i < p.h; ++i)
        for (int j = 0; j < p.w; ++j) {
          double acc = 0;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) acc += x.v[(c * x.h + 2 * i + a) * x.w + 2 * j + b];
          p.v[(c * p.h + i) * p.w + j] = acc / 4;
        }
    s = p;
  }
  if (stride == 2 || x.c != cout) s = bn(m, "shortcut.norm", conv(m, "shortcut.conv", s, cout, 1, 1));
  for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += s.v[i];
  return y.v;
}

InitContext init64(Rng& rng) { return InitContext{&rng, f64, false}; }

BlockOptions c_opts(int in, int out, int stride) {
  BlockOptions o;
  o.in_channels = in;
  o.out_channels = out;
  o.stride = stride;
  return o;
}

BlockOptions t_opts(int dim, int heads) {
  BlockOptions o;
  o.in_channels = o.out_channels = dim;
  o.heads = heads;
  return o;
}

double rms_of_rows(const Tensor& t, bool max_dev) {
  auto v = t.to_vector();
  const auto dh = t.size(t.dim() - 1);
  double worst = 0;
  for (std::size_t r = 0; r < v.size() / dh; ++r) {
    double s = 0;
    for (int i = 0; i < dh; ++i) s += v[r * dh + i] * v[r * dh + i];
    worst = std::max(worst, std::abs(std::sqrt(s / dh) - 1.0));
  }
  return max_dev ? worst : 0.0;
}

void check_grads(Module& m, const std::function<Tensor()>& loss, const std::vector<Tensor>& extra = {}) {
  auto leaves = m.parameters();
  leaves.insert(leaves.end(), extra.begin(), extra.end());
  auto r = grad_check_leaves(loss, leaves, 1e-4, 24, 7);
  INFO("max rel error " << r.max_rel_error << " at " << r.worst << " over " << r.coordinates);
  CHECK(r.passed);
}

Tensor weighted(const Tensor& y, std::uint64_t seed) { return sum(y * rnd(y.shape(), seed)); }

}  // namespace

TEST_SUITE("c block") {
  TEST_CASE("zero projection leaves the input unchanged") {
    Rng rng(1);
    CBlock b(init64(rng), c_opts(8, 8, 1));
    randomize(b, 2);
    fill(find(b, "project.conv.weight"), 0.0);
    fill(find(b, "project.norm.bias"), 0.0);
    fill(find(b, "project.norm.running_mean"), 0.0);
    for (bool train : {true, false}) {
      b.set_training(train);
      Tensor x = rnd({2, 8, 5, 5}, 3);
      CHECK(vec(b.forward(x, nullptr, nullptr)) == vec(x));
    }
  }

  TEST_CASE("strided block matches the composed oracle") {
    Rng rng(4);
    CBlock b(init64(rng), c_opts(8, 12, 2));
    randomize(b, 5);
    b.set_training(false);
    Tensor x = rnd({1, 8, 6, 6}, 6);
    Tensor y = b.forward(x, nullptr, nullptr);
    CHECK(y.shape() == Shape{1, 12, 3, 3});
    CHECK(oracle::max_abs_diff(vec(y), c_block_oracle(b, {vec(x), 8, 6, 6}, 12, 2, true)) < 1e-6);
  }

  TEST_CASE("width change without stride uses the projected shortcut") {
    Rng rng(7);
    CBlock b(init64(rng), c_opts(6, 10, 1));
    randomize(b, 8);
    b.set_training(false);
    Tensor x = rnd({1, 6, 4, 4}, 9);
    CHECK(oracle::max_abs_diff(vec(b.forward(x, nullptr, nullptr)), c_block_oracle(b, {vec(x), 6, 4, 4}, 10, 1, true)) <
          1e-6);
  }

  TEST_CASE("saturated gate equals the block without squeeze-excite") {
    Rng rng(10);
    CBlock b(init64(rng), c_opts(8, 8, 1));
    randomize(b, 11);
    b.set_training(false);
    fill(find(b, "se.expand.weight"), 0.0);
    fill(find(b, "se.expand.bias"), 1e3);
    Tensor x = rnd({1, 8, 4, 4}, 12);
    CHECK(oracle::max_abs_diff(vec(b.forward(x, nullptr, nullptr)), c_block_oracle(b, {vec(x), 8, 4, 4}, 8, 1, false)) <
          1e-9);
  }

  TEST_CASE("parameter names and widths") {
    Rng rng(13);
    CBlock b(init64(rng), c_opts(8, 16, 2));
    std::map<std::string, Shape> shapes;
    for (auto& nt : b.named_parameters()) shapes[nt.name] = nt.value.shape();
    CHECK(shapes.at("expand.conv.weight") == Shape{64, 8, 3, 3});
    CHECK(shapes.at("se.reduce.weight") == Shape{se_hidden_width(16), 64});
    CHECK(shapes.at("se.expand.bias") == Shape{64});
    CHECK(shapes.at("project.conv.weight") == Shape{16, 64, 1, 1});
    CHECK(shapes.at("shortcut.conv.weight") == Shape{16, 8, 1, 1});
    CHECK(shapes.count("shortcut.norm.weight"));
    CHECK(se_hidden_width(96) == 24);
    CHECK(se_hidden_width(1) == 1);
  }

  TEST_CASE("channel mismatch is rejected") {
    Rng rng(14);
    CBlock b(init64(rng), c_opts(8, 8, 1));
    CHECK_THROWS(b.forward(rnd({1, 4, 4, 4}, 1), nullptr, nullptr));
    CHECK_THROWS_AS(CBlock(init64(rng), c_opts(8, 8, 3)), std::invalid_argument);
  }

  TEST_CASE("gradients") {
    Rng rng(15);
    CBlock b(init64(rng), c_opts(4, 6, 2));
    randomize(b, 16);
    for (auto& nt : b.named_buffers())
      if (nt.name.find("running_var") != std::string::npos) fill(nt.value, 1.0);
    Tensor x = rnd({2, 4, 4, 4}, 17).set_requires_grad(true);
    check_grads(b, [&] { return weighted(b.forward(x, nullptr, nullptr), 18); }, {x});
  }
}

TEST_SUITE("conditioned c block") {
  BlockOptions cc_opts() {
    auto o = c_opts(8, 8, 1);
    o.time_dim = 12;
    return o;
  }

  TEST_CASE("zero time projection equals the plain block") {
    Rng rng(20);
    CBlock cond(init64(rng), cc_opts());
    randomize(cond, 21);
    find(cond, "time_proj.weight");
    fill(find(cond, "time_proj.weight"), 0.0);
    fill(find(cond, "time_proj.bias"), 0.0);
    Rng rng2(22);
    CBlock plain(init64(rng2), c_opts(8, 8, 1));
    auto missing = plain.load_state(cond.state());
    CHECK(missing.empty());
    cond.set_training(false);
    plain.set_training(false);
    Tensor x = rnd({2, 8, 4, 4}, 23);
    Condition c{rnd({2, 12}, 24), {}};
    CHECK(vec(cond.forward(x, &c, nullptr)) == vec(plain.forward(x, nullptr, nullptr)));
  }

  TEST_CASE("different timesteps give different outputs") {
    Rng rng(25);
    CBlock b(init64(rng), cc_opts());
    randomize(b, 26);
    b.set_training(false);
    TimeEmbedding te(init64(rng), 12);
    Tensor x = rnd({1, 8, 4, 4}, 27);
    Condition a{te.forward({10.0}, f64), {}}, z{te.forward({500.0}, f64), {}};
    CHECK(oracle::max_abs_diff(vec(b.forward(x, &a, nullptr)), vec(b.forward(x, &z, nullptr))) > 1e-6);
  }

  TEST_CASE("a per-channel shift moves only that channel's mean") {
    Rng rng(28);
    CBlock b(init64(rng), cc_opts());
    randomize(b, 29);
    b.set_training(false);
    fill(find(b, "time_proj.weight"), 0.0);
    Tensor bias = find(b, "time_proj.bias");
    fill(bias, 0.0);
    Tensor x = rnd({1, 8, 4, 4}, 30);
    Condition c{rnd({1, 12}, 31), {}};
    auto before = vec(mean(b.expanded(x, &c), {2, 3}, false));
    const double delta = 0.75;
    bias.mutable_data<double>()[5] = delta;
    auto after = vec(mean(b.expanded(x, &c), {2, 3}, false));
    for (std::size_t ch = 0; ch < before.size(); ++ch)
      CHECK(after[ch] - before[ch] == doctest::Approx(ch == 5 ? delta : 0.0).epsilon(1e-12));
  }

  TEST_CASE("missing time embedding is rejected") {
    Rng rng(32);
    CBlock b(init64(rng), cc_opts());
    CHECK_THROWS_AS(b.forward(rnd({1, 8, 4, 4}, 1), nullptr, nullptr), std::invalid_argument);
  }

  TEST_CASE("gradients") {
    Rng rng(33);
    CBlock b(init64(rng), cc_opts());
    b.set_training(true);
    Tensor x = rnd({2, 8, 3, 3}, 34).set_requires_grad(true);
    Tensor t = rnd({2, 12}, 35).set_requires_grad(true);
    check_grads(b, [&] {
      Condition c{t, {}};
      return weighted(b.forward(x, &c, nullptr), 36);
    }, {x, t});
  }
}

TEST_SUITE("t block") {
  TEST_CASE("zero output projections leave the input unchanged") {
    Rng rng(40);
    auto o = t_opts(16, 2);
    o.rel_grid = 4;
    TBlock b(init64(rng), o);
    randomize(b, 41);
    for (const char* n : {"attn_out.weight", "attn_out.bias", "mlp_out.weight", "mlp_out.bias"}) fill(find(b, n), 0.0);
    Tensor map = rnd({2, 16, 3, 3}, 42);
    CHECK(vec(b.forward(map, nullptr, nullptr)) == vec(map));
    Tensor seq = rnd({2, 5, 16}, 43);
    CHECK(vec(b.forward(seq, nullptr, nullptr)) == vec(seq));
  }

  TEST_CASE("token permutation commutes with the block") {
    Rng rng(44);
    TBlock b(init64(rng), t_opts(16, 4));
    randomize(b, 45);
    Tensor x = rnd({2, 7, 16}, 46);
    std::vector<std::int64_t> perm{3, 0, 6, 1, 5, 2, 4};
    auto lhs = vec(b.forward(index_select(x, 1, perm), nullptr, nullptr));
    auto rhs = vec(index_select(b.forward(x, nullptr, nullptr), 1, perm));
    CHECK(oracle::max_abs_diff(lhs, rhs) < 1e-12);
  }

  TEST_CASE("a single token attends only to itself") {
    Rng rng(47);
    TBlock b(init64(rng), t_opts(8, 2));
    randomize(b, 48);
    Tensor x = rnd({3, 1, 8}, 49);
    auto lin = [&](const std::string& p, const Tensor& in, std::int64_t start, std::int64_t len) {
      return linear(in, slice(find(b, p + ".weight"), 0, start, len), slice(find(b, p + ".bias"), 0, start, len));
    };
    Tensor xhat = layer_norm(gelu(x), find(b, "norm.weight"), find(b, "norm.bias"), 1e-5);
    Tensor expected = x + lin("attn_out", lin("qkv", xhat, 16, 8), 0, 8) +
                      lin("mlp_out", gelu(lin("mlp_in", xhat, 0, 32)), 0, 8);
    CHECK(oracle::max_abs_diff(vec(b.forward(x, nullptr, nullptr)), vec(expected)) < 1e-12);
  }

  TEST_CASE("relative-position bias is a lookup by clipped offset") {
    Rng rng(50);
    auto o = t_opts(8, 2);
    o.rel_grid = 2;  // offsets -1..1 per axis
    TBlock b(init64(rng), o);
    randomize(b, 51);
    Tensor x = rnd({1, 8, 3, 3}, 52);
    auto with = b.probe_self_attention(x);
    auto table = vec(find(b, "pos.table"));
    auto plain = vec(scale(matmul(with.q, transpose(with.k, 2, 3)), 0.5));
    auto logits = vec(with.logits);
    auto clip = [](long d) { return std::clamp<long>(d, -1, 1); };
    double worst = 0;
    for (int h = 0; h < 2; ++h)
      for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) {
          const long dr = clip(i / 3 - j / 3), dc = clip(i % 3 - j % 3);
          const double bias = table[h * 9 + (dr + 1) * 3 + dc + 1];
          const std::size_t at = (h * 9 + i) * 9 + j;
          worst = std::max(worst, std::abs(logits[at] - plain[at] - bias));
        }
    CHECK(worst < 1e-12);
  }

  TEST_CASE("entry transition") {
    Rng rng(53);
    BlockOptions o = t_opts(16, 2);
    o.in_channels = 8;
    o.stride = 2;
    o.transition_only = true;
    TBlock t(init64(rng), o);
    randomize(t, 54);
    t.set_training(false);
    CHECK(t.named_parameters().size() == 3);  // conv weight + norm affine
    Tensor x = rnd({1, 8, 4, 4}, 55);
    Tensor y = t.forward(x, nullptr, nullptr);
    CHECK(y.shape() == Shape{1, 16, 2, 2});
    o.transition_only = false;
    TBlock full(init64(rng), o);
    full.set_training(false);
    CHECK(full.forward(x, nullptr, nullptr).shape() == Shape{1, 16, 2, 2});
    CHECK_THROWS_AS(TBlock(init64(rng), [] {
                      auto p = t_opts(8, 1);
                      p.transition_only = true;
                      return p;
                    }()),
                    std::invalid_argument);
  }

  TEST_CASE("width must split into heads") {
    Rng rng(56);
    CHECK_THROWS_AS(TBlock(init64(rng), t_opts(10, 3)), std::invalid_argument);
  }

  TEST_CASE("gradients at sequence length 9") {
    Rng rng(57);
    auto o = t_opts(8, 2);
    o.rel_grid = 3;
    TBlock b(init64(rng), o);
    randomize(b, 58);
    Tensor x = rnd({2, 8, 3, 3}, 59).set_requires_grad(true);
    check_grads(b, [&] { return weighted(b.forward(x, nullptr, nullptr), 60); }, {x});
  }
}

TEST_SUITE("conditioned t block") {
  BlockOptions tc_opts() {
    auto o = t_opts(16, 2);
    o.rope = true;
    o.qk_norm = true;
    o.context_dim = 12;
    return o;
  }

  TEST_CASE("zero cross output equals the block without cross-attention") {
    Rng rng(61);
    TBlock cond(init64(rng), tc_opts());
    randomize(cond, 62);
    fill(find(cond, "cross.out.weight"), 0.0);
    fill(find(cond, "cross.out.bias"), 0.0);
    auto po = tc_opts();
    po.context_dim = 0;
    Rng rng2(63);
    TBlock plain(init64(rng2), po);
    CHECK(plain.load_state(cond.state()).empty());
    Tensor x = rnd({2, 16, 3, 3}, 64);
    Condition c{{}, rnd({2, 4, 12}, 65)};
    CHECK(vec(cond.forward(x, &c, nullptr)) == vec(plain.forward(x, nullptr, nullptr)));
  }

  TEST_CASE("a one-token context contributes out(v(context))") {
    Rng rng(66);
    TBlock cond(init64(rng), tc_opts());
    randomize(cond, 67);
    auto po = tc_opts();
    po.context_dim = 0;
    Rng rng2(68);
    TBlock plain(init64(rng2), po);
    plain.load_state(cond.state());
    Tensor x = rnd({2, 5, 16}, 69);
    Tensor ctx = rnd({2, 1, 12}, 70);
    Condition c{{}, ctx};
    auto lin = [&](const std::string& p, const Tensor& in) {
      return linear(in, find(cond, p + ".weight"), find(cond, p + ".bias"));
    };
    Tensor expected = plain.forward(x, nullptr, nullptr) + lin("cross.out", lin("cross.v", ctx));
    CHECK(oracle::max_abs_diff(vec(cond.forward(x, &c, nullptr)), vec(expected)) < 1e-12);
  }

  TEST_CASE("different contexts give different outputs") {
    Rng rng(71);
    TBlock b(init64(rng), tc_opts());
    randomize(b, 72);
    Tensor x = rnd({1, 16, 2, 2}, 73);
    Condition a{{}, rnd({1, 3, 12}, 74)}, z{{}, rnd({1, 3, 12}, 75)};
    CHECK(oracle::max_abs_diff(vec(b.forward(x, &a, nullptr)), vec(b.forward(x, &z, nullptr))) > 1e-6);
  }

  TEST_CASE("missing context is rejected") {
    Rng rng(76);
    TBlock b(init64(rng), tc_opts());
    Tensor x = rnd({1, 16, 2, 2}, 77);
    Condition flat{{}, rnd({1, 12}, 78)};
    CHECK_THROWS_AS(b.forward(x, &flat, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(b.forward(x, nullptr, nullptr), std::invalid_argument);
  }

  TEST_CASE("rotary logits depend only on relative position") {
    for (DType dt : {f64, DType::kFloat32}) {
      Rng rng(78);
      TBlock b(InitContext{&rng, dt, false}, tc_opts());
      Tensor x = rnd({1, 16, 3, 4}, 79).to(dt);
      auto at0 = vec(b.probe_self_attention(x).logits);
      auto shifted = vec(b.probe_self_attention(x, {7, -3}).logits);
      CHECK(oracle::max_abs_diff(at0, shifted) < 1e-5);
    }
  }

  TEST_CASE("normalized queries and keys have unit rms") {
    Rng rng(80);
    TBlock b(init64(rng), tc_opts());
    randomize(b, 81);
    for (const char* n : {"qk_norm.q_gain", "qk_norm.k_gain"}) fill(find(b, n), 1.0);
    auto p = b.probe_self_attention(rnd({2, 16, 3, 3}, 82, 5.0));
    CHECK(rms_of_rows(p.q, true) < 1e-5);
    CHECK(rms_of_rows(p.k, true) < 1e-5);
  }

  TEST_CASE("gradients") {
    Rng rng(83);
    TBlock b(init64(rng), tc_opts());
    randomize(b, 84);
    Tensor x = rnd({1, 16, 2, 2}, 85).set_requires_grad(true);
    Tensor ctx = rnd({1, 3, 12}, 86).set_requires_grad(true);
    check_grads(b, [&] {
      Condition c{{}, ctx};
      return weighted(b.forward(x, &c, nullptr), 87);
    }, {x, ctx});
  }
}

TEST_SUITE("stochastic depth") {
  TEST_CASE("identity at rate zero and in eval mode") {
    Tensor x = rnd({4, 3}, 90);
    Rng rng(1);
    CHECK(vec(stochastic_depth(x, 0.0, true, &rng)) == vec(x));
    CHECK(vec(stochastic_depth(x, 0.0, false, nullptr)) == vec(x));
    CHECK(vec(stochastic_depth(x, 0.5, false, nullptr)) == vec(x));
  }

  TEST_CASE("survival frequency and unbiased mean") {
    const int n = 100000;
    const double rate = 0.3;
    Rng rng(91);
    Tensor ones = Tensor::ones({n, 2}, f64);
    auto y = vec(stochastic_depth(ones, rate, true, &rng));
    int kept = 0;
    double total = 0;
    for (int i = 0; i < n; ++i) {
      CHECK(y[2 * i] == y[2 * i + 1]);  // whole sample kept or dropped
      kept += y[2 * i] != 0.0;
      total += y[2 * i];
    }
    const double sigma = std::sqrt(n * rate * (1 - rate));
    CHECK(std::abs(kept - n * (1 - rate)) < 3 * sigma);
    CHECK(std::abs(total / n - 1.0) < 0.02);
  }

  TEST_CASE("rate range") {
    Rng rng(1);
    Tensor x = rnd({2, 2}, 92);
    CHECK_THROWS_AS(stochastic_depth(x, 1.0, true, &rng), std::invalid_argument);
    CHECK_THROWS_AS(stochastic_depth(x, -0.1, false, &rng), std::invalid_argument);
    auto ramp = drop_rate_ramp(0.3, 4);
    REQUIRE(ramp.size() == 4);
    CHECK(ramp[0] == 0.0);
    CHECK(ramp[1] == doctest::Approx(0.1));
    CHECK(ramp[3] == doctest::Approx(0.3));
  }
}

TEST_SUITE("stem and head") {
  TEST_CASE("tiny stem halves a 224 image to 64 channels") {
    Rng rng(100);
    auto spec = build_preset("ascan-t");
    Stem stem(InitContext{&rng, DType::kFloat32, false}, 3, spec.stem.out_channels, spec.stem.entry_stride);
    stem.set_training(false);
    Tensor y = stem.forward(randn({1, 3, 224, 224}, rng));
    CHECK(y.shape() == Shape{1, 64, 112, 112});
  }

  TEST_CASE("constant input pools to the projected constant") {
    Rng rng(101);
    ClassifierHead head(init64(rng), 6, 10, 5);
    randomize(head, 102);
    head.set_training(false);
    Tensor x = Tensor::full({1, 6, 4, 4}, 0.7, f64);
    Map c{Vec(6, 0.7), 6, 1, 1};
    auto expected = bn(head, "norm", conv(head, "conv", c, 10, 1, 1)).v;
    for (auto& v : expected) v = oracle::gelu(v);
    CHECK(oracle::max_abs_diff(vec(head.pre_logits(x)), expected) < 1e-12);
  }

  TEST_CASE("zeroed classifier gives uniform logits") {
    Rng rng(103);
    ClassifierHead head(init64(rng), 6, 10, 5);
    randomize(head, 104);
    fill(find(head, "fc.weight"), 0.0);
    fill(find(head, "fc.bias"), 0.0);
    auto p = vec(softmax(head.forward(rnd({2, 6, 3, 3}, 105)), -1));
    for (double v : p) CHECK(v == doctest::Approx(0.2));
  }

  TEST_CASE("timestep encoding") {
    auto e = vec(timestep_embedding({0.0, 3.0}, 8, f64));
    CHECK(Vec(e.begin(), e.begin() + 8) == Vec{1, 1, 1, 1, 0, 0, 0, 0});
    CHECK(e[8] == doctest::Approx(std::cos(3.0)));
    CHECK(e[12] == doctest::Approx(std::sin(3.0)));
    CHECK(e[13] == doctest::Approx(std::sin(3.0 * std::exp(-std::log(10000.0) / 4))));
    Rng rng(106);
    TimeEmbedding te(init64(rng), 64);
    CHECK(te.sinusoid_dim() == 16);
    CHECK(te.forward({1.0, 2.0}, f64).shape() == Shape{2, 64});
  }
}
