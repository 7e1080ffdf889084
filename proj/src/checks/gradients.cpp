#include "ascan/blocks.hpp"
#include "ascan/diffusion.hpp"
#include "ascan/grad_check.hpp"
#include "common.hpp"

namespace ascan {

using checks_detail::fmt;
using checks_detail::randomize;
using checks_detail::rnd;

namespace {

constexpr double kTol = 1e-4;
const DType f64 = DType::kFloat64;

// weighted sum: a scalar with a nontrivial upstream gradient
Tensor probe(const Tensor& y, std::uint64_t seed = 99) { return sum(mul(y, rnd(y.shape(), seed))); }

Tensor leaf(const Shape& s, std::uint64_t seed, double scale = 1.0) {
  Tensor t = rnd(s, seed, scale);
  t.set_requires_grad(true);
  return t;
}

Tensor positive_leaf(const Shape& s, std::uint64_t seed) {
  Tensor t = add_scalar(square(rnd(s, seed)), 0.5);
  t.set_requires_grad(true);
  return t;
}

CheckItem item(const std::string& name, const GradCheckReport& r) {
  return {name, r.passed, fmt("max rel err %.2e over %lld coords", r.max_rel_error, static_cast<long long>(r.coordinates))};
}

void run(CheckSuite& s, const std::string& name, const std::function<Tensor()>& loss, const std::vector<Tensor>& leaves,
         std::int64_t max_coords = 0) {
  try {
    s.items.push_back(item(name, grad_check_leaves(loss, leaves, kTol, max_coords, 7)));
  } catch (const std::exception& e) {
    s.items.push_back({name, false, e.what()});
  }
}

void module_case(CheckSuite& s, const std::string& name, Module& m, const std::function<Tensor()>& loss,
                 std::vector<Tensor> extra) {
  auto leaves = m.parameters();
  leaves.insert(leaves.end(), extra.begin(), extra.end());
  run(s, name, loss, leaves, 24);
}

void primitives(CheckSuite& s) {
  const Tensor a = leaf({2, 3, 4}, 1), b = leaf({3, 1}, 2), p = positive_leaf({3, 1}, 3), q = positive_leaf({2, 5}, 4);
  run(s, "add", [=] { return probe(add(a, b)); }, {a, b});
  run(s, "sub", [=] { return probe(sub(a, b)); }, {a, b});
  run(s, "mul", [=] { return probe(mul(a, b)); }, {a, b});
  run(s, "div", [=] { return probe(div(a, p)); }, {a, p});
  run(s, "neg", [=] { return probe(neg(a)); }, {a});
  run(s, "scale", [=] { return probe(scale(a, -2.5)); }, {a});
  run(s, "add_scalar", [=] { return probe(add_scalar(a, 0.75)); }, {a});
  run(s, "square", [=] { return probe(square(a)); }, {a});
  run(s, "sqrt", [=] { return probe(sqrt(q)); }, {q});
  run(s, "exp", [=] { return probe(exp(a)); }, {a});
  run(s, "log", [=] { return probe(log(q)); }, {q});
  run(s, "gelu", [=] { return probe(gelu(a)); }, {a});
  run(s, "silu", [=] { return probe(silu(a)); }, {a});
  run(s, "sigmoid", [=] { return probe(sigmoid(a)); }, {a});
  run(s, "softmax", [=] { return probe(softmax(a, -1)); }, {a});
  run(s, "softmax axis 0", [=] { return probe(softmax(a, 0)); }, {a});
  run(s, "log_softmax", [=] { return probe(log_softmax(a, 1)); }, {a});
  run(s, "sum", [=] { return sum(mul(a, a)); }, {a});
  run(s, "sum axes", [=] { return probe(sum(a, {0, 2}, true)); }, {a});
  run(s, "mean", [=] { return mean(square(a)); }, {a});
  run(s, "mean axes", [=] { return probe(mean(a, {1}, false)); }, {a});
  run(s, "sum_to", [=] { return probe(sum_to(a, {3, 1})); }, {a});

  const Tensor m1 = leaf({2, 3, 4}, 5), m2 = leaf({4, 5}, 6), w = leaf({6, 4}, 7), bias = leaf({6}, 8);
  run(s, "matmul", [=] { return probe(matmul(m1, m2)); }, {m1, m2});
  run(s, "linear", [=] { return probe(linear(m1, w, bias)); }, {m1, w, bias});

  run(s, "reshape", [=] { return probe(reshape(a, {4, 6})); }, {a});
  run(s, "permute", [=] { return probe(permute(a, {2, 0, 1})); }, {a});
  run(s, "transpose", [=] { return probe(transpose(a, 0, 2)); }, {a});
  const Tensor c = leaf({2, 2, 4}, 9);
  run(s, "concat", [=] { return probe(concat({a, c}, 1)); }, {a, c});
  run(s, "slice", [=] { return probe(slice(a, 2, 1, 2)); }, {a});
  run(s, "index_select", [=] { return probe(index_select(a, 1, {2, 0, 2})); }, {a});

  const Tensor x = leaf({2, 3, 6, 6}, 10), k3 = leaf({4, 3, 3, 3}, 11, 0.5), kb = leaf({4}, 12),
               k1 = leaf({5, 3, 1, 1}, 13);
  run(s, "conv2d 3x3", [=] { return probe(conv2d(x, k3, kb, 1, 1)); }, {x, k3, kb});
  run(s, "conv2d 3x3 stride 2", [=] { return probe(conv2d(x, k3, std::nullopt, 2, 1)); }, {x, k3});
  run(s, "conv2d 1x1", [=] { return probe(conv2d(x, k1, std::nullopt, 1, 0)); }, {x, k1});
  run(s, "avg_pool2d", [=] { return probe(avg_pool2d(x, 2)); }, {x});
  run(s, "upsample_nearest2d", [=] { return probe(upsample_nearest2d(x, 2)); }, {x});

  const Tensor g = leaf({3}, 14), be = leaf({3}, 15);
  for (bool training : {true, false}) {
    run(s, training ? "batch_norm train" : "batch_norm eval", [=] {
      BatchNormState st{Tensor::zeros({3}, f64), Tensor::ones({3}, f64), 0.1};
      return probe(batch_norm(x, g, be, st, training, 1e-5));
    }, {x, g, be});
  }
  const Tensor t = leaf({2, 5, 8}, 16), lg = leaf({8}, 17), lb = leaf({8}, 18);
  run(s, "layer_norm", [=] { return probe(layer_norm(t, lg, lb, 1e-5)); }, {t, lg, lb});
  run(s, "rms_norm", [=] { return probe(rms_norm(t, lg, 1e-6)); }, {t, lg});
  run(s, "rms_norm no gain", [=] { return probe(rms_norm(t, std::nullopt, 1e-6)); }, {t});
  const auto pos = grid_positions(2, 3);
  const Tensor r = leaf({2, 6, 8}, 19);
  run(s, "rope_rotate", [=] { return probe(rope_rotate(r, pos)); }, {r});

  const Tensor aq = leaf({1, 2, 5, 4}, 20), ak = leaf({1, 2, 7, 4}, 21), av = leaf({1, 2, 7, 4}, 22),
               ab = leaf({2, 5, 7}, 23);
  run(s, "attention", [=] { return probe(attention(aq, ak, av, &ab)); }, {aq, ak, av, ab});
  const Tensor br = leaf({4, 3, 2, 2}, 24);
  run(s, "stochastic_depth", [=] {
    Rng rng(5);
    return probe(stochastic_depth(br, 0.5, true, &rng));
  }, {br});
}

BlockOptions opts(int in, int out, int stride, int heads = 1) {
  BlockOptions o;
  o.in_channels = in;
  o.out_channels = out;
  o.stride = stride;
  o.heads = heads;
  return o;
}

void blocks(CheckSuite& s) {
  Rng rng(30);
  const InitContext init{&rng, f64, false};

  CBlock c(init, opts(4, 6, 2));
  randomize(c, 31);
  const Tensor cx = leaf({2, 4, 4, 4}, 32);
  module_case(s, "C block", c, [&] { return probe(c.forward(cx, nullptr, nullptr)); }, {cx});

  auto cco = opts(6, 6, 1);
  cco.time_dim = 12;
  CBlock cc(init, cco);
  randomize(cc, 33);
  const Tensor ccx = leaf({2, 6, 3, 3}, 34), temb = leaf({2, 12}, 35);
  module_case(s, "conditioned C block", cc, [&] {
    Condition cond{temb, {}};
    return probe(cc.forward(ccx, &cond, nullptr));
  }, {ccx, temb});

  auto to = opts(8, 8, 1, 2);
  to.rel_grid = 3;
  TBlock t(init, to);
  randomize(t, 36);
  const Tensor tx = leaf({2, 8, 3, 3}, 37);
  module_case(s, "T block", t, [&] { return probe(t.forward(tx, nullptr, nullptr)); }, {tx});

  TBlock tt(init, opts(4, 8, 2, 2));
  randomize(tt, 38);
  const Tensor ttx = leaf({2, 4, 4, 4}, 39);
  module_case(s, "T block entry transition", tt, [&] { return probe(tt.forward(ttx, nullptr, nullptr)); }, {ttx});

  auto tco = opts(16, 16, 1, 2);
  tco.rope = tco.qk_norm = true;
  tco.context_dim = 12;
  TBlock tc(init, tco);
  randomize(tc, 40);
  const Tensor tcx = leaf({1, 16, 2, 2}, 41), ctx = leaf({1, 3, 12}, 42);
  module_case(s, "conditioned T block", tc, [&] {
    Condition cond{{}, ctx};
    return probe(tc.forward(tcx, &cond, nullptr));
  }, {tcx, ctx});

  SqueezeExcite se(init, 8, 2);
  randomize(se, 43);
  const Tensor sx = leaf({2, 8, 3, 3}, 44);
  module_case(s, "squeeze-excite", se, [&] { return probe(se.forward(sx)); }, {sx});

  Transition tr(init, 4, 6, 2);
  randomize(tr, 45);
  module_case(s, "transition", tr, [&] { return probe(tr.forward(cx)); }, {cx});

  Stem stem(init, 3, 8, 2);
  randomize(stem, 46);
  const Tensor img = leaf({2, 3, 6, 6}, 47);
  module_case(s, "stem", stem, [&] { return probe(stem.forward(img)); }, {img});

  ClassifierHead head(init, 8, 12, 5);
  randomize(head, 48);
  const Tensor hx = leaf({2, 8, 3, 3}, 49);
  module_case(s, "classifier head", head, [&] { return probe(head.forward(hx)); }, {hx});

  TimeEmbedding te(init, 16);
  randomize(te, 50);
  module_case(s, "time embedding", te, [&] { return probe(te.forward({3.0, 250.0}, f64)); }, {});
}

void unet(CheckSuite& s) {
  auto model = build_diffusion_model(tiny_unet_spec(), 8, f64);
  Rng head(2);
  for (auto& nt : model->named_parameters())
    if (nt.name.rfind("out.conv.", 0) == 0)
      for (auto& v : nt.value.mutable_data<double>()) v = head.normal(0.0, 0.1);
  const auto sched = make_schedule(10, ScheduleKind::kLinear, 0.02);
  const Tensor z = rnd({2, 2, 4, 4}, 8);
  const Tensor ctx = synthetic_context({0, 1}, 2, 8, 0, f64);
  auto loss = [&] {
    Rng rng(11);
    return diffusion_loss(*model, z, ctx, sched, rng, {0.5, 0.05});
  };
  try {
    s.items.push_back(item("two-level unet through diffusion_loss",
                           grad_check_leaves(loss, model->parameters(), kTol, 6, 3)));
  } catch (const std::exception& e) {
    s.items.push_back({"two-level unet through diffusion_loss", false, e.what()});
  }
}

}  // namespace

ArchSpec tiny_unet_spec() {
  ArchSpec s;
  s.name = "tiny-unet";
  s.kind = ArchKind::kUnet;
  s.input_channels = 2;
  s.stem.out_channels = 8;
  s.stem.entry_stride = 1;
  StageSpec a, b;
  a.blocks = b.blocks = {BlockKind::kCcond, BlockKind::kTcond};
  a.out_channels = 8;
  a.entry_stride = 1;
  a.num_heads = 1;
  b.out_channels = 16;
  b.entry_stride = 2;
  b.num_heads = 2;
  s.stages = {a, b};
  s.up_stages = mirror_stages(s.stages);
  s.unet.middle.blocks = {BlockKind::kCcond};
  s.unet.middle.out_channels = 16;
  s.unet.middle.num_heads = 2;
  s.unet.time_embed_dim = 16;
  s.unet.context_dim = 8;
  s.unet.context_tokens = 2;
  s.unet.context_heads = 1;
  return s;
}

CheckSuite check_gradients() {
  CheckSuite s{"grad", {}};
  primitives(s);
  blocks(s);
  unet(s);
  return s;
}

}  // namespace ascan
