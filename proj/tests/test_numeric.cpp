#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ascan/checkpoint.hpp"
#include "ascan/grad_check.hpp"
#include "ascan/log.hpp"
#include "ascan/ops.hpp"
#include "ascan/random.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace ascan;
using oracle::Vec;

namespace {

const DType f64 = DType::kFloat64;
const DType f32 = DType::kFloat32;

Tensor rnd(const Shape& s, std::uint64_t seed, DType dt = f64, double scale = 1.0) {
  return oracle::tensor(s, oracle::random_vec(numel_of(s), seed, scale), dt);
}

void expect_grad_ok(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double tol = 1e-7) {
  auto r = grad_check(f, x, tol);
  INFO("max rel error " << r.max_rel_error << " at " << r.worst);
  CHECK(r.passed);
}

// weighted sum turns any tensor into a scalar with a nontrivial upstream grad
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  return sum(mul(y, rnd(y.shape(), seed, y.dtype())));
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("factories and invariants") {
    Tensor t = Tensor::zeros({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.to_vector().size() == 6);
    CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor::from_vector({2, 2}, {1, 2, 3}), ShapeError);
    Tensor m = Tensor::meta({1000, 1000});
    CHECK(m.is_meta());
    CHECK(m.numel() == 1000000);
    CHECK_THROWS(m.data<float>());
  }

  TEST_CASE("memory tracking sees tensor storage") {
    auto before = MemoryStats::current_bytes();
    {
      Tensor t = Tensor::zeros({1024}, f64);
      CHECK(MemoryStats::current_bytes() >= before + 1024 * 8);
    }
    CHECK(MemoryStats::current_bytes() == before);
  }

  TEST_CASE("dtype conversion") {
    Tensor t = Tensor::from_vector({2}, {1.5, -2.25}, f64).to(f32);
    CHECK(t.dtype() == f32);
    CHECK(t.at(1) == -2.25);
  }
}

TEST_SUITE("conv2d") {
  TEST_CASE("pointwise scaling") {
    Tensor x = Tensor::ones({1, 1, 3, 3});
    Tensor w = Tensor::full({1, 1, 1, 1}, 2.0);
    Tensor y = conv2d(x, w, std::nullopt, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
    for (double v : y.to_vector()) CHECK(v == 2.0);
  }

  TEST_CASE("output size formula") {
    Tensor y = conv2d(Tensor::ones({1, 1, 4, 4}), Tensor::ones({1, 1, 3, 3}), std::nullopt, 2, 1);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
  }

  TEST_CASE("matches loop oracle") {
    for (int stride : {1, 2})
      for (int k : {1, 3})
        for (DType dt : {f32, f64}) {
          int pad = k / 2;
          Vec x = oracle::random_vec(2 * 2 * 5 * 5, 1), w = oracle::random_vec(3 * 2 * k * k, 2),
              b = oracle::random_vec(3, 3);
          Tensor y = conv2d(oracle::tensor({2, 2, 5, 5}, x, dt), oracle::tensor({3, 2, k, k}, w, dt),
                            oracle::tensor({3}, b, dt), stride, pad);
          Vec ref = oracle::conv2d(x, w, &b, 2, 2, 5, 5, 3, k, stride, pad);
          double err = oracle::max_abs_diff(y.to_vector(), ref);
          // single-precision inputs are rounded before the product
          CHECK(err < (dt == f64 ? 1e-12 : 1e-5));
        }
  }

  TEST_CASE("single precision forward within 1e-6 of oracle on float-exact inputs") {
    Vec x = oracle::random_vec(1 * 2 * 5 * 5, 4), w = oracle::random_vec(2 * 2 * 9, 5);
    for (auto& v : x) v = static_cast<float>(v);
    for (auto& v : w) v = static_cast<float>(v);
    Tensor y = conv2d(oracle::tensor({1, 2, 5, 5}, x, f32), oracle::tensor({2, 2, 3, 3}, w, f32),
                      std::nullopt, 1, 1);
    CHECK(oracle::max_abs_diff(y.to_vector(), oracle::conv2d(x, w, nullptr, 1, 2, 5, 5, 2, 3, 1, 1)) < 1e-5);
  }

  TEST_CASE("translation equivariance on interior pixels") {
    Vec x = oracle::random_vec(1 * 1 * 8 * 8, 6);
    Vec shifted(64, 0.0);
    for (int y = 0; y < 8; ++y)
      for (int c = 1; c < 8; ++c) shifted[y * 8 + c] = x[y * 8 + c - 1];
    Tensor w = rnd({1, 1, 3, 3}, 7);
    Vec a = conv2d(oracle::tensor({1, 1, 8, 8}, x), w, std::nullopt, 1, 0).to_vector();
    Vec b = conv2d(oracle::tensor({1, 1, 8, 8}, shifted), w, std::nullopt, 1, 0).to_vector();
    // valid region is 6x6; column c of a equals column c+1 of b
    for (int y = 0; y < 6; ++y)
      for (int c = 0; c < 5; ++c) CHECK(a[y * 6 + c] == b[y * 6 + c + 1]);
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(conv2d(Tensor::ones({1, 2, 4, 4}), Tensor::ones({1, 3, 3, 3}), std::nullopt, 1, 1),
                    ShapeError);
    CHECK_THROWS_AS(conv2d(Tensor::ones({1, 1, 2, 2}), Tensor::ones({1, 1, 3, 3}), std::nullopt, 1, 0),
                    ShapeError);
    CHECK_THROWS_AS(conv2d(Tensor::ones({1, 1, 4, 4}), Tensor::ones({1, 1, 5, 5}), std::nullopt, 1, 2),
                    ShapeError);
    CHECK_THROWS_AS(conv2d(Tensor::ones({1, 1, 4, 4}), Tensor::ones({1, 1, 3, 3}), std::nullopt, 3, 1),
                    ShapeError);
  }

  TEST_CASE("gradients") {
    Tensor w = rnd({3, 2, 3, 3}, 8).set_requires_grad(true);
    Tensor b = rnd({3}, 9).set_requires_grad(true);
    Tensor x = rnd({2, 2, 5, 5}, 10).set_requires_grad(true);
    for (int stride : {1, 2}) {
      auto r = grad_check_leaves([&] { return probe(conv2d(x, w, b, stride, 1)); }, {x, w, b}, 1e-7);
      INFO(r.max_rel_error);
      CHECK(r.passed);
    }
    Tensor w1 = rnd({3, 2, 1, 1}, 11).set_requires_grad(true);
    auto r = grad_check_leaves([&] { return probe(conv2d(x, w1, std::nullopt, 1, 0)); }, {x, w1}, 1e-7);
    CHECK(r.passed);
  }

  TEST_CASE("pooling and upsampling") {
    Tensor x = Tensor::from_vector({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(avg_pool2d(x, 2).item() == doctest::Approx(2.5));
    Tensor u = upsample_nearest2d(x, 2);
    CHECK(u.shape() == Shape{1, 1, 4, 4});
    CHECK(u.at(5) == 1.0);
    CHECK(u.at(15) == 4.0);
    CHECK_THROWS_AS(avg_pool2d(Tensor::ones({1, 1, 3, 3}), 2), ShapeError);
    expect_grad_ok([](const Tensor& t) { return probe(avg_pool2d(t, 2)); }, rnd({2, 2, 4, 4}, 12));
    expect_grad_ok([](const Tensor& t) { return probe(upsample_nearest2d(t, 2)); }, rnd({1, 2, 3, 3}, 13));
  }
}

TEST_SUITE("matmul") {
  TEST_CASE("identity") {
    Tensor eye = Tensor::from_vector({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}, f64);
    Tensor b = rnd({3, 4}, 20);
    CHECK(matmul(eye, b).to_vector() == b.to_vector());
  }

  TEST_CASE("loop oracle") {
    Vec a = oracle::random_vec(6, 21), b = oracle::random_vec(6, 22);
    for (DType dt : {f32, f64}) {
      Tensor c = matmul(oracle::tensor({2, 3}, a, dt), oracle::tensor({3, 2}, b, dt));
      CHECK(oracle::max_abs_diff(c.to_vector(), oracle::matmul(a, b, 2, 3, 2)) < (dt == f64 ? 1e-12 : 1e-6));
    }
  }

  TEST_CASE("batched and broadcast shapes") {
    CHECK(matmul(Tensor::ones({4, 2, 3}), Tensor::ones({4, 3, 5})).shape() == Shape{4, 2, 5});
    CHECK(matmul(Tensor::ones({4, 2, 3}), Tensor::ones({3, 5})).shape() == Shape{4, 2, 5});
    CHECK_THROWS_AS(matmul(Tensor::ones({2, 3}), Tensor::ones({2, 3})), ShapeError);
  }

  TEST_CASE("broadcast batches agree with per-matrix oracle") {
    Vec a = oracle::random_vec(3 * 2 * 4, 23), b = oracle::random_vec(4 * 5, 24);
    Vec c = matmul(oracle::tensor({3, 2, 4}, a), oracle::tensor({4, 5}, b)).to_vector();
    for (int i = 0; i < 3; ++i) {
      Vec ai(a.begin() + i * 8, a.begin() + (i + 1) * 8);
      Vec ref = oracle::matmul(ai, b, 2, 4, 5);
      CHECK(oracle::max_abs_diff(Vec(c.begin() + i * 10, c.begin() + (i + 1) * 10), ref) < 1e-12);
    }
  }

  TEST_CASE("gradients") {
    Tensor a = rnd({3, 2, 4}, 25).set_requires_grad(true);
    Tensor b = rnd({4, 5}, 26).set_requires_grad(true);
    auto r = grad_check_leaves([&] { return probe(matmul(a, b)); }, {a, b}, 1e-7);
    CHECK(r.passed);
    Tensor w = rnd({5, 4}, 27).set_requires_grad(true);
    Tensor bias = rnd({5}, 28).set_requires_grad(true);
    r = grad_check_leaves([&] { return probe(linear(a, w, bias)); }, {a, w, bias}, 1e-7);
    CHECK(r.passed);
  }

  TEST_CASE("linear closed form") {
    Vec x = oracle::random_vec(2 * 3, 29), w = oracle::random_vec(4 * 3, 30), b = oracle::random_vec(4, 31);
    Vec y = linear(oracle::tensor({2, 3}, x), oracle::tensor({4, 3}, w), oracle::tensor({4}, b)).to_vector();
    for (int i = 0; i < 2; ++i)
      for (int o = 0; o < 4; ++o) {
        double ref = b[o];
        for (int k = 0; k < 3; ++k) ref += x[i * 3 + k] * w[o * 3 + k];
        CHECK(std::abs(y[i * 4 + o] - ref) < 1e-12);
      }
  }
}

TEST_SUITE("elementwise") {
  TEST_CASE("broadcast arithmetic matches scalar oracle") {
    Vec a = oracle::random_vec(2 * 3 * 4, 40), b = oracle::random_vec(3 * 1, 41);
    Tensor ta = oracle::tensor({2, 3, 4}, a), tb = oracle::tensor({3, 1}, b);
    Vec s = add(ta, tb).to_vector(), p = mul(ta, tb).to_vector(), d = div(ta, tb).to_vector(),
        m = sub(ta, tb).to_vector();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 4; ++k) {
          int o = (i * 3 + j) * 4 + k;
          CHECK(s[o] == a[o] + b[j]);
          CHECK(p[o] == a[o] * b[j]);
          CHECK(d[o] == a[o] / b[j]);
          CHECK(m[o] == a[o] - b[j]);
        }
    CHECK_THROWS_AS(add(Tensor::ones({2, 3}), Tensor::ones({4})), ShapeError);
  }

  TEST_CASE("broadcast gradients") {
    Tensor a = rnd({2, 3, 4}, 42).set_requires_grad(true);
    Tensor b = add_scalar(rnd({3, 1}, 43, f64, 0.1), 2.0).detach().set_requires_grad(true);
    for (auto op : {add, sub, mul, div}) {
      auto r = grad_check_leaves([&] { return probe(op(a, b)); }, {a, b}, 1e-7);
      CHECK(r.passed);
    }
  }

  TEST_CASE("unary gradients") {
    Tensor x = rnd({3, 4}, 44);
    Tensor pos = add_scalar(square(x), 0.5).detach();
    expect_grad_ok([](const Tensor& t) { return probe(exp(t)); }, x);
    expect_grad_ok([](const Tensor& t) { return probe(log(t)); }, pos);
    expect_grad_ok([](const Tensor& t) { return probe(sqrt(t)); }, pos);
    expect_grad_ok([](const Tensor& t) { return probe(square(t)); }, x);
    expect_grad_ok([](const Tensor& t) { return probe(scale(t, -1.5)); }, x);
    expect_grad_ok([](const Tensor& t) { return probe(silu(t)); }, x);
    expect_grad_ok([](const Tensor& t) { return probe(sigmoid(t)); }, x);
    expect_grad_ok([](const Tensor& t) { return probe(gelu(t)); }, x);
  }

  TEST_CASE("gelu") {
    CHECK(gelu(Tensor::scalar(0.0, f64)).item() == 0.0);
    CHECK(std::abs(gelu(Tensor::scalar(10.0, f64)).item() - 10.0) < 1e-6);
    Vec xs = oracle::random_vec(16, 45, 2.0);
    Vec ys = gelu(oracle::tensor({16}, xs)).to_vector();
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(std::abs(ys[i] - oracle::gelu(xs[i])) < 1e-12);
    // derivative at 0.5 against a central difference of the scalar oracle
    Tensor x = Tensor::scalar(0.5, f64).set_requires_grad(true);
    gelu(x).backward();
    const double h = 1e-5;
    double fd = (oracle::gelu(0.5 + h) - oracle::gelu(0.5 - h)) / (2 * h);
    CHECK(std::abs(x.grad().item() - fd) < 1e-6);
  }

  TEST_CASE("silu and sigmoid oracle") {
    Vec xs = oracle::random_vec(16, 46, 3.0);
    Vec s = sigmoid(oracle::tensor({16}, xs)).to_vector();
    Vec si = silu(oracle::tensor({16}, xs)).to_vector();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      CHECK(std::abs(s[i] - oracle::sigmoid(xs[i])) < 1e-12);
      CHECK(std::abs(si[i] - xs[i] * oracle::sigmoid(xs[i])) < 1e-12);
    }
  }
}

TEST_SUITE("softmax") {
  TEST_CASE("uniform logits") {
    for (double v : softmax(Tensor::zeros({4})).to_vector()) CHECK(v == doctest::Approx(0.25));
  }

  TEST_CASE("stability") {
    Vec y = softmax(Tensor::from_vector({2}, {1000, 0})).to_vector();
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 0.0);
  }

  TEST_CASE("rows sum to one and permutation equivariance") {
    Tensor x = rnd({3, 5}, 50, f32);
    Vec y = softmax(x, 1).to_vector();
    for (int r = 0; r < 3; ++r) CHECK(std::abs(std::accumulate(y.begin() + r * 5, y.begin() + r * 5 + 5, 0.0) - 1.0) < 1e-6);
    std::vector<std::int64_t> perm{3, 0, 4, 1, 2};
    Vec yp = softmax(index_select(x, 1, perm), 1).to_vector();
    for (int r = 0; r < 3; ++r)
      for (int j = 0; j < 5; ++j) CHECK(yp[r * 5 + j] == y[r * 5 + perm[j]]);
    // along a non-last axis
    Vec y0 = softmax(x, 0).to_vector();
    for (int c = 0; c < 5; ++c) CHECK(std::abs(y0[c] + y0[5 + c] + y0[10 + c] - 1.0) < 1e-6);
  }

  TEST_CASE("nan propagates") {
    Vec y = softmax(Tensor::from_vector({3}, {1.0, std::nan(""), 0.0})).to_vector();
    for (double v : y) CHECK(std::isnan(v));
  }

  TEST_CASE("gradients") {
    expect_grad_ok([](const Tensor& t) { return probe(softmax(t, 1)); }, rnd({2, 4, 3}, 51));
    expect_grad_ok([](const Tensor& t) { return probe(log_softmax(t, -1)); }, rnd({3, 5}, 52));
  }

  TEST_CASE("log_softmax is log of softmax") {
    Tensor x = rnd({2, 6}, 53);
    Vec a = log_softmax(x).to_vector(), b = softmax(x).to_vector();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - std::log(b[i])) < 1e-12);
  }
}

TEST_SUITE("reductions and shapes") {
  TEST_CASE("sum and mean over axes") {
    Tensor x = Tensor::from_vector({2, 3}, {1, 2, 3, 4, 5, 6}, f64);
    CHECK(sum(x).item() == 21.0);
    CHECK(sum(x, {0}, false).to_vector() == Vec{5, 7, 9});
    CHECK(sum(x, {1}, true).shape() == Shape{2, 1});
    CHECK(mean(x, {1}, false).to_vector() == Vec{2, 5});
    CHECK(mean(x).item() == 3.5);
    expect_grad_ok([](const Tensor& t) { return probe(sum(t, {0, 2}, false)); }, rnd({2, 3, 4}, 60));
    expect_grad_ok([](const Tensor& t) { return probe(mean(t, {1}, true)); }, rnd({2, 3, 4}, 61));
  }

  TEST_CASE("shape ops") {
    Tensor x = Tensor::from_vector({2, 3}, {1, 2, 3, 4, 5, 6}, f64);
    CHECK(transpose(x, 0, 1).to_vector() == Vec{1, 4, 2, 5, 3, 6});
    CHECK(reshape(x, {3, -1}).shape() == Shape{3, 2});
    CHECK(concat({x, x}, 1).to_vector() == Vec{1, 2, 3, 1, 2, 3, 4, 5, 6, 4, 5, 6});
    CHECK(slice(x, 1, 1, 2).to_vector() == Vec{2, 3, 5, 6});
    CHECK(index_select(x, 0, {1, 1}).to_vector() == Vec{4, 5, 6, 4, 5, 6});
    CHECK_THROWS_AS(reshape(x, {4}), ShapeError);
    expect_grad_ok([](const Tensor& t) { return probe(permute(t, {2, 0, 1})); }, rnd({2, 3, 4}, 62));
    expect_grad_ok([](const Tensor& t) { return probe(reshape(t, {6, 4})); }, rnd({2, 3, 4}, 63));
    expect_grad_ok([](const Tensor& t) { return probe(concat({t, square(t)}, 1)); }, rnd({2, 3}, 64));
    expect_grad_ok([](const Tensor& t) { return probe(slice(t, 0, 1, 2)); }, rnd({4, 3}, 65));
    expect_grad_ok([](const Tensor& t) { return probe(index_select(t, 1, {2, 0, 2})); }, rnd({2, 3}, 66));
  }
}

TEST_SUITE("normalize") {
  TEST_CASE("eps must be positive") {
    CHECK_THROWS(layer_norm(Tensor::ones({4}), Tensor::ones({4}), Tensor::zeros({4}), 0.0));
    CHECK_THROWS(rms_norm(Tensor::ones({4}), std::nullopt, -1.0));
  }

  TEST_CASE("layer norm of constant vector is zero") {
    Tensor y = normalize(Tensor::full({5}, 3.0), NormKind::kLayer, {}, 1e-5);
    for (double v : y.to_vector()) CHECK(v == 0.0);
  }

  TEST_CASE("layer norm statistics") {
    Vec y = layer_norm(rnd({3, 8}, 70), Tensor::ones({8}, f64), Tensor::zeros({8}, f64), 1e-12).to_vector();
    for (int r = 0; r < 3; ++r) {
      double m = 0, v = 0;
      for (int j = 0; j < 8; ++j) m += y[r * 8 + j] / 8;
      for (int j = 0; j < 8; ++j) v += (y[r * 8 + j] - m) * (y[r * 8 + j] - m) / 8;
      CHECK(std::abs(m) < 1e-12);
      CHECK(std::abs(v - 1) < 1e-9);
    }
  }

  TEST_CASE("rms norm of (3,4)") {
    NormParams p;
    p.gamma = Tensor::ones({2}, f64);
    Vec y = normalize(Tensor::from_vector({2}, {3, 4}, f64), NormKind::kRms, p, 1e-12).to_vector();
    CHECK(std::abs(y[0] - 3.0 / 5.0 * std::sqrt(2.0)) < 1e-9);
    CHECK(std::abs(y[1] - 4.0 / 5.0 * std::sqrt(2.0)) < 1e-9);
  }

  TEST_CASE("batch norm eval reproduces scalar formula") {
    Vec x = oracle::random_vec(2 * 3 * 2 * 2, 71), g = oracle::random_vec(3, 72), b = oracle::random_vec(3, 73);
    Vec rm = oracle::random_vec(3, 74);
    Vec rv{0.5, 1.5, 2.0};
    BatchNormState st{oracle::tensor({3}, rm), oracle::tensor({3}, rv)};
    NormParams p{oracle::tensor({3}, g), oracle::tensor({3}, b), &st, false};
    Vec y = normalize(oracle::tensor({2, 3, 2, 2}, x), NormKind::kBatch, p, 1e-5).to_vector();
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c)
        for (int s = 0; s < 4; ++s) {
          int i = (n * 3 + c) * 4 + s;
          double ref = (x[i] - rm[c]) / std::sqrt(rv[c] + 1e-5) * g[c] + b[c];
          CHECK(std::abs(y[i] - ref) < 1e-12);
        }
  }

  TEST_CASE("batch norm training updates running stats") {
    Tensor x = Tensor::from_vector({2, 1, 1, 2}, {1, 3, 5, 7}, f64);
    BatchNormState st{Tensor::zeros({1}, f64), Tensor::ones({1}, f64), 0.1};
    Tensor y = batch_norm(x, Tensor::ones({1}, f64), Tensor::zeros({1}, f64), st, true, 1e-5);
    CHECK(st.running_mean.item() == doctest::Approx(0.4));
    // unbiased variance of {1,3,5,7} is 20/3
    CHECK(st.running_var.item() == doctest::Approx(0.9 + 0.1 * 20.0 / 3.0));
    double m = 0;
    for (double v : y.to_vector()) m += v;
    CHECK(std::abs(m) < 1e-12);
  }

  TEST_CASE("batch size one in training warns") {
    std::vector<std::string> seen;
    auto old = set_warning_sink([&](const std::string& m) { seen.push_back(m); });
    BatchNormState st{Tensor::zeros({2}), Tensor::ones({2})};
    batch_norm(Tensor::ones({1, 2, 2, 2}), Tensor::ones({2}), Tensor::zeros({2}), st, true, 1e-5);
    set_warning_sink(old);
    REQUIRE(seen.size() == 1);
    CHECK(seen[0].find("batch size 1") != std::string::npos);
  }

  TEST_CASE("gradients") {
    Tensor g = rnd({3}, 75).set_requires_grad(true);
    Tensor b = rnd({3}, 76).set_requires_grad(true);
    Tensor x = rnd({4, 3, 2, 2}, 77).set_requires_grad(true);
    for (bool training : {true, false}) {
      BatchNormState st{Tensor::zeros({3}, f64), Tensor::ones({3}, f64), 0.0};
      auto r = grad_check_leaves([&] { return probe(batch_norm(x, g, b, st, training, 1e-5)); }, {x, g, b}, 1e-7);
      INFO("training=" << training << " err " << r.max_rel_error);
      CHECK(r.passed);
    }
    Tensor x2 = rnd({3, 6}, 78).set_requires_grad(true);
    Tensor g2 = rnd({6}, 79).set_requires_grad(true);
    Tensor b2 = rnd({6}, 80).set_requires_grad(true);
    auto r = grad_check_leaves([&] { return probe(layer_norm(x2, g2, b2, 1e-5)); }, {x2, g2, b2}, 1e-7);
    CHECK(r.passed);
    r = grad_check_leaves([&] { return probe(rms_norm(x2, g2, 1e-6)); }, {x2, g2}, 1e-7);
    CHECK(r.passed);
  }
}

TEST_SUITE("rope") {
  TEST_CASE("position zero is identity") {
    Tensor q = rnd({1, 8}, 90);
    CHECK(rope_rotate(q, {{0, 0}}).to_vector() == q.to_vector());
  }

  TEST_CASE("norm preserving and relative") {
    Tensor u = rnd({1, 8}, 91), v = rnd({1, 8}, 92);
    auto dot = [](const Tensor& a, const Tensor& b) { return sum(mul(a, b)).item(); };
    Tensor r = rope_rotate(u, {{3, 7}});
    CHECK(std::abs(dot(r, r) - dot(u, u)) < 1e-10);
    double a = dot(rope_rotate(u, {{3, 3}}), rope_rotate(v, {{5, 5}}));
    double b = dot(rope_rotate(u, {{0, 0}}), rope_rotate(v, {{2, 2}}));
    CHECK(std::abs(a - b) < 1e-10);
  }

  TEST_CASE("errors and gradient") {
    CHECK_THROWS_AS(rope_rotate(Tensor::ones({1, 6}), {{0, 0}}), ShapeError);
    CHECK_THROWS_AS(rope_rotate(Tensor::ones({2, 8}), {{0, 0}}), ShapeError);
    auto pos = grid_positions(2, 3);
    CHECK(pos.size() == 6);
    CHECK(pos[4].row == 1);
    CHECK(pos[4].col == 1);
    expect_grad_ok([&](const Tensor& t) { return probe(rope_rotate(t, pos)); }, rnd({2, 6, 8}, 93));
  }
}

TEST_SUITE("autograd") {
  TEST_CASE("grad of sum(w*x) is x") {
    Tensor x = rnd({4}, 100);
    Tensor w = rnd({4}, 101).set_requires_grad(true);
    sum(mul(w, x)).backward();
    CHECK(w.grad().to_vector() == x.to_vector());
  }

  TEST_CASE("two backward calls double the gradient") {
    Tensor x = rnd({4}, 102);
    Tensor w = rnd({4}, 103).set_requires_grad(true);
    Tensor loss = sum(mul(w, x));
    loss.backward();
    Vec once = w.grad().to_vector();
    loss.backward();
    Vec twice = w.grad().to_vector();
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == 2 * once[i]);
  }

  TEST_CASE("non-scalar loss rejected") {
    Tensor w = Tensor::ones({3}).set_requires_grad(true);
    CHECK_THROWS_AS(mul(w, w).backward(), ShapeError);
  }

  TEST_CASE("composite conv-gelu-sum against finite differences") {
    Tensor x = rnd({1, 1, 3, 3}, 104);
    Tensor w = rnd({1, 1, 3, 3}, 105).set_requires_grad(true);
    auto r = grad_check_leaves([&] { return sum(gelu(conv2d(x, w, std::nullopt, 1, 1))); }, {w}, 1e-6);
    CHECK(r.max_rel_error < 1e-6);
  }

  TEST_CASE("diamond graph accumulates through shared node") {
    Tensor x = Tensor::from_vector({1}, {3.0}, f64).set_requires_grad(true);
    Tensor y = square(x);
    sum(add(y, mul(y, y))).backward();  // d/dx (x^2 + x^4) = 2x + 4x^3
    CHECK(x.grad().item() == doctest::Approx(6.0 + 108.0));
  }

  TEST_CASE("no grad guard records nothing") {
    Tensor w = Tensor::ones({2}).set_requires_grad(true);
    NoGradGuard guard;
    CHECK_FALSE(mul(w, w).requires_grad());
  }
}

TEST_SUITE("grad_check") {
  TEST_CASE("sum of squares") {
    auto r = grad_check([](const Tensor& t) { return sum(square(t)); }, rnd({5}, 110), 1e-8);
    CHECK(r.max_rel_error < 1e-8);
    CHECK(r.passed);
    CHECK(r.coordinates == 5);
  }

  TEST_CASE("detects a wrong gradient") {
    // detach hides half of the dependency from autodiff
    auto r = grad_check([](const Tensor& t) { return sum(mul(t, t.detach())); }, rnd({3}, 111), 1e-4);
    CHECK_FALSE(r.passed);
  }

  TEST_CASE("requires double precision") {
    CHECK_THROWS(grad_check([](const Tensor& t) { return sum(t); }, Tensor::ones({2}), 1e-4));
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("bit-exact round trip") {
    Checkpoint c;
    c.manifest = R"({"arch_hash":"abc"})";
    c.tensors.push_back({"stage1.block0.expand.weight", rnd({2, 3, 3, 3}, 120, f32)});
    c.tensors.push_back({"x", Tensor::from_vector({2}, {std::numeric_limits<double>::denorm_min(), -0.0}, f64)});
    c.tensors.push_back({"s", Tensor::scalar(1.0 / 3.0, f64)});
    std::stringstream buf;
    write_checkpoint(buf, c);
    Checkpoint back = read_checkpoint(buf);
    CHECK(back.manifest == c.manifest);
    REQUIRE(back.tensors.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back.tensors[i].name == c.tensors[i].name);
      CHECK(back.tensors[i].value.shape() == c.tensors[i].value.shape());
      CHECK(back.tensors[i].value.dtype() == c.tensors[i].value.dtype());
      std::stringstream a, b;
      write_checkpoint(a, {"", {c.tensors[i]}});
      write_checkpoint(b, {"", {back.tensors[i]}});
      CHECK(a.str() == b.str());
    }
    CHECK(std::signbit(back.tensors[1].value.at(1)));
  }

  TEST_CASE("rejects garbage") {
    std::stringstream buf("NOTACKPT....");
    CHECK_THROWS(read_checkpoint(buf));
  }
}

TEST_SUITE("random") {
  TEST_CASE("seeded streams are reproducible") {
    Rng a(5), b(5);
    for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
    CHECK(randn({4}, a).to_vector() == randn({4}, b).to_vector());
  }

  TEST_CASE("truncated normal respects bound") {
    Rng r(6);
    for (int i = 0; i < 1000; ++i) CHECK(std::abs(r.truncated_normal(0.02)) <= 0.04);
  }

  TEST_CASE("beta mean") {
    Rng r(7);
    double m = 0;
    for (int i = 0; i < 20000; ++i) m += r.beta(0.8, 0.8) / 20000;
    CHECK(std::abs(m - 0.5) < 0.01);
  }
}
