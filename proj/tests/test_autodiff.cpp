#include <cmath>
#include <functional>
#include <vector>

#include "bbf/ops.hpp"
#include "bbf/rng.hpp"
#include "bbf/tensor.hpp"
#include "doctest.h"

using bbf::NoGradGuard;
using bbf::Rng;
using bbf::Shape;
using bbf::TensorD;
namespace ops = bbf::ops;

namespace {

TensorD rand_tensor(Rng& rng, Shape shape, bool rg = true, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(static_cast<size_t>(bbf::numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TensorD::from(std::move(shape), std::move(v), rg);
}

/// Central-difference gradient check: one analytic backward against numeric
/// derivatives of the rebuilt forward, every element of every input.
void gradcheck(const char* name, const std::function<TensorD()>& f, std::vector<TensorD> inputs,
               double h = 1e-5, double tol = 1e-4) {
  for (auto& t : inputs) {
    t.grad();  // allocate
    t.zero_grad();
  }
  TensorD out = f();
  REQUIRE(out.size() == 1);
  out.backward();
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    TensorD& t = inputs[ti];
    const std::vector<double> analytic = t.grad_values();
    for (int64_t i = 0; i < t.size(); ++i) {
      const double orig = t.data()[i];
      t.data()[i] = orig + h;
      const double fp = f().item();
      t.data()[i] = orig - h;
      const double fm = f().item();
      t.data()[i] = orig;
      const double num = (fp - fm) / (2.0 * h);
      const double ana = analytic.empty() ? 0.0 : analytic[static_cast<size_t>(i)];
      const double err = std::abs(num - ana) / std::max({1.0, std::abs(num), std::abs(ana)});
      if (err >= tol) {
        INFO(name << ": input " << ti << " element " << i << " analytic " << ana << " numeric "
                  << num);
        REQUIRE(err < tol);
      }
    }
  }
}

/// Reduce an arbitrary tensor to a scalar with fixed random weights so the
/// whole output participates in the gradient.
TensorD to_scalar(const TensorD& x, const TensorD& w) {
  return ops::vdot(ops::reshape(x, {x.size()}), w);
}

TensorD weights_for(Rng& rng, int64_t n) { return rand_tensor(rng, {n}, false); }

}  // namespace

TEST_CASE("tape: gradients accumulate until cleared and honor no-grad scope") {
  auto x = TensorD::from({2}, {3.0, -1.0}, true);
  auto f = [&] { return ops::sum_all(ops::mul(x, x)); };

  f().backward();
  CHECK(x.grad_values()[0] == doctest::Approx(6.0));
  f().backward();
  CHECK(x.grad_values()[0] == doctest::Approx(12.0));  // second pass adds on top
  x.zero_grad();
  f().backward();
  CHECK(x.grad_values()[0] == doctest::Approx(6.0));
  CHECK(x.grad_values()[1] == doctest::Approx(-2.0));

  {
    NoGradGuard ng;
    TensorD y = ops::mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
  }
  TensorD c = TensorD::from({2}, {1.0, 2.0}, false);
  TensorD y = ops::mul(c, c);  // no input needs grad -> no tape either
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("tape: a value used twice gets both gradient contributions") {
  auto x = TensorD::from({1}, {3.0}, true);
  TensorD y = ops::add(ops::mul(x, x), x);  // x^2 + x, dy/dx = 2x + 1 = 7
  y.backward();
  CHECK(x.grad_values()[0] == doctest::Approx(7.0));
}

TEST_CASE("tape: backward demands a scalar root") {
  auto x = TensorD::from({2}, {1.0, 2.0}, true);
  TensorD y = ops::mul(x, x);
  CHECK_THROWS_AS(y.backward(), bbf::ShapeError);
}

TEST_CASE("finite-check guard flags non-finite op output") {
  auto x = TensorD::from({1}, {1e200}, true);
  bbf::FiniteCheckGuard guard;
  CHECK_THROWS_AS(ops::mul(ops::mul(x, x), ops::mul(x, x)), bbf::NumericFault);
}

TEST_CASE("shape mismatches are rejected") {
  Rng rng(7);
  auto a = rand_tensor(rng, {2, 3});
  auto b = rand_tensor(rng, {3, 2});
  CHECK_THROWS_AS(ops::add(a, b), bbf::ShapeError);
  CHECK_THROWS_AS(ops::matmul(a, a), bbf::ShapeError);
  CHECK_THROWS_AS(ops::reshape(a, {4, 2}), bbf::ShapeError);
  CHECK_THROWS_AS(ops::gather_action(rand_tensor(rng, {2, 3, 4}), {0, 5}), bbf::ShapeError);
}

TEST_CASE("gradcheck: elementwise ops") {
  Rng rng(0xadd001);
  auto a = rand_tensor(rng, {3, 4});
  auto b = rand_tensor(rng, {3, 4});
  auto w = weights_for(rng, 12);
  gradcheck("add", [&] { return to_scalar(ops::add(a, b), w); }, {a, b});
  gradcheck("sub", [&] { return to_scalar(ops::sub(a, b), w); }, {a, b});
  gradcheck("mul", [&] { return to_scalar(ops::mul(a, b), w); }, {a, b});
  gradcheck("scale", [&] { return to_scalar(ops::scale(a, 1.7), w); }, {a});
  gradcheck("affine", [&] { return to_scalar(ops::affine(a, -2.0, 0.3), w); }, {a});
}

TEST_CASE("gradcheck: relu away from the kink") {
  Rng rng(0xadd002);
  auto x = rand_tensor(rng, {5, 3});
  for (int64_t i = 0; i < x.size(); ++i)
    if (std::abs(x.data()[i]) < 0.1) x.data()[i] += x.data()[i] < 0 ? -0.2 : 0.2;
  auto w = weights_for(rng, 15);
  gradcheck("relu", [&] { return to_scalar(ops::relu(x), w); }, {x});
}

TEST_CASE("gradcheck: matmul and linear") {
  Rng rng(0xadd003);
  auto a = rand_tensor(rng, {3, 4});
  auto b = rand_tensor(rng, {4, 5});
  auto w15 = weights_for(rng, 15);
  gradcheck("matmul", [&] { return to_scalar(ops::matmul(a, b), w15); }, {a, b});

  auto x = rand_tensor(rng, {4, 6});
  auto wt = rand_tensor(rng, {3, 6});
  auto bias = rand_tensor(rng, {3});
  auto w12 = weights_for(rng, 12);
  gradcheck("linear", [&] { return to_scalar(ops::linear(x, wt, bias), w12); }, {x, wt, bias});
}

TEST_CASE("gradcheck: conv2d stride 1 and stride 2") {
  Rng rng(0xadd004);
  {
    auto x = rand_tensor(rng, {2, 3, 5, 4});
    auto w = rand_tensor(rng, {4, 3, 3, 3});
    auto b = rand_tensor(rng, {4});
    auto red = weights_for(rng, 2 * 4 * 5 * 4);
    gradcheck("conv_s1", [&] { return to_scalar(ops::conv2d(x, w, b, 1, 1), red); }, {x, w, b});
  }
  {
    auto x = rand_tensor(rng, {1, 2, 7, 6});
    auto w = rand_tensor(rng, {3, 2, 3, 3});
    auto b = rand_tensor(rng, {3});
    auto red = weights_for(rng, 1 * 3 * 4 * 3);
    gradcheck("conv_s2", [&] { return to_scalar(ops::conv2d(x, w, b, 2, 1), red); }, {x, w, b});
  }
}

TEST_CASE("gradcheck: maxpool 3x3 stride 2") {
  Rng rng(0xadd005);
  auto x = rand_tensor(rng, {2, 3, 7, 6});
  auto w = weights_for(rng, 2 * 3 * 4 * 3);
  gradcheck("maxpool", [&] { return to_scalar(ops::maxpool2d(x, 3, 2, 1), w); }, {x});
}

TEST_CASE("gradcheck: softmax family") {
  Rng rng(0xadd006);
  auto x = rand_tensor(rng, {4, 7});
  auto w = weights_for(rng, 28);
  gradcheck("softmax", [&] { return to_scalar(ops::softmax_rows(x), w); }, {x});
  gradcheck("log_softmax", [&] { return to_scalar(ops::log_softmax_rows(x), w); }, {x});

  // cross-entropy-like composition: targets fixed, logits free
  auto t = rand_tensor(rng, {4, 7}, false, 0.0, 1.0);
  auto w4 = weights_for(rng, 4);
  gradcheck("ce_path",
            [&] { return to_scalar(ops::rows_dot(ops::log_softmax_rows(x), t), w4); }, {x});
}

TEST_CASE("gradcheck: gather, dueling merge, channel concat") {
  Rng rng(0xadd007);
  auto x = rand_tensor(rng, {3, 4, 6});
  std::vector<int64_t> idx = {0, 3, 2};
  auto w = weights_for(rng, 18);
  gradcheck("gather", [&] { return to_scalar(ops::gather_action(x, idx), w); }, {x});

  auto v = rand_tensor(rng, {3, 5});
  auto adv = rand_tensor(rng, {3, 4, 5});
  auto w2 = weights_for(rng, 60);
  gradcheck("dueling", [&] { return to_scalar(ops::dueling_combine(v, adv), w2); }, {v, adv});

  auto ca = rand_tensor(rng, {2, 3, 4, 4});
  auto cb = rand_tensor(rng, {2, 2, 4, 4});
  auto w3 = weights_for(rng, 2 * 5 * 16);
  gradcheck("concat", [&] { return to_scalar(ops::concat_channels(ca, cb), w3); }, {ca, cb});
}

TEST_CASE("gradcheck: dot products and reductions") {
  Rng rng(0xadd008);
  auto a = rand_tensor(rng, {4, 6});
  auto b = rand_tensor(rng, {4, 6});
  auto w4 = weights_for(rng, 4);
  gradcheck("rows_dot", [&] { return to_scalar(ops::rows_dot(a, b), w4); }, {a, b});

  auto c = rand_tensor(rng, {6});
  gradcheck("expect_rows", [&] { return to_scalar(ops::expect_rows(a, c), w4); }, {a, c});

  auto u = rand_tensor(rng, {9});
  auto v = rand_tensor(rng, {9});
  gradcheck("vdot", [&] { return ops::vdot(u, v); }, {u, v});

  auto m = rand_tensor(rng, {5, 3});
  gradcheck("sum_all", [&] { return ops::sum_all(m); }, {m});
  gradcheck("mean_all", [&] { return ops::mean_all(m); }, {m});

  auto f = rand_tensor(rng, {2, 3, 4});
  auto wf = weights_for(rng, 24);
  gradcheck("flatten", [&] { return to_scalar(ops::flatten(f), wf); }, {f});
}

TEST_CASE("gradcheck: cosine similarity rows") {
  Rng rng(0xadd009);
  auto a = rand_tensor(rng, {5, 8});
  auto b = rand_tensor(rng, {5, 8});
  auto w = weights_for(rng, 5);
  gradcheck("cosine",
            [&] { return to_scalar(ops::cosine_rows(a, b, 1e-8), w); }, {a, b});

  // degenerate row: all-zero vector stays differentiable thanks to the eps
  auto z = TensorD::zeros({1, 4}, true);
  auto y = rand_tensor(rng, {1, 4});
  auto w1 = weights_for(rng, 1);
  TensorD cs = ops::cosine_rows(z, y, 1e-8);
  CHECK(std::isfinite(cs.item()));
  to_scalar(cs, w1).backward();
  for (double g : z.grad_values()) CHECK(std::isfinite(g));
}

TEST_CASE("cosine of identical rows is one, of opposite rows minus one") {
  Rng rng(0xadd00a);
  auto a = rand_tensor(rng, {3, 16}, false);
  TensorD b = a.detach();
  TensorD c = ops::scale(a, -1.0);
  auto same = ops::cosine_rows(a, b, 1e-12);
  auto opp = ops::cosine_rows(a, c, 1e-12);
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(same.data()[i] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(opp.data()[i] == doctest::Approx(-1.0).epsilon(1e-9));
  }
}

TEST_CASE("pinned forward/backward values") {
  // d(sum p.p)/dp = 2p
  auto p = TensorD::from({2}, {1.0, 2.0}, true);
  ops::sum_all(ops::mul(p, p)).backward();
  CHECK(p.grad_values()[0] == doctest::Approx(2.0));
  CHECK(p.grad_values()[1] == doctest::Approx(4.0));

  // dead relu branch contributes nothing
  auto q = TensorD::from({1}, {1.0}, true);
  ops::sum_all(ops::relu(ops::scale(q, -3.0))).backward();
  CHECK(q.grad_values()[0] == doctest::Approx(0.0));

  auto r = ops::relu(TensorD::from({3}, {-1.0, 0.0, 2.0}, false));
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 0.0);
  CHECK(r.data()[2] == 2.0);

  // 3x3 all-ones kernel over 3x3 all-ones input, no padding: a single 9
  auto x = TensorD::filled({1, 1, 3, 3}, 1.0);
  auto k = TensorD::filled({1, 1, 3, 3}, 1.0);
  auto bias = TensorD::zeros({1});
  auto y = ops::conv2d(x, k, bias, 1, 0);
  REQUIRE(y.shape() == bbf::Shape{1, 1, 1, 1});
  CHECK(y.data()[0] == doctest::Approx(9.0));

  // orthogonal rows -> 0, colinear rows -> 1
  auto u = TensorD::from({1, 2}, {1.0, 0.0}, false);
  auto v = TensorD::from({1, 2}, {0.0, 1.0}, false);
  CHECK(ops::cosine_rows(u, v, 1e-12).item() == doctest::Approx(0.0));
  Rng trng(0xadd00b);
  auto t = rand_tensor(trng, {1, 6}, false);
  CHECK(ops::cosine_rows(t, ops::scale(t, 2.0), 1e-12).item() ==
        doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gradcheck: three-layer MLP composite") {
  Rng rng(0xadd00c);
  auto x = rand_tensor(rng, {4, 6});
  auto w1 = rand_tensor(rng, {8, 6}), b1 = rand_tensor(rng, {8});
  auto w2 = rand_tensor(rng, {5, 8}), b2 = rand_tensor(rng, {5});
  auto w3 = rand_tensor(rng, {3, 5}), b3 = rand_tensor(rng, {3});
  auto w = weights_for(rng, 12);
  auto mlp = [&] {
    auto h1 = ops::relu(ops::linear(x, w1, b1));
    auto h2 = ops::relu(ops::linear(h1, w2, b2));
    return to_scalar(ops::linear(h2, w3, b3), w);
  };
  gradcheck("mlp", mlp, {x, w1, b1, w2, b2, w3, b3});
}
