#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bbf/checkpoint.hpp"
#include "bbf/ops.hpp"
#include "bbf/optim.hpp"
#include "bbf/params.hpp"
#include "bbf/rng.hpp"
#include "doctest.h"

using bbf::ParameterSet;
using bbf::ParameterSetD;
using bbf::Rng;
using bbf::Shape;
using bbf::TensorD;
using bbf::TensorF;
namespace ops = bbf::ops;
namespace ckpt = bbf::ckpt;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/bbf_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("checkpoint: typed entries survive a save/load round trip") {
  TempFile f("ckpt_roundtrip.bbfc");
  std::vector<float> a = {1.5f, -2.25f, 3.0f, 4.0f};
  std::vector<double> b = {1e-300, 2.5, -7.125};
  std::vector<int64_t> c = {-9, 0, 1LL << 40};
  std::vector<uint8_t> d = {0, 127, 255};

  ckpt::Writer w;
  w.add_f32("net.w", {2, 2}, a.data());
  w.add_f64("stats", {3}, b.data());
  w.add_i64("counters", {3}, c.data());
  w.add_u8("frame", {1, 3}, d.data());
  w.add_scalar_i64("step", 42);
  w.add_scalar_f64("gamma", 0.997);
  w.add_scalar_u64("seed", 0xdeadbeefcafe1234ull);
  w.save(f.path);

  ckpt::Reader r(f.path);
  CHECK(r.names() == std::vector<std::string>{"net.w", "stats", "counters", "frame", "step",
                                              "gamma", "seed"});
  CHECK(r.entry("net.w").shape == Shape{2, 2});
  CHECK(r.f32("net.w") == a);
  CHECK(r.f64("stats") == b);
  CHECK(r.i64("counters") == c);
  CHECK(r.u8("frame") == d);
  CHECK(r.scalar_i64("step") == 42);
  CHECK(r.scalar_f64("gamma") == 0.997);
  CHECK(r.scalar_u64("seed") == 0xdeadbeefcafe1234ull);
}

TEST_CASE("checkpoint: malformed input is rejected with clear errors") {
  TempFile f("ckpt_bad.bbfc");
  {
    std::ofstream os(f.path, std::ios::binary);
    os << "NOPEnope not a checkpoint";
  }
  CHECK_THROWS_AS(ckpt::Reader{f.path}, std::runtime_error);

  // truncated payload
  {
    ckpt::Writer w;
    std::vector<float> v(16, 1.0f);
    w.add_f32("x", {16}, v.data());
    w.save(f.path);
    std::ifstream is(f.path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    std::ofstream os(f.path, std::ios::binary | std::ios::trunc);
    os.write(all.data(), static_cast<std::streamsize>(all.size() - 8));
  }
  CHECK_THROWS_AS(ckpt::Reader{f.path}, std::runtime_error);

  CHECK_THROWS_AS(ckpt::Reader{"/tmp/bbf_test_does_not_exist.bbfc"}, std::runtime_error);

  ckpt::Writer w;
  float x = 1;
  w.add_f32("x", {1}, &x);
  CHECK_THROWS_AS(w.add_f32("x", {1}, &x), std::invalid_argument);
}

TEST_CASE("checkpoint: access errors name the entry and dtype") {
  TempFile f("ckpt_access.bbfc");
  ckpt::Writer w;
  float x = 2.5f;
  w.add_f32("x", {1}, &x);
  w.save(f.path);
  ckpt::Reader r(f.path);
  CHECK(r.contains("x"));
  CHECK_FALSE(r.contains("y"));
  CHECK_THROWS_AS(r.f32("y"), std::runtime_error);   // missing
  CHECK_THROWS_AS(r.f64("x"), std::runtime_error);   // wrong dtype
  CHECK_THROWS_AS(r.scalar_i64("x"), std::runtime_error);
}

TEST_CASE("params: ordered names, totals, norms, clone independence") {
  Rng rng(11);
  ParameterSet ps;
  ps.rng_seed = 11;
  ps.add("b.w", bbf::fan_in_uniform<float>(rng, {4, 3}, 3));
  ps.add("a.w", bbf::fan_in_uniform<float>(rng, {2}, 2));
  CHECK(ps.names() == std::vector<std::string>{"b.w", "a.w"});  // insertion order, not sorted
  CHECK(ps.total_parameters() == 14);
  CHECK_THROWS_AS(ps.add("a.w", TensorF::zeros({1})), std::invalid_argument);
  CHECK_THROWS_AS(ps.at("missing"), std::out_of_range);

  double ss = 0;
  for (const auto& n : ps.names())
    for (int64_t i = 0; i < ps.at(n).size(); ++i)
      ss += double(ps.at(n).data()[i]) * double(ps.at(n).data()[i]);
  CHECK(ps.param_norm() == doctest::Approx(std::sqrt(ss)).epsilon(1e-12));
  CHECK(ps.grad_norm() == 0.0);  // no grads materialized yet

  ParameterSet copy = ps.clone();
  copy.at("a.w").data()[0] += 5.0f;
  CHECK(ps.at("a.w").data()[0] != copy.at("a.w").data()[0]);

  ParameterSet back = ps.clone();
  back.copy_values_from(copy);
  CHECK(back.at("a.w").data()[0] == copy.at("a.w").data()[0]);
}

TEST_CASE("params: save/load preserves values, order, and seed") {
  TempFile f("params_roundtrip.bbfc");
  Rng rng(23);
  ParameterSet ps;
  ps.rng_seed = 0x5eed;
  ps.add("enc.conv", bbf::fan_in_uniform<float>(rng, {8, 4, 3, 3}, 36));
  ps.add("head.lin", bbf::fan_in_uniform<float>(rng, {10, 8}, 8));
  ps.save(f.path);

  ParameterSet q = ParameterSet::load(f.path);
  CHECK(q.rng_seed == 0x5eed);
  CHECK(q.names() == ps.names());
  for (const auto& n : ps.names()) {
    REQUIRE(q.at(n).shape() == ps.at(n).shape());
    CHECK(q.at(n).requires_grad());
    for (int64_t i = 0; i < ps.at(n).size(); ++i)
      CHECK(q.at(n).data()[i] == ps.at(n).data()[i]);  // bitwise
  }
}

TEST_CASE("fan-in uniform init: bounded, centered, seed-deterministic") {
  Rng r1(99), r2(99), r3(100);
  auto a = bbf::fan_in_uniform<float>(r1, {64, 64}, 64);
  auto b = bbf::fan_in_uniform<float>(r2, {64, 64}, 64);
  auto c = bbf::fan_in_uniform<float>(r3, {64, 64}, 64);
  const float bound = 1.0f / 8.0f;
  double mean = 0;
  bool identical_ab = true, identical_ac = true;
  for (int64_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a.data()[i]) <= bound);
    mean += a.data()[i];
    identical_ab &= a.data()[i] == b.data()[i];
    identical_ac &= a.data()[i] == c.data()[i];
  }
  mean /= double(a.size());
  CHECK(identical_ab);
  CHECK_FALSE(identical_ac);
  // sample mean of U(-1/8, 1/8) over 4096 draws: sd ~ bound/sqrt(3*4096) ~ 0.0011
  CHECK(std::abs(mean) < 0.005);
  CHECK(a.requires_grad());
}

TEST_CASE("adamw: pure decay path hits the pinned value") {
  ParameterSetD ps;
  ps.add("p", TensorD::from({1}, {1.0}, true));
  ps.at("p").grad();  // materialize zero grad
  bbf::AdamWConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  bbf::AdamWT<double> opt(ps, cfg);
  opt.step();
  CHECK(ps.at("p").data()[0] == doctest::Approx(0.999).epsilon(1e-12));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adamw: zero decay reduces to the standard Adam update") {
  Rng rng(0x0bad5eed);
  constexpr int64_t n = 17;
  std::vector<double> theta0(n), g1(n), g2(n);
  for (auto& x : theta0) x = rng.uniform(-1, 1);
  for (auto& x : g1) x = rng.uniform(-1, 1);
  for (auto& x : g2) x = rng.uniform(-1, 1);

  ParameterSetD ps;
  ps.add("p", TensorD::from({n}, theta0, true));
  bbf::AdamWConfig cfg;
  cfg.lr = 0.003;
  cfg.eps = 1e-8;
  cfg.weight_decay = 0.0;
  bbf::AdamWT<double> opt(ps, cfg);

  // hand-rolled textbook Adam as the reference
  std::vector<double> ref = theta0, m(n, 0.0), v(n, 0.0);
  auto ref_step = [&](const std::vector<double>& g, int t) {
    for (int64_t i = 0; i < n; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mhat = m[i] / (1.0 - std::pow(0.9, t));
      const double vhat = v[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  };

  auto apply = [&](const std::vector<double>& g) {
    double* gd = ps.at("p").grad();
    for (int64_t i = 0; i < n; ++i) gd[i] = g[i];
    opt.step();
    ps.zero_grad();
  };
  apply(g1);
  ref_step(g1, 1);
  apply(g2);
  ref_step(g2, 2);
  for (int64_t i = 0; i < n; ++i)
    CHECK(ps.at("p").data()[i] == doctest::Approx(ref[i]).epsilon(1e-13));
}

TEST_CASE("adamw: 200 steps pull a scalar onto the quadratic minimum") {
  ParameterSetD ps;
  ps.add("theta", TensorD::from({1}, {0.0}, true));
  bbf::AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  bbf::AdamWT<double> opt(ps, cfg);
  for (int t = 0; t < 200; ++t) {
    ps.zero_grad();
    TensorD d = ops::affine(ps.at("theta"), 1.0, -3.0);
    ops::sum_all(ops::mul(d, d)).backward();
    opt.step();
  }
  CHECK(std::abs(ps.at("theta").data()[0] - 3.0) < 0.05);
  CHECK(opt.step_count() == 200);
}

TEST_CASE("adamw: refuses to step on missing gradients") {
  ParameterSetD ps;
  ps.add("p", TensorD::from({2}, {1.0, 2.0}, true));
  bbf::AdamWT<double> opt(ps, {});
  CHECK_THROWS_AS(opt.step(), std::runtime_error);
}

TEST_CASE("adamw: moment checkpoint resumes bitwise") {
  TempFile f("optim_resume.bbfc");

  auto make = [&](ParameterSet& ps) {
    Rng r(0x7e5);
    ps.add("w", bbf::fan_in_uniform<float>(r, {6, 5}, 5));
    ps.add("b", bbf::fan_in_uniform<float>(r, {6}, 5));
  };
  auto drive = [&](ParameterSet& ps, bbf::AdamW& opt, uint64_t tag, int steps) {
    Rng r(tag);
    for (int t = 0; t < steps; ++t) {
      for (const auto& n : ps.names()) {
        float* g = ps.at(n).grad();
        for (int64_t i = 0; i < ps.at(n).size(); ++i)
          g[i] = float(r.uniform(-1, 1));
      }
      opt.step();
      ps.zero_grad();
    }
  };

  ParameterSet a;
  make(a);
  bbf::AdamW oa(a, {});
  drive(a, oa, 1000, 3);
  {
    ckpt::Writer w;
    a.save_into(w, "net.");
    oa.save_into(w, "optim.");
    w.save(f.path);
  }
  drive(a, oa, 2000, 2);  // continue the original

  ParameterSet b;
  make(b);
  bbf::AdamW ob(b, {});
  {
    ckpt::Reader r(f.path);
    ParameterSet loaded = ParameterSet::load_from(r, "net.");
    b.copy_values_from(loaded);
    ob.load_from(r, "optim.");
  }
  CHECK(ob.step_count() == 3);
  drive(b, ob, 2000, 2);  // resume from the file

  for (const auto& n : a.names())
    for (int64_t i = 0; i < a.at(n).size(); ++i)
      CHECK(a.at(n).data()[i] == b.at(n).data()[i]);  // bitwise

  // resetting moments changes the trajectory
  ob.reset_moments("w");
  drive(b, ob, 3000, 1);
  drive(a, oa, 3000, 1);
  bool diverged = false;
  for (int64_t i = 0; i < a.at("w").size(); ++i)
    diverged |= a.at("w").data()[i] != b.at("w").data()[i];
  CHECK(diverged);
}
