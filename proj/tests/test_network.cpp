#include <array>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "bbf/network.hpp"
#include "bbf/ops.hpp"
#include "bbf/rng.hpp"
#include "doctest.h"

using bbf::ArchitectureSpec;
using bbf::Network;
using bbf::ParameterSet;
using bbf::Rng;
using bbf::Shape;
using bbf::TensorF;
namespace ops = bbf::ops;

namespace {

ArchitectureSpec desk_spec(int64_t width_scale = 1) {
  ArchitectureSpec s;
  s.input_channels = 4;
  s.input_height = 10;
  s.input_width = 10;
  s.width_scale = width_scale;
  s.base_channels = {16, 32, 32};
  s.latent_dim = 64;
  s.head_hidden = 64;
  s.num_actions = 5;
  s.num_atoms = 51;
  s.spr_horizon = 5;
  return s;
}

TensorF rand_obs(Rng& rng, int64_t batch, const ArchitectureSpec& s, double amp = 1.0) {
  std::vector<float> v(static_cast<size_t>(batch * s.input_channels * s.input_height *
                                           s.input_width));
  for (auto& x : v) x = float(rng.uniform(-amp, amp));
  return TensorF::from({batch, s.input_channels, s.input_height, s.input_width},
                       std::move(v), false);
}

double max_abs_diff(const TensorF& a, const TensorF& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, double(std::abs(a.data()[i] - b.data()[i])));
  return m;
}

}  // namespace

TEST_CASE("encoder: spatial dims halve per stage with ceil, channels follow the spec") {
  Network net(desk_spec(1));
  CHECK(net.latent_channels() == 32);
  CHECK(net.latent_height() == 2);  // 10 -> 5 -> 3 -> 2
  CHECK(net.latent_width() == 2);
  CHECK(net.flat_dim() == 32 * 2 * 2);

  ParameterSet p = net.init_params(3);
  Rng rng(4);
  TensorF obs = rand_obs(rng, 3, net.spec());
  TensorF latent = net.encode(p, obs);
  CHECK(latent.shape() == Shape{3, 32, 2, 2});
  CHECK(p.at("encoder.stage0.conv.w").shape() == Shape{16, 4, 3, 3});
  CHECK(p.at("encoder.stage1.conv.w").shape() == Shape{32, 16, 3, 3});
  CHECK(p.at("encoder.stage2.conv.w").shape() == Shape{32, 32, 3, 3});

  ArchitectureSpec atari = desk_spec(1);
  atari.input_height = 84;
  atari.input_width = 84;
  Network big(atari);
  CHECK(big.latent_height() == 11);  // 84 -> 42 -> 21 -> 11
  CHECK(big.latent_width() == 11);
}

TEST_CASE("encoder: exactly 15 convolutions at every width scale") {
  for (int64_t ws : {1, 2, 4}) {
    Network net(desk_spec(ws));
    ParameterSet p = net.init_params(0);
    int64_t convs = 0;
    for (const auto& name : p.names())
      if (name.rfind("encoder.", 0) == 0 && p.at(name).shape().size() == 4) ++convs;
    CHECK(convs == 15);
    CHECK(net.describe().find("encoder convolutions: 15") != std::string::npos);
  }
}

TEST_CASE("encoder: parameter count grows strictly with width scale") {
  Network n1(desk_spec(1)), n2(desk_spec(2)), n4(desk_spec(4));
  CHECK(n2.latent_channels() == 64);
  CHECK(n4.latent_channels() == 128);
  const int64_t c1 = n1.init_params(0).total_parameters();
  const int64_t c2 = n2.init_params(0).total_parameters();
  const int64_t c4 = n4.init_params(0).total_parameters();
  CHECK(c1 < c2);
  CHECK(c2 < c4);
}

TEST_CASE("encoder: fresh residual blocks start as the identity") {
  Network net(desk_spec(1));
  ParameterSet p = net.init_params(17);

  TensorF zeros = TensorF::zeros({2, 4, 10, 10});
  TensorF out = net.encode(p, zeros);
  for (int64_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == 0.0f);

  // with the block branches at zero the whole encoder is just conv -> pool
  Rng rng(18);
  TensorF obs = rand_obs(rng, 2, net.spec());
  TensorF ref = obs;
  for (int s = 0; s < 3; ++s) {
    const std::string stage = "encoder.stage" + std::to_string(s);
    ref = ops::conv2d(ref, p.at(stage + ".conv.w"), p.at(stage + ".conv.b"), 1, 1);
    ref = ops::maxpool2d(ref, 3, 2, 1);
  }
  CHECK(max_abs_diff(net.encode(p, obs), ref) == 0.0);
}

TEST_CASE("q head: distributions are valid probability vectors, even for huge inputs") {
  Network net(desk_spec(1));
  ParameterSet p = net.init_params(5);
  Rng rng(6);
  for (double amp : {1.0, 1000.0}) {
    TensorF obs = rand_obs(rng, 2, net.spec(), amp);
    TensorF dist = net.q_distribution(p, obs);
    REQUIRE(dist.shape() == Shape{2, 5, 51});
    for (int64_t row = 0; row < 2 * 5; ++row) {
      double sum = 0;
      for (int64_t j = 0; j < 51; ++j) {
        const float v = dist.data()[row * 51 + j];
        CHECK(v >= 0.0f);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("q head: constant advantage per atom collapses the dueling stream") {
  Network net(desk_spec(1));
  ParameterSet p = net.init_params(7);
  // silence the advantage trunk, then bias each atom identically for every action
  auto zero = [&](const std::string& n) {
    float* d = p.at(n).data();
    std::fill(d, d + p.at(n).size(), 0.0f);
  };
  zero("heads.adv.fc0.w");
  zero("heads.adv.fc0.b");
  zero("heads.adv.fc1.w");
  Rng rng(8);
  float* ab = p.at("heads.adv.fc1.b").data();
  for (int64_t j = 0; j < 51; ++j) {
    const float c = float(rng.uniform(-2, 2));
    for (int64_t a = 0; a < 5; ++a) ab[a * 51 + j] = c;
  }

  TensorF obs = rand_obs(rng, 3, net.spec());
  TensorF dist = net.q_distribution(p, obs);
  for (int64_t b = 0; b < 3; ++b)
    for (int64_t a = 1; a < 5; ++a)
      for (int64_t j = 0; j < 51; ++j)
        CHECK(dist.data()[(b * 5 + a) * 51 + j] ==
              doctest::Approx(dist.data()[b * 5 * 51 + j]).epsilon(1e-6));
}

TEST_CASE("q head: expected values stay inside the support") {
  Network net(desk_spec(2));
  ParameterSet p = net.init_params(9);
  Rng rng(10);
  TensorF q = net.q_values(p, rand_obs(rng, 4, net.spec(), 50.0));
  REQUIRE(q.shape() == Shape{4, 5});
  for (int64_t i = 0; i < q.size(); ++i) {
    CHECK(q.data()[i] >= -10.0f);
    CHECK(q.data()[i] <= 10.0f);
  }
}

TEST_CASE("select_action: pure exploration is uniform within 3 sigma") {
  Network net(desk_spec(1));
  ParameterSet p = net.init_params(11);
  Rng rng(12);
  TensorF obs = rand_obs(rng, 1, net.spec());
  std::array<int64_t, 5> counts = {};
  const int64_t draws = 10000;
  for (int64_t i = 0; i < draws; ++i)
    ++counts[static_cast<size_t>(net.select_action(p, obs, 1.0, rng))];
  const double expect = double(draws) / 5.0;
  const double sigma = std::sqrt(double(draws) * 0.2 * 0.8);
  for (int64_t c : counts) CHECK(std::abs(double(c) - expect) <= 3.0 * sigma);
}

TEST_CASE("select_action: greedy picks the dominant hand-set action") {
  ArchitectureSpec s = desk_spec(1);
  s.dueling = false;
  Network net(s);
  ParameterSet p = net.init_params(13);
  auto zero = [&](const std::string& n) {
    float* d = p.at(n).data();
    std::fill(d, d + p.at(n).size(), 0.0f);
  };
  zero("heads.q.fc0.w");
  zero("heads.q.fc0.b");
  zero("heads.q.fc1.w");
  zero("heads.q.fc1.b");
  // action 2 puts its mass on the top atom; everyone else stays uniform
  p.at("heads.q.fc1.b").data()[2 * 51 + 50] = 10.0f;

  Rng rng(14);
  TensorF obs = rand_obs(rng, 1, net.spec());
  for (int i = 0; i < 5; ++i) CHECK(net.select_action(p, obs, 0.0, rng) == 2);
}

TEST_CASE("select_action: ties break toward the lowest action index") {
  ArchitectureSpec s = desk_spec(1);
  s.dueling = false;
  Network net(s);
  ParameterSet p = net.init_params(15);
  auto zero = [&](const std::string& n) {
    float* d = p.at(n).data();
    std::fill(d, d + p.at(n).size(), 0.0f);
  };
  zero("heads.q.fc0.w");
  zero("heads.q.fc0.b");
  zero("heads.q.fc1.w");
  zero("heads.q.fc1.b");  // all actions exactly tied now
  Rng rng(16);
  TensorF obs = rand_obs(rng, 1, net.spec());
  CHECK(net.select_action(p, obs, 0.0, rng) == 0);
}

TEST_CASE("select_action: shifting every atom logit leaves the choice alone") {
  Network net(desk_spec(1));
  ParameterSet p = net.init_params(19);
  Rng rng(20);
  TensorF obs = rand_obs(rng, 4, net.spec());
  bbf::NoGradGuard ng;
  TensorF logits = net.q_logits(p, obs);
  auto pick = [&](const TensorF& lg) {
    return ops::argmax_rows(net.q_values_from_dist(ops::softmax_rows(lg)));
  };
  CHECK(pick(logits) == pick(ops::affine(logits, 1.0f, 7.25f)));
  CHECK(pick(logits) == pick(ops::affine(logits, 1.0f, -3.5f)));
}

TEST_CASE("spr: K-step rollout returns K latent-dim vectors") {
  ArchitectureSpec s = desk_spec(1);
  s.spr_horizon = 1;
  Network net(s);
  ParameterSet p = net.init_params(21);
  Rng rng(22);
  TensorF latent = net.encode(p, rand_obs(rng, 3, s));
  auto preds = net.spr_rollout(p, latent, {0, 1, 2});
  REQUIRE(preds.size() == 1);
  CHECK(preds[0].shape() == Shape{3, 64});

  CHECK_THROWS_AS(net.spr_rollout(p, latent, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(net.spr_rollout(p, latent, {0, 1, 9}), std::out_of_range);
}

TEST_CASE("spr: zeroed transition branch gives identity dynamics") {
  Network net(desk_spec(1));
  ParameterSet p = net.init_params(23);
  float* w = p.at("spr.transition.conv1.w").data();
  std::fill(w, w + p.at("spr.transition.conv1.w").size(), 0.0f);

  Rng rng(24);
  TensorF latent = net.encode(p, rand_obs(rng, 2, net.spec()));
  std::vector<int64_t> actions(2 * 5);
  for (auto& a : actions) a = int64_t(rng.below(5));
  auto preds = net.spr_rollout(p, latent, actions);
  REQUIRE(preds.size() == 5);
  for (size_t k = 1; k < preds.size(); ++k)
    CHECK(max_abs_diff(preds[k], preds[0]) == 0.0);
}

TEST_CASE("spr: the step-0 action influences the first prediction") {
  Network net(desk_spec(1));
  ParameterSet p = net.init_params(25);
  Rng rng(26);
  TensorF latent = net.encode(p, rand_obs(rng, 1, net.spec()));
  std::vector<int64_t> a0 = {0, 0, 0, 0, 0};
  std::vector<int64_t> a1 = {3, 0, 0, 0, 0};
  auto p0 = net.spr_rollout(p, latent, a0);
  auto p1 = net.spr_rollout(p, latent, a1);
  CHECK(max_abs_diff(p0[0], p1[0]) > 1e-6);
}

TEST_CASE("shrink_and_perturb: pinned arithmetic on a toy set") {
  auto build = [] {
    ParameterSet ps;
    ps.add("encoder.x", TensorF::from({2}, {2.0f, 4.0f}, true));
    ps.add("heads.y", TensorF::from({2}, {5.0f, 6.0f}, true));
    return ps;
  };
  ParameterSet tmpl;
  tmpl.add("encoder.x", TensorF::zeros({2}, true));
  tmpl.add("heads.y", TensorF::from({2}, {-1.0f, -2.0f}, true));

  ParameterSet a0 = build();
  bbf::shrink_and_perturb(a0, tmpl, 0.0);
  CHECK(a0.at("encoder.x").data()[0] == 2.0f);  // encoder untouched at alpha 0
  CHECK(a0.at("encoder.x").data()[1] == 4.0f);
  CHECK(a0.at("heads.y").data()[0] == -1.0f);  // heads always take the template

  ParameterSet ah = build();
  bbf::shrink_and_perturb(ah, tmpl, 0.5);
  CHECK(ah.at("encoder.x").data()[0] == doctest::Approx(1.0f));
  CHECK(ah.at("encoder.x").data()[1] == doctest::Approx(2.0f));

  ParameterSet a1 = build();
  bbf::shrink_and_perturb(a1, tmpl, 1.0);
  CHECK(a1.at("encoder.x").data()[0] == 0.0f);
  CHECK(a1.at("encoder.x").data()[1] == 0.0f);

  CHECK_THROWS_AS(bbf::shrink_and_perturb(a1, tmpl, 1.5), std::invalid_argument);
  ParameterSet other;
  other.add("encoder.x", TensorF::zeros({3}, true));
  CHECK_THROWS_AS(bbf::shrink_and_perturb(a1, other, 0.5), std::invalid_argument);
}

TEST_CASE("shrink_and_perturb: encoder lands on the segment, heads on the template") {
  Network net(desk_spec(1));
  ParameterSet p = net.init_params(27);
  ParameterSet before = p.clone();
  ParameterSet tmpl = net.init_params(28);
  const double alpha = 0.5;
  bbf::shrink_and_perturb(p, tmpl, alpha);
  for (const auto& name : p.names()) {
    const float* now = p.at(name).data();
    const float* old = before.at(name).data();
    const float* rnd = tmpl.at(name).data();
    if (name.rfind("encoder.", 0) == 0) {
      for (int64_t i = 0; i < p.at(name).size(); ++i)
        CHECK(now[i] ==
              doctest::Approx(0.5f * old[i] + 0.5f * rnd[i]).epsilon(1e-6));
    } else {
      for (int64_t i = 0; i < p.at(name).size(); ++i) CHECK(now[i] == rnd[i]);
    }
  }
}

TEST_CASE("ema_update: pinned arithmetic and the geometric fixed point") {
  ParameterSet target, online;
  target.add("w", TensorF::zeros({3}, true));
  online.add("w", TensorF::from({3}, {1.0f, 1.0f, 1.0f}, true));

  ParameterSet t1 = target.clone();
  bbf::ema_update(t1, online, 1.0);
  for (int i = 0; i < 3; ++i) CHECK(t1.at("w").data()[i] == 0.0f);  // tau=1 frozen

  ParameterSet t0 = target.clone();
  bbf::ema_update(t0, online, 0.0);
  for (int i = 0; i < 3; ++i) CHECK(t0.at("w").data()[i] == 1.0f);  // tau=0 copies

  ParameterSet t9 = target.clone();
  bbf::ema_update(t9, online, 0.9);
  for (int i = 0; i < 3; ++i) CHECK(t9.at("w").data()[i] == doctest::Approx(0.1f));

  // frozen online: the gap to it shrinks by a factor tau per update
  for (int step = 0; step < 6; ++step) bbf::ema_update(t9, online, 0.9);
  CHECK(t9.at("w").data()[0] ==
        doctest::Approx(1.0 - std::pow(0.9, 7)).epsilon(1e-5));

  CHECK_THROWS_AS(bbf::ema_update(t9, online, 1.5), std::invalid_argument);
}

TEST_CASE("bundle: online and target start congruent and equal") {
  auto bundle = bbf::make_bundle<float>(desk_spec(1), 31);
  CHECK(bundle.online.names() == bundle.target.names());
  for (const auto& n : bundle.online.names()) {
    REQUIRE(bundle.online.at(n).shape() == bundle.target.at(n).shape());
    for (int64_t i = 0; i < bundle.online.at(n).size(); ++i)
      CHECK(bundle.online.at(n).data()[i] == bundle.target.at(n).data()[i]);
  }
  // same spec, different seed: congruent shapes, different values
  ParameterSet other = bundle.net.init_params(32);
  CHECK(other.names() == bundle.online.names());
  bool differs = false;
  for (const auto& n : other.names())
    for (int64_t i = 0; i < other.at(n).size(); ++i)
      differs |= other.at(n).data()[i] != bundle.online.at(n).data()[i];
  CHECK(differs);
}

TEST_CASE("architecture validation rejects bad specs") {
  ArchitectureSpec s = desk_spec(1);
  s.width_scale = 0;
  CHECK_THROWS_AS(Network{s}, std::invalid_argument);
  s = desk_spec(1);
  s.num_atoms = 1;
  CHECK_THROWS_AS(Network{s}, std::invalid_argument);
  s = desk_spec(1);
  s.v_min = 3.0;
  s.v_max = 3.0;
  CHECK_THROWS_AS(Network{s}, std::invalid_argument);
  s = desk_spec(1);
  s.spr_horizon = 0;
  CHECK_THROWS_AS(Network{s}, std::invalid_argument);
  s = desk_spec(1);
  s.num_actions = 0;
  CHECK_THROWS_AS(Network{s}, std::invalid_argument);

  Network net(desk_spec(1));
  ParameterSet p = net.init_params(1);
  CHECK_THROWS_AS(net.encode(p, TensorF::zeros({2, 3, 10, 10})), bbf::ShapeError);
  Rng rng(2);
  TensorF obs = rand_obs(rng, 1, net.spec());
  CHECK_THROWS_AS(net.select_action(p, obs, 1.5, rng), std::invalid_argument);
}
