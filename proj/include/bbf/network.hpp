#pragma once

#include <array>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bbf/kernels/kernels.hpp"
#include "bbf/ops.hpp"
#include "bbf/params.hpp"
#include "bbf/rng.hpp"
#include "bbf/tensor.hpp"

namespace bbf {

/// Architecture knobs for the agent network. The defaults are the full-scale
/// configuration; run configs shrink them for desk-sized experiments.
struct ArchitectureSpec {
  int64_t input_channels = 4;
  int64_t input_height = 84;
  int64_t input_width = 84;
  int64_t width_scale = 4;
  std::array<int64_t, 3> base_channels = {16, 32, 32};
  int64_t latent_dim = 512;   // SPR projection/prediction width
  int64_t head_hidden = 512;  // Q-head hidden layer width
  int64_t num_actions = 0;
  int64_t num_atoms = 51;
  double v_min = -10.0;
  double v_max = 10.0;
  bool dueling = true;
  bool use_spr = true;
  int64_t spr_horizon = 5;  // K
};

/// Width-scalable residual encoder with a dueling categorical Q-head and the
/// latent-dynamics heads, plus the parameter-space maintenance operations
/// (shrink-and-perturb resets, EMA target tracking).
///
/// The class holds only the architecture; parameters live in ParamSetT so the
/// same network can run the online copy, the EMA target, and fresh random
/// templates interchangeably.
template <typename T>
class NetworkT {
 public:
  explicit NetworkT(ArchitectureSpec spec) : spec_(spec) {
    if (spec.width_scale < 1)
      throw std::invalid_argument("network: width_scale must be >= 1");
    if (spec.num_atoms < 2) throw std::invalid_argument("network: num_atoms must be >= 2");
    if (!(spec.v_min < spec.v_max))
      throw std::invalid_argument("network: v_min must be < v_max");
    if (spec.spr_horizon < 1) throw std::invalid_argument("network: K must be >= 1");
    if (spec.num_actions < 1)
      throw std::invalid_argument("network: num_actions must be set");
    if (spec.input_channels < 1 || spec.input_height < 1 || spec.input_width < 1)
      throw std::invalid_argument("network: bad input dims");
    for (int i = 0; i < 3; ++i) channels_[i] = spec.base_channels[i] * spec.width_scale;
    // 3x3 stride-2 pad-1 pooling halves spatial dims, rounding up
    h_[0] = spec.input_height;
    w_[0] = spec.input_width;
    for (int i = 0; i < 3; ++i) {
      h_[i + 1] = (h_[i] + 1) / 2;
      w_[i + 1] = (w_[i] + 1) / 2;
    }
    support_.resize(static_cast<size_t>(spec.num_atoms));
    const double step = (spec.v_max - spec.v_min) / double(spec.num_atoms - 1);
    for (int64_t j = 0; j < spec.num_atoms; ++j)
      support_[static_cast<size_t>(j)] = T(spec.v_min + step * double(j));
  }

  const ArchitectureSpec& spec() const { return spec_; }
  int64_t latent_channels() const { return channels_[2]; }
  int64_t latent_height() const { return h_[3]; }
  int64_t latent_width() const { return w_[3]; }
  int64_t flat_dim() const { return channels_[2] * h_[3] * w_[3]; }
  const std::vector<T>& support() const { return support_; }

  Tensor<T> support_tensor() const {
    return Tensor<T>::from({spec_.num_atoms}, support_, false);
  }

  /// Draws a fresh parameter set. Weights are fan-in-scaled uniform, biases
  /// zero, and the closing conv of every residual block starts at zero so each
  /// block begins as the identity.
  ParamSetT<T> init_params(uint64_t seed) const {
    Rng rng(seed);
    ParamSetT<T> p;
    p.rng_seed = seed;

    auto conv = [&](const std::string& name, int64_t cout, int64_t cin, bool zero) {
      const Shape ws = {cout, cin, 3, 3};
      p.add(name + ".w", zero ? Tensor<T>::zeros(ws, true)
                              : fan_in_uniform<T>(rng, ws, cin * 9));
      p.add(name + ".b", Tensor<T>::zeros({cout}, true));
    };
    auto lin = [&](const std::string& name, int64_t out, int64_t in) {
      p.add(name + ".w", fan_in_uniform<T>(rng, {out, in}, in));
      p.add(name + ".b", Tensor<T>::zeros({out}, true));
    };

    int64_t cin = spec_.input_channels;
    for (int s = 0; s < 3; ++s) {
      const std::string stage = "encoder.stage" + std::to_string(s);
      conv(stage + ".conv", channels_[s], cin, false);
      for (int b = 0; b < 2; ++b) {
        const std::string block = stage + ".block" + std::to_string(b);
        conv(block + ".conv0", channels_[s], channels_[s], false);
        conv(block + ".conv1", channels_[s], channels_[s], true);  // identity start
      }
      cin = channels_[s];
    }

    const int64_t f = flat_dim();
    if (spec_.dueling) {
      lin("heads.value.fc0", spec_.head_hidden, f);
      lin("heads.value.fc1", spec_.num_atoms, spec_.head_hidden);
      lin("heads.adv.fc0", spec_.head_hidden, f);
      lin("heads.adv.fc1", spec_.num_actions * spec_.num_atoms, spec_.head_hidden);
    } else {
      lin("heads.q.fc0", spec_.head_hidden, f);
      lin("heads.q.fc1", spec_.num_actions * spec_.num_atoms, spec_.head_hidden);
    }

    if (spec_.use_spr) {
      conv("spr.transition.conv0", channels_[2], channels_[2] + spec_.num_actions, false);
      conv("spr.transition.conv1", channels_[2], channels_[2], false);
      lin("spr.projection", spec_.latent_dim, f);
      lin("spr.prediction.fc0", spec_.latent_dim, spec_.latent_dim);
      lin("spr.prediction.fc1", spec_.latent_dim, spec_.latent_dim);
    }
    return p;
  }

  /// Observation batch [B, C, H, W] -> spatial latent [B, C3, h, w].
  Tensor<T> encode(const ParamSetT<T>& p, const Tensor<T>& obs) const {
    const Shape want = {obs.shape().empty() ? 0 : obs.shape()[0], spec_.input_channels,
                        spec_.input_height, spec_.input_width};
    if (obs.shape().size() != 4 || obs.shape() != want)
      throw_shape_error("encode", obs.shape(), "batch of observations [B, C, H, W]");
    Tensor<T> x = obs;
    for (int s = 0; s < 3; ++s) {
      const std::string stage = "encoder.stage" + std::to_string(s);
      x = ops::conv2d(x, p.at(stage + ".conv.w"), p.at(stage + ".conv.b"), 1, 1);
      x = ops::maxpool2d(x, 3, 2, 1);
      for (int b = 0; b < 2; ++b) {
        const std::string block = stage + ".block" + std::to_string(b);
        Tensor<T> r = ops::relu(x);
        r = ops::conv2d(r, p.at(block + ".conv0.w"), p.at(block + ".conv0.b"), 1, 1);
        r = ops::relu(r);
        r = ops::conv2d(r, p.at(block + ".conv1.w"), p.at(block + ".conv1.b"), 1, 1);
        x = ops::add(x, r);
      }
    }
    return x;
  }

  /// Per-action atom logits [B, A, num_atoms] from a spatial latent.
  Tensor<T> q_logits_from_latent(const ParamSetT<T>& p, const Tensor<T>& latent) const {
    const Tensor<T> flat = ops::flatten(latent);
    const int64_t batch = flat.shape()[0];
    if (spec_.dueling) {
      Tensor<T> vh = ops::relu(ops::linear(flat, p.at("heads.value.fc0.w"),
                                           p.at("heads.value.fc0.b")));
      Tensor<T> v = ops::linear(vh, p.at("heads.value.fc1.w"), p.at("heads.value.fc1.b"));
      Tensor<T> ah = ops::relu(ops::linear(flat, p.at("heads.adv.fc0.w"),
                                           p.at("heads.adv.fc0.b")));
      Tensor<T> a = ops::linear(ah, p.at("heads.adv.fc1.w"), p.at("heads.adv.fc1.b"));
      a = ops::reshape(a, {batch, spec_.num_actions, spec_.num_atoms});
      return ops::dueling_combine(v, a);
    }
    Tensor<T> qh =
        ops::relu(ops::linear(flat, p.at("heads.q.fc0.w"), p.at("heads.q.fc0.b")));
    Tensor<T> q = ops::linear(qh, p.at("heads.q.fc1.w"), p.at("heads.q.fc1.b"));
    return ops::reshape(q, {batch, spec_.num_actions, spec_.num_atoms});
  }

  Tensor<T> q_logits(const ParamSetT<T>& p, const Tensor<T>& obs) const {
    return q_logits_from_latent(p, encode(p, obs));
  }

  /// Per-action categorical distributions over the value support:
  /// [B, A, num_atoms], each row a probability vector.
  Tensor<T> q_distribution(const ParamSetT<T>& p, const Tensor<T>& obs) const {
    return ops::softmax_rows(q_logits(p, obs));
  }

  /// Expected values under the support: [B, A].
  Tensor<T> q_values_from_dist(const Tensor<T>& dist) const {
    const Tensor<T> e = ops::expect_rows(dist, support_tensor());
    return ops::reshape(e, {dist.shape()[0], spec_.num_actions});
  }

  Tensor<T> q_values(const ParamSetT<T>& p, const Tensor<T>& obs) const {
    return q_values_from_dist(q_distribution(p, obs));
  }

  /// Greedy actions per batch row; ties go to the lowest action index.
  std::vector<int64_t> greedy_actions(const ParamSetT<T>& p, const Tensor<T>& obs) const {
    NoGradGuard ng;
    return ops::argmax_rows(q_values(p, obs));
  }

  /// Epsilon-greedy over the given (normally EMA-target) parameters.
  /// One observation [C, H, W] or singleton batch [1, C, H, W].
  int64_t select_action(const ParamSetT<T>& params, const Tensor<T>& obs, double epsilon,
                        Rng& rng) const {
    if (epsilon < 0.0 || epsilon > 1.0)
      throw std::invalid_argument("select_action: epsilon outside [0, 1]");
    if (epsilon > 0.0 && rng.uniform() < epsilon)
      return static_cast<int64_t>(rng.below(static_cast<uint64_t>(spec_.num_actions)));
    Tensor<T> batch = obs;
    if (obs.shape().size() == 3)
      batch = ops::reshape(obs, {1, obs.shape()[0], obs.shape()[1], obs.shape()[2]});
    NoGradGuard ng;
    return greedy_actions(params, batch)[0];
  }

  /// Projection head only (used for the temporal-consistency targets).
  Tensor<T> project(const ParamSetT<T>& p, const Tensor<T>& latent) const {
    return ops::linear(ops::flatten(latent), p.at("spr.projection.w"),
                       p.at("spr.projection.b"));
  }

  /// Rolls the latent forward through the action-conditioned transition model
  /// for K steps; returns the K projected-and-predicted vectors [B, latent_dim].
  /// `actions` is row-major [B, K].
  std::vector<Tensor<T>> spr_rollout(const ParamSetT<T>& p, const Tensor<T>& latent,
                                     const std::vector<int64_t>& actions) const {
    if (!spec_.use_spr) throw std::logic_error("spr_rollout: use_spr is off");
    const int64_t batch = latent.shape()[0];
    const int64_t k_steps = spec_.spr_horizon;
    if (static_cast<int64_t>(actions.size()) != batch * k_steps)
      throw std::invalid_argument("spr_rollout: need B*K actions, got " +
                                  std::to_string(actions.size()));
    std::vector<Tensor<T>> out;
    out.reserve(static_cast<size_t>(k_steps));
    Tensor<T> h = latent;
    for (int64_t k = 0; k < k_steps; ++k) {
      Tensor<T> planes = action_planes(batch, actions, k, k_steps);
      Tensor<T> r = ops::concat_channels(h, planes);
      r = ops::conv2d(r, p.at("spr.transition.conv0.w"), p.at("spr.transition.conv0.b"),
                      1, 1);
      r = ops::relu(r);
      r = ops::conv2d(r, p.at("spr.transition.conv1.w"), p.at("spr.transition.conv1.b"),
                      1, 1);
      h = ops::add(h, r);
      Tensor<T> proj = project(p, h);
      Tensor<T> hid = ops::relu(
          ops::linear(proj, p.at("spr.prediction.fc0.w"), p.at("spr.prediction.fc0.b")));
      out.push_back(
          ops::linear(hid, p.at("spr.prediction.fc1.w"), p.at("spr.prediction.fc1.b")));
    }
    return out;
  }

  /// Plain-text architecture table: every entry, its shape, its size.
  std::string describe() const {
    ParamSetT<T> p = init_params(0);
    std::ostringstream os;
    os << "entry                                    shape                params\n";
    int64_t convs = 0;
    for (const auto& name : p.names()) {
      const Tensor<T>& t = p.at(name);
      std::string pad_name = name;
      pad_name.resize(std::max<size_t>(40, pad_name.size() + 1), ' ');
      std::string sh = shape_str(t.shape());
      sh.resize(std::max<size_t>(20, sh.size() + 1), ' ');
      os << pad_name << " " << sh << " " << t.size() << "\n";
      if (name.rfind("encoder.", 0) == 0 && t.shape().size() == 4) ++convs;
    }
    os << "encoder convolutions: " << convs << "\n";
    os << "total parameters: " << p.total_parameters() << "\n";
    return os.str();
  }

 private:
  Tensor<T> action_planes(int64_t batch, const std::vector<int64_t>& actions, int64_t k,
                          int64_t k_steps) const {
    const int64_t a_count = spec_.num_actions;
    const int64_t hw = h_[3] * w_[3];
    std::vector<T> data(static_cast<size_t>(batch * a_count * hw), T(0));
    for (int64_t b = 0; b < batch; ++b) {
      const int64_t a = actions[static_cast<size_t>(b * k_steps + k)];
      if (a < 0 || a >= a_count)
        throw std::out_of_range("spr_rollout: action " + std::to_string(a) +
                                " outside [0, " + std::to_string(a_count) + ")");
      T* plane = data.data() + (b * a_count + a) * hw;
      std::fill(plane, plane + hw, T(1));
    }
    return Tensor<T>::from({batch, a_count, h_[3], w_[3]}, std::move(data), false);
  }

  ArchitectureSpec spec_;
  std::array<int64_t, 3> channels_ = {};
  std::array<int64_t, 4> h_ = {}, w_ = {};
  std::vector<T> support_;
};

using Network = NetworkT<float>;

namespace detail {
template <typename T>
void require_congruent(const ParamSetT<T>& a, const ParamSetT<T>& b, const char* op) {
  if (a.names() != b.names())
    throw std::invalid_argument(std::string(op) + ": parameter sets differ in entries");
  for (const auto& n : a.names())
    if (a.at(n).shape() != b.at(n).shape())
      throw_shape_error(op, a.at(n).shape(), b.at(n).shape());
}
}  // namespace detail

/// Soft reset. Encoder entries move alpha of the way to the random template;
/// every other entry (Q-heads, latent-dynamics heads) is replaced outright.
template <typename T>
void shrink_and_perturb(ParamSetT<T>& params, const ParamSetT<T>& random_template,
                        double alpha_encoder) {
  if (alpha_encoder < 0.0 || alpha_encoder > 1.0)
    throw std::invalid_argument("shrink_and_perturb: alpha outside [0, 1]");
  detail::require_congruent(params, random_template, "shrink_and_perturb");
  for (const auto& name : params.names()) {
    Tensor<T>& p = params.at(name);
    const Tensor<T>& r = random_template.at(name);
    if (name.rfind("encoder.", 0) == 0)
      kernels::lerp(T(1.0 - alpha_encoder), p.data(), r.data(), p.data(), p.size());
    else
      std::memcpy(p.data(), r.data(), sizeof(T) * static_cast<size_t>(p.size()));
  }
}

/// target <- tau * target + (1 - tau) * online, elementwise.
template <typename T>
void ema_update(ParamSetT<T>& target, const ParamSetT<T>& online, double tau) {
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("ema_update: tau outside [0, 1]");
  detail::require_congruent(target, online, "ema_update");
  for (const auto& name : target.names()) {
    Tensor<T>& t = target.at(name);
    kernels::lerp(T(tau), t.data(), online.at(name).data(), t.data(), t.size());
  }
}

/// Online/EMA-target parameter pair for one network.
template <typename T>
struct NetworkBundleT {
  NetworkT<T> net;
  ParamSetT<T> online;
  ParamSetT<T> target;
};

template <typename T>
NetworkBundleT<T> make_bundle(const ArchitectureSpec& spec, uint64_t seed) {
  NetworkT<T> net(spec);
  ParamSetT<T> online = net.init_params(seed);
  ParamSetT<T> target = online.clone();
  return {std::move(net), std::move(online), std::move(target)};
}

using NetworkBundle = NetworkBundleT<float>;

}  // namespace bbf
