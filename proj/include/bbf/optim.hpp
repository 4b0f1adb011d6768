#pragma once

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "bbf/checkpoint.hpp"
#include "bbf/kernels/kernels.hpp"
#include "bbf/params.hpp"

namespace bbf {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1.5e-4;
  double weight_decay = 0.1;
};

/// AdamW with decoupled weight decay:
///   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
///   theta <- theta - lr * ( mhat / (sqrt(vhat) + eps) + lambda * theta )
/// Gradients are left untouched; the caller zeroes them.
template <typename T>
class AdamWT {
 public:
  AdamWT(ParamSetT<T>& params, AdamWConfig cfg) : params_(&params), cfg_(cfg) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      const int64_t n = params.at(params.names()[i]).size();
      m_[i].assign(static_cast<size_t>(n), T(0));
      v_[i].assign(static_cast<size_t>(n), T(0));
    }
  }

  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  int64_t step_count() const { return step_count_; }

  void step() {
    const int64_t t = step_count_ + 1;
    const double inv_bc1 = 1.0 / (1.0 - std::pow(cfg_.beta1, double(t)));
    const double inv_bc2 = 1.0 / (1.0 - std::pow(cfg_.beta2, double(t)));
    const auto& names = params_->names();
    for (size_t i = 0; i < names.size(); ++i) {
      Tensor<T>& p = params_->at(names[i]);
      const std::vector<T>& g = p.grad_values();
      if (g.empty())
        throw std::runtime_error("adamw: missing gradient for " + names[i]);
      kernels::adamw(p.data(), g.data(), m_[i].data(), v_[i].data(), p.size(),
                     T(cfg_.lr), T(cfg_.beta1), T(cfg_.beta2), T(cfg_.eps),
                     T(cfg_.weight_decay), T(inv_bc1), T(inv_bc2));
    }
    step_count_ = t;
  }

  /// Zeroes first/second moments for one entry (used after parameter resets).
  void reset_moments(const std::string& name) {
    const size_t i = entry_index(name);
    std::fill(m_[i].begin(), m_[i].end(), T(0));
    std::fill(v_[i].begin(), v_[i].end(), T(0));
  }

  void reset_all_moments() {
    for (const auto& name : params_->names()) reset_moments(name);
  }

  void set_step_count(int64_t t) {
    if (t < 0) throw std::invalid_argument("adamw: negative step count");
    step_count_ = t;
  }

  void save_into(ckpt::Writer& w, const std::string& prefix) const {
    const auto& names = params_->names();
    for (size_t i = 0; i < names.size(); ++i) {
      const Shape shape = params_->at(names[i]).shape();
      if constexpr (std::is_same_v<T, float>) {
        w.add_f32(prefix + "m." + names[i], shape, m_[i].data());
        w.add_f32(prefix + "v." + names[i], shape, v_[i].data());
      } else {
        w.add_f64(prefix + "m." + names[i], shape, m_[i].data());
        w.add_f64(prefix + "v." + names[i], shape, v_[i].data());
      }
    }
    w.add_scalar_i64(prefix + "step_count", step_count_);
  }

  void load_from(const ckpt::Reader& r, const std::string& prefix) {
    const auto& names = params_->names();
    for (size_t i = 0; i < names.size(); ++i) {
      std::vector<T> m, v;
      if constexpr (std::is_same_v<T, float>) {
        m = r.f32(prefix + "m." + names[i]);
        v = r.f32(prefix + "v." + names[i]);
      } else {
        m = r.f64(prefix + "m." + names[i]);
        v = r.f64(prefix + "v." + names[i]);
      }
      if (m.size() != m_[i].size() || v.size() != v_[i].size())
        throw std::runtime_error("adamw: checkpoint moment size mismatch for " + names[i]);
      m_[i] = std::move(m);
      v_[i] = std::move(v);
    }
    step_count_ = r.scalar_i64(prefix + "step_count");
  }

 private:
  size_t entry_index(const std::string& name) const {
    const auto& names = params_->names();
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw std::out_of_range("adamw: no entry named " + name);
  }

  ParamSetT<T>* params_;
  AdamWConfig cfg_;
  int64_t step_count_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

using AdamW = AdamWT<float>;

}  // namespace bbf
