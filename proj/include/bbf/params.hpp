#pragma once

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bbf/checkpoint.hpp"
#include "bbf/rng.hpp"
#include "bbf/tensor.hpp"

namespace bbf {

/// Named collection of learnable tensors for one network copy (online
/// weights, EMA target, or a freshly drawn template). Entries keep
/// insertion order; names are hierarchical ("encoder.stage0.conv").
template <typename T>
class ParamSetT {
 public:
  uint64_t rng_seed = 0;

  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    if (map_.count(name)) throw std::invalid_argument("params: duplicate entry " + name);
    order_.push_back(name);
    auto [it, ok] = map_.emplace(name, std::move(t));
    (void)ok;
    return it->second;
  }

  bool contains(const std::string& name) const { return map_.count(name) > 0; }

  Tensor<T>& at(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) throw std::out_of_range("params: no entry named " + name);
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw std::out_of_range("params: no entry named " + name);
    return it->second;
  }

  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }

  int64_t total_parameters() const {
    int64_t n = 0;
    for (const auto& name : order_) n += at(name).size();
    return n;
  }

  void zero_grad() {
    for (const auto& name : order_) at(name).zero_grad();
  }

  /// L2 norm over all parameter values, accumulated in double.
  double param_norm() const {
    double ss = 0;
    for (const auto& name : order_) {
      const Tensor<T>& t = at(name);
      const T* p = t.data();
      for (int64_t i = 0; i < t.size(); ++i) ss += double(p[i]) * double(p[i]);
    }
    return std::sqrt(ss);
  }

  /// L2 norm over all gradients; entries with no materialized grad count as zero.
  double grad_norm() const {
    double ss = 0;
    for (const auto& name : order_) {
      const Tensor<T>& t = at(name);
      const std::vector<T>& g = t.grad_values();
      for (const T gi : g) ss += double(gi) * double(gi);
    }
    return std::sqrt(ss);
  }

  /// Deep copy: fresh storage, same values/names/order, grads not copied.
  ParamSetT clone() const {
    ParamSetT out;
    out.rng_seed = rng_seed;
    for (const auto& name : order_) {
      const Tensor<T>& src = at(name);
      Tensor<T> dst = Tensor<T>::zeros(src.shape(), src.requires_grad());
      std::memcpy(dst.data(), src.data(), sizeof(T) * static_cast<size_t>(src.size()));
      out.add(name, std::move(dst));
    }
    return out;
  }

  /// Copies values entry-by-entry; both sets must be shape-congruent.
  void copy_values_from(const ParamSetT& other) {
    if (order_ != other.order_)
      throw std::invalid_argument("params: copy between sets with different entries");
    for (const auto& name : order_) {
      Tensor<T>& dst = at(name);
      const Tensor<T>& src = other.at(name);
      if (dst.shape() != src.shape())
        throw_shape_error("params.copy", dst.shape(), src.shape());
      std::memcpy(dst.data(), src.data(), sizeof(T) * static_cast<size_t>(src.size()));
    }
  }

  void save(const std::string& path) const {
    ckpt::Writer w;
    save_into(w, "");
    w.save(path);
  }

  /// Adds every entry (plus the seed) to an open Writer under `prefix`.
  void save_into(ckpt::Writer& w, const std::string& prefix) const {
    for (const auto& name : order_) {
      const Tensor<T>& t = at(name);
      if constexpr (std::is_same_v<T, float>)
        w.add_f32(prefix + name, t.shape(), t.data());
      else
        w.add_f64(prefix + name, t.shape(), t.data());
    }
    w.add_scalar_u64(prefix + "__meta.rng_seed", rng_seed);
  }

  static ParamSetT load(const std::string& path) {
    return load_from(ckpt::Reader(path), "");
  }

  /// Reads back everything save_into wrote under `prefix`.
  static ParamSetT load_from(const ckpt::Reader& r, const std::string& prefix) {
    ParamSetT out;
    for (const std::string& full : r.names()) {
      if (full.rfind(prefix, 0) != 0) continue;
      const std::string name = full.substr(prefix.size());
      if (name.rfind("__meta.", 0) == 0) continue;
      const ckpt::Entry& e = r.entry(full);
      Tensor<T> t = Tensor<T>::zeros(e.shape, /*requires_grad=*/true);
      if constexpr (std::is_same_v<T, float>) {
        const auto v = r.f32(full);
        std::memcpy(t.data(), v.data(), sizeof(T) * v.size());
      } else {
        const auto v = r.f64(full);
        std::memcpy(t.data(), v.data(), sizeof(T) * v.size());
      }
      out.add(name, std::move(t));
    }
    out.rng_seed = r.scalar_u64(prefix + "__meta.rng_seed");
    return out;
  }

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor<T>> map_;
};

using ParameterSet = ParamSetT<float>;
using ParameterSetD = ParamSetT<double>;

/// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), +1/sqrt(fan_in)), drawn
/// in row-major order so layouts reproduce bit-for-bit per seed.
template <typename T>
Tensor<T> fan_in_uniform(Rng& rng, Shape shape, int64_t fan_in) {
  if (fan_in <= 0) throw std::invalid_argument("fan_in_uniform: fan_in must be positive");
  Tensor<T> t = Tensor<T>::zeros(shape, /*requires_grad=*/true);
  const double bound = 1.0 / std::sqrt(double(fan_in));
  T* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i) p[i] = T(rng.uniform(-bound, bound));
  return t;
}

}  // namespace bbf
