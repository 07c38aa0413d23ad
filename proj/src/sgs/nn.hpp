#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgs/common.hpp"
#include "sgs/rng.hpp"
#include "sgs/tensor.hpp"

namespace sgs {

// Ordered named-parameter table. Order is construction order and defines the
// checkpoint layout, so it must be deterministic.
template <class T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> t) {
    t.node()->requires_grad = true;
    items_.emplace_back(name, t);
    return t;
  }

  std::size_t size() const { return items_.size(); }
  const std::vector<std::pair<std::string, Tensor<T>>>& items() const {
    return items_;
  }
  std::vector<std::pair<std::string, Tensor<T>>>& items() { return items_; }

  Tensor<T> find(const std::string& name) const {
    for (const auto& [k, v] : items_) {
      if (k == name) return v;
    }
    throw Error("parameter not found: " + name);
  }

  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& [k, v] : items_) n += v.size();
    return n;
  }

  void zero_grad() {
    for (auto& [k, v] : items_) v.zero_grad();
  }

  // FNV-1a over the raw parameter bytes, in table order. Used by the
  // phase-isolation checks.
  std::uint64_t digest() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [k, v] : items_) {
      h = fnv1a64(k, h);
      h = fnv1a64(v.data(), sizeof(T) * static_cast<std::size_t>(v.size()), h);
    }
    return h;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), +1/sqrt(fan_in)). Each
// parameter draws from a stream derived from (seed, name), so values do not
// depend on construction order.
template <class T>
Tensor<T> init_fan_in_uniform(const Shape& shape, std::int64_t fan_in,
                              std::uint64_t seed, const std::string& name) {
  RngStream rng(derive_seed(seed, {stream_tag("init"), stream_tag(name)}));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<T> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from_data(shape, std::move(data));
}

template <class T>
Tensor<T> init_gaussian(const Shape& shape, double stddev, std::uint64_t seed,
                        const std::string& name) {
  RngStream rng(derive_seed(seed, {stream_tag("init"), stream_tag(name)}));
  std::vector<T> data(static_cast<std::size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<T>(rng.gaussian() * stddev);
  return Tensor<T>::from_data(shape, std::move(data));
}

template <class T>
Tensor<T> init_constant(const Shape& shape, T value) {
  return Tensor<T>::filled(shape, value);
}

// RMSProp with a per-parameter running average of squared gradients:
//   v <- rho*v + (1-rho)*g^2 ; p <- p - alpha*g/(sqrt(v)+floor)
template <class T>
class RmsProp {
 public:
  RmsProp(T alpha, T rho, T floor) : alpha_(alpha), rho_(rho), floor_(floor) {
    if (!(alpha > T(0))) throw ConfigError("rmsprop: alpha must be > 0");
  }

  void step(ParamStore<T>& params) {
    ensure_state(params);
    std::size_t idx = 0;
    for (auto& [name, p] : params.items()) {
      auto& v = state_[idx++];
      if (!p.has_grad()) continue;
      const T* g = p.grad();
      T* pv = p.data();
      for (std::int64_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(static_cast<double>(g[i]))) {
          throw NumericError("non-finite gradient in parameter '" + name +
                             "' at index " + std::to_string(i));
        }
        v[static_cast<std::size_t>(i)] =
            rho_ * v[static_cast<std::size_t>(i)] + (T(1) - rho_) * g[i] * g[i];
        pv[i] -= alpha_ * g[i] /
                 (static_cast<T>(std::sqrt(
                      static_cast<double>(v[static_cast<std::size_t>(i)]))) +
                  floor_);
      }
    }
    params.zero_grad();
  }

  const std::vector<std::vector<T>>& state() const { return state_; }
  std::vector<std::vector<T>>& state() { return state_; }

  void ensure_state(const ParamStore<T>& params) {
    if (state_.size() == params.size()) return;
    state_.clear();
    for (const auto& [name, p] : params.items()) {
      state_.emplace_back(static_cast<std::size_t>(p.size()), T(0));
    }
  }

  T alpha() const { return alpha_; }

 private:
  T alpha_, rho_, floor_;
  std::vector<std::vector<T>> state_;
};

// Projects every parameter into [-c, c]; applied to the critic after each
// of its updates, never to the generator or the segmentation network.
template <class T>
void clip_weights(ParamStore<T>& params, T c) {
  if (!(c > T(0))) throw ConfigError("clip_weights: c must be > 0");
  for (auto& [name, p] : params.items()) {
    T* pv = p.data();
    for (std::int64_t i = 0; i < p.size(); ++i) {
      pv[i] = std::min(c, std::max(-c, pv[i]));
    }
  }
}

template <class T>
T max_abs_param(const ParamStore<T>& params) {
  T m = T(0);
  for (const auto& [name, p] : params.items()) {
    for (std::int64_t i = 0; i < p.size(); ++i) {
      m = std::max(m, std::abs(p.data()[i]));
    }
  }
  return m;
}

}  // namespace sgs
