#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgs/common.hpp"
#include "sgs/nn.hpp"
#include "sgs/ops.hpp"
#include "sgs/rng.hpp"

namespace sgs {

enum class Mode { kTrain, kTest };

struct StyleConfig {
  std::int64_t style_width = 512;
  std::vector<std::int64_t> mapping_channels = {16, 32, 64, 128};
  double noise_sigma = 0.01;
  double leaky_slope = 0.2;
};

// Adaptive instance normalization: normalize per (instance, channel), then
// scale by gamma and shift by beta (each [N,C]).
template <class T>
Tensor<T> adain(const Tensor<T>& f, const Tensor<T>& gamma,
                const Tensor<T>& beta) {
  auto normalized = instance_norm(f, static_cast<T>(kStatEps));
  auto scaled = mul(normalized, broadcast_nc(gamma, f.shape()));
  return add(scaled, broadcast_nc(beta, f.shape()));
}

// Per-layer learned affine transform of the style representation into
// per-channel scale/shift factors. A is [style_width, 2C]; the bias starts
// at (1, 0) so modulation begins as plain instance normalization.
template <class T>
class StyleAffine {
 public:
  StyleAffine() = default;

  StyleAffine(ParamStore<T>& store, const std::string& prefix,
              std::int64_t style_width, std::int64_t channels,
              std::uint64_t seed)
      : channels_(channels) {
    weight_ = store.add(
        prefix + ".weight",
        init_gaussian<T>({style_width, 2 * channels}, 0.01, seed,
                         prefix + ".weight"));
    std::vector<T> bias(static_cast<std::size_t>(2 * channels), T(0));
    for (std::int64_t i = 0; i < channels; ++i) bias[static_cast<std::size_t>(i)] = T(1);
    bias_ = store.add(prefix + ".bias",
                      Tensor<T>::from_data({2 * channels}, std::move(bias)));
  }

  std::pair<Tensor<T>, Tensor<T>> factors(const Tensor<T>& w) const {
    if (w.dim(1) != weight_.dim(0)) {
      throw ConfigError("style affine: representation width " +
                        std::to_string(w.dim(1)) + " does not match " +
                        std::to_string(weight_.dim(0)));
    }
    auto both = linear(w, weight_, bias_);
    return {columns(both, 0, channels_), columns(both, channels_, channels_)};
  }

  std::int64_t channels() const { return channels_; }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
  std::int64_t channels_ = 0;
};

template <class T>
std::pair<Tensor<T>, Tensor<T>> style_factors(const Tensor<T>& w,
                                              const StyleAffine<T>& affine) {
  return affine.factors(w);
}

// Learned per-channel scaling of a single-channel Gaussian field that is
// shared across channels. Active only in train mode; test mode returns the
// input tensor unchanged.
template <class T>
class NoiseModule {
 public:
  NoiseModule() = default;

  NoiseModule(ParamStore<T>& store, const std::string& prefix,
              std::int64_t channels)
      : channels_(channels) {
    // zero start: noise strength is learned from data
    scale_ = store.add(prefix + ".scale", Tensor<T>::zeros({channels}));
  }

  Tensor<T> apply(const Tensor<T>& f, double sigma_z, Mode mode,
                  RngStream& rng) const {
    if (mode == Mode::kTest) return f;
    if (!(sigma_z > 0.0)) throw ConfigError("noise: sigma_z must be > 0");
    Shape zshape = f.shape();
    zshape[1] = 1;
    std::vector<T> z(static_cast<std::size_t>(numel(zshape)));
    for (auto& v : z) v = static_cast<T>(rng.gaussian() * sigma_z);
    auto zt = Tensor<T>::from_data(zshape, std::move(z));
    auto scaled = mul(broadcast_c(scale_, f.shape()),
                      broadcast_channel(zt, f.dim(1)));
    return add(f, scaled);
  }

  Tensor<T> scale() const { return scale_; }
  std::int64_t channels() const { return channels_; }

 private:
  Tensor<T> scale_;
  std::int64_t channels_ = 0;
};

template <class T>
Tensor<T> inject_noise(const Tensor<T>& f, const NoiseModule<T>& noise,
                       double sigma_z, Mode mode, RngStream& rng) {
  return noise.apply(f, sigma_z, mode, rng);
}

// The mapping network: the input volume is instance-normalized, passed
// through four convolution blocks (a channel-changing 2x2x2 conv with
// asymmetric (1,0) padding followed by a size-halving 3x3x3 stride-2 conv,
// both LeakyReLU) and one final LeakyReLU linear layer producing the style
// representation.
template <class T>
class MappingNetwork {
 public:
  MappingNetwork() = default;

  MappingNetwork(ParamStore<T>& store, const std::string& prefix,
                 const StyleConfig& cfg, std::int64_t input_size,
                 std::uint64_t seed)
      : cfg_(cfg), input_size_(input_size) {
    if (input_size % 16 != 0 || input_size <= 0) {
      throw ConfigError("mapping network: volume size " +
                        std::to_string(input_size) +
                        " is not divisible by 16");
    }
    const auto& ch = cfg.mapping_channels;
    if (ch.size() != 4) {
      throw ConfigError("mapping network: expected 4 channel entries");
    }
    for (std::size_t i = 1; i < ch.size(); ++i) {
      if (ch[i] != 2 * ch[i - 1]) {
        throw ConfigError("mapping network: blocks must double channels");
      }
    }
    std::int64_t prev = 1;
    for (int b = 0; b < 4; ++b) {
      Block blk;
      const std::string bp = prefix + ".block" + std::to_string(b + 1);
      const std::int64_t cur = ch[static_cast<std::size_t>(b)];
      blk.grow_w = store.add(
          bp + ".grow.weight",
          init_fan_in_uniform<T>({cur, prev, 2, 2, 2}, prev * 8, seed,
                                 bp + ".grow.weight"));
      blk.grow_b = store.add(bp + ".grow.bias", Tensor<T>::zeros({cur}));
      blk.halve_w = store.add(
          bp + ".halve.weight",
          init_fan_in_uniform<T>({cur, cur, 3, 3, 3}, cur * 27, seed,
                                 bp + ".halve.weight"));
      blk.halve_b = store.add(bp + ".halve.bias", Tensor<T>::zeros({cur}));
      blocks_.push_back(blk);
      prev = cur;
    }
    const std::int64_t final_spatial = input_size / 16;
    flatten_width_ = prev * final_spatial * final_spatial * final_spatial;
    linear_w_ = store.add(
        prefix + ".linear.weight",
        init_fan_in_uniform<T>({flatten_width_, cfg.style_width},
                               flatten_width_, seed, prefix + ".linear.weight"));
    linear_b_ = store.add(prefix + ".linear.bias",
                          Tensor<T>::zeros({cfg.style_width}));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.rank() != 5 || x.dim(1) != 1 || x.dim(2) != input_size_ ||
        x.dim(3) != input_size_ || x.dim(4) != input_size_) {
      throw ConfigError("mapping network: expected input [N,1," +
                        std::to_string(input_size_) + "^3], got " +
                        shape_str(x.shape()));
    }
    const T slope = static_cast<T>(cfg_.leaky_slope);
    auto h = instance_norm(x, static_cast<T>(kStatEps));
    ConvPad grow_pad;
    grow_pad.lo = {1, 1, 1};
    grow_pad.hi = {0, 0, 0};
    for (const auto& blk : blocks_) {
      h = leaky_relu(conv3d_pad(h, blk.grow_w, blk.grow_b, 1, grow_pad), slope);
      h = leaky_relu(conv3d(h, blk.halve_w, blk.halve_b, 2, 1), slope);
    }
    return leaky_relu(linear(flatten(h), linear_w_, linear_b_), slope);
  }

  std::int64_t style_width() const { return cfg_.style_width; }
  std::int64_t flatten_width() const { return flatten_width_; }

 private:
  struct Block {
    Tensor<T> grow_w, grow_b, halve_w, halve_b;
  };

  StyleConfig cfg_;
  std::int64_t input_size_ = 0;
  std::int64_t flatten_width_ = 0;
  std::vector<Block> blocks_;
  Tensor<T> linear_w_, linear_b_;
};

}  // namespace sgs
