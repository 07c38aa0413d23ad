#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgs/nn.hpp"
#include "sgs/ops.hpp"
#include "sgs/style.hpp"

namespace sgs {

struct ModelConfig {
  std::string backbone = "dcitn";  // dcitn | unet
  bool noise_enabled = true;
  bool adain_enabled = true;
  StyleConfig style;
  std::int64_t dcitn_growth = 8;
  std::int64_t dcitn_layers = 4;
  std::int64_t dcitn_stem_channels = 16;
  std::vector<std::int64_t> unet_channels = {16, 32, 64};
  std::vector<std::int64_t> critic_channels = {32, 64, 128, 256};
  std::int64_t rois = 4;
};

// One backbone convolution with the modulation chain of the style-based
// generator: conv -> noise injection -> AdaIN (or plain instance norm when
// style is off) -> LeakyReLU.
template <class T>
class ModulatedConv {
 public:
  ModulatedConv() = default;

  ModulatedConv(ParamStore<T>& store, const std::string& prefix,
                std::int64_t in_ch, std::int64_t out_ch,
                const ModelConfig& cfg, std::uint64_t seed)
      : use_noise_(cfg.noise_enabled),
        use_adain_(cfg.adain_enabled),
        sigma_z_(cfg.style.noise_sigma),
        slope_(static_cast<T>(cfg.style.leaky_slope)) {
    weight_ = store.add(
        prefix + ".conv.weight",
        init_fan_in_uniform<T>({out_ch, in_ch, 3, 3, 3}, in_ch * 27, seed,
                               prefix + ".conv.weight"));
    bias_ = store.add(prefix + ".conv.bias", Tensor<T>::zeros({out_ch}));
    if (use_noise_) noise_ = NoiseModule<T>(store, prefix + ".noise", out_ch);
    if (use_adain_) {
      affine_ = StyleAffine<T>(store, prefix + ".affine", cfg.style.style_width,
                               out_ch, seed);
    }
  }

  Tensor<T> forward(const Tensor<T>& h, const Tensor<T>* style_w, Mode mode,
                    RngStream& rng) const {
    auto f = conv3d(h, weight_, bias_, 1, 1);
    if (use_noise_) f = noise_.apply(f, sigma_z_, mode, rng);
    if (use_adain_) {
      auto [gamma, beta] = affine_.factors(*style_w);
      f = adain(f, gamma, beta);
    } else {
      f = instance_norm(f, static_cast<T>(kStatEps));
    }
    return leaky_relu(f, slope_);
  }

 private:
  Tensor<T> weight_, bias_;
  NoiseModule<T> noise_;
  StyleAffine<T> affine_;
  bool use_noise_ = false;
  bool use_adain_ = false;
  double sigma_z_ = 0.01;
  T slope_ = static_cast<T>(0.2);
};

// Densely connected translation backbone: a stem conv, `layers` growth
// convs each consuming the concatenation of the stem output and every
// previous growth output, and a plain 1-channel projection conv. All convs
// are 3x3x3, stride 1, padding 1, so spatial size is preserved end to end.
template <class T>
class Dcitn {
 public:
  Dcitn() = default;

  Dcitn(ParamStore<T>& store, const std::string& prefix,
        const ModelConfig& cfg, std::uint64_t seed) {
    const std::int64_t k = cfg.dcitn_growth;
    const std::int64_t stem_ch = cfg.dcitn_stem_channels;
    stem_ = ModulatedConv<T>(store, prefix + ".stem", 1, stem_ch, cfg, seed);
    std::int64_t width = stem_ch;
    for (std::int64_t j = 0; j < cfg.dcitn_layers; ++j) {
      dense_.push_back(ModulatedConv<T>(
          store, prefix + ".dense" + std::to_string(j + 1), width, k, cfg, seed));
      width += k;
    }
    proj_w_ = store.add(
        prefix + ".proj.conv.weight",
        init_fan_in_uniform<T>({1, width, 3, 3, 3}, width * 27, seed,
                               prefix + ".proj.conv.weight"));
    proj_b_ = store.add(prefix + ".proj.conv.bias", Tensor<T>::zeros({1}));
  }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>* style_w, Mode mode,
                    RngStream& rng) const {
    std::vector<Tensor<T>> feats;
    feats.push_back(stem_.forward(x, style_w, mode, rng));
    for (const auto& blk : dense_) {
      auto inp = feats.size() == 1 ? feats.front() : concat_channels(feats);
      feats.push_back(blk.forward(inp, style_w, mode, rng));
    }
    return conv3d(concat_channels(feats), proj_w_, proj_b_, 1, 1);
  }

 private:
  ModulatedConv<T> stem_;
  std::vector<ModulatedConv<T>> dense_;
  Tensor<T> proj_w_, proj_b_;
};

// Three-level 3D U-net with maxpool downsampling, nearest-upsample+conv
// decoding and skip concatenations. Doubles as the synthesis backbone
// (styled, linear 1-channel head) and the segmentation network (plain,
// sigmoid multi-ROI head).
template <class T>
class Unet3d {
 public:
  Unet3d() = default;

  Unet3d(ParamStore<T>& store, const std::string& prefix, std::int64_t in_ch,
         std::int64_t out_ch, const ModelConfig& cfg, bool styled,
         std::uint64_t seed) {
    ModelConfig block_cfg = cfg;
    if (!styled) {
      block_cfg.noise_enabled = false;
      block_cfg.adain_enabled = false;
    }
    const auto& ch = cfg.unet_channels;
    if (ch.size() != 3) throw ConfigError("unet: expected 3 channel entries");
    enc1_ = ModulatedConv<T>(store, prefix + ".enc1", in_ch, ch[0], block_cfg, seed);
    enc2_ = ModulatedConv<T>(store, prefix + ".enc2", ch[0], ch[1], block_cfg, seed);
    bott_ = ModulatedConv<T>(store, prefix + ".bottleneck", ch[1], ch[2],
                             block_cfg, seed);
    dec2_ = ModulatedConv<T>(store, prefix + ".dec2", ch[2] + ch[1], ch[1],
                             block_cfg, seed);
    dec1_ = ModulatedConv<T>(store, prefix + ".dec1", ch[1] + ch[0], ch[0],
                             block_cfg, seed);
    head_w_ = store.add(
        prefix + ".head.conv.weight",
        init_fan_in_uniform<T>({out_ch, ch[0], 3, 3, 3}, ch[0] * 27, seed,
                               prefix + ".head.conv.weight"));
    head_b_ = store.add(prefix + ".head.conv.bias", Tensor<T>::zeros({out_ch}));
  }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>* style_w, Mode mode,
                    RngStream& rng, bool sigmoid_head) const {
    auto e1 = enc1_.forward(x, style_w, mode, rng);
    auto e2 = enc2_.forward(maxpool3d_2(e1), style_w, mode, rng);
    auto b = bott_.forward(maxpool3d_2(e2), style_w, mode, rng);
    auto d2 = dec2_.forward(concat_channels<T>({upsample_nearest_2(b), e2}),
                            style_w, mode, rng);
    auto d1 = dec1_.forward(concat_channels<T>({upsample_nearest_2(d2), e1}),
                            style_w, mode, rng);
    auto out = conv3d(d1, head_w_, head_b_, 1, 1);
    return sigmoid_head ? sigmoid(out) : out;
  }

 private:
  ModulatedConv<T> enc1_, enc2_, bott_, dec2_, dec1_;
  Tensor<T> head_w_, head_b_;
};

// The style-based generator: mapping network (when AdaIN is on), synthesis
// backbone with modulation after every conv, and per-case intensity
// standardization so the networks operate in a normalized range. The
// recorded (mean, sigma) of the input restore the output scale.
template <class T>
class Generator {
 public:
  Generator(const ModelConfig& cfg, std::int64_t input_size, std::uint64_t seed)
      : cfg_(cfg), input_size_(input_size) {
    if (cfg.adain_enabled) {
      mapping_ = MappingNetwork<T>(params_, "generator.mapping", cfg.style,
                                   input_size, seed);
    }
    if (cfg.backbone == "dcitn") {
      dcitn_ = Dcitn<T>(params_, "generator.backbone", cfg, seed);
    } else if (cfg.backbone == "unet") {
      unet_ = Unet3d<T>(params_, "generator.backbone", 1, 1, cfg, true, seed);
    } else {
      throw ConfigError("unknown backbone '" + cfg.backbone + "'");
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, RngStream& rng) const {
    check_input(x);
    const std::int64_t n = x.dim(0);
    // per-case standardization from the input volume (values only, no grad)
    std::vector<T> mu, sigma;
    detail::compute_channel_stats(x, mu, sigma);
    std::vector<T> scale(mu.size()), xs_data(x.vec());
    const std::int64_t m = x.size() / n;
    for (std::int64_t i = 0; i < n; ++i) {
      scale[static_cast<std::size_t>(i)] =
          sigma[static_cast<std::size_t>(i)] + static_cast<T>(kStatEps);
      T* row = xs_data.data() + i * m;
      const T inv = T(1) / scale[static_cast<std::size_t>(i)];
      const T mu_v = mu[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < m; ++j) row[j] = (row[j] - mu_v) * inv;
    }
    auto xs = Tensor<T>::from_data(x.shape(), std::move(xs_data));

    Tensor<T> w;
    const Tensor<T>* style_w = nullptr;
    if (cfg_.adain_enabled) {
      w = mapping_.forward(xs);
      style_w = &w;
    }
    auto out = cfg_.backbone == "dcitn"
                   ? dcitn_.forward(xs, style_w, mode, rng)
                   : unet_.forward(xs, style_w, mode, rng, false);

    auto scale_t = Tensor<T>::from_data({n, 1}, std::move(scale));
    auto mu_t = Tensor<T>::from_data({n, 1}, std::move(mu));
    return add(mul(out, broadcast_nc(scale_t, out.shape())),
               broadcast_nc(mu_t, out.shape()));
  }

  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  std::int64_t input_size() const { return input_size_; }

  // Trainable scalars in the synthesis backbone convolutions only (the
  // published DCITN parameter budget excludes mapping/affine/noise).
  std::int64_t backbone_conv_param_count() const {
    std::int64_t n = 0;
    for (const auto& [name, p] : params_.items()) {
      if (name.rfind("generator.backbone.", 0) == 0 &&
          name.find(".conv.") != std::string::npos) {
        n += p.size();
      }
    }
    return n;
  }

  std::int64_t total_param_count() const { return params_.scalar_count(); }

 private:
  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 5 || x.dim(1) != 1 || x.dim(2) != input_size_ ||
        x.dim(3) != input_size_ || x.dim(4) != input_size_) {
      throw ConfigError("generator: expected input [N,1," +
                        std::to_string(input_size_) + "^3], got " +
                        shape_str(x.shape()));
    }
  }

  ModelConfig cfg_;
  std::int64_t input_size_ = 0;
  ParamStore<T> params_;
  MappingNetwork<T> mapping_;
  Dcitn<T> dcitn_;
  Unet3d<T> unet_;
};

// PatchGAN critic for Wasserstein estimation: strided conv stages, no
// sigmoid anywhere, scoring the candidate volume alone (never concatenated
// with the low-dose input). Inputs are self-standardized so real and fake
// enter at a comparable intensity scale.
template <class T>
class Critic {
 public:
  explicit Critic(const ModelConfig& cfg, std::uint64_t seed)
      : slope_(static_cast<T>(0.2)) {
    std::int64_t prev = 1;
    for (std::size_t i = 0; i < cfg.critic_channels.size(); ++i) {
      const std::int64_t ch = cfg.critic_channels[i];
      const std::string sp = "critic.stage" + std::to_string(i + 1);
      Stage st;
      st.w = params_.add(
          sp + ".conv.weight",
          init_fan_in_uniform<T>({ch, prev, 4, 4, 4}, prev * 64, seed,
                                 sp + ".conv.weight"));
      st.b = params_.add(sp + ".conv.bias", Tensor<T>::zeros({ch}));
      stages_.push_back(st);
      prev = ch;
    }
    head_w_ = params_.add(
        "critic.head.conv.weight",
        init_fan_in_uniform<T>({1, prev, 3, 3, 3}, prev * 27, seed,
                               "critic.head.conv.weight"));
    head_b_ = params_.add("critic.head.conv.bias", Tensor<T>::zeros({1}));
  }

  // Unbounded per-instance score: mean over the final patch map.
  Tensor<T> forward(const Tensor<T>& v) const {
    auto h = instance_norm(v, static_cast<T>(kStatEps));
    for (const auto& st : stages_) {
      h = leaky_relu(conv3d(h, st.w, st.b, 2, 1), slope_);
    }
    h = conv3d(h, head_w_, head_b_, 1, 1);
    return instance_mean(h);
  }

  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

 private:
  struct Stage {
    Tensor<T> w, b;
  };
  ParamStore<T> params_;
  std::vector<Stage> stages_;
  Tensor<T> head_w_, head_b_;
  T slope_;
};

// Segmentation network: plain U-net over the self-standardized volume with
// one sigmoid channel per ROI.
template <class T>
class SegNet {
 public:
  SegNet(const ModelConfig& cfg, std::uint64_t seed, const std::string& prefix = "segnet")
      : rois_(cfg.rois) {
    unet_ = Unet3d<T>(params_, prefix, 1, cfg.rois, cfg, false, seed);
  }

  Tensor<T> forward(const Tensor<T>& v) const {
    RngStream unused(0);
    auto h = instance_norm(v, static_cast<T>(kStatEps));
    return unet_.forward(h, nullptr, Mode::kTest, unused, true);
  }

  std::int64_t rois() const { return rois_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

 private:
  std::int64_t rois_ = 0;
  ParamStore<T> params_;
  Unet3d<T> unet_;
};

}  // namespace sgs
