#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lbkd/error.hpp"
#include "lbkd/nn_ops.hpp"
#include "lbkd/random.hpp"
#include "lbkd/tensor.hpp"

namespace lbkd {

struct LatentShape {
  std::size_t c = 0, h = 0, w = 0;
  friend bool operator==(const LatentShape&, const LatentShape&) = default;
  std::size_t extent(std::size_t axis) const { return axis == 0 ? c : axis == 1 ? h : w; }
  Shape shape() const { return {c, h, w}; }
};

inline std::string to_string(const LatentShape& s) {
  return "{" + std::to_string(s.c) + ", " + std::to_string(s.h) + ", " + std::to_string(s.w) + "}";
}

// Declarative UNet description. `padding` may be left empty, in which case it
// is derived from `target_latent` by derive_padding().
struct ModelConfig {
  std::string name = "custom";
  Extent2 input{126, 256};
  Extent2 kernel{5, 5};
  std::vector<Extent2> strides;
  std::vector<std::size_t> channels;
  std::vector<Extent2> padding;
  std::optional<LatentShape> target_latent;

  std::size_t n_blocks() const { return strides.size(); }
};

// Channel progression: `first` for block 1, doubled at each block listed in
// `doubling_blocks` (1-based), clamped to `last`; the final block always
// outputs `last`.
inline std::vector<std::size_t> channel_schedule(std::size_t n_blocks, std::size_t first,
                                                 std::size_t last,
                                                 const std::vector<std::size_t>& doubling_blocks) {
  std::vector<std::size_t> out(n_blocks);
  std::size_t c = first;
  for (std::size_t b = 1; b <= n_blocks; ++b) {
    if (b > 1 && std::find(doubling_blocks.begin(), doubling_blocks.end(), b) != doubling_blocks.end())
      c *= 2;
    out[b - 1] = std::min(c, last);
  }
  out.back() = last;
  return out;
}

namespace detail {

// Depth-first search over per-block paddings in [0, k-1], trying the
// "same"-style padding (k-1)/2 first and deviating at the latest blocks first.
inline bool search_padding(std::size_t extent, std::size_t kernel, const std::vector<std::size_t>& strides,
                           std::size_t block, std::size_t target, std::vector<std::size_t>& pads) {
  if (block == strides.size()) return extent == target;
  const long long base = static_cast<long long>((kernel - 1) / 2);
  std::vector<long long> order{base};
  for (long long d = 1; d < static_cast<long long>(kernel); ++d) {
    order.push_back(base + d);
    order.push_back(base - d);
  }
  for (long long p : order) {
    if (p < 0 || p >= static_cast<long long>(kernel)) continue;
    const std::size_t next = conv_out_extent(extent, kernel, strides[block], static_cast<std::size_t>(p));
    if (next == 0) continue;
    pads[block] = static_cast<std::size_t>(p);
    if (search_padding(next, kernel, strides, block + 1, target, pads)) return true;
  }
  return false;
}

}  // namespace detail

// Fills config.padding so the encoder ends exactly at target_latent.
inline void derive_padding(ModelConfig& cfg) {
  if (!cfg.target_latent) throw ConfigError(cfg.name + ": padding: neither padding nor target_latent given");
  const std::size_t n = cfg.n_blocks();
  std::vector<std::size_t> sh(n), sw(n), ph(n), pw(n);
  for (std::size_t i = 0; i < n; ++i) {
    sh[i] = cfg.strides[i].h;
    sw[i] = cfg.strides[i].w;
  }
  if (!detail::search_padding(cfg.input.h, cfg.kernel.h, sh, 0, cfg.target_latent->h, ph)) {
    throw ConfigError(cfg.name + ": padding: no schedule maps " + std::to_string(cfg.input.h) +
                      " rows to " + std::to_string(cfg.target_latent->h));
  }
  if (!detail::search_padding(cfg.input.w, cfg.kernel.w, sw, 0, cfg.target_latent->w, pw)) {
    throw ConfigError(cfg.name + ": padding: no schedule maps " + std::to_string(cfg.input.w) +
                      " columns to " + std::to_string(cfg.target_latent->w));
  }
  cfg.padding.resize(n);
  for (std::size_t i = 0; i < n; ++i) cfg.padding[i] = {ph[i], pw[i]};
}

// Spatial extents after each encoder block; entry 0 is the input.
inline std::vector<Extent2> encoder_extents(const ModelConfig& cfg) {
  std::vector<Extent2> ext{cfg.input};
  for (std::size_t i = 0; i < cfg.n_blocks(); ++i) {
    const auto& e = ext.back();
    const Extent2 next{conv_out_extent(e.h, cfg.kernel.h, cfg.strides[i].h, cfg.padding[i].h),
                       conv_out_extent(e.w, cfg.kernel.w, cfg.strides[i].w, cfg.padding[i].w)};
    if (next.h == 0 || next.w == 0) {
      throw ConfigError(cfg.name + ": encoder block " + std::to_string(i + 1) +
                        " produces a non-positive extent from " + to_string(e));
    }
    ext.push_back(next);
  }
  return ext;
}

inline void validate(ModelConfig& cfg) {
  const std::string& n = cfg.name;
  if (cfg.strides.empty()) throw ConfigError(n + ": strides: at least one block required");
  if (cfg.channels.size() != cfg.n_blocks())
    throw ConfigError(n + ": channels: " + std::to_string(cfg.channels.size()) + " entries for " +
                      std::to_string(cfg.n_blocks()) + " blocks");
  if (cfg.input.h == 0 || cfg.input.w == 0) throw ConfigError(n + ": input: extents must be positive");
  if (cfg.kernel.h == 0 || cfg.kernel.w == 0) throw ConfigError(n + ": kernel: extents must be positive");
  for (auto c : cfg.channels)
    if (c == 0) throw ConfigError(n + ": channels: entries must be positive");
  for (auto s : cfg.strides)
    if (s.h == 0 || s.w == 0) throw ConfigError(n + ": strides: entries must be >= 1");
  if (cfg.padding.empty()) derive_padding(cfg);
  if (cfg.padding.size() != cfg.n_blocks())
    throw ConfigError(n + ": padding: " + std::to_string(cfg.padding.size()) + " entries for " +
                      std::to_string(cfg.n_blocks()) + " blocks");
  const auto ext = encoder_extents(cfg);
  const LatentShape realized{cfg.channels.back(), ext.back().h, ext.back().w};
  if (cfg.target_latent && *cfg.target_latent != realized) {
    throw ConfigError(n + ": target_latent: declared " + to_string(*cfg.target_latent) +
                      " but the encoder realizes " + to_string(realized));
  }
}

inline ModelConfig make_config(std::string name, Extent2 input, Extent2 kernel,
                               std::vector<Extent2> strides, std::vector<std::size_t> channels,
                               LatentShape target) {
  ModelConfig cfg{std::move(name), input, kernel, std::move(strides), std::move(channels), {}, target};
  validate(cfg);
  return cfg;
}

// Architectures used in the experiments. Full-size: t1, t2 (teachers), s1, s2
// (students). Micro variants keep the same shape relationships at desk scale:
// mt1/mt2 preserve time and differ in latent width, ms1 keeps time, ms2
// downsamples it. `tiny` is an 8x16-input model for gradient checks.
inline ModelConfig preset(const std::string& name) {
  const Extent2 in{126, 256};
  auto repeat = [](Extent2 s, std::size_t n) { return std::vector<Extent2>(n, s); };
  if (name == "t1") {
    return make_config("t1", in, {5, 5}, repeat({1, 2}, 6), channel_schedule(6, 7, 128, {2, 3, 4, 5, 6}),
                       {128, 126, 5});
  }
  if (name == "t2") {
    return make_config("t2", in, {5, 5}, {{1, 2}, {1, 1}, {1, 2}, {1, 1}, {1, 2}, {1, 1}, {1, 2}},
                       channel_schedule(7, 16, 128, {2, 4, 6}), {128, 126, 17});
  }
  if (name == "s1") {
    return make_config("s1", in, {3, 3}, repeat({1, 2}, 6), channel_schedule(6, 2, 32, {2, 3, 4, 5, 6}),
                       {32, 126, 5});
  }
  if (name == "s2") {
    return make_config("s2", in, {3, 3}, repeat({2, 2}, 6), channel_schedule(6, 2, 32, {2, 3, 4, 5, 6}),
                       {32, 2, 5});
  }
  if (name == "mt1") {
    return make_config("mt1", in, {5, 5}, repeat({1, 2}, 4), channel_schedule(4, 4, 16, {2, 3}),
                       {16, 126, 16});
  }
  if (name == "mt2") {
    return make_config("mt2", in, {5, 5}, {{1, 2}, {1, 1}, {1, 2}, {1, 2}, {1, 2}},
                       channel_schedule(5, 4, 16, {2, 4}), {16, 126, 17});
  }
  if (name == "ms1") {
    return make_config("ms1", in, {3, 3}, repeat({1, 2}, 4), channel_schedule(4, 2, 8, {2, 3, 4}),
                       {8, 126, 16});
  }
  if (name == "ms2") {
    return make_config("ms2", in, {3, 3}, repeat({2, 2}, 4), channel_schedule(4, 2, 8, {2, 3, 4}),
                       {8, 8, 16});
  }
  if (name == "tiny") {
    return make_config("tiny", {8, 16}, {3, 3}, repeat({1, 2}, 2), {2, 3}, {3, 8, 4});
  }
  throw ConfigError("model: unknown preset '" + name + "' (t1, t2, s1, s2, mt1, mt2, ms1, ms2, tiny)");
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"t1", "t2", "s1", "s2", "mt1", "mt2", "ms1", "ms2", "tiny"};
  return names;
}

// --- JSON -----------------------------------------------------------------

inline void to_json(nlohmann::json& j, const Extent2& e) { j = nlohmann::json::array({e.h, e.w}); }
inline void from_json(const nlohmann::json& j, Extent2& e) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("expected a [rows, cols] pair, got " + j.dump());
  e = {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}
inline void to_json(nlohmann::json& j, const LatentShape& s) { j = nlohmann::json::array({s.c, s.h, s.w}); }
inline void from_json(const nlohmann::json& j, LatentShape& s) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a [C, H, W] triple, got " + j.dump());
  s = {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  nlohmann::json j{{"name", cfg.name},         {"input", cfg.input},       {"kernel", cfg.kernel},
                   {"strides", cfg.strides},   {"channels", cfg.channels}, {"padding", cfg.padding}};
  if (cfg.target_latent) j["target_latent"] = *cfg.target_latent;
  return j;
}

// A preset name (string) or a full object. Errors name the offending field.
inline ModelConfig config_from_json(const nlohmann::json& j, const std::string& where = "model") {
  if (j.is_string()) return preset(j.get<std::string>());
  if (!j.is_object()) throw ConfigError(where + ": expected a preset name or an object");
  ModelConfig cfg;
  auto field = [&](const char* key, auto& out, bool required) {
    if (!j.contains(key)) {
      if (required) throw ConfigError(where + "." + key + ": missing required field");
      return;
    }
    try {
      j.at(key).get_to(out);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where + "." + key + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(where + "." + key + ": " + e.what());
    }
  };
  field("name", cfg.name, false);
  field("input", cfg.input, false);
  field("kernel", cfg.kernel, true);
  field("strides", cfg.strides, true);
  field("channels", cfg.channels, true);
  field("padding", cfg.padding, false);
  if (j.contains("target_latent")) {
    LatentShape t;
    field("target_latent", t, true);
    cfg.target_latent = t;
  }
  validate(cfg);
  return cfg;
}

// --- Parameters -----------------------------------------------------------

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline std::size_t count_params(const std::vector<NamedTensor>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

namespace detail {

inline Tensor uniform_tensor(const Shape& shape, double bound, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor(shape, std::move(v), true);
}

}  // namespace detail

// One encoder or decoder block: (transposed) convolution, optional instance
// norm, activation.
struct UNetBlock {
  bool transposed = false;
  bool normalized = true;
  Activation act = Activation::leaky_relu;
  Extent2 stride, padding, output_padding;
  Tensor weight, bias, gamma, beta;

  Tensor forward(const Tensor& x) const {
    Tensor y = transposed ? conv2d_transpose(x, weight, bias, stride, padding, output_padding)
                          : conv2d(x, weight, bias, stride, padding);
    if (normalized) y = instance_norm(y, gamma, beta);
    return activation(act, y);
  }

  std::size_t in_channels() const { return weight.dim(transposed ? 0 : 1); }
  std::size_t out_channels() const { return weight.dim(transposed ? 1 : 0); }
};

// UNet mask estimator. The encoder maps a [T, F] magnitude to the latent
// [C, H, W]; the decoder mirrors it, concatenating each encoder output
// except the last onto its input along channels, and ends in a sigmoid.
class UNetModel {
 public:
  struct Output {
    Tensor mask;    // [T, F], values in (0, 1)
    Tensor latent;  // [C, H, W]
  };

  UNetModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    validate(cfg_);
    const auto ext = encoder_extents(cfg_);
    Rng rng(derive_seed({seed, 0x756e6574ULL}));
    const std::size_t n = cfg_.n_blocks();
    const Extent2 k = cfg_.kernel;
    const double leaky_gain = 6.0 / (1.0 + kLeakyReluSlope * kLeakyReluSlope);

    std::size_t c_in = 1;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c_out = cfg_.channels[i];
      const double fan_in = static_cast<double>(c_in * k.h * k.w);
      UNetBlock b;
      b.stride = cfg_.strides[i];
      b.padding = cfg_.padding[i];
      b.weight = detail::uniform_tensor({c_out, c_in, k.h, k.w}, std::sqrt(leaky_gain / fan_in), rng);
      b.bias = Tensor::zeros({c_out}, true);
      b.gamma = Tensor::full({c_out}, 1.0, true);
      b.beta = Tensor::zeros({c_out}, true);
      encoder_.push_back(std::move(b));
      c_in = c_out;
    }
    // Decoder block d (0-based) mirrors encoder block n-1-d and restores that
    // block's input extent.
    for (std::size_t d = 0; d < n; ++d) {
      const std::size_t mirror = n - 1 - d;
      const std::size_t in_ch = d == 0 ? cfg_.channels.back()
                                       : decoder_.back().out_channels() + cfg_.channels[mirror];
      const std::size_t out_ch = mirror == 0 ? 1 : cfg_.channels[mirror - 1];
      const Extent2 from = ext[mirror + 1], to = ext[mirror];
      UNetBlock b;
      b.transposed = true;
      b.stride = cfg_.strides[mirror];
      b.padding = cfg_.padding[mirror];
      // Always in [0, stride - 1] for a mirrored conv.
      b.output_padding = {to.h - conv_transpose_out_extent(from.h, k.h, b.stride.h, b.padding.h, 0),
                          to.w - conv_transpose_out_extent(from.w, k.w, b.stride.w, b.padding.w, 0)};
      const double fan_in = static_cast<double>(in_ch * k.h * k.w) /
                            static_cast<double>(b.stride.h * b.stride.w);
      const bool last = d + 1 == n;
      b.normalized = !last;
      b.act = last ? Activation::sigmoid : Activation::leaky_relu;
      const double gain = last ? 3.0 : leaky_gain;
      b.weight = detail::uniform_tensor({in_ch, out_ch, k.h, k.w}, std::sqrt(gain / fan_in), rng);
      b.bias = Tensor::zeros({out_ch}, true);
      if (!last) {
        b.gamma = Tensor::full({out_ch}, 1.0, true);
        b.beta = Tensor::zeros({out_ch}, true);
      }
      decoder_.push_back(std::move(b));
    }
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<UNetBlock>& encoder() const { return encoder_; }
  const std::vector<UNetBlock>& decoder() const { return decoder_; }

  LatentShape latent_shape() const {
    const auto ext = encoder_extents(cfg_);
    return {cfg_.channels.back(), ext.back().h, ext.back().w};
  }

  Output forward(const Tensor& noisy_mag) const {
    if (noisy_mag.rank() != 2 || noisy_mag.dim(0) != cfg_.input.h || noisy_mag.dim(1) != cfg_.input.w) {
      throw ShapeError("model " + cfg_.name + " expects a " + std::to_string(cfg_.input.h) + "x" +
                       std::to_string(cfg_.input.w) + " magnitude, got " + to_string(noisy_mag.shape()));
    }
    std::vector<Tensor> skips;
    Tensor x = noisy_mag.reshape({1, cfg_.input.h, cfg_.input.w});
    for (const auto& block : encoder_) {
      x = block.forward(x);
      skips.push_back(x);
    }
    Tensor latent = x;
    const std::size_t n = encoder_.size();
    for (std::size_t d = 0; d < n; ++d) {
      if (d > 0) x = concat({x, skips[n - 1 - d]});
      x = decoder_[d].forward(x);
    }
    return {x.reshape({cfg_.input.h, cfg_.input.w}), latent};
  }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    auto add = [&out](const std::string& prefix, const UNetBlock& b) {
      out.push_back({prefix + ".weight", b.weight});
      out.push_back({prefix + ".bias", b.bias});
      if (b.normalized) {
        out.push_back({prefix + ".gamma", b.gamma});
        out.push_back({prefix + ".beta", b.beta});
      }
    };
    for (std::size_t i = 0; i < encoder_.size(); ++i) add("encoder." + std::to_string(i + 1), encoder_[i]);
    for (std::size_t i = 0; i < decoder_.size(); ++i) add("decoder." + std::to_string(i + 1), decoder_[i]);
    return out;
  }

  std::vector<NamedTensor> encoder_parameters() const {
    auto all = parameters();
    std::erase_if(all, [](const NamedTensor& p) { return p.name.rfind("encoder.", 0) != 0; });
    return all;
  }

  std::vector<NamedTensor> decoder_parameters() const {
    auto all = parameters();
    std::erase_if(all, [](const NamedTensor& p) { return p.name.rfind("decoder.", 0) != 0; });
    return all;
  }

  void set_trainable(bool on) {
    for (auto& p : parameters()) p.tensor.set_requires_grad(on);
  }

 private:
  ModelConfig cfg_;
  std::vector<UNetBlock> encoder_;
  std::vector<UNetBlock> decoder_;
};

inline std::size_t count_params(const UNetModel& model) { return count_params(model.parameters()); }

// Arithmetic cost of one forward pass in millions of operations. A
// multiply-accumulate counts as 2 operations; bias additions count 1 per
// output element. Normalization and activations are not counted.
inline double count_mops(const UNetModel& model) {
  const auto& cfg = model.config();
  const auto ext = encoder_extents(cfg);
  const double kk = static_cast<double>(cfg.kernel.h * cfg.kernel.w);
  double ops = 0.0;
  const std::size_t n = cfg.n_blocks();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = model.encoder()[i];
    const double out_px = static_cast<double>(ext[i + 1].h * ext[i + 1].w);
    ops += out_px * static_cast<double>(b.out_channels()) *
           (2.0 * static_cast<double>(b.in_channels()) * kk + 1.0);
  }
  for (std::size_t d = 0; d < n; ++d) {
    const auto& b = model.decoder()[d];
    const std::size_t mirror = n - 1 - d;
    const double in_px = static_cast<double>(ext[mirror + 1].h * ext[mirror + 1].w);
    const double out_px = static_cast<double>(ext[mirror].h * ext[mirror].w);
    ops += 2.0 * in_px * static_cast<double>(b.in_channels() * b.out_channels()) * kk +
           out_px * static_cast<double>(b.out_channels());
  }
  return ops / 1e6;
}

// --- Linear bottleneck ------------------------------------------------------

enum class LatentAxis : std::size_t { C = 0, H = 1, W = 2 };

inline std::string axes_label(const std::vector<LatentAxis>& axes) {
  std::string s = "(";
  for (std::size_t i = 0; i < axes.size(); ++i) {
    s += i ? ", " : "";
    s += "CHW"[static_cast<std::size_t>(axes[i])];
  }
  return s + ")";
}

// Stack of affine maps, one per listed axis, applied in C, H, W order with no
// normalization or nonlinearity in between.
class BottleneckAdapter {
 public:
  struct AxisMap {
    LatentAxis axis;
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]
  };

  BottleneckAdapter() = default;

  BottleneckAdapter(LatentShape teacher, LatentShape student, std::vector<LatentAxis> axes,
                    std::uint64_t seed)
      : from_(teacher), to_(student) {
    for (auto s : {teacher, student}) {
      if (s.c == 0 || s.h == 0 || s.w == 0) throw ShapeError("bottleneck: latent shapes must be positive");
    }
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    for (std::size_t a = 0; a < 3; ++a) {
      const bool mapped = std::find(axes.begin(), axes.end(), static_cast<LatentAxis>(a)) != axes.end();
      if (!mapped && teacher.extent(a) != student.extent(a)) {
        throw ShapeError("bottleneck " + axes_label(axes) + " cannot map teacher latent " +
                         to_string(teacher) + " to student latent " + to_string(student) +
                         ": axis " + std::string(1, "CHW"[a]) + " differs and is not mapped");
      }
    }
    Rng rng(derive_seed({seed, 0x626f74746cULL}));
    for (auto axis : axes) {
      const auto a = static_cast<std::size_t>(axis);
      const std::size_t in = teacher.extent(a), out = student.extent(a);
      const double bound = std::sqrt(3.0 / static_cast<double>(in));
      maps_.push_back({axis, detail::uniform_tensor({out, in}, bound, rng), Tensor::zeros({out}, true)});
    }
  }

  LatentShape input_shape() const { return from_; }
  LatentShape output_shape() const { return to_; }
  const std::vector<AxisMap>& maps() const { return maps_; }

  std::vector<LatentAxis> axes() const {
    std::vector<LatentAxis> out;
    for (const auto& m : maps_) out.push_back(m.axis);
    return out;
  }

  Tensor forward(const Tensor& teacher_latent) const {
    if (teacher_latent.shape() != from_.shape()) {
      throw ShapeError("bottleneck expects teacher latent " + to_string(from_) + ", got " +
                       to_string(teacher_latent.shape()));
    }
    Tensor x = teacher_latent;
    for (const auto& m : maps_) x = axis_linear(x, m.weight, m.bias, static_cast<std::size_t>(m.axis));
    return x;
  }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    for (const auto& m : maps_) {
      const std::string prefix = std::string("bottleneck.") + "CHW"[static_cast<std::size_t>(m.axis)];
      out.push_back({prefix + ".weight", m.weight});
      out.push_back({prefix + ".bias", m.bias});
    }
    return out;
  }

 private:
  LatentShape from_, to_;
  std::vector<AxisMap> maps_;
};

// Axes whose extents differ between the two latents, in C, H, W order.
inline std::vector<LatentAxis> mismatched_axes(LatentShape teacher, LatentShape student) {
  std::vector<LatentAxis> axes;
  for (std::size_t a = 0; a < 3; ++a)
    if (teacher.extent(a) != student.extent(a)) axes.push_back(static_cast<LatentAxis>(a));
  return axes;
}

inline BottleneckAdapter build_bottleneck(LatentShape teacher, LatentShape student, std::uint64_t seed = 0) {
  return BottleneckAdapter(teacher, student, mismatched_axes(teacher, student), seed);
}

// Distillation scenarios: which axes the adapter maps.
//   t1s1 -> (C), t1s2 -> (C, H), t2s2 -> (C, H, W)
inline std::vector<LatentAxis> scenario_axes(const std::string& scenario) {
  if (scenario == "t1s1") return {LatentAxis::C};
  if (scenario == "t1s2") return {LatentAxis::C, LatentAxis::H};
  if (scenario == "t2s2") return {LatentAxis::C, LatentAxis::H, LatentAxis::W};
  throw ConfigError("scenario: unknown value '" + scenario + "' (t1s1, t1s2, t2s2)");
}

}  // namespace lbkd
