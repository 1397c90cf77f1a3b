#include "sseg/unet.hpp"

#include <cmath>
#include <utility>

#include "sseg/rng.hpp"

namespace sseg {

LayerSpec make_conv_spec(std::string name, int in_ch, int out_ch, int kernel, int stride) {
  LayerSpec s;
  s.kind = LayerKind::conv;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.kernel = {kernel, kernel};
  s.stride = {stride, stride};
  // Same-padding at stride 1; the stride-2 downsampling conv keeps pad 1 so
  // even inputs halve exactly.
  s.padding = {kernel / 2, kernel / 2};
  s.name = std::move(name);
  return s;
}

LayerSpec make_maxpool_spec() {
  LayerSpec s;
  s.kind = LayerKind::maxpool;
  s.kernel = {2, 2};
  s.stride = {2, 2};
  return s;
}

LayerSpec make_tconv_spec(std::string name, int in_ch, int out_ch) {
  LayerSpec s;
  s.kind = LayerKind::transposed_conv;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.kernel = {4, 4};
  s.stride = {2, 2};
  s.padding = {1, 1};
  s.name = std::move(name);
  return s;
}

LayerSpec make_relu_spec() {
  LayerSpec s;
  s.kind = LayerKind::relu;
  return s;
}

LayerSpec make_concat_spec(int skip_ch, int up_ch) {
  LayerSpec s;
  s.kind = LayerKind::concat;
  s.in_channels = skip_ch;
  s.out_channels = skip_ch + up_ch;
  return s;
}

LayerSpec make_softmax_spec(int classes) {
  LayerSpec s;
  s.kind = LayerKind::softmax;
  s.in_channels = classes;
  s.out_channels = classes;
  return s;
}

void validate(const UNetConfig& config) {
  if (config.levels < 1) throw config_error("unet levels must be >= 1");
  if (config.base_channels < 1) throw config_error("unet base_channels must be >= 1");
  if (config.num_classes < 2) throw config_error("unet num_classes must be >= 2");
  if (config.in_channels < 1) throw config_error("unet in_channels must be >= 1");
}

template <typename T>
void ParameterSetT<T>::add(std::string name, TensorT<T> value) {
  if (index_.count(name)) throw config_error("duplicate parameter name: " + name);
  index_.emplace(name, items_.size());
  items_.push_back({std::move(name), std::move(value)});
}

template <typename T>
TensorT<T>& ParameterSetT<T>::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw config_error("unknown parameter: " + name);
  return items_[it->second].value;
}

template <typename T>
const TensorT<T>& ParameterSetT<T>::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw config_error("unknown parameter: " + name);
  return items_[it->second].value;
}

template <typename T>
std::size_t ParameterSetT<T>::total_scalars() const {
  std::size_t n = 0;
  for (const auto& it : items_) n += it.value.size();
  return n;
}

template class ParameterSetT<float>;
template class ParameterSetT<double>;

std::vector<LayerSpec> unet_layer_specs(const UNetConfig& config) {
  validate(config);
  std::vector<LayerSpec> specs;
  int prev = config.in_channels;
  for (int i = 0; i < config.levels; ++i) {
    const int c = config.base_channels << i;
    const std::string enc = "enc" + std::to_string(i);
    specs.push_back(make_conv_spec(enc + ".conv1", prev, c, 3, 1));
    specs.push_back(make_relu_spec());
    specs.push_back(make_conv_spec(enc + ".conv2", c, c, 3, 1));
    specs.push_back(make_relu_spec());
    if (config.downsample == DownsampleMode::MaxPool) {
      specs.push_back(make_maxpool_spec());
    } else {
      specs.push_back(make_conv_spec("down" + std::to_string(i), c, c, 3, 2));
      specs.push_back(make_relu_spec());
    }
    prev = c;
  }
  const int mid = config.base_channels << config.levels;
  specs.push_back(make_conv_spec("mid.conv1", prev, mid, 3, 1));
  specs.push_back(make_relu_spec());
  specs.push_back(make_conv_spec("mid.conv2", mid, mid, 3, 1));
  specs.push_back(make_relu_spec());
  prev = mid;
  for (int i = config.levels - 1; i >= 0; --i) {
    const int c = config.base_channels << i;
    const std::string dec = "dec" + std::to_string(i);
    specs.push_back(make_tconv_spec(dec + ".up", prev, c));
    specs.push_back(make_concat_spec(c, c));
    specs.push_back(make_conv_spec(dec + ".conv1", 2 * c, c, 3, 1));
    specs.push_back(make_relu_spec());
    specs.push_back(make_conv_spec(dec + ".conv2", c, c, 3, 1));
    specs.push_back(make_relu_spec());
    prev = c;
  }
  specs.push_back(make_conv_spec("head", prev, config.num_classes, 1, 1));
  specs.push_back(make_softmax_spec(config.num_classes));
  return specs;
}

std::size_t param_count(const UNetConfig& config) {
  validate(config);
  auto conv_params = [](int in, int out, int k) {
    return static_cast<std::size_t>(out) * in * k * k + static_cast<std::size_t>(out);
  };
  std::size_t total = 0;
  int prev = config.in_channels;
  for (int i = 0; i < config.levels; ++i) {
    const int c = config.base_channels << i;
    total += conv_params(prev, c, 3) + conv_params(c, c, 3);
    if (config.downsample == DownsampleMode::StridedConv) total += conv_params(c, c, 3);
    prev = c;
  }
  const int mid = config.base_channels << config.levels;
  total += conv_params(prev, mid, 3) + conv_params(mid, mid, 3);
  prev = mid;
  for (int i = config.levels - 1; i >= 0; --i) {
    const int c = config.base_channels << i;
    total += conv_params(prev, c, 4);  // tconv [in, out, 4, 4] plus out biases
    total += conv_params(2 * c, c, 3) + conv_params(c, c, 3);
    prev = c;
  }
  total += conv_params(prev, config.num_classes, 1);
  return total;
}

template <typename T>
ParameterSetT<T> unet_init_params(const UNetConfig& config, std::uint64_t seed) {
  ParameterSetT<T> params;
  std::uint64_t stream = 0;
  for (const LayerSpec& spec : unet_layer_specs(config)) {
    if (spec.kind != LayerKind::conv && spec.kind != LayerKind::transposed_conv) continue;
    const int kh = spec.kernel.h, kw = spec.kernel.w;
    const double fan_in = static_cast<double>(spec.in_channels) * kh * kw;
    const double fan_out = static_cast<double>(spec.out_channels) * kh * kw;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    const std::vector<int> wshape =
        spec.kind == LayerKind::conv
            ? std::vector<int>{spec.out_channels, spec.in_channels, kh, kw}
            : std::vector<int>{spec.in_channels, spec.out_channels, kh, kw};
    TensorT<T> w(wshape);
    Rng rng(derive_seed(seed, stream++));
    for (auto& v : w) v = static_cast<T>(rng.uniform_symmetric(limit));
    params.add(spec.name + ".weight", std::move(w));
    params.add(spec.name + ".bias", TensorT<T>({spec.out_channels}, T(0)));
  }
  return params;
}

template ParameterSetT<float> unet_init_params(const UNetConfig&, std::uint64_t);
template ParameterSetT<double> unet_init_params(const UNetConfig&, std::uint64_t);

namespace {

template <typename T>
void validate_params(const UNetConfig& config, const ParameterSetT<T>& params) {
  std::size_t expected = 0;
  for (const LayerSpec& spec : unet_layer_specs(config)) {
    if (spec.kind != LayerKind::conv && spec.kind != LayerKind::transposed_conv) continue;
    expected += 2;
    if (!params.has(spec.name + ".weight") || !params.has(spec.name + ".bias"))
      throw config_error("parameter set does not match config: missing " + spec.name);
    const auto& w = params.at(spec.name + ".weight");
    const std::vector<int> want =
        spec.kind == LayerKind::conv
            ? std::vector<int>{spec.out_channels, spec.in_channels, spec.kernel.h, spec.kernel.w}
            : std::vector<int>{spec.in_channels, spec.out_channels, spec.kernel.h, spec.kernel.w};
    if (w.shape() != want)
      throw config_error("parameter " + spec.name + ".weight has shape " + shape_string(w) +
                         ", config expects different");
  }
  if (params.count() != expected)
    throw config_error("parameter set does not match config: count " +
                       std::to_string(params.count()) + " vs expected " +
                       std::to_string(expected));
}

}  // namespace

template <typename T>
TensorT<T> unet_forward(const UNetConfig& config, const ParameterSetT<T>& params,
                        const TensorT<T>& input, UNetContext<T>* ctx) {
  validate(config);
  if (input.rank() != 4) throw shape_error("unet input must be [batch, ch, H, W]");
  if (input.dim(1) != config.in_channels)
    throw shape_error("unet input has " + std::to_string(input.dim(1)) + " channels, config has " +
                      std::to_string(config.in_channels));
  const int div = 1 << config.levels;
  if (input.dim(2) % div != 0 || input.dim(3) % div != 0)
    throw shape_error("unet input spatial dims " + shape_string(input) +
                      " must be divisible by " + std::to_string(div));
  validate_params(config, params);

  auto conv_block = [&](TensorT<T> x, const std::string& name, IntPair stride, IntPair pad,
                        bool with_relu) {
    TensorT<T> z = conv2d_forward(x, params.at(name + ".weight"), params.at(name + ".bias"),
                                  stride, pad);
    TensorT<T> out = with_relu ? relu_forward(z) : z;
    if (ctx) ctx->convs.push_back({std::move(x), with_relu ? std::move(z) : TensorT<T>{}});
    return out;
  };

  std::vector<TensorT<T>> skips;
  TensorT<T> x = input;
  for (int i = 0; i < config.levels; ++i) {
    const std::string enc = "enc" + std::to_string(i);
    x = conv_block(std::move(x), enc + ".conv1", {1, 1}, {1, 1}, true);
    x = conv_block(std::move(x), enc + ".conv2", {1, 1}, {1, 1}, true);
    skips.push_back(x);
    if (config.downsample == DownsampleMode::MaxPool) {
      auto pooled = maxpool2x2_forward(x);
      if (ctx) ctx->pools.emplace_back(x.shape(), std::move(pooled.argmax));
      x = std::move(pooled.output);
    } else {
      x = conv_block(std::move(x), "down" + std::to_string(i), {2, 2}, {1, 1}, true);
    }
  }
  x = conv_block(std::move(x), "mid.conv1", {1, 1}, {1, 1}, true);
  x = conv_block(std::move(x), "mid.conv2", {1, 1}, {1, 1}, true);

  for (int i = config.levels - 1; i >= 0; --i) {
    const std::string dec = "dec" + std::to_string(i);
    TensorT<T> up;
    if (ctx) {
      ctx->tconv_inputs.push_back(std::move(x));
      up = tconv4x4s2_forward(ctx->tconv_inputs.back(), params.at(dec + ".up.weight"),
                              params.at(dec + ".up.bias"));
    } else {
      up = tconv4x4s2_forward(x, params.at(dec + ".up.weight"), params.at(dec + ".up.bias"));
    }
    x = concat_channels(skips[static_cast<std::size_t>(i)], up);
    x = conv_block(std::move(x), dec + ".conv1", {1, 1}, {1, 1}, true);
    x = conv_block(std::move(x), dec + ".conv2", {1, 1}, {1, 1}, true);
  }

  TensorT<T> logits = conv_block(std::move(x), "head", {1, 1}, {0, 0}, false);
  TensorT<T> probs = softmax_channels(logits);
  if (ctx) ctx->probs = probs;
  return probs;
}

template <typename T>
ParameterSetT<T> unet_backward(const UNetConfig& config, const ParameterSetT<T>& params,
                               UNetContext<T>& ctx, const TensorT<T>& grad_logits) {
  validate(config);
  validate_params(config, params);

  ParameterSetT<T> grads;
  for (std::size_t i = 0; i < params.count(); ++i)
    grads.add(params.item(i).name, TensorT<T>(params.item(i).value.shape(), T(0)));

  auto conv_bwd = [&](const std::string& name, IntPair stride, IntPair pad, TensorT<T> grad_out,
                      bool with_relu) {
    if (ctx.convs.empty()) throw config_error("unet backward: context exhausted at " + name);
    ConvCache<T> cache = std::move(ctx.convs.back());
    ctx.convs.pop_back();
    TensorT<T> grad_z =
        with_relu ? relu_backward(cache.preact, grad_out) : std::move(grad_out);
    auto g = conv2d_backward(cache.input, params.at(name + ".weight"), stride, pad, grad_z);
    grads.at(name + ".weight") = std::move(g.weight);
    grads.at(name + ".bias") = std::move(g.bias);
    return std::move(g.input);
  };

  TensorT<T> g = conv_bwd("head", {1, 1}, {0, 0}, grad_logits, false);

  std::vector<TensorT<T>> skip_grads(static_cast<std::size_t>(config.levels));
  for (int i = 0; i < config.levels; ++i) {
    const std::string dec = "dec" + std::to_string(i);
    const int c = config.base_channels << i;
    g = conv_bwd(dec + ".conv2", {1, 1}, {1, 1}, std::move(g), true);
    g = conv_bwd(dec + ".conv1", {1, 1}, {1, 1}, std::move(g), true);
    auto [skip_grad, up_grad] = split_channels(g, c);
    skip_grads[static_cast<std::size_t>(i)] = std::move(skip_grad);
    if (ctx.tconv_inputs.empty()) throw config_error("unet backward: missing tconv input");
    TensorT<T> tin = std::move(ctx.tconv_inputs.back());
    ctx.tconv_inputs.pop_back();
    auto tg = tconv4x4s2_backward(tin, params.at(dec + ".up.weight"), up_grad);
    grads.at(dec + ".up.weight") = std::move(tg.weight);
    grads.at(dec + ".up.bias") = std::move(tg.bias);
    g = std::move(tg.input);
  }

  g = conv_bwd("mid.conv2", {1, 1}, {1, 1}, std::move(g), true);
  g = conv_bwd("mid.conv1", {1, 1}, {1, 1}, std::move(g), true);

  for (int i = config.levels - 1; i >= 0; --i) {
    const std::string enc = "enc" + std::to_string(i);
    if (config.downsample == DownsampleMode::MaxPool) {
      if (ctx.pools.empty()) throw config_error("unet backward: missing pool context");
      auto [in_shape, argmax] = std::move(ctx.pools.back());
      ctx.pools.pop_back();
      g = maxpool2x2_backward(in_shape, argmax, g);
    } else {
      g = conv_bwd("down" + std::to_string(i), {2, 2}, {1, 1}, std::move(g), true);
    }
    g = elementwise(g, skip_grads[static_cast<std::size_t>(i)],
                    [](T a, T b) { return a + b; });
    g = conv_bwd(enc + ".conv2", {1, 1}, {1, 1}, std::move(g), true);
    g = conv_bwd(enc + ".conv1", {1, 1}, {1, 1}, std::move(g), true);
  }
  return grads;
}

template TensorT<float> unet_forward(const UNetConfig&, const ParameterSetT<float>&,
                                     const TensorT<float>&, UNetContext<float>*);
template TensorT<double> unet_forward(const UNetConfig&, const ParameterSetT<double>&,
                                      const TensorT<double>&, UNetContext<double>*);
template ParameterSetT<float> unet_backward(const UNetConfig&, const ParameterSetT<float>&,
                                            UNetContext<float>&, const TensorT<float>&);
template ParameterSetT<double> unet_backward(const UNetConfig&, const ParameterSetT<double>&,
                                             UNetContext<double>&, const TensorT<double>&);

Tensor pack_image_batch(const std::vector<const GrayImage*>& images) {
  if (images.empty()) throw shape_error("pack_image_batch: empty batch");
  const int w = images[0]->width, h = images[0]->height;
  for (const auto* img : images)
    if (img->width != w || img->height != h)
      throw shape_error("pack_image_batch: mismatched image sizes");
  Tensor out({static_cast<int>(images.size()), 1, h, w});
  float* dst = out.data();
  for (const auto* img : images)
    for (std::uint8_t p : img->pixels) *dst++ = static_cast<float>(p) * (1.0f / 255.0f);
  return out;
}

}  // namespace sseg
