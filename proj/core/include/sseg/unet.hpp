#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "sseg/image.hpp"
#include "sseg/layers.hpp"
#include "sseg/tensor.hpp"

namespace sseg {

enum class DownsampleMode { MaxPool, StridedConv };

enum class LayerKind { conv, maxpool, transposed_conv, relu, concat, softmax };

// One node of the network plan. Constructed only through the factory helpers
// below, which pin the fixed geometries (2x2 stride-2 pooling, 4x4 stride-2
// transposed conv, same-padding convs at stride 1).
struct LayerSpec {
  LayerKind kind{};
  int in_channels = 0;
  int out_channels = 0;
  IntPair kernel{1, 1};
  IntPair stride{1, 1};
  IntPair padding{0, 0};
  std::string name;  // parameter name prefix; empty for parameterless layers
};

LayerSpec make_conv_spec(std::string name, int in_ch, int out_ch, int kernel, int stride);
LayerSpec make_maxpool_spec();
LayerSpec make_tconv_spec(std::string name, int in_ch, int out_ch);
LayerSpec make_relu_spec();
LayerSpec make_concat_spec(int skip_ch, int up_ch);
LayerSpec make_softmax_spec(int classes);

struct UNetConfig {
  int levels = 4;
  int base_channels = 64;
  DownsampleMode downsample = DownsampleMode::MaxPool;
  int num_classes = 2;
  int in_channels = 1;
};

void validate(const UNetConfig& config);

// Ordered, uniquely named tensors; the network parameters and their gradients
// share this container so they stay index-aligned.
template <typename T>
class ParameterSetT {
 public:
  struct Item {
    std::string name;
    TensorT<T> value;
  };

  void add(std::string name, TensorT<T> value);
  std::size_t count() const { return items_.size(); }
  Item& item(std::size_t i) { return items_[i]; }
  const Item& item(std::size_t i) const { return items_[i]; }
  TensorT<T>& at(const std::string& name);
  const TensorT<T>& at(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t total_scalars() const;

  template <typename U>
  ParameterSetT<U> cast() const {
    ParameterSetT<U> out;
    for (const auto& it : items_) out.add(it.name, it.value.template cast<U>());
    return out;
  }

 private:
  std::vector<Item> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

using ParameterSet = ParameterSetT<float>;
using ParameterSetD = ParameterSetT<double>;

// Full forward plan in execution order (encoder, bottleneck, decoder, head,
// softmax). Parameterized nodes carry the names used by ParameterSet and the
// checkpoint file.
std::vector<LayerSpec> unet_layer_specs(const UNetConfig& config);

// Exact number of scalars in the parameter set, as the analytic per-layer sum
// of out*in*kh*kw + out.
std::size_t param_count(const UNetConfig& config);

// Deterministic initialization: weights uniform in +-sqrt(6/(fan_in+fan_out))
// from per-parameter streams derived from seed, biases zero.
template <typename T>
ParameterSetT<T> unet_init_params(const UNetConfig& config, std::uint64_t seed);

template <typename T>
struct ConvCache {
  TensorT<T> input;
  TensorT<T> preact;  // empty when no ReLU follows (head conv)
};

template <typename T>
struct UNetContext {
  std::vector<ConvCache<T>> convs;
  std::vector<std::pair<std::vector<int>, std::vector<std::uint32_t>>> pools;
  std::vector<TensorT<T>> tconv_inputs;
  TensorT<T> probs;
};

// input: [batch, in_channels, H, W] with values already scaled to [0, 1];
// H and W must be divisible by 2^levels. Returns per-pixel class
// probabilities [batch, num_classes, H, W]. Pass ctx to enable backward.
template <typename T>
TensorT<T> unet_forward(const UNetConfig& config, const ParameterSetT<T>& params,
                        const TensorT<T>& input, UNetContext<T>* ctx = nullptr);

// grad_logits is dL/dz at the pre-softmax head output. Consumes ctx.
// Returns parameter gradients aligned with params.
template <typename T>
ParameterSetT<T> unet_backward(const UNetConfig& config, const ParameterSetT<T>& params,
                               UNetContext<T>& ctx, const TensorT<T>& grad_logits);

// Packs same-sized grayscale images into a [batch, 1, H, W] tensor scaled
// from [0,255] to [0,1], the normalization applied before the first layer.
Tensor pack_image_batch(const std::vector<const GrayImage*>& images);

extern template class ParameterSetT<float>;
extern template class ParameterSetT<double>;

}  // namespace sseg
