#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tracseg/segnet/tensor.hpp"

namespace tracseg::segnet {

struct UNetConfig {
  int in_channels = 4;
  int n_classes = 4;  // includes background
  int depth = 2;
  int base_width = 16;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static UNetConfig from_json(const nlohmann::json& j);
  bool operator==(const UNetConfig&) const = default;
};

/// Initial head bias of the background logit.
inline constexpr double kBackgroundLogitPrior = 6.0;

/// Which parameters a gradient is taken with respect to.
enum class GradScope { all, last_layer };

/// Location of one layer's parameters inside the flat parameter vector.
struct LayerSlot {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;  // 3: same-padded conv, 1: pointwise conv, 2: stride-2 transposed conv
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
  std::size_t end() const { return bias_offset + out_channels; }
};

/// Per-filter switch on the last hidden layer: 1 keeps filter k, 0 zeroes it.
using FeatureMask = std::vector<double>;

/// Everything the backward pass needs; also exposes the last hidden layer.
struct ForwardPass {
  struct ConvCache {
    Tensor input;
    std::vector<double> columns;  // im2col of input (3x3 convs only)
    Tensor output;                // post-activation output
  };
  std::vector<ConvCache> convs;
  std::vector<std::vector<int>> pool_argmax;
  std::vector<Tensor> pool_inputs;
  Tensor hidden;  // last hidden layer, before masking
  FeatureMask mask;
  Tensor logits;
  ProbabilityMap probs;
};

/// Encoder-decoder with skip connections at every depth, ReLU activations,
/// a final pointwise convolution to class logits and a per-pixel softmax.
///
/// Parameters live in one flat vector, layer by layer in definition order,
/// weights before biases. That ordering is the canonical layout used by
/// checkpoints and gradient dot products.
class UNet {
 public:
  explicit UNet(const UNetConfig& config);

  const UNetConfig& config() const noexcept { return config_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }
  void set_parameters(std::span<const double> values);
  void set_parameters(std::span<const float> values);
  std::vector<float> parameters_f32() const;

  const std::vector<LayerSlot>& layout() const noexcept { return slots_; }
  const LayerSlot& output_layer() const { return slots_.back(); }
  /// Number of feature maps K in the last hidden layer.
  int hidden_features() const noexcept { return config_.base_width; }
  /// Length of a gradient vector under `scope`.
  std::size_t gradient_size(GradScope scope) const;

  /// Throws ConfigError when H or W is not divisible by 2^depth or channels mismatch.
  void check_input(int channels, int height, int width) const;

  ForwardPass forward(const Tensor& input, const FeatureMask* mask = nullptr) const;
  ProbabilityMap predict(const Tensor& input, const FeatureMask* mask = nullptr) const;

  /// Back-propagates dL/dprobs and accumulates into `grad` (sized gradient_size(scope)).
  void backward(const ForwardPass& pass, const Tensor& d_probs, std::span<double> grad,
                GradScope scope = GradScope::all) const;

 private:
  UNetConfig config_;
  std::vector<LayerSlot> slots_;
  std::vector<double> params_;
};

}  // namespace tracseg::segnet
