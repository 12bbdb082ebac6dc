#include "tracseg/segnet/unet.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Core>
#include <fmt/format.h>

#include "tracseg/common/errors.hpp"

namespace tracseg::segnet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

// [Cin*9, H*W] patch matrix for a same-padded 3x3 convolution.
std::vector<double> im2col(const Tensor& in) {
  const int h = in.height, w = in.width;
  const std::size_t hw = in.plane();
  std::vector<double> cols(static_cast<std::size_t>(in.channels) * 9 * hw, 0.0);
  for (int c = 0; c < in.channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = cols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const double* src = in.values.data() + c * hw + static_cast<std::size_t>(sy) * w;
          double* dst = row + static_cast<std::size_t>(y) * w;
          const int x_lo = std::max(0, 1 - kx), x_hi = std::min(w, w + 1 - kx);
          for (int x = x_lo; x < x_hi; ++x) dst[x] = src[x + kx - 1];
        }
      }
    }
  }
  return cols;
}

void col2im(const std::vector<double>& cols, Tensor& out) {
  const int h = out.height, w = out.width;
  const std::size_t hw = out.plane();
  for (int c = 0; c < out.channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = cols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          double* dst = out.values.data() + c * hw + static_cast<std::size_t>(sy) * w;
          const double* src = row + static_cast<std::size_t>(y) * w;
          const int x_lo = std::max(0, 1 - kx), x_hi = std::min(w, w + 1 - kx);
          for (int x = x_lo; x < x_hi; ++x) dst[x + kx - 1] += src[x];
        }
      }
    }
  }
}

void relu_inplace(Tensor& t) {
  for (auto& v : t.values) v = v > 0.0 ? v : 0.0;
}

void relu_backward(const Tensor& out, Tensor& grad) {
  for (std::size_t i = 0; i < grad.values.size(); ++i)
    if (out.values[i] <= 0.0) grad.values[i] = 0.0;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor out(a.channels + b.channels, a.height, a.width);
  std::copy(a.values.begin(), a.values.end(), out.values.begin());
  std::copy(b.values.begin(), b.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

}  // namespace

void UNetConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be positive");
  if (n_classes < 2) throw ConfigError("n_classes must be at least 2 (background plus one class)");
  if (depth < 1) throw ConfigError("depth must be at least 1");
  if (base_width < 4) throw ConfigError("base_width must be at least 4");
}

nlohmann::json UNetConfig::to_json() const {
  return {{"in_channels", in_channels}, {"n_classes", n_classes}, {"depth", depth},
          {"base_width", base_width},   {"seed", seed}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
  UNetConfig c;
  c.in_channels = j.at("in_channels");
  c.n_classes = j.at("n_classes");
  c.depth = j.at("depth");
  c.base_width = j.at("base_width");
  c.seed = j.at("seed");
  c.validate();
  return c;
}

UNet::UNet(const UNetConfig& config) : config_(config) {
  config_.validate();
  std::size_t offset = 0;
  auto add = [&](std::string name, int cin, int cout, int kernel) {
    LayerSlot s{std::move(name), cin, cout, kernel, offset, 0};
    s.bias_offset = offset + s.weight_count();
    offset = s.end();
    slots_.push_back(std::move(s));
  };
  const int w = config_.base_width;
  int cin = config_.in_channels;
  for (int l = 0; l < config_.depth; ++l) {
    const int width = w << l;
    add(fmt::format("enc{}.conv1", l), cin, width, 3);
    add(fmt::format("enc{}.conv2", l), width, width, 3);
    cin = width;
  }
  const int bottom = w << config_.depth;
  add("bottleneck.conv1", cin, bottom, 3);
  add("bottleneck.conv2", bottom, bottom, 3);
  cin = bottom;
  for (int l = config_.depth - 1; l >= 0; --l) {
    const int width = w << l;
    add(fmt::format("dec{}.up", l), cin, width, 2);
    add(fmt::format("dec{}.conv1", l), 2 * width, width, 3);
    add(fmt::format("dec{}.conv2", l), width, width, 3);
    cin = width;
  }
  add("head", w, config_.n_classes, 1);

  params_.assign(offset, 0.0);
  std::mt19937_64 rng(config_.seed);
  for (const auto& s : slots_) {
    const int fan_in = s.kernel == 2 ? s.in_channels : s.in_channels * s.kernel * s.kernel;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (std::size_t i = 0; i < s.weight_count(); ++i) params_[s.weight_offset + i] = dist(rng);
  }
  // The loss never rewards background directly, so without a prior a
  // foreground channel can take over the background early and saturate there.
  params_[output_layer().bias_offset] = kBackgroundLogitPrior;
}

void UNet::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size())
    throw ContractError(fmt::format("parameter count mismatch: model has {}, got {}", params_.size(), values.size()));
  std::copy(values.begin(), values.end(), params_.begin());
}

void UNet::set_parameters(std::span<const float> values) {
  if (values.size() != params_.size())
    throw ContractError(fmt::format("parameter count mismatch: model has {}, got {}", params_.size(), values.size()));
  std::copy(values.begin(), values.end(), params_.begin());
}

std::vector<float> UNet::parameters_f32() const { return {params_.begin(), params_.end()}; }

std::size_t UNet::gradient_size(GradScope scope) const {
  if (scope == GradScope::all) return params_.size();
  return output_layer().end() - output_layer().weight_offset;
}

void UNet::check_input(int channels, int height, int width) const {
  if (channels != config_.in_channels)
    throw ConfigError(fmt::format("model expects {} input channels, got {}", config_.in_channels, channels));
  const int factor = 1 << config_.depth;
  if (height % factor != 0 || width % factor != 0 || height < factor || width < factor)
    throw ConfigError(fmt::format("image size {}x{} is not divisible by 2^depth = {}", height, width, factor));
}

ForwardPass UNet::forward(const Tensor& input, const FeatureMask* mask) const {
  check_input(input.channels, input.height, input.width);
  const double* p = params_.data();
  ForwardPass pass;
  pass.convs.resize(slots_.size());
  std::size_t slot = 0;

  auto conv = [&](const Tensor& in, bool relu) -> const Tensor& {
    const LayerSlot& s = slots_[slot];
    auto& cache = pass.convs[slot++];
    cache.input = in;
    const Eigen::Index hw = static_cast<Eigen::Index>(in.plane());
    Tensor out(s.out_channels, in.height, in.width);
    ConstMatMap wmat(p + s.weight_offset, s.out_channels, static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel);
    MatMap omat(out.values.data(), s.out_channels, hw);
    if (s.kernel == 3) {
      cache.columns = im2col(in);
      omat.noalias() = wmat * ConstMatMap(cache.columns.data(), static_cast<Eigen::Index>(s.in_channels) * 9, hw);
    } else {
      omat.noalias() = wmat * ConstMatMap(in.values.data(), s.in_channels, hw);
    }
    for (int c = 0; c < s.out_channels; ++c) omat.row(c).array() += p[s.bias_offset + c];
    if (relu) relu_inplace(out);
    cache.output = std::move(out);
    return cache.output;
  };

  // Transposed 2x2 convolution with stride 2; weights stored as [Cout*4, Cin].
  auto up = [&](const Tensor& in) -> const Tensor& {
    const LayerSlot& s = slots_[slot];
    auto& cache = pass.convs[slot++];
    cache.input = in;
    const Eigen::Index hw = static_cast<Eigen::Index>(in.plane());
    RowMatrix cols = ConstMatMap(p + s.weight_offset, static_cast<Eigen::Index>(s.out_channels) * 4, s.in_channels) *
                     ConstMatMap(in.values.data(), s.in_channels, hw);
    Tensor out(s.out_channels, in.height * 2, in.width * 2);
    for (int c = 0; c < s.out_channels; ++c) {
      const double b = p[s.bias_offset + c];
      for (int k = 0; k < 4; ++k) {
        const int dy = k / 2, dx = k % 2;
        const double* row = cols.data() + (static_cast<std::size_t>(c) * 4 + k) * hw;
        for (int y = 0; y < in.height; ++y)
          for (int x = 0; x < in.width; ++x) out.at(c, 2 * y + dy, 2 * x + dx) = row[y * in.width + x] + b;
      }
    }
    cache.output = std::move(out);
    return cache.output;
  };

  auto pool = [&](const Tensor& in) {
    Tensor out(in.channels, in.height / 2, in.width / 2);
    std::vector<int> arg(out.size());
    for (int c = 0; c < in.channels; ++c) {
      for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
          int best = -1;
          double best_v = 0;
          for (int k = 0; k < 4; ++k) {
            const int iy = 2 * y + k / 2, ix = 2 * x + k % 2;
            const double v = in.at(c, iy, ix);
            if (best < 0 || v > best_v) {
              best = static_cast<int>(c * in.plane()) + iy * in.width + ix;
              best_v = v;
            }
          }
          out.at(c, y, x) = best_v;
          arg[c * out.plane() + static_cast<std::size_t>(y) * out.width + x] = best;
        }
      }
    }
    pass.pool_inputs.push_back(in);
    pass.pool_argmax.push_back(std::move(arg));
    return out;
  };

  std::vector<const Tensor*> skips;
  Tensor x = input;
  for (int l = 0; l < config_.depth; ++l) {
    const Tensor& a = conv(x, true);
    const Tensor& b = conv(a, true);
    skips.push_back(&b);
    x = pool(b);
  }
  {
    const Tensor& a = conv(x, true);
    x = conv(a, true);
  }
  for (int l = config_.depth - 1; l >= 0; --l) {
    const Tensor& u = up(x);
    const Tensor cat = concat(u, *skips[l]);
    const Tensor& a = conv(cat, true);
    x = conv(a, true);
  }
  pass.hidden = x;
  pass.mask = mask ? *mask : FeatureMask(static_cast<std::size_t>(hidden_features()), 1.0);
  if (pass.mask.size() != static_cast<std::size_t>(hidden_features()))
    throw ContractError("feature mask length must equal the hidden feature count");
  Tensor masked = x;
  for (int k = 0; k < masked.channels; ++k)
    if (pass.mask[k] != 1.0)
      for (auto& v : masked.channel(k)) v *= pass.mask[k];
  pass.logits = conv(masked, false);

  // Per-pixel softmax over classes.
  const auto& lg = pass.logits;
  ProbabilityMap probs(lg.channels, lg.height, lg.width);
  const std::size_t hw = lg.plane();
  for (std::size_t i = 0; i < hw; ++i) {
    double mx = lg.values[i];
    for (int c = 1; c < lg.channels; ++c) mx = std::max(mx, lg.values[c * hw + i]);
    double sum = 0;
    for (int c = 0; c < lg.channels; ++c) {
      const double e = std::exp(lg.values[c * hw + i] - mx);
      probs.values[c * hw + i] = e;
      sum += e;
    }
    for (int c = 0; c < lg.channels; ++c) probs.values[c * hw + i] /= sum;
  }
  pass.probs = std::move(probs);
  return pass;
}

ProbabilityMap UNet::predict(const Tensor& input, const FeatureMask* mask) const {
  return forward(input, mask).probs;
}

void UNet::backward(const ForwardPass& pass, const Tensor& d_probs, std::span<double> grad, GradScope scope) const {
  if (grad.size() != gradient_size(scope))
    throw ContractError(fmt::format("gradient buffer has {} entries, expected {}", grad.size(), gradient_size(scope)));
  if (d_probs.size() != pass.probs.size()) throw ContractError("d_probs shape does not match the forward pass");
  const double* p = params_.data();
  // Gradient entries for parameter index i land at grad[i - base].
  const std::size_t base = scope == GradScope::all ? 0 : output_layer().weight_offset;

  // Softmax backward: dz_c = P_c (dP_c - sum_k P_k dP_k).
  const auto& probs = pass.probs;
  const std::size_t hw = probs.plane();
  Tensor d(probs.channels, probs.height, probs.width);
  for (std::size_t i = 0; i < hw; ++i) {
    double dot = 0;
    for (int c = 0; c < probs.channels; ++c) dot += probs.values[c * hw + i] * d_probs.values[c * hw + i];
    for (int c = 0; c < probs.channels; ++c)
      d.values[c * hw + i] = probs.values[c * hw + i] * (d_probs.values[c * hw + i] - dot);
  }

  int slot = static_cast<int>(slots_.size()) - 1;

  // Accumulates weight/bias gradients of `slot` from output gradient `dout`
  // and returns the gradient with respect to the layer input.
  auto conv_back = [&](const Tensor& dout, bool need_input_grad) -> Tensor {
    const LayerSlot& s = slots_[slot];
    const auto& cache = pass.convs[slot];
    --slot;
    const Eigen::Index hw_l = static_cast<Eigen::Index>(dout.plane());
    ConstMatMap dmat(dout.values.data(), s.out_channels, hw_l);
    const Eigen::Index kcols = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
    MatMap gw(grad.data() + (s.weight_offset - base), s.out_channels, kcols);
    if (s.kernel == 3) {
      gw.noalias() += dmat * ConstMatMap(cache.columns.data(), kcols, hw_l).transpose();
    } else {
      gw.noalias() += dmat * ConstMatMap(cache.input.values.data(), s.in_channels, hw_l).transpose();
    }
    for (int c = 0; c < s.out_channels; ++c) grad[s.bias_offset - base + c] += dmat.row(c).sum();
    Tensor din(s.in_channels, cache.input.height, cache.input.width);
    if (!need_input_grad) return din;
    ConstMatMap wmat(p + s.weight_offset, s.out_channels, kcols);
    if (s.kernel == 3) {
      std::vector<double> dcols(static_cast<std::size_t>(kcols) * hw_l);
      MatMap(dcols.data(), kcols, hw_l).noalias() = wmat.transpose() * dmat;
      col2im(dcols, din);
    } else {
      MatMap(din.values.data(), s.in_channels, hw_l).noalias() = wmat.transpose() * dmat;
    }
    return din;
  };

  auto up_back = [&](const Tensor& dout) -> Tensor {
    const LayerSlot& s = slots_[slot];
    const auto& cache = pass.convs[slot];
    --slot;
    const Tensor& in = cache.input;
    const Eigen::Index hw_in = static_cast<Eigen::Index>(in.plane());
    RowMatrix dcols(static_cast<Eigen::Index>(s.out_channels) * 4, hw_in);
    for (int c = 0; c < s.out_channels; ++c) {
      double bsum = 0;
      for (int k = 0; k < 4; ++k) {
        const int dy = k / 2, dx = k % 2;
        double* row = dcols.data() + (static_cast<std::size_t>(c) * 4 + k) * hw_in;
        for (int y = 0; y < in.height; ++y)
          for (int x = 0; x < in.width; ++x) {
            const double v = dout.at(c, 2 * y + dy, 2 * x + dx);
            row[y * in.width + x] = v;
            bsum += v;
          }
      }
      grad[s.bias_offset - base + c] += bsum;
    }
    ConstMatMap inmat(in.values.data(), s.in_channels, hw_in);
    MatMap(grad.data() + (s.weight_offset - base), static_cast<Eigen::Index>(s.out_channels) * 4, s.in_channels)
        .noalias() += dcols * inmat.transpose();
    Tensor din(s.in_channels, in.height, in.width);
    MatMap(din.values.data(), s.in_channels, hw_in).noalias() =
        ConstMatMap(p + s.weight_offset, static_cast<Eigen::Index>(s.out_channels) * 4, s.in_channels).transpose() *
        dcols;
    return din;
  };

  auto relu_grad = [&](Tensor g) {
    relu_backward(pass.convs[slot].output, g);
    return g;
  };

  // Head (pointwise conv on the masked hidden layer).
  Tensor dx = conv_back(d, scope == GradScope::all);
  if (scope == GradScope::last_layer) return;
  for (int k = 0; k < dx.channels; ++k)
    if (pass.mask[k] != 1.0)
      for (auto& v : dx.channel(k)) v *= pass.mask[k];

  std::vector<Tensor> d_skips(config_.depth);
  for (int l = 0; l < config_.depth; ++l) {
    // Decoder level l (processed in reverse order of the forward pass: dec0 first).
    dx = conv_back(relu_grad(std::move(dx)), true);
    dx = conv_back(relu_grad(std::move(dx)), true);
    const int width_u = slots_[slot].out_channels;
    Tensor du(width_u, dx.height, dx.width);
    Tensor dskip(dx.channels - width_u, dx.height, dx.width);
    std::copy(dx.values.begin(), dx.values.begin() + static_cast<std::ptrdiff_t>(du.size()), du.values.begin());
    std::copy(dx.values.begin() + static_cast<std::ptrdiff_t>(du.size()), dx.values.end(), dskip.values.begin());
    d_skips[l] = std::move(dskip);
    dx = up_back(du);
  }
  dx = conv_back(relu_grad(std::move(dx)), true);
  dx = conv_back(relu_grad(std::move(dx)), true);
  for (int l = config_.depth - 1; l >= 0; --l) {
    // Un-pool into the skip tensor's shape and add the skip-connection gradient.
    const Tensor& pin = pass.pool_inputs[l];
    Tensor dpool(pin.channels, pin.height, pin.width);
    const auto& arg = pass.pool_argmax[l];
    for (std::size_t i = 0; i < dx.values.size(); ++i) dpool.values[arg[i]] += dx.values[i];
    for (std::size_t i = 0; i < dpool.values.size(); ++i) dpool.values[i] += d_skips[l].values[i];
    dx = conv_back(relu_grad(std::move(dpool)), true);
    dx = conv_back(relu_grad(std::move(dx)), l > 0);
  }
}

}  // namespace tracseg::segnet
