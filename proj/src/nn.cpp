#include "seiznet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "seiznet/binary_io.hpp"
#include "seiznet/error.hpp"
#include "seiznet/metrics.hpp"
#include "seiznet/random.hpp"

namespace seiznet::nn {

namespace {

constexpr double kBatchNormEpsilon = 1e-5;
constexpr char kCheckpointMagic[4] = {'S', 'Z', 'N', 'M'};
constexpr std::uint16_t kCheckpointVersion = 1;

std::string dims(std::size_t a, std::size_t b) {
  return std::to_string(a) + "x" + std::to_string(b);
}

// Eight independent partial sums so the loop vectorizes without reassociation
// flags; the summation order is fixed, so results are reproducible.
template <typename T>
T dot(const T* __restrict a, const T* __restrict b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
void axpy(T alpha, const T* __restrict x, T* __restrict y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T sum(const T* x, std::size_t n) {
  T acc[4] = {};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) acc[j] += x[i + j];
  }
  T s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (; i < n; ++i) s += x[i];
  return s;
}

double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T z) {
  if (z >= 0) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

void check_label(int y) {
  if (y != 0 && y != 1) throw ConfigError("label must be 0 or 1, got " + std::to_string(y));
}

// Activations of one sample, kept for the backward pass.
template <typename T>
struct Workspace {
  std::vector<T> input;                        // normalized, [channel][length]
  std::vector<std::vector<T>> conv_pre;        // per block, [filter][length]
  std::vector<std::vector<T>> pooled;          // per block, [filter][length / pool]
  std::vector<std::vector<std::uint32_t>> argmax;
  std::vector<std::vector<T>> dense_pre;       // per dense layer
  std::vector<std::vector<T>> dense_out;       // per dense layer (ReLU applied)
  std::vector<T> grad_a, grad_b;
  T logit{};

  explicit Workspace(const ModelSpec& spec) {
    input.resize(std::size_t{spec.input_channels} * spec.input_length);
    for (std::size_t b = 0; b < spec.conv_blocks.size(); ++b) {
      const auto& blk = spec.conv_blocks[b];
      conv_pre.emplace_back(std::size_t{blk.filters} * spec.length_after(b));
      pooled.emplace_back(std::size_t{blk.filters} * spec.length_after(b + 1));
      argmax.emplace_back(pooled.back().size());
    }
    for (auto w : spec.dense_widths) {
      dense_pre.emplace_back(w);
      dense_out.emplace_back(w);
    }
  }
};

template <typename T>
class Network {
 public:
  explicit Network(const BasicModelParams<T>& p) : p_(p), spec_(p.spec), layout_(p.spec) {}

  void check_window(const signal::SampleWindow& w) const {
    if (w.channel_count() != spec_.input_channels || w.samples_per_channel() != spec_.input_length)
      throw ShapeError("input layer: expected " + dims(spec_.input_channels, spec_.input_length) + ", got " +
                       dims(w.channel_count(), w.samples_per_channel()));
    for (const auto& ch : w.channels) {
      if (ch.size() != spec_.input_length) throw ShapeError("input layer: ragged channels");
    }
  }

  // Leaves every intermediate in `ws`; returns the logit.
  T run(const signal::SampleWindow& w, Workspace<T>& ws) const {
    check_window(w);
    const std::size_t length = spec_.input_length;
    const auto scale = p_.slice(layout_.bn_scale);
    const auto shift = p_.slice(layout_.bn_shift);
    const auto mean = p_.slice(layout_.bn_running_mean);
    const auto var = p_.slice(layout_.bn_running_var);
    for (std::size_t c = 0; c < spec_.input_channels; ++c) {
      const T inv = T(1) / std::sqrt(var[c] + T(kBatchNormEpsilon));
      const T m = mean[c];
      const T g = scale[c] * inv;
      const T b = shift[c];
      const float* src = w.channels[c].data();
      T* dst = ws.input.data() + c * length;
      for (std::size_t t = 0; t < length; ++t) dst[t] = g * (static_cast<T>(src[t]) - m) + b;
    }

    const T* in = ws.input.data();
    std::size_t in_channels = spec_.input_channels;
    for (std::size_t b = 0; b < spec_.conv_blocks.size(); ++b) {
      const auto& blk = spec_.conv_blocks[b];
      const std::size_t len = spec_.length_after(b);
      conv_forward(b, in, in_channels, len, ws.conv_pre[b].data());
      pool_forward(blk, len, ws.conv_pre[b].data(), ws.pooled[b].data(), ws.argmax[b].data());
      in = ws.pooled[b].data();
      in_channels = blk.filters;
    }

    std::size_t in_size = spec_.flatten_size();
    for (std::size_t l = 0; l < spec_.dense_widths.size(); ++l) {
      const std::size_t out_size = spec_.dense_widths[l];
      const T* W = p_.values.data() + layout_.dense_weight[l].offset;
      const T* bias = p_.values.data() + layout_.dense_bias[l].offset;
      auto& pre = ws.dense_pre[l];
      auto& out = ws.dense_out[l];
      const bool last = l + 1 == spec_.dense_widths.size();
      for (std::size_t o = 0; o < out_size; ++o) {
        pre[o] = bias[o] + dot(W + o * in_size, in, in_size);
        out[o] = last ? pre[o] : std::max(pre[o], T(0));
      }
      in = out.data();
      in_size = out_size;
    }
    ws.logit = ws.dense_pre.back()[0];
    return ws.logit;
  }

  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logit).
  void backprop(const signal::SampleWindow& w, Workspace<T>& ws, T dlogit, std::vector<T>& grad) const {
    const std::size_t n_dense = spec_.dense_widths.size();
    auto& g = ws.grad_a;
    auto& gin = ws.grad_b;
    g.assign(1, dlogit);

    for (std::size_t l = n_dense; l-- > 0;) {
      const std::size_t out_size = spec_.dense_widths[l];
      const std::size_t in_size = l == 0 ? spec_.flatten_size() : spec_.dense_widths[l - 1];
      const T* in = l == 0 ? ws.pooled.back().data() : ws.dense_out[l - 1].data();
      if (l + 1 != n_dense) {
        for (std::size_t o = 0; o < out_size; ++o) {
          if (!(ws.dense_pre[l][o] > T(0))) g[o] = T(0);
        }
      }
      const T* W = p_.values.data() + layout_.dense_weight[l].offset;
      T* dW = grad.data() + layout_.dense_weight[l].offset;
      T* db = grad.data() + layout_.dense_bias[l].offset;
      gin.assign(in_size, T(0));
      for (std::size_t o = 0; o < out_size; ++o) {
        if (g[o] == T(0)) continue;
        db[o] += g[o];
        axpy(g[o], in, dW + o * in_size, in_size);
        axpy(g[o], W + o * in_size, gin.data(), in_size);
      }
      std::swap(g, gin);
    }

    for (std::size_t b = spec_.conv_blocks.size(); b-- > 0;) {
      const auto& blk = spec_.conv_blocks[b];
      const std::size_t len = spec_.length_after(b);
      const std::size_t in_channels = b == 0 ? spec_.input_channels : spec_.conv_blocks[b - 1].filters;
      const T* in = b == 0 ? ws.input.data() : ws.pooled[b - 1].data();

      // Route pooled gradients to the argmax positions through the ReLU.
      gin.assign(std::size_t{blk.filters} * len, T(0));
      const auto& pre = ws.conv_pre[b];
      const auto& arg = ws.argmax[b];
      for (std::size_t i = 0; i < arg.size(); ++i) {
        if (pre[arg[i]] > T(0)) gin[arg[i]] += g[i];
      }
      std::swap(g, gin);  // g: gradient of the conv pre-activation

      const std::size_t k = blk.kernel_size;
      const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
      const T* W = p_.values.data() + layout_.conv_weight[b].offset;
      T* dW = grad.data() + layout_.conv_weight[b].offset;
      T* db = grad.data() + layout_.conv_bias[b].offset;
      gin.assign(in_channels * len, T(0));
      for (std::size_t f = 0; f < blk.filters; ++f) {
        const T* gf = g.data() + f * len;
        db[f] += sum(gf, len);
        for (std::size_t c = 0; c < in_channels; ++c) {
          const T* x = in + c * len;
          T* gx = gin.data() + c * len;
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(j) - pad;
            const std::size_t t0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -s));
            const std::size_t t1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(len, len - s));
            if (t1 <= t0) continue;
            dW[(f * in_channels + c) * k + j] += dot(gf + t0, x + t0 + s, t1 - t0);
            axpy(W[(f * in_channels + c) * k + j], gf + t0, gx + t0 + s, t1 - t0);
          }
        }
      }
      std::swap(g, gin);
    }

    // Input batch normalization: y = scale * xhat + shift.
    const std::size_t length = spec_.input_length;
    const auto mean = p_.slice(layout_.bn_running_mean);
    const auto var = p_.slice(layout_.bn_running_var);
    for (std::size_t c = 0; c < spec_.input_channels; ++c) {
      const T inv = T(1) / std::sqrt(var[c] + T(kBatchNormEpsilon));
      const float* src = w.channels[c].data();
      const T* gc = g.data() + c * length;
      T dscale = 0;
      for (std::size_t t = 0; t < length; ++t) dscale += gc[t] * (static_cast<T>(src[t]) - mean[c]) * inv;
      grad[layout_.bn_scale.offset + c] += dscale;
      grad[layout_.bn_shift.offset + c] += sum(gc, length);
    }
  }

 private:
  void conv_forward(std::size_t b, const T* in, std::size_t in_channels, std::size_t len, T* out) const {
    const auto& blk = spec_.conv_blocks[b];
    const std::size_t k = blk.kernel_size;
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const T* W = p_.values.data() + layout_.conv_weight[b].offset;
    const T* bias = p_.values.data() + layout_.conv_bias[b].offset;
    for (std::size_t f = 0; f < blk.filters; ++f) {
      T* o = out + f * len;
      std::fill(o, o + len, bias[f]);
      for (std::size_t c = 0; c < in_channels; ++c) {
        const T* x = in + c * len;
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(j) - pad;
          const std::size_t t0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -s));
          const std::size_t t1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(len, len - s));
          if (t1 <= t0) continue;
          axpy(W[(f * in_channels + c) * k + j], x + t0 + s, o + t0, t1 - t0);
        }
      }
    }
  }

  static void pool_forward(const ConvBlockSpec& blk, std::size_t len, const T* pre, T* out, std::uint32_t* arg) {
    const std::size_t width = blk.pool_width;
    const std::size_t out_len = len / width;
    for (std::size_t f = 0; f < blk.filters; ++f) {
      for (std::size_t j = 0; j < out_len; ++j) {
        const std::size_t base = f * len + j * width;
        std::size_t best = base;
        for (std::size_t q = 1; q < width; ++q) {
          if (pre[base + q] > pre[best]) best = base + q;
        }
        arg[f * out_len + j] = static_cast<std::uint32_t>(best);
        out[f * out_len + j] = std::max(pre[best], T(0));
      }
    }
  }

  const BasicModelParams<T>& p_;
  const ModelSpec& spec_;
  ParamLayout layout_;
};

template <typename T>
void check_finite(const std::vector<T>& grad, const ParamLayout& layout) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) throw NumericError("non-finite gradient in " + layout.name_of(i));
  }
}

template <typename T>
T probability_from_logit(T logit) {
  return sigmoid(logit);
}

}  // namespace

// ---------------------------------------------------------------------------

ModelSpec ModelSpec::reference(std::uint32_t input_channels, std::uint32_t input_length) {
  ModelSpec s;
  s.input_channels = input_channels;
  s.input_length = input_length;
  s.conv_blocks = {{16, 7, 2}, {32, 5, 2}, {32, 5, 2}, {64, 3, 2}, {64, 3, 2}};
  s.dense_widths = {256, 64, 16, 1};
  return s;
}

bool ModelSpec::is_reference_topology() const {
  return conv_blocks.size() == kReferenceConvBlocks && dense_widths.size() == kReferenceDenseLayers &&
         !dense_widths.empty() && dense_widths.back() == 1;
}

void ModelSpec::validate() const {
  if (input_channels == 0) throw ShapeError("input_channels must be positive");
  if (input_length == 0) throw ShapeError("input_length must be positive");
  if (conv_blocks.empty()) throw ShapeError("at least one conv block is required");
  if (dense_widths.empty() || dense_widths.back() != 1) throw ShapeError("the last dense layer must have one unit");
  std::uint32_t len = input_length;
  for (std::size_t b = 0; b < conv_blocks.size(); ++b) {
    const auto& blk = conv_blocks[b];
    const auto where = "conv block " + std::to_string(b);
    if (blk.filters == 0) throw ShapeError(where + ": filters must be positive");
    if (blk.kernel_size == 0 || blk.kernel_size % 2 == 0) throw ShapeError(where + ": kernel size must be odd");
    if (blk.pool_width == 0 || len % blk.pool_width != 0)
      throw ShapeError(where + ": length " + std::to_string(len) + " not divisible by pool width " +
                       std::to_string(blk.pool_width));
    len /= blk.pool_width;
  }
  for (auto w : dense_widths) {
    if (w == 0) throw ShapeError("dense widths must be positive");
  }
}

std::uint32_t ModelSpec::length_after(std::size_t blocks) const {
  std::uint32_t len = input_length;
  for (std::size_t b = 0; b < blocks; ++b) len /= conv_blocks[b].pool_width;
  return len;
}

std::size_t ModelSpec::flatten_size() const {
  return std::size_t{conv_blocks.back().filters} * length_after(conv_blocks.size());
}

ParamLayout::ParamLayout(const ModelSpec& spec) {
  spec.validate();
  std::size_t offset = 0;
  auto take = [&](std::size_t n) {
    Slice s{offset, n};
    offset += n;
    return s;
  };
  bn_scale = take(spec.input_channels);
  bn_shift = take(spec.input_channels);
  std::size_t in_channels = spec.input_channels;
  for (const auto& blk : spec.conv_blocks) {
    conv_weight.push_back(take(std::size_t{blk.filters} * in_channels * blk.kernel_size));
    conv_bias.push_back(take(blk.filters));
    in_channels = blk.filters;
  }
  std::size_t in_size = spec.flatten_size();
  for (auto w : spec.dense_widths) {
    dense_weight.push_back(take(std::size_t{w} * in_size));
    dense_bias.push_back(take(w));
    in_size = w;
  }
  trainable = offset;
  bn_running_mean = take(spec.input_channels);
  bn_running_var = take(spec.input_channels);
  total = offset;
}

std::string ParamLayout::name_of(std::size_t i) const {
  auto in = [i](Slice s) { return i >= s.offset && i < s.offset + s.size; };
  if (in(bn_scale)) return "batchnorm.scale";
  if (in(bn_shift)) return "batchnorm.shift";
  if (in(bn_running_mean)) return "batchnorm.running_mean";
  if (in(bn_running_var)) return "batchnorm.running_var";
  for (std::size_t b = 0; b < conv_weight.size(); ++b) {
    if (in(conv_weight[b])) return "conv" + std::to_string(b) + ".weight";
    if (in(conv_bias[b])) return "conv" + std::to_string(b) + ".bias";
  }
  for (std::size_t l = 0; l < dense_weight.size(); ++l) {
    if (in(dense_weight[l])) return "dense" + std::to_string(l) + ".weight";
    if (in(dense_bias[l])) return "dense" + std::to_string(l) + ".bias";
  }
  return "<out of range>";
}

template <typename T>
BasicModelParams<T>::BasicModelParams(ModelSpec s) : spec(std::move(s)) {
  const ParamLayout layout(spec);
  values.assign(layout.total, T(0));
  std::fill_n(values.begin() + static_cast<std::ptrdiff_t>(layout.bn_scale.offset), layout.bn_scale.size, T(1));
  std::fill_n(values.begin() + static_cast<std::ptrdiff_t>(layout.bn_running_var.offset), layout.bn_running_var.size,
              T(1));
}

template <typename T>
void BasicModelParams<T>::validate() const {
  const ParamLayout layout(spec);
  if (values.size() != layout.total)
    throw ShapeError("parameter count " + std::to_string(values.size()) + " does not match spec (" +
                     std::to_string(layout.total) + ")");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw NumericError("non-finite parameter in " + layout.name_of(i));
  }
  for (auto v : slice(layout.bn_running_var)) {
    if (!(v > T(0))) throw NumericError("batch-norm running variance must be positive");
  }
}

template <typename T>
BasicModelParams<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
  BasicModelParams<T> p(spec);
  const ParamLayout layout(spec);
  Rng rng(derive_seed(seed, stable_hash("init")));
  auto fill = [&](Slice s, double limit) {
    for (std::size_t i = 0; i < s.size; ++i) p.values[s.offset + i] = static_cast<T>(uniform(rng, -limit, limit));
  };
  std::size_t in_channels = spec.input_channels;
  for (std::size_t b = 0; b < spec.conv_blocks.size(); ++b) {
    const double fan_in = static_cast<double>(in_channels * spec.conv_blocks[b].kernel_size);
    fill(layout.conv_weight[b], std::sqrt(6.0 / fan_in));
    in_channels = spec.conv_blocks[b].filters;
  }
  std::size_t in_size = spec.flatten_size();
  for (std::size_t l = 0; l < spec.dense_widths.size(); ++l) {
    const bool last = l + 1 == spec.dense_widths.size();
    fill(layout.dense_weight[l], std::sqrt((last ? 3.0 : 6.0) / static_cast<double>(in_size)));
    in_size = spec.dense_widths[l];
  }
  return p;
}

void FocalLossConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("focal alpha must be in (0, 1)");
  if (!(gamma >= 0.0)) throw ConfigError("focal gamma must be nonnegative");
}

namespace {

// The scalar functions also accept the closed endpoints alpha = 0 and 1 (one
// class weighted out), which are still well defined; training does not.
void check_scalar_config(const FocalLossConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("focal alpha must be in [0, 1]");
  if (!(cfg.gamma >= 0.0)) throw ConfigError("focal gamma must be nonnegative");
}

}  // namespace

double focal_loss(double p, int y, const FocalLossConfig& cfg) {
  if (std::isnan(p)) throw NumericError("NaN probability passed to focal_loss");
  check_label(y);
  check_scalar_config(cfg);
  const double pc = std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  if (y == 1) return -cfg.alpha * std::pow(1.0 - pc, cfg.gamma) * std::log(pc);
  return -(1.0 - cfg.alpha) * std::pow(pc, cfg.gamma) * std::log(1.0 - pc);
}

double focal_loss_grad(double p, int y, const FocalLossConfig& cfg) {
  if (std::isnan(p)) throw NumericError("NaN probability passed to focal_loss_grad");
  check_label(y);
  check_scalar_config(cfg);
  const double pc = std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  const double g = cfg.gamma;
  if (y == 1) {
    const double q = 1.0 - pc;
    const double focus = g == 0.0 ? 0.0 : g * std::pow(q, g - 1.0) * std::log(pc);
    return -cfg.alpha * (-focus + std::pow(q, g) / pc);
  }
  const double q = 1.0 - pc;
  const double focus = g == 0.0 ? 0.0 : g * std::pow(pc, g - 1.0) * std::log(q);
  return -(1.0 - cfg.alpha) * (focus - std::pow(pc, g) / q);
}

double focal_loss_from_logit(double logit, int y, const FocalLossConfig& cfg) {
  if (std::isnan(logit)) throw NumericError("NaN logit passed to focal_loss_from_logit");
  check_label(y);
  check_scalar_config(cfg);
  if (y == 1) return cfg.alpha * std::pow(sigmoid(-logit), cfg.gamma) * softplus(-logit);
  return (1.0 - cfg.alpha) * std::pow(sigmoid(logit), cfg.gamma) * softplus(logit);
}

double focal_loss_logit_grad(double logit, int y, const FocalLossConfig& cfg) {
  if (std::isnan(logit)) throw NumericError("NaN logit passed to focal_loss_logit_grad");
  check_label(y);
  check_scalar_config(cfg);
  const double p = sigmoid(logit);
  const double q = sigmoid(-logit);
  const double g = cfg.gamma;
  if (y == 1) {
    const double log_p = -softplus(-logit);
    return cfg.alpha * std::pow(q, g) * (g * p * log_p - q);
  }
  const double log_q = -softplus(logit);
  return (1.0 - cfg.alpha) * std::pow(p, g) * (p - g * q * log_q);
}

template <typename T>
T forward(const BasicModelParams<T>& params, const signal::SampleWindow& window) {
  Workspace<T> ws(params.spec);
  return probability_from_logit(Network<T>(params).run(window, ws));
}

template <typename T>
BasicGradientSet<T> backward(const BasicModelParams<T>& params, std::span<const signal::SampleWindow> batch,
                             const FocalLossConfig& cfg) {
  if (batch.empty()) throw ConfigError("backward needs a nonempty batch");
  const ParamLayout layout(params.spec);
  if (params.values.size() != layout.total) throw ShapeError("parameter vector does not match spec");
  Network<T> net(params);
  Workspace<T> ws(params.spec);
  BasicGradientSet<T> out;
  out.values.assign(layout.total, T(0));
  for (const auto& w : batch) {
    const int y = w.label == signal::Label::Preictal ? 1 : 0;
    const T logit = net.run(w, ws);
    out.loss += focal_loss_from_logit(static_cast<double>(logit), y, cfg);
    net.backprop(w, ws, static_cast<T>(focal_loss_logit_grad(static_cast<double>(logit), y, cfg)), out.values);
  }
  check_finite(out.values, layout);
  return out;
}

template <typename T>
double batch_loss(const BasicModelParams<T>& params, std::span<const signal::SampleWindow> batch,
                  const FocalLossConfig& cfg) {
  Network<T> net(params);
  Workspace<T> ws(params.spec);
  double total = 0.0;
  for (const auto& w : batch) {
    const int y = w.label == signal::Label::Preictal ? 1 : 0;
    total += focal_loss_from_logit(static_cast<double>(net.run(w, ws)), y, cfg);
  }
  return total;
}

std::vector<double> predict_proba(const ModelParams& params, std::span<const signal::SampleWindow> windows) {
  std::vector<double> out;
  out.reserve(windows.size());
  if (windows.empty()) return out;
  Network<float> net(params);
  Workspace<float> ws(params.spec);
  for (const auto& w : windows) out.push_back(probability_from_logit(net.run(w, ws)));
  return out;
}

std::vector<double> predict_channels(const ModelParams& params, const signal::SampleWindow& window) {
  if (params.spec.input_channels == window.channel_count()) return {static_cast<double>(forward(params, window))};
  if (params.spec.input_channels != 1)
    throw ShapeError("input layer: model expects " + std::to_string(params.spec.input_channels) +
                     " channels, window has " + std::to_string(window.channel_count()));
  Network<float> net(params);
  Workspace<float> ws(params.spec);
  std::vector<double> out;
  signal::SampleWindow single;
  single.sample_rate_hz = window.sample_rate_hz;
  single.start_time = window.start_time;
  single.channels.resize(1);
  for (const auto& ch : window.channels) {
    single.channels[0] = ch;
    out.push_back(probability_from_logit(net.run(single, ws)));
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw ConfigError("bn_momentum must be in [0, 1)");
}

Optimizer parse_optimizer(std::string_view s) {
  if (s == "sgd") return Optimizer::Sgd;
  if (s == "momentum" || s == "sgd+momentum") return Optimizer::Momentum;
  if (s == "adam") return Optimizer::Adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected sgd|momentum|adam)");
}

namespace {

class OptimizerState {
 public:
  OptimizerState(const TrainConfig& tc, std::size_t n) : tc_(tc), m_(n, 0.0f), v_(n, 0.0f) {}

  void step(std::vector<float>& params, const std::vector<float>& grad, std::size_t n, float scale) {
    const auto lr = static_cast<float>(tc_.learning_rate);
    switch (tc_.optimizer) {
      case Optimizer::Sgd:
        for (std::size_t i = 0; i < n; ++i) params[i] -= lr * grad[i] * scale;
        break;
      case Optimizer::Momentum:
        for (std::size_t i = 0; i < n; ++i) {
          m_[i] = 0.9f * m_[i] + grad[i] * scale;
          params[i] -= lr * m_[i];
        }
        break;
      case Optimizer::Adam: {
        constexpr float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
        ++t_;
        const float c1 = 1.0f - std::pow(b1, static_cast<float>(t_));
        const float c2 = 1.0f - std::pow(b2, static_cast<float>(t_));
        for (std::size_t i = 0; i < n; ++i) {
          const float g = grad[i] * scale;
          m_[i] = b1 * m_[i] + (1.0f - b1) * g;
          v_[i] = b2 * v_[i] + (1.0f - b2) * g * g;
          params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
        }
        break;
      }
    }
  }

 private:
  const TrainConfig& tc_;
  std::vector<float> m_, v_;
  std::uint64_t t_ = 0;
};

struct ChannelStats {
  std::vector<double> mean, var;
};

ChannelStats channel_stats(const std::vector<const signal::SampleWindow*>& windows, std::size_t channels) {
  ChannelStats s{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
  std::size_t count = 0;
  for (const auto* w : windows) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (float v : w->channels[c]) s.mean[c] += v;
    }
    count += w->samples_per_channel();
  }
  for (auto& m : s.mean) m /= static_cast<double>(count);
  for (const auto* w : windows) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (float v : w->channels[c]) s.var[c] += (v - s.mean[c]) * (v - s.mean[c]);
    }
  }
  for (auto& v : s.var) v = std::max(v / static_cast<double>(count), 1e-6);
  return s;
}

double mean_loss(std::span<const signal::SampleWindow> windows, const std::vector<double>& probs,
                 const FocalLossConfig& fl) {
  double total = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i)
    total += focal_loss(probs[i], windows[i].label == signal::Label::Preictal ? 1 : 0, fl);
  return total / static_cast<double>(windows.size());
}

}  // namespace

TrainResult train(const ModelSpec& spec, const signal::DatasetSplit& split, const FocalLossConfig& fl,
                  const TrainConfig& tc) {
  spec.validate();
  fl.validate();
  tc.validate();
  if (split.train.empty()) throw InsufficientDataError("training split is empty");
  if (split.validation.empty()) throw InsufficientDataError("validation split is empty");

  TrainResult result;
  result.params = init_params<float>(spec, tc.seed);
  if (tc.max_epochs == 0) return result;

  ModelParams params = result.params;
  const ParamLayout layout(spec);
  Network<float> net(params);
  Workspace<float> ws(spec);
  for (const auto& w : split.train) net.check_window(w);
  for (const auto& w : split.validation) net.check_window(w);

  std::vector<const signal::SampleWindow*> all;
  for (const auto& w : split.train) all.push_back(&w);
  {
    const auto stats = channel_stats(all, spec.input_channels);
    for (std::size_t c = 0; c < spec.input_channels; ++c) {
      params.values[layout.bn_running_mean.offset + c] = static_cast<float>(stats.mean[c]);
      params.values[layout.bn_running_var.offset + c] = static_cast<float>(stats.var[c]);
    }
  }

  OptimizerState opt(tc, layout.trainable);
  std::vector<float> grad(layout.total, 0.0f);
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  const auto momentum = static_cast<float>(tc.bn_momentum);

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    Rng rng(derive_seed(tc.seed, epoch));
    shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      std::vector<const signal::SampleWindow*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&split.train[order[i]]);

      const auto stats = channel_stats(batch, spec.input_channels);
      for (std::size_t c = 0; c < spec.input_channels; ++c) {
        float& rm = params.values[layout.bn_running_mean.offset + c];
        float& rv = params.values[layout.bn_running_var.offset + c];
        rm = momentum * rm + (1.0f - momentum) * static_cast<float>(stats.mean[c]);
        rv = momentum * rv + (1.0f - momentum) * static_cast<float>(stats.var[c]);
      }

      std::fill(grad.begin(), grad.end(), 0.0f);
      for (const auto* w : batch) {
        const int y = w->label == signal::Label::Preictal ? 1 : 0;
        const float logit = net.run(*w, ws);
        if (!std::isfinite(logit)) throw TrainingError("training diverged: non-finite logit", static_cast<int>(epoch));
        const double loss = focal_loss_from_logit(logit, y, fl);
        if (!std::isfinite(loss)) throw TrainingError("training diverged: non-finite loss", static_cast<int>(epoch));
        epoch_loss += loss;
        net.backprop(*w, ws, static_cast<float>(focal_loss_logit_grad(logit, y, fl)), grad);
      }
      for (std::size_t i = 0; i < layout.trainable; ++i) {
        if (!std::isfinite(grad[i]))
          throw TrainingError("training diverged: non-finite gradient in " + layout.name_of(i),
                              static_cast<int>(epoch));
      }
      opt.step(params.values, grad, layout.trainable, 1.0f / static_cast<float>(batch.size()));
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(order.size());
    const auto probs = predict_proba(params, split.validation);
    if (!std::all_of(probs.begin(), probs.end(), [](double p) { return std::isfinite(p); }))
      throw TrainingError("training diverged: non-finite validation output", static_cast<int>(epoch));
    stats.val_loss = mean_loss(split.validation, probs, fl);
    if (!std::isfinite(stats.val_loss))
      throw TrainingError("training diverged: non-finite validation loss", static_cast<int>(epoch));
    std::vector<std::uint8_t> labels;
    for (const auto& w : split.validation) labels.push_back(w.label == signal::Label::Preictal);
    try {
      stats.val_auc = metrics::auc(probs, labels);
    } catch (const UndefinedMetricError&) {
      stats.val_auc = std::numeric_limits<double>::quiet_NaN();
    }
    result.curve.push_back(stats);

    if (stats.val_loss < best) {
      best = stats.val_loss;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= tc.patience) {
      break;
    }
  }
  return result;
}

std::string curve_csv(std::span<const EpochStats> curve) {
  std::string out = "epoch,train_loss,val_loss,val_auc\n";
  char buf[128];
  for (const auto& e : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_loss, e.val_auc);
    out += buf;
  }
  return out;
}

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
  params.validate();
  const auto& spec = params.spec;
  io::Writer w;
  w.raw({reinterpret_cast<const std::uint8_t*>(kCheckpointMagic), 4});
  w.u16(kCheckpointVersion);
  w.u32(spec.input_channels);
  w.u32(spec.input_length);
  w.u32(static_cast<std::uint32_t>(spec.conv_blocks.size()));
  for (const auto& b : spec.conv_blocks) {
    w.u32(b.filters);
    w.u32(b.kernel_size);
    w.u32(b.pool_width);
  }
  w.u32(static_cast<std::uint32_t>(spec.dense_widths.size()));
  for (auto d : spec.dense_widths) w.u32(d);
  w.u64(params.values.size());
  for (float v : params.values) w.f32(v);
  w.seal();
  return w.bytes();
}

ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  r.require(4, "magic");
  if (!std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.begin()))
    throw FormatError("bad magic, expected \"SZNM\"", 0);
  for (int i = 0; i < 4; ++i) r.u8("magic");
  const auto version_at = r.offset();
  if (const auto v = r.u16("version"); v != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(v), version_at);

  ModelSpec spec;
  spec.input_channels = r.u32("input_channels");
  spec.input_length = r.u32("input_length");
  const auto blocks_at = r.offset();
  const auto blocks = r.u32("conv_block_count");
  if (blocks > 64) throw FormatError("implausible conv block count", blocks_at);
  for (std::uint32_t b = 0; b < blocks; ++b) {
    ConvBlockSpec blk;
    blk.filters = r.u32("filters");
    blk.kernel_size = r.u32("kernel_size");
    blk.pool_width = r.u32("pool_width");
    spec.conv_blocks.push_back(blk);
  }
  const auto dense_at = r.offset();
  const auto dense = r.u32("dense_count");
  if (dense > 64) throw FormatError("implausible dense layer count", dense_at);
  for (std::uint32_t l = 0; l < dense; ++l) spec.dense_widths.push_back(r.u32("dense_width"));
  const auto spec_end = r.offset();
  try {
    spec.validate();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("invalid model spec: ") + e.what(), spec_end);
  }
  const ParamLayout layout(spec);
  const auto count_at = r.offset();
  const auto count = r.u64("param_count");
  if (count != layout.total)
    throw FormatError("parameter count " + std::to_string(count) + " does not match spec (" +
                          std::to_string(layout.total) + ")",
                      count_at);
  r.require(count * 4, "parameters");
  ModelParams params;
  params.spec = spec;
  params.values.resize(count);
  for (auto& v : params.values) v = r.f32("parameter");
  r.check_crc();
  return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

template struct BasicModelParams<float>;
template struct BasicModelParams<double>;
template BasicModelParams<float> init_params<float>(const ModelSpec&, std::uint64_t);
template BasicModelParams<double> init_params<double>(const ModelSpec&, std::uint64_t);
template float forward<float>(const BasicModelParams<float>&, const signal::SampleWindow&);
template double forward<double>(const BasicModelParams<double>&, const signal::SampleWindow&);
template BasicGradientSet<float> backward<float>(const BasicModelParams<float>&, std::span<const signal::SampleWindow>,
                                                 const FocalLossConfig&);
template BasicGradientSet<double> backward<double>(const BasicModelParams<double>&,
                                                   std::span<const signal::SampleWindow>, const FocalLossConfig&);
template double batch_loss<float>(const BasicModelParams<float>&, std::span<const signal::SampleWindow>,
                                  const FocalLossConfig&);
template double batch_loss<double>(const BasicModelParams<double>&, std::span<const signal::SampleWindow>,
                                   const FocalLossConfig&);

}  // namespace seiznet::nn
