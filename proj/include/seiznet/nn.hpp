#pragma once

// 1-D CNN seizure classifier: input batch normalization, conv blocks
// (conv -> ReLU -> max-pool), flatten, dense stack with ReLU on all but the
// final unit, sigmoid output. Trained per patient with the focal loss.
//
// Kernels are templated on the scalar type. Models are trained and stored in
// float; the double instantiation exists for finite-difference checks.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "seiznet/signal.hpp"

namespace seiznet::nn {

struct ConvBlockSpec {
  std::uint32_t filters = 16;
  std::uint32_t kernel_size = 7;  // odd, "same" zero padding
  std::uint32_t pool_width = 2;

  bool operator==(const ConvBlockSpec&) const = default;
};

struct ModelSpec {
  std::uint32_t input_channels = 1;
  std::uint32_t input_length = 1024;
  std::vector<ConvBlockSpec> conv_blocks;
  std::vector<std::uint32_t> dense_widths;  // last entry is the single output unit

  /// Five conv blocks (16,32,32,64,64 filters; kernels 7,5,5,3,3; pool 2)
  /// and four dense layers (256, 64, 16, 1).
  static ModelSpec reference(std::uint32_t input_channels = 1, std::uint32_t input_length = 1024);

  static constexpr std::size_t kReferenceConvBlocks = 5;
  static constexpr std::size_t kReferenceDenseLayers = 4;

  bool is_reference_topology() const;

  /// General structural checks (any block/layer count); throws ShapeError.
  void validate() const;

  /// Sequence length after `blocks` conv blocks.
  std::uint32_t length_after(std::size_t blocks) const;
  std::size_t flatten_size() const;

  bool operator==(const ModelSpec&) const = default;
};

struct Slice {
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Position of each tensor inside the flat parameter vector. Trainable
/// tensors come first; the batch-norm running statistics sit at the end.
struct ParamLayout {
  explicit ParamLayout(const ModelSpec& spec);

  Slice bn_scale, bn_shift;
  std::vector<Slice> conv_weight, conv_bias;  // weight [filters][in_channels][kernel]
  std::vector<Slice> dense_weight, dense_bias;  // weight [out][in]
  Slice bn_running_mean, bn_running_var;
  std::size_t trainable = 0;
  std::size_t total = 0;

  /// Human-readable tensor name owning flat index `i`.
  std::string name_of(std::size_t i) const;
};

template <typename T>
struct BasicModelParams {
  ModelSpec spec;
  std::vector<T> values;

  BasicModelParams() = default;
  explicit BasicModelParams(ModelSpec s);  // all zeros, running var 1, bn scale 1

  ParamLayout layout() const { return ParamLayout(spec); }
  std::span<T> slice(Slice s) { return {values.data() + s.offset, s.size}; }
  std::span<const T> slice(Slice s) const { return {values.data() + s.offset, s.size}; }

  /// Throws ShapeError / NumericError on an inconsistent parameter set.
  void validate() const;

  template <typename U>
  BasicModelParams<U> cast() const {
    BasicModelParams<U> out;
    out.spec = spec;
    out.values.assign(values.begin(), values.end());
    return out;
  }

  bool operator==(const BasicModelParams&) const = default;
};

using ModelParams = BasicModelParams<float>;

/// Fan-in scaled uniform weights, zero biases, identity batch norm.
template <typename T>
BasicModelParams<T> init_params(const ModelSpec& spec, std::uint64_t seed);

struct FocalLossConfig {
  double alpha = 0.2;
  double gamma = 2.0;

  /// Plain cross-entropy up to a factor 1/2 (alpha 0.5, gamma 0).
  static FocalLossConfig cross_entropy() { return {0.5, 0.0}; }

  void validate() const;
};

inline constexpr double kProbabilityEpsilon = 1e-7;

/// -alpha (1-p)^gamma log p for y = 1; -(1-alpha) p^gamma log(1-p) for y = 0,
/// with p clamped to [eps, 1 - eps].
double focal_loss(double p, int y, const FocalLossConfig& cfg = {});

/// d focal_loss / dp at the clamped p.
double focal_loss_grad(double p, int y, const FocalLossConfig& cfg = {});

/// focal_loss(sigmoid(z)) evaluated with log-sigmoid and without the
/// probability clamp; the network's training and gradient-check loss.
double focal_loss_from_logit(double logit, int y, const FocalLossConfig& cfg = {});

/// d focal_loss(sigmoid(z)) / dz, evaluated with log-sigmoid so it stays
/// finite for saturated logits.
double focal_loss_logit_grad(double logit, int y, const FocalLossConfig& cfg = {});

/// Preictal probability of one window (inference mode: running batch-norm
/// statistics). Throws ShapeError on a window that does not fit the ModelSpec.
template <typename T>
T forward(const BasicModelParams<T>& params, const signal::SampleWindow& window);

template <typename T>
struct BasicGradientSet {
  std::vector<T> values;  // same layout as the parameters; running stats stay 0
  double loss = 0.0;      // summed over the batch
};

/// Gradient of the summed focal loss over `batch`.
template <typename T>
BasicGradientSet<T> backward(const BasicModelParams<T>& params, std::span<const signal::SampleWindow> batch,
                             const FocalLossConfig& cfg);

/// Summed focal loss over `batch` (forward only).
template <typename T>
double batch_loss(const BasicModelParams<T>& params, std::span<const signal::SampleWindow> batch,
                  const FocalLossConfig& cfg);

std::vector<double> predict_proba(const ModelParams& params, std::span<const signal::SampleWindow> windows);

/// Per-channel probabilities for a single-channel model applied to each
/// channel of a multi-channel window.
std::vector<double> predict_channels(const ModelParams& params, const signal::SampleWindow& window);

enum class Optimizer : std::uint8_t { Sgd, Momentum, Adam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::Adam;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 30;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  double bn_momentum = 0.9;

  void validate() const;
};

Optimizer parse_optimizer(std::string_view s);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auc = 0.0;  // NaN when the validation split has one class
};

struct TrainResult {
  ModelParams params;  // snapshot with the best validation loss
  std::vector<EpochStats> curve;
  std::size_t best_epoch = 0;
};

TrainResult train(const ModelSpec& spec, const signal::DatasetSplit& split, const FocalLossConfig& fl,
                  const TrainConfig& tc);

/// CSV with header `epoch,train_loss,val_loss,val_auc`.
std::string curve_csv(std::span<const EpochStats> curve);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace seiznet::nn
