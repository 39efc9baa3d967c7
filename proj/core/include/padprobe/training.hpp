#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "padprobe/data.hpp"
#include "padprobe/encoder.hpp"
#include "padprobe/graph.hpp"
#include "padprobe/metrics.hpp"
#include "padprobe/patterns.hpp"
#include "padprobe/probe.hpp"

namespace padprobe {

struct TrainConfig {
  std::size_t epochs = 15;
  float learning_rate = 0.01F;
  float momentum = 0.9F;
  float weight_decay = 1e-4F;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  /// Step schedule: multiply the rate by lr_gamma every lr_step epochs.
  /// lr_step == 0 keeps the rate constant.
  std::size_t lr_step = 0;
  float lr_gamma = 0.1F;

  /// Throws ConfigError on epochs == 0, lr <= 0, momentum outside [0, 1),
  /// negative decay, batch size 0.
  void validate() const;
  [[nodiscard]] float rate_at(std::size_t epoch) const;
};

/// One momentum SGD update, elementwise in float32:
///   v <- momentum * v + (g + weight_decay * w)
///   w <- w - lr * v
void sgd_step(Tensor& weight, const Tensor& grad, Tensor& velocity, float lr, float momentum,
              float weight_decay);

/// SGD over a fixed parameter list; velocities start at zero.
class Sgd {
 public:
  Sgd(std::vector<Parameter*> params, const TrainConfig& config);
  /// Applies one update using each parameter's accumulated gradient.
  void step(float lr);
  void zero_grad();

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> velocity_;
  float momentum_;
  float weight_decay_;
};

struct TrainHistory {
  std::vector<double> epoch_loss;
  /// Metrics of the trained probe on its own training images.
  MetricReport final_report;
};

/// Stacks 1 x C x H x W tensors (selected by index) into N x C x H x W.
Tensor stack_batch(const std::vector<Tensor>& items, const std::vector<std::size_t>& indices);
Tensor stack_images(const std::vector<ImageRecord>& records, const std::vector<std::size_t>& indices);

/// Encoder taps for every record, each resized to `align_side` (five
/// 1 x C_i x a x a tensors per image). The encoder is only read.
std::vector<std::vector<Tensor>> compute_aligned_taps(Encoder& encoder,
                                                      const std::vector<ImageRecord>& records,
                                                      std::size_t align_side,
                                                      std::size_t batch_size = 8);

/// Probe input for every record: selected aligned taps concatenated, or the
/// resized raw image for a standalone probe.
std::vector<Tensor> probe_features(const ProbeSpec& spec,
                                   const std::vector<std::vector<Tensor>>& aligned_taps);
std::vector<Tensor> probe_features(const ProbeSpec& spec, const std::vector<ImageRecord>& records);

/// Core probe loop over precomputed features. Every image shares `target`.
/// Probes on encoder taps first fit their input normalization to `features`;
/// the standalone probe reads raw pixels.
std::vector<double> fit_probe(Probe& probe, const std::vector<Tensor>& features,
                              const PositionMap& target, const TrainConfig& config);

/// Trains the probe against generate(pattern, side, side). For non-standalone
/// probes the encoder must be frozen (ContractError otherwise); it may be null
/// for a standalone probe.
TrainHistory train_probe(Encoder* encoder, Probe& probe, const std::vector<ImageRecord>& dataset,
                         PatternKind pattern, const TrainConfig& config,
                         const PatternParams& pattern_params = {});

/// Predictions for every feature tensor, in order.
std::vector<PositionMap> predict_all(Probe& probe, const std::vector<Tensor>& features,
                                     std::size_t target_h, std::size_t target_w,
                                     std::size_t batch_size = 8);

struct PretrainResult {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
};

/// Softmax cross-entropy on the classifier head over the last tap. Unfreezes
/// the encoder and updates every encoder and head parameter; the caller
/// freezes it afterwards. Throws ConfigError for unlabeled data or fewer
/// than two classes.
PretrainResult pretrain_classifier(Encoder& encoder, ClassifierHead& head,
                                   const std::vector<ImageRecord>& dataset,
                                   const TrainConfig& config,
                                   const std::function<void(std::size_t, double)>& on_epoch = {});

/// Top-1 accuracy of encoder + head on labeled records.
double classifier_accuracy(Encoder& encoder, ClassifierHead& head,
                           const std::vector<ImageRecord>& dataset, std::size_t batch_size = 8);

}  // namespace padprobe
