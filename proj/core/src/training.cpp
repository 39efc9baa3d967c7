#include "padprobe/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <set>

#include "padprobe/kernels.hpp"

namespace padprobe {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0F)) throw ConfigError("learning rate must be > 0");
  if (!(momentum >= 0.0F && momentum < 1.0F)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0F)) throw ConfigError("weight decay must be >= 0");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (lr_step > 0 && !(lr_gamma > 0.0F)) throw ConfigError("lr_gamma must be > 0");
}

float TrainConfig::rate_at(std::size_t epoch) const {
  if (lr_step == 0) return learning_rate;
  float lr = learning_rate;
  for (std::size_t e = lr_step; e <= epoch; e += lr_step) lr *= lr_gamma;
  return lr;
}

void sgd_step(Tensor& weight, const Tensor& grad, Tensor& velocity, float lr, float momentum,
              float weight_decay) {
  require_same_dims(weight, grad, "sgd_step gradient");
  require_same_dims(weight, velocity, "sgd_step velocity");
  float* w = weight.data();
  const float* g = grad.data();
  float* v = velocity.data();
  for (std::size_t i = 0; i < weight.size(); ++i) {
    v[i] = momentum * v[i] + (g[i] + weight_decay * w[i]);
    w[i] = w[i] - lr * v[i];
  }
}

Sgd::Sgd(std::vector<Parameter*> params, const TrainConfig& config)
    : params_(std::move(params)), momentum_(config.momentum), weight_decay_(config.weight_decay) {
  velocity_.reserve(params_.size());
  for (Parameter* p : params_) velocity_.push_back(Tensor::zeros_like(p->value));
}

void Sgd::step(float lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    sgd_step(params_[i]->value, params_[i]->grad, velocity_[i], lr, momentum_, weight_decay_);
  }
}

void Sgd::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

Tensor stack_batch(const std::vector<Tensor>& items, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DimensionError("stack_batch: empty batch");
  const Tensor& first = items.at(indices.front());
  require_rank(first, 4, "stack_batch item");
  if (first.dim(0) != 1) throw DimensionError("stack_batch: items must have batch axis 1");
  Shape dims = first.dims();
  dims[0] = indices.size();
  Tensor out(dims);
  const std::size_t per = first.size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Tensor& t = items.at(indices[b]);
    require_same_dims(t, first, "stack_batch item");
    std::memcpy(out.data() + b * per, t.data(), per * sizeof(float));
  }
  return out;
}

Tensor stack_images(const std::vector<ImageRecord>& records, const std::vector<std::size_t>& indices) {
  std::vector<Tensor> items;
  items.reserve(indices.size());
  std::vector<std::size_t> local(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    items.push_back(records.at(indices[i]).image);
    local[i] = i;
  }
  return stack_batch(items, local);
}

namespace {

Tensor batch_slice(const Tensor& t, std::size_t n) {
  Shape dims = t.dims();
  dims[0] = 1;
  const std::size_t per = t.size() / t.dim(0);
  return Tensor(dims, std::vector<float>(t.data() + n * per, t.data() + (n + 1) * per));
}

std::vector<std::vector<std::size_t>> batches_of(std::size_t count, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch) {
    std::vector<std::size_t> b;
    for (std::size_t j = i; j < std::min(count, i + batch); ++j) b.push_back(j);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

std::vector<std::vector<Tensor>> compute_aligned_taps(Encoder& encoder,
                                                      const std::vector<ImageRecord>& records,
                                                      std::size_t align_side,
                                                      std::size_t batch_size) {
  std::vector<std::vector<Tensor>> out(records.size());
  for (const auto& idx : batches_of(records.size(), std::max<std::size_t>(batch_size, 1))) {
    const auto taps = encoder.forward_taps(stack_images(records, idx));
    for (std::size_t t = 0; t < taps.size(); ++t) {
      const Tensor aligned = kernels::bilinear_resize(taps[t], align_side, align_side);
      for (std::size_t b = 0; b < idx.size(); ++b) out[idx[b]].push_back(batch_slice(aligned, b));
    }
  }
  return out;
}

std::vector<Tensor> probe_features(const ProbeSpec& spec,
                                   const std::vector<std::vector<Tensor>>& aligned_taps) {
  if (spec.standalone) throw ConfigError("standalone probe features come from images");
  std::vector<Tensor> out;
  out.reserve(aligned_taps.size());
  for (const auto& taps : aligned_taps) {
    if (taps.size() != kNumTaps) {
      throw ConfigError("probe expects 5 encoder taps, got " + std::to_string(taps.size()));
    }
    for (const auto& t : taps) {
      if (t.dim(2) != spec.align_side || t.dim(3) != spec.align_side) {
        throw DimensionError("cached taps were aligned to a different side");
      }
    }
    std::vector<Tensor> chosen;
    for (std::size_t i : spec.taps) chosen.push_back(taps.at(i));
    out.push_back(kernels::concat_channels(chosen));
  }
  return out;
}

std::vector<Tensor> probe_features(const ProbeSpec& spec, const std::vector<ImageRecord>& records) {
  std::vector<Tensor> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(align_image(spec, r.image));
  return out;
}

std::vector<double> fit_probe(Probe& probe, const std::vector<Tensor>& features,
                              const PositionMap& target, const TrainConfig& config) {
  config.validate();
  if (features.empty()) throw ConfigError("probe training needs a non-empty dataset");
  if (!probe.spec().standalone) probe.fit_input_normalization(features);
  std::vector<Parameter*> params;
  for (auto& p : probe.params()) params.push_back(&p);
  Sgd sgd(params, config);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(features.size());
  std::vector<double> history;
  const Tensor target_one = target.to_tensor();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const float lr = config.rate_at(epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), start + config.batch_size)));
      Tensor targets({idx.size(), 1, target.height(), target.width()});
      for (std::size_t b = 0; b < idx.size(); ++b) {
        std::memcpy(targets.data() + b * target_one.size(), target_one.data(),
                    target_one.size() * sizeof(float));
      }
      sgd.zero_grad();
      Graph g;
      Var pred = probe.forward(g, g.input(stack_batch(features, idx)), target.height(), target.width());
      Var loss = g.mse_half(pred, std::move(targets));
      g.backward(loss);
      sgd.step(lr);
      const double l = loss.value()[0];
      if (!std::isfinite(l)) throw std::runtime_error("probe training diverged (non-finite loss)");
      loss_sum += l * static_cast<double>(idx.size());
    }
    history.push_back(loss_sum / static_cast<double>(features.size()));
  }
  return history;
}

std::vector<PositionMap> predict_all(Probe& probe, const std::vector<Tensor>& features,
                                     std::size_t target_h, std::size_t target_w,
                                     std::size_t batch_size) {
  std::vector<PositionMap> out;
  out.reserve(features.size());
  for (const auto& idx : batches_of(features.size(), std::max<std::size_t>(batch_size, 1))) {
    for (auto& m : probe.predict_features(stack_batch(features, idx), target_h, target_w)) {
      out.push_back(std::move(m));
    }
  }
  return out;
}

TrainHistory train_probe(Encoder* encoder, Probe& probe, const std::vector<ImageRecord>& dataset,
                         PatternKind pattern, const TrainConfig& config,
                         const PatternParams& pattern_params) {
  config.validate();
  if (dataset.empty()) throw ConfigError("probe training needs a non-empty dataset");
  const ProbeSpec& spec = probe.spec();
  std::vector<Tensor> features;
  if (spec.standalone) {
    features = probe_features(spec, dataset);
  } else {
    if (encoder == nullptr) throw ConfigError("a non-standalone probe needs an encoder");
    if (!encoder->frozen()) {
      throw ContractError("probe training requires a frozen encoder; call freeze() first");
    }
    features = probe_features(spec, compute_aligned_taps(*encoder, dataset, spec.align_side,
                                                         config.batch_size));
  }
  const std::size_t h = dataset.front().image.dim(2);
  const std::size_t w = dataset.front().image.dim(3);
  const PositionMap target = generate_pattern(pattern, h, w, pattern_params);

  TrainHistory history;
  history.epoch_loss = fit_probe(probe, features, target, config);
  for (const auto& pred : predict_all(probe, features, h, w, config.batch_size)) {
    history.final_report.add_image(pattern, ImageSource::Natural, pred, target);
  }
  return history;
}

double classifier_accuracy(Encoder& encoder, ClassifierHead& head,
                           const std::vector<ImageRecord>& dataset, std::size_t batch_size) {
  if (dataset.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& idx : batches_of(dataset.size(), std::max<std::size_t>(batch_size, 1))) {
    Graph g;
    auto taps = encoder.forward_taps(g, stack_images(dataset, idx));
    Var logits = head.logits(g, taps.back());
    const Tensor& l = logits.value();
    const std::size_t k = l.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const float* row = l.data() + b * k;
      const auto best = static_cast<int>(std::max_element(row, row + k) - row);
      if (dataset[idx[b]].label && *dataset[idx[b]].label == best) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

PretrainResult pretrain_classifier(Encoder& encoder, ClassifierHead& head,
                                   const std::vector<ImageRecord>& dataset,
                                   const TrainConfig& config,
                                   const std::function<void(std::size_t, double)>& on_epoch) {
  if (dataset.empty()) throw ConfigError("pretraining needs a non-empty dataset");
  std::set<int> classes;
  for (const auto& r : dataset) {
    if (!r.label) throw ConfigError("pretraining needs labels; " + r.origin + " has none");
    if (*r.label < 0 || *r.label >= head.num_classes()) {
      throw ConfigError("label " + std::to_string(*r.label) + " of " + r.origin +
                        " is outside the head's " + std::to_string(head.num_classes()) + " classes");
    }
    classes.insert(*r.label);
  }
  if (classes.size() < 2) throw ConfigError("pretraining needs at least two classes in the data");
  // lr == 0 is allowed here so that a no-op run can be checked.
  TrainConfig checked = config;
  if (checked.learning_rate == 0.0F) checked.learning_rate = 1.0F;
  checked.validate();

  encoder.unfreeze();
  std::vector<Parameter*> params;
  for (auto& p : encoder.params()) params.push_back(&p);
  params.push_back(&head.weight);
  params.push_back(&head.bias);
  Sgd sgd(params, config);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  PretrainResult result;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const float lr = config.rate_at(epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), start + config.batch_size)));
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(*dataset[i].label);
      sgd.zero_grad();
      Graph g;
      auto taps = encoder.forward_taps(g, stack_images(dataset, idx));
      Var loss = g.softmax_xent(head.logits(g, taps.back()), labels);
      g.backward(loss);
      if (config.learning_rate > 0.0F) sgd.step(lr);
      const double l = loss.value()[0];
      if (!std::isfinite(l)) throw std::runtime_error("pretraining diverged (non-finite loss)");
      loss_sum += l * static_cast<double>(idx.size());
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(dataset.size()));
    if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
  }
  result.train_accuracy = classifier_accuracy(encoder, head, dataset, config.batch_size);
  return result;
}

}  // namespace padprobe
