#pragma once

// Define-by-run reverse-mode differentiation. A Graph records one forward pass
// (nodes are appended in execution order, so the node list is already a
// topological order) and is discarded after backward().

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "padprobe/kernels.hpp"
#include "padprobe/tensor.hpp"

namespace padprobe {

enum class OpKind {
  Input,
  Parameter,
  Conv2d,
  Relu,
  MaxPool2,
  BilinearResize,
  ConcatChannels,
  Add,
  GlobalAvgPool,
  Affine,
  SoftmaxXent,
  MseHalf,
};

std::string_view op_name(OpKind kind);

/// A named trainable (or frozen) tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)), trainable(train) {}

  void zero_grad() { grad.fill(0.0F); }
};

class Graph;

/// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  [[nodiscard]] Graph& graph() const;
  [[nodiscard]] std::size_t id() const noexcept { return id_; }
  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const Tensor& grad() const;
  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] bool valid() const noexcept { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(Tensor value, bool requires_grad = false);
  /// Reads the parameter's value. If the parameter is trainable, backward()
  /// adds into parameter.grad; frozen parameters are never written.
  Var parameter(Parameter& p);

  Var conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t padding);
  Var relu(Var x);
  Var maxpool2(Var x);
  Var bilinear_resize(Var x, std::size_t out_h, std::size_t out_w);
  Var concat_channels(const std::vector<Var>& xs);
  Var add(Var a, Var b);
  Var global_avg_pool(Var x);
  Var affine(Var x, Var weight, Var bias);
  Var softmax_xent(Var logits, std::vector<int> labels);
  Var mse_half(Var pred, Tensor target);

  /// Reverse sweep from a scalar (single-element) node.
  void backward(Var loss);
  /// Reverse sweep seeded with an explicit output gradient (vector-Jacobian product).
  void backward(Var output, const Tensor& output_grad);

  [[nodiscard]] const Tensor& value(Var v) const;
  [[nodiscard]] const Tensor& grad(Var v) const;
  [[nodiscard]] bool requires_grad(Var v) const;
  [[nodiscard]] OpKind kind(Var v) const;
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind = OpKind::Input;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::vector<std::size_t> argmax;
    std::vector<int> labels;
    Tensor target;
  };

  Var push(Node node);
  Node& node(Var v);
  [[nodiscard]] const Node& node(Var v) const;
  void accumulate(std::size_t id, const Tensor& g);
  bool any_requires_grad(const std::vector<std::size_t>& ids) const;

  std::vector<Node> nodes_;
};

}  // namespace padprobe
