#include "padprobe/graph.hpp"

#include <utility>

namespace padprobe {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Parameter: return "parameter";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Relu: return "relu";
    case OpKind::MaxPool2: return "maxpool2";
    case OpKind::BilinearResize: return "bilinear-resize";
    case OpKind::ConcatChannels: return "concat-channels";
    case OpKind::Add: return "add";
    case OpKind::GlobalAvgPool: return "global-avg-pool";
    case OpKind::Affine: return "affine";
    case OpKind::SoftmaxXent: return "softmax-xent";
    case OpKind::MseHalf: return "mse-half";
  }
  return "unknown";
}

Graph& Var::graph() const {
  if (graph_ == nullptr) throw ContractError("use of an unbound Var");
  return *graph_;
}
const Tensor& Var::value() const { return graph().value(*this); }
const Tensor& Var::grad() const { return graph().grad(*this); }
bool Var::requires_grad() const { return graph().requires_grad(*this); }

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Graph::Node& Graph::node(Var v) {
  if (&v.graph() != this || v.id() >= nodes_.size()) {
    throw ContractError("Var does not belong to this graph");
  }
  return nodes_[v.id()];
}

const Graph::Node& Graph::node(Var v) const {
  if (&v.graph() != this || v.id() >= nodes_.size()) {
    throw ContractError("Var does not belong to this graph");
  }
  return nodes_[v.id()];
}

bool Graph::any_requires_grad(const std::vector<std::size_t>& ids) const {
  for (auto id : ids) {
    if (nodes_[id].requires_grad) return true;
  }
  return false;
}

const Tensor& Graph::value(Var v) const { return node(v).value; }
const Tensor& Graph::grad(Var v) const { return node(v).grad; }
bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }
OpKind Graph::kind(Var v) const { return node(v).kind; }

Var Graph::input(Tensor value, bool requires_grad) {
  Node n;
  n.kind = OpKind::Input;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Graph::parameter(Parameter& p) {
  Node n;
  n.kind = OpKind::Parameter;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = &p;
  return push(std::move(n));
}

Var Graph::conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  Node n;
  n.kind = OpKind::Conv2d;
  n.inputs = {x.id(), weight.id(), bias.id()};
  n.stride = stride;
  n.padding = padding;
  n.value = kernels::conv2d(value(x), value(weight), value(bias), {stride, padding});
  n.requires_grad = any_requires_grad(n.inputs);
  return push(std::move(n));
}

Var Graph::relu(Var x) {
  Node n;
  n.kind = OpKind::Relu;
  n.inputs = {x.id()};
  n.value = kernels::relu(value(x));
  n.requires_grad = requires_grad(x);
  return push(std::move(n));
}

Var Graph::maxpool2(Var x) {
  Node n;
  n.kind = OpKind::MaxPool2;
  n.inputs = {x.id()};
  auto r = kernels::maxpool2(value(x));
  n.value = std::move(r.output);
  n.requires_grad = requires_grad(x);
  if (n.requires_grad) n.argmax = std::move(r.argmax);
  return push(std::move(n));
}

Var Graph::bilinear_resize(Var x, std::size_t out_h, std::size_t out_w) {
  Node n;
  n.kind = OpKind::BilinearResize;
  n.inputs = {x.id()};
  n.value = kernels::bilinear_resize(value(x), out_h, out_w);
  n.requires_grad = requires_grad(x);
  return push(std::move(n));
}

Var Graph::concat_channels(const std::vector<Var>& xs) {
  Node n;
  n.kind = OpKind::ConcatChannels;
  std::vector<const Tensor*> parts;
  for (const Var& v : xs) {
    n.inputs.push_back(v.id());
    parts.push_back(&value(v));
  }
  n.value = kernels::concat_channels(std::span<const Tensor* const>(parts));
  n.requires_grad = any_requires_grad(n.inputs);
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  Node n;
  n.kind = OpKind::Add;
  n.inputs = {a.id(), b.id()};
  n.value = kernels::add(value(a), value(b));
  n.requires_grad = any_requires_grad(n.inputs);
  return push(std::move(n));
}

Var Graph::global_avg_pool(Var x) {
  Node n;
  n.kind = OpKind::GlobalAvgPool;
  n.inputs = {x.id()};
  n.value = kernels::global_avg_pool(value(x));
  n.requires_grad = requires_grad(x);
  return push(std::move(n));
}

Var Graph::affine(Var x, Var weight, Var bias) {
  Node n;
  n.kind = OpKind::Affine;
  n.inputs = {x.id(), weight.id(), bias.id()};
  n.value = kernels::affine(value(x), value(weight), value(bias));
  n.requires_grad = any_requires_grad(n.inputs);
  return push(std::move(n));
}

Var Graph::softmax_xent(Var logits, std::vector<int> labels) {
  Node n;
  n.kind = OpKind::SoftmaxXent;
  n.inputs = {logits.id()};
  n.value = Tensor({1}, kernels::softmax_xent(value(logits), labels));
  n.labels = std::move(labels);
  n.requires_grad = requires_grad(logits);
  return push(std::move(n));
}

Var Graph::mse_half(Var pred, Tensor target) {
  Node n;
  n.kind = OpKind::MseHalf;
  n.inputs = {pred.id()};
  n.value = Tensor({1}, kernels::mse_half(value(pred), target));
  n.target = std::move(target);
  n.requires_grad = requires_grad(pred);
  return push(std::move(n));
}

void Graph::accumulate(std::size_t id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  require_same_dims(n.grad, g, "gradient accumulation");
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void Graph::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_to_string(root.value.dims()));
  }
  backward(loss, Tensor(root.value.dims(), 1.0F));
}

void Graph::backward(Var output, const Tensor& output_grad) {
  const Node& root = node(output);
  require_same_dims(root.value, output_grad, "backward seed");
  if (!root.requires_grad) return;
  accumulate(output.id(), output_grad);

  for (std::size_t idx = output.id() + 1; idx-- > 0;) {
    Node& n = nodes_[idx];
    if (!n.requires_grad || n.grad.empty()) continue;
    const Tensor& g = n.grad;
    switch (n.kind) {
      case OpKind::Input:
        break;
      case OpKind::Parameter:
        if (n.param != nullptr && n.param->trainable) {
          Tensor& pg = n.param->grad;
          if (pg.dims() != g.dims()) pg = Tensor(g.dims());
          for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
        break;
      case OpKind::Conv2d: {
        const Node& x = nodes_[n.inputs[0]];
        const Node& w = nodes_[n.inputs[1]];
        const bool want_params = w.requires_grad || nodes_[n.inputs[2]].requires_grad;
        auto grads = kernels::conv2d_backward(x.value, w.value, g, {n.stride, n.padding},
                                              x.requires_grad, want_params);
        if (x.requires_grad) accumulate(n.inputs[0], grads.input);
        if (want_params) {
          accumulate(n.inputs[1], grads.weight);
          accumulate(n.inputs[2], grads.bias);
        }
        break;
      }
      case OpKind::Relu:
        accumulate(n.inputs[0], kernels::relu_backward(nodes_[n.inputs[0]].value, g));
        break;
      case OpKind::MaxPool2:
        accumulate(n.inputs[0],
                   kernels::maxpool2_backward(nodes_[n.inputs[0]].value.dims(), n.argmax, g));
        break;
      case OpKind::BilinearResize:
        accumulate(n.inputs[0],
                   kernels::bilinear_resize_backward(nodes_[n.inputs[0]].value.dims(), g));
        break;
      case OpKind::ConcatChannels: {
        std::vector<std::size_t> channels;
        for (auto id : n.inputs) channels.push_back(nodes_[id].value.dim(1));
        auto parts = kernels::split_channels(g, channels);
        for (std::size_t i = 0; i < n.inputs.size(); ++i) accumulate(n.inputs[i], parts[i]);
        break;
      }
      case OpKind::Add:
        accumulate(n.inputs[0], g);
        accumulate(n.inputs[1], g);
        break;
      case OpKind::GlobalAvgPool:
        accumulate(n.inputs[0],
                   kernels::global_avg_pool_backward(nodes_[n.inputs[0]].value.dims(), g));
        break;
      case OpKind::Affine: {
        const Node& x = nodes_[n.inputs[0]];
        const Node& w = nodes_[n.inputs[1]];
        const bool want_params = w.requires_grad || nodes_[n.inputs[2]].requires_grad;
        auto grads = kernels::affine_backward(x.value, w.value, g, x.requires_grad, want_params);
        if (x.requires_grad) accumulate(n.inputs[0], grads.x);
        if (want_params) {
          accumulate(n.inputs[1], grads.weight);
          accumulate(n.inputs[2], grads.bias);
        }
        break;
      }
      case OpKind::SoftmaxXent: {
        Tensor gx = kernels::softmax_xent_backward(nodes_[n.inputs[0]].value, n.labels);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= g[0];
        accumulate(n.inputs[0], gx);
        break;
      }
      case OpKind::MseHalf: {
        Tensor gx = kernels::mse_half_backward(nodes_[n.inputs[0]].value, n.target);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= g[0];
        accumulate(n.inputs[0], gx);
        break;
      }
    }
  }
}

}  // namespace padprobe
