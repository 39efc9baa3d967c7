#include "padprobe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace padprobe {

namespace {

struct Instance {
  std::vector<Tensor> leaves;
  std::vector<int> labels;
  Tensor target;
  Tensor projection;
};

Tensor uniform(const Shape& dims, float lo, float hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(dims);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

// Magnitude in [lo, hi) with a random sign.
Tensor signed_uniform(const Shape& dims, float lo, float hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::bernoulli_distribution sign(0.5);
  Tensor t(dims);
  for (auto& v : t.values()) v = sign(rng) ? dist(rng) : -dist(rng);
  return t;
}

bool scalar_output(OpKind k) { return k == OpKind::SoftmaxXent || k == OpKind::MseHalf; }

Instance make_instance(const GradCheckCase& c, std::mt19937_64& rng) {
  Instance inst;
  const Shape& d = c.input_dims;
  switch (c.kind) {
    case OpKind::Conv2d: {
      require_rank(Tensor(d), 4, "grad_check conv2d input");
      inst.leaves.push_back(uniform(d, 0.05F, 0.15F, rng));
      inst.leaves.push_back(uniform({c.out_channels, d[1], c.kernel, c.kernel}, 0.05F, 0.15F, rng));
      inst.leaves.push_back(uniform({c.out_channels}, 0.05F, 0.15F, rng));
      break;
    }
    case OpKind::Relu:
      inst.leaves.push_back(signed_uniform(d, 0.1F, 1.1F, rng));
      break;
    case OpKind::MaxPool2: {
      // Distinct values on a 0.05 grid: no window has a near-tie within eps.
      Tensor t(d);
      std::vector<float> grid(t.size());
      for (std::size_t i = 0; i < grid.size(); ++i) {
        grid[i] = -1.0F + 0.05F * static_cast<float>(i);
      }
      std::shuffle(grid.begin(), grid.end(), rng);
      std::copy(grid.begin(), grid.end(), t.data());
      inst.leaves.push_back(std::move(t));
      break;
    }
    case OpKind::BilinearResize:
    case OpKind::GlobalAvgPool:
      inst.leaves.push_back(uniform(d, 0.05F, 0.15F, rng));
      break;
    case OpKind::ConcatChannels: {
      inst.leaves.push_back(uniform(d, -1.0F, 1.0F, rng));
      Shape other = d;
      other[1] += 1;
      inst.leaves.push_back(uniform(other, -1.0F, 1.0F, rng));
      break;
    }
    case OpKind::Add:
      inst.leaves.push_back(uniform(d, -1.0F, 1.0F, rng));
      inst.leaves.push_back(uniform(d, -1.0F, 1.0F, rng));
      break;
    case OpKind::Affine: {
      require_rank(Tensor(d), 2, "grad_check affine input");
      inst.leaves.push_back(uniform(d, 0.05F, 0.15F, rng));
      inst.leaves.push_back(uniform({c.out_channels, d[1]}, 0.05F, 0.15F, rng));
      inst.leaves.push_back(uniform({c.out_channels}, 0.05F, 0.15F, rng));
      break;
    }
    case OpKind::SoftmaxXent: {
      require_rank(Tensor(d), 2, "grad_check softmax-xent logits");
      inst.leaves.push_back(uniform(d, -0.5F, 0.5F, rng));
      std::uniform_int_distribution<int> cls(0, static_cast<int>(d[1]) - 1);
      for (std::size_t i = 0; i < d[0]; ++i) inst.labels.push_back(cls(rng));
      break;
    }
    case OpKind::MseHalf: {
      inst.target = uniform(d, -1.0F, 1.0F, rng);
      // The loss is a single float, so its rounding (about 6e-8 * loss) shows up
      // in the central difference divided by 2 * eps. Small residuals keep the
      // loss small next to each per-entry gradient (pred - target) / N.
      Tensor diff = signed_uniform(d, 0.02F, 0.05F, rng);
      Tensor pred(d);
      for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = inst.target[i] + diff[i];
      inst.leaves.push_back(std::move(pred));
      break;
    }
    case OpKind::Input:
    case OpKind::Parameter:
      throw ContractError("grad_check: " + std::string(op_name(c.kind)) + " is not an operator");
  }
  return inst;
}

Var build(Graph& g, const GradCheckCase& c, const Instance& inst, std::vector<Var>& leaves) {
  for (const auto& t : inst.leaves) leaves.push_back(g.input(t, true));
  switch (c.kind) {
    case OpKind::Conv2d: return g.conv2d(leaves[0], leaves[1], leaves[2], c.stride, c.padding);
    case OpKind::Relu: return g.relu(leaves[0]);
    case OpKind::MaxPool2: return g.maxpool2(leaves[0]);
    case OpKind::BilinearResize: return g.bilinear_resize(leaves[0], c.out_h, c.out_w);
    case OpKind::ConcatChannels: return g.concat_channels(leaves);
    case OpKind::Add: return g.add(leaves[0], leaves[1]);
    case OpKind::GlobalAvgPool: return g.global_avg_pool(leaves[0]);
    case OpKind::Affine: return g.affine(leaves[0], leaves[1], leaves[2]);
    case OpKind::SoftmaxXent: return g.softmax_xent(leaves[0], inst.labels);
    case OpKind::MseHalf: return g.mse_half(leaves[0], inst.target);
    default: break;
  }
  throw ContractError("grad_check: unsupported op");
}

double scalar_loss(const GradCheckCase& c, const Instance& inst) {
  Graph g;
  std::vector<Var> leaves;
  Var out = build(g, c, inst, leaves);
  const Tensor& y = out.value();
  if (scalar_output(c.kind)) return static_cast<double>(y[0]);
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    acc += static_cast<double>(inst.projection[i]) * static_cast<double>(y[i]);
  }
  return acc;
}

}  // namespace

GradCheckResult grad_check(const GradCheckCase& c, float eps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Instance inst = make_instance(c, rng);

  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> leaves;
    Var out = build(g, c, inst, leaves);
    if (scalar_output(c.kind)) {
      g.backward(out);
    } else {
      inst.projection = uniform(out.value().dims(), 0.5F, 1.5F, rng);
      g.backward(out, inst.projection);
    }
    for (const Var& v : leaves) {
      analytic.push_back(v.grad().empty() ? Tensor::zeros_like(v.value()) : v.grad());
    }
  }

  GradCheckResult result;
  for (std::size_t li = 0; li < inst.leaves.size(); ++li) {
    Tensor& t = inst.leaves[li];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float orig = t[i];
      const float up = orig + eps;
      const float down = orig - eps;
      t[i] = up;
      const double lp = scalar_loss(c, inst);
      t[i] = down;
      const double lm = scalar_loss(c, inst);
      t[i] = orig;
      const double numeric = (lp - lm) / (static_cast<double>(up) - static_cast<double>(down));
      const double a = analytic[li][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace padprobe
