#pragma once

#include <functional>
#include <vector>

#include "distribution.hpp"
#include "flops.hpp"

namespace dac {

// Row-major (batch x features) tensor.
struct Tensor {
  int rows = 0, cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  const double& at(int r, int c) const {
    return v[static_cast<std::size_t>(r) * cols + c];
  }
  std::size_t size() const { return v.size(); }
  void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

// Reverse-mode tape over tensors.  Nodes are created in topological order;
// backward() walks them once in reverse.  A tape can run backward once per
// recording; re-use without clear() is rejected.
class Tape {
 public:
  using NodeId = int;

  NodeId constant(Tensor value);
  // leaf bound to external parameter storage; backward accumulates into grad
  NodeId param(Tensor* value, Tensor* grad);

  NodeId matmul(NodeId x, NodeId w);           // (B x I) * (I x O)
  NodeId add_row(NodeId x, NodeId bias);       // bias is 1 x O
  NodeId tanh_(NodeId x);
  NodeId relu_(NodeId x);
  NodeId softplus(NodeId x);
  NodeId clamp_min(NodeId x, double lo);
  NodeId clamp(NodeId x, double lo, double hi);
  NodeId softmax_rows(NodeId x);
  NodeId exp_(NodeId x);
  NodeId square(NodeId x);
  NodeId scale(NodeId x, double s);
  NodeId add_scalar(NodeId x, double s);
  NodeId slice_cols(NodeId x, int c0, int c1);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId mul_const(NodeId x, Tensor c);
  NodeId sub_const(NodeId x, Tensor c);        // x - c
  NodeId min_const(NodeId x, Tensor c);        // grad flows where x <= c
  NodeId max_elem(NodeId a, NodeId b);         // ties take a
  NodeId mean_all(NodeId x);                   // 1 x 1

  // policy heads
  NodeId categorical_log_prob(NodeId logits, std::vector<int> actions);
  NodeId categorical_entropy(NodeId logits);
  NodeId gaussian_log_prob(NodeId mean, NodeId log_std, Tensor actions);
  NodeId gaussian_entropy(NodeId log_std, int batch);

  // critic losses (mean over the batch)
  NodeId huber_quantile_batch(NodeId preds, Tensor targets,
                              std::vector<double> fractions, double kappa);
  NodeId energy_sample_batch(NodeId preds, Tensor targets);
  // target_self may carry precomputed delta_gmm(target, target) per row;
  // empty means compute here
  NodeId energy_gmm_batch(NodeId weights, NodeId means, NodeId variances,
                          std::vector<GaussianMixture> targets,
                          std::vector<double> target_self = {});

  const Tensor& value(NodeId id) const { return nodes_[id].val; }
  const Tensor& gradient(NodeId id) const { return nodes_[id].grad; }

  void backward(NodeId loss);
  void clear();

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    std::function<void(Tape&, int)> back;
    bool needs_grad = false;
    Tensor* bound_grad = nullptr;
  };

  NodeId push(Tensor val, bool needs_grad,
              std::function<void(Tape&, int)> back);
  Tensor& grad_of(NodeId id);
  void check_open() const;

  std::vector<Node> nodes_;
  bool consumed_ = false;

  friend struct TapeOps;
};

}  // namespace dac
