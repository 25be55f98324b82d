#include "tape.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "metrics.hpp"

namespace dac {

namespace {
double stable_softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

void Tape::check_open() const {
  if (consumed_) throw std::runtime_error("Tape: reuse after backward");
}

Tape::NodeId Tape::push(Tensor val, bool needs_grad,
                        std::function<void(Tape&, int)> back) {
  check_open();
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor& Tape::grad_of(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.rows != n.val.rows || n.grad.cols != n.val.cols)
    n.grad = Tensor(n.val.rows, n.val.cols);
  return n.grad;
}

Tape::NodeId Tape::constant(Tensor value) {
  return push(std::move(value), false, nullptr);
}

Tape::NodeId Tape::param(Tensor* value, Tensor* grad) {
  if (!value || !grad) throw std::invalid_argument("Tape::param: null block");
  NodeId id = push(*value, true, [](Tape& t, int self) {
    Node& n = t.nodes_[self];
    for (std::size_t i = 0; i < n.grad.v.size(); ++i)
      n.bound_grad->v[i] += n.grad.v[i];
  });
  nodes_[id].bound_grad = grad;
  return id;
}

Tape::NodeId Tape::matmul(NodeId x, NodeId w) {
  const Tensor& xv = nodes_[x].val;
  const Tensor& wv = nodes_[w].val;
  if (xv.cols != wv.rows) throw std::invalid_argument("matmul: shape mismatch");
  Tensor out(xv.rows, wv.cols);
  for (int r = 0; r < xv.rows; ++r)
    for (int k = 0; k < xv.cols; ++k) {
      double xk = xv.at(r, k);
      if (xk == 0.0) continue;
      for (int c = 0; c < wv.cols; ++c) out.at(r, c) += xk * wv.at(k, c);
    }
  flops::add_muladd(static_cast<double>(xv.rows) * xv.cols * wv.cols);
  bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad;
  return push(std::move(out), ng, [x, w](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& xv = t.nodes_[x].val;
    const Tensor& wv = t.nodes_[w].val;
    if (t.nodes_[x].needs_grad) {
      Tensor& gx = t.grad_of(x);
      for (int r = 0; r < xv.rows; ++r)
        for (int c = 0; c < wv.cols; ++c) {
          double gc = g.at(r, c);
          if (gc == 0.0) continue;
          for (int k = 0; k < xv.cols; ++k) gx.at(r, k) += gc * wv.at(k, c);
        }
    }
    if (t.nodes_[w].needs_grad) {
      Tensor& gw = t.grad_of(w);
      for (int r = 0; r < xv.rows; ++r)
        for (int k = 0; k < xv.cols; ++k) {
          double xk = xv.at(r, k);
          if (xk == 0.0) continue;
          for (int c = 0; c < wv.cols; ++c) gw.at(k, c) += xk * g.at(r, c);
        }
    }
    flops::add_muladd(2.0 * xv.rows * xv.cols * wv.cols);
  });
}

Tape::NodeId Tape::add_row(NodeId x, NodeId bias) {
  const Tensor& xv = nodes_[x].val;
  const Tensor& bv = nodes_[bias].val;
  if (bv.rows != 1 || bv.cols != xv.cols)
    throw std::invalid_argument("add_row: bias shape mismatch");
  Tensor out = xv;
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) out.at(r, c) += bv.at(0, c);
  flops::add_muladd(0.5 * xv.size());
  bool ng = nodes_[x].needs_grad || nodes_[bias].needs_grad;
  return push(std::move(out), ng, [x, bias](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.nodes_[x].needs_grad) {
      Tensor& gx = t.grad_of(x);
      for (std::size_t i = 0; i < g.v.size(); ++i) gx.v[i] += g.v[i];
    }
    if (t.nodes_[bias].needs_grad) {
      Tensor& gb = t.grad_of(bias);
      for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) gb.at(0, c) += g.at(r, c);
    }
    flops::add_muladd(0.5 * g.size());
  });
}

Tape::NodeId Tape::tanh_(NodeId x) {
  Tensor out = nodes_[x].val;
  for (double& v : out.v) v = std::tanh(v);
  flops::add_transcendental(static_cast<double>(out.size()));
  return push(std::move(out), nodes_[x].needs_grad, [x](Tape& t, int self) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].val;
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < g.v.size(); ++i)
      gx.v[i] += g.v[i] * (1.0 - y.v[i] * y.v[i]);
    flops::add_muladd(2.0 * g.size());
  });
}

Tape::NodeId Tape::relu_(NodeId x) {
  Tensor out = nodes_[x].val;
  for (double& v : out.v) v = v > 0.0 ? v : 0.0;
  flops::add_compare(static_cast<double>(out.size()));
  return push(std::move(out), nodes_[x].needs_grad, [x](Tape& t, int self) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& xv = t.nodes_[x].val;
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < g.v.size(); ++i)
      if (xv.v[i] > 0.0) gx.v[i] += g.v[i];
    flops::add_compare(static_cast<double>(g.size()));
  });
}

Tape::NodeId Tape::softplus(NodeId x) {
  Tensor out = nodes_[x].val;
  for (double& v : out.v) v = stable_softplus(v);
  flops::add_transcendental(2.0 * out.size());
  return push(std::move(out), nodes_[x].needs_grad, [x](Tape& t, int self) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& xv = t.nodes_[x].val;
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < g.v.size(); ++i)
      gx.v[i] += g.v[i] * sigmoid(xv.v[i]);
    flops::add_transcendental(static_cast<double>(g.size()));
    flops::add_muladd(static_cast<double>(g.size()));
  });
}

Tape::NodeId Tape::clamp_min(NodeId x, double lo) {
  Tensor out = nodes_[x].val;
  for (double& v : out.v) v = std::max(v, lo);
  flops::add_compare(static_cast<double>(out.size()));
  return push(std::move(out), nodes_[x].needs_grad, [x, lo](Tape& t, int self) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& xv = t.nodes_[x].val;
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < g.v.size(); ++i)
      if (xv.v[i] >= lo) gx.v[i] += g.v[i];
  });
}

Tape::NodeId Tape::clamp(NodeId x, double lo, double hi) {
  Tensor out = nodes_[x].val;
  for (double& v : out.v) v = std::min(std::max(v, lo), hi);
  flops::add_compare(2.0 * out.size());
  return push(std::move(out), nodes_[x].needs_grad,
              [x, lo, hi](Tape& t, int self) {
                if (!t.nodes_[x].needs_grad) return;
                const Tensor& g = t.nodes_[self].grad;
                const Tensor& xv = t.nodes_[x].val;
                Tensor& gx = t.grad_of(x);
                for (std::size_t i = 0; i < g.v.size(); ++i)
                  if (xv.v[i] >= lo && xv.v[i] <= hi) gx.v[i] += g.v[i];
              });
}

Tape::NodeId Tape::softmax_rows(NodeId x) {
  Tensor out = nodes_[x].val;
  for (int r = 0; r < out.rows; ++r) {
    double mx = -1e300;
    for (int c = 0; c < out.cols; ++c) mx = std::max(mx, out.at(r, c));
    double total = 0.0;
    for (int c = 0; c < out.cols; ++c) {
      out.at(r, c) = std::exp(out.at(r, c) - mx);
      total += out.at(r, c);
    }
    for (int c = 0; c < out.cols; ++c) out.at(r, c) /= total;
  }
  flops::add_transcendental(static_cast<double>(out.size()));
  flops::add_muladd(2.0 * out.size());
  return push(std::move(out), nodes_[x].needs_grad, [x](Tape& t, int self) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].val;
    Tensor& gx = t.grad_of(x);
    for (int r = 0; r < g.rows; ++r) {
      double dot = 0.0;
      for (int c = 0; c < g.cols; ++c) dot += g.at(r, c) * y.at(r, c);
      for (int c = 0; c < g.cols; ++c)
        gx.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
    }
    flops::add_muladd(3.0 * g.size());
  });
}

Tape::NodeId Tape::exp_(NodeId x) {
  Tensor out = nodes_[x].val;
  for (double& v : out.v) v = std::exp(v);
  flops::add_transcendental(static_cast<double>(out.size()));
  return push(std::move(out), nodes_[x].needs_grad, [x](Tape& t, int self) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.nodes_[self].val;
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < g.v.size(); ++i) gx.v[i] += g.v[i] * y.v[i];
    flops::add_muladd(static_cast<double>(g.size()));
  });
}

Tape::NodeId Tape::square(NodeId x) {
  Tensor out = nodes_[x].val;
  for (double& v : out.v) v = v * v;
  flops::add_muladd(static_cast<double>(out.size()));
  return push(std::move(out), nodes_[x].needs_grad, [x](Tape& t, int self) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& xv = t.nodes_[x].val;
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < g.v.size(); ++i)
      gx.v[i] += 2.0 * g.v[i] * xv.v[i];
    flops::add_muladd(static_cast<double>(g.size()));
  });
}

Tape::NodeId Tape::scale(NodeId x, double s) {
  Tensor out = nodes_[x].val;
  for (double& v : out.v) v *= s;
  flops::add_muladd(0.5 * out.size());
  return push(std::move(out), nodes_[x].needs_grad, [x, s](Tape& t, int self) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < g.v.size(); ++i) gx.v[i] += s * g.v[i];
  });
}

Tape::NodeId Tape::add_scalar(NodeId x, double s) {
  Tensor out = nodes_[x].val;
  for (double& v : out.v) v += s;
  flops::add_muladd(0.5 * out.size());
  return push(std::move(out), nodes_[x].needs_grad, [x](Tape& t, int self) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < g.v.size(); ++i) gx.v[i] += g.v[i];
  });
}

Tape::NodeId Tape::slice_cols(NodeId x, int c0, int c1) {
  const Tensor& xv = nodes_[x].val;
  if (c0 < 0 || c1 > xv.cols || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range");
  Tensor out(xv.rows, c1 - c0);
  for (int r = 0; r < xv.rows; ++r)
    for (int c = c0; c < c1; ++c) out.at(r, c - c0) = xv.at(r, c);
  return push(std::move(out), nodes_[x].needs_grad,
              [x, c0](Tape& t, int self) {
                if (!t.nodes_[x].needs_grad) return;
                const Tensor& g = t.nodes_[self].grad;
                Tensor& gx = t.grad_of(x);
                for (int r = 0; r < g.rows; ++r)
                  for (int c = 0; c < g.cols; ++c)
                    gx.at(r, c + c0) += g.at(r, c);
              });
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& av = nodes_[a].val;
  const Tensor& bv = nodes_[b].val;
  if (av.rows != bv.rows || av.cols != bv.cols)
    throw std::invalid_argument("add: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += bv.v[i];
  flops::add_muladd(0.5 * out.size());
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(out), ng, [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.nodes_[a].needs_grad) {
      Tensor& ga = t.grad_of(a);
      for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
    }
    if (t.nodes_[b].needs_grad) {
      Tensor& gb = t.grad_of(b);
      for (std::size_t i = 0; i < g.v.size(); ++i) gb.v[i] += g.v[i];
    }
  });
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& av = nodes_[a].val;
  const Tensor& bv = nodes_[b].val;
  if (av.rows != bv.rows || av.cols != bv.cols)
    throw std::invalid_argument("sub: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= bv.v[i];
  flops::add_muladd(0.5 * out.size());
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(out), ng, [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.nodes_[a].needs_grad) {
      Tensor& ga = t.grad_of(a);
      for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i];
    }
    if (t.nodes_[b].needs_grad) {
      Tensor& gb = t.grad_of(b);
      for (std::size_t i = 0; i < g.v.size(); ++i) gb.v[i] -= g.v[i];
    }
  });
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& av = nodes_[a].val;
  const Tensor& bv = nodes_[b].val;
  if (av.rows != bv.rows || av.cols != bv.cols)
    throw std::invalid_argument("mul: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= bv.v[i];
  flops::add_muladd(0.5 * out.size());
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(out), ng, [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& av = t.nodes_[a].val;
    const Tensor& bv = t.nodes_[b].val;
    if (t.nodes_[a].needs_grad) {
      Tensor& ga = t.grad_of(a);
      for (std::size_t i = 0; i < g.v.size(); ++i) ga.v[i] += g.v[i] * bv.v[i];
    }
    if (t.nodes_[b].needs_grad) {
      Tensor& gb = t.grad_of(b);
      for (std::size_t i = 0; i < g.v.size(); ++i) gb.v[i] += g.v[i] * av.v[i];
    }
    flops::add_muladd(static_cast<double>(g.size()));
  });
}

Tape::NodeId Tape::mul_const(NodeId x, Tensor c) {
  const Tensor& xv = nodes_[x].val;
  if (xv.rows != c.rows || xv.cols != c.cols)
    throw std::invalid_argument("mul_const: shape mismatch");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= c.v[i];
  flops::add_muladd(0.5 * out.size());
  return push(std::move(out), nodes_[x].needs_grad,
              [x, c = std::move(c)](Tape& t, int self) {
                if (!t.nodes_[x].needs_grad) return;
                const Tensor& g = t.nodes_[self].grad;
                Tensor& gx = t.grad_of(x);
                for (std::size_t i = 0; i < g.v.size(); ++i)
                  gx.v[i] += g.v[i] * c.v[i];
                flops::add_muladd(static_cast<double>(g.size()));
              });
}

Tape::NodeId Tape::sub_const(NodeId x, Tensor c) {
  const Tensor& xv = nodes_[x].val;
  if (xv.rows != c.rows || xv.cols != c.cols)
    throw std::invalid_argument("sub_const: shape mismatch");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= c.v[i];
  flops::add_muladd(0.5 * out.size());
  return push(std::move(out), nodes_[x].needs_grad, [x](Tape& t, int self) {
    if (!t.nodes_[x].needs_grad) return;
    const Tensor& g = t.nodes_[self].grad;
    Tensor& gx = t.grad_of(x);
    for (std::size_t i = 0; i < g.v.size(); ++i) gx.v[i] += g.v[i];
  });
}

Tape::NodeId Tape::min_const(NodeId x, Tensor c) {
  const Tensor& xv = nodes_[x].val;
  if (xv.rows != c.rows || xv.cols != c.cols)
    throw std::invalid_argument("min_const: shape mismatch");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = std::min(out.v[i], c.v[i]);
  flops::add_compare(static_cast<double>(out.size()));
  return push(std::move(out), nodes_[x].needs_grad,
              [x, c = std::move(c)](Tape& t, int self) {
                if (!t.nodes_[x].needs_grad) return;
                const Tensor& g = t.nodes_[self].grad;
                const Tensor& xv = t.nodes_[x].val;
                Tensor& gx = t.grad_of(x);
                for (std::size_t i = 0; i < g.v.size(); ++i)
                  if (xv.v[i] <= c.v[i]) gx.v[i] += g.v[i];
                flops::add_compare(static_cast<double>(g.size()));
              });
}

Tape::NodeId Tape::max_elem(NodeId a, NodeId b) {
  const Tensor& av = nodes_[a].val;
  const Tensor& bv = nodes_[b].val;
  if (av.rows != bv.rows || av.cols != bv.cols)
    throw std::invalid_argument("max_elem: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = std::max(out.v[i], bv.v[i]);
  flops::add_compare(static_cast<double>(out.size()));
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(out), ng, [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& av = t.nodes_[a].val;
    const Tensor& bv = t.nodes_[b].val;
    for (std::size_t i = 0; i < g.v.size(); ++i) {
      bool take_a = av.v[i] >= bv.v[i];
      if (take_a && t.nodes_[a].needs_grad) t.grad_of(a).v[i] += g.v[i];
      if (!take_a && t.nodes_[b].needs_grad) t.grad_of(b).v[i] += g.v[i];
    }
  });
}

Tape::NodeId Tape::mean_all(NodeId x) {
  const Tensor& xv = nodes_[x].val;
  Tensor out(1, 1);
  for (double v : xv.v) out.v[0] += v;
  out.v[0] /= static_cast<double>(xv.size());
  flops::add_muladd(0.5 * xv.size());
  return push(std::move(out), nodes_[x].needs_grad, [x](Tape& t, int self) {
    if (!t.nodes_[x].needs_grad) return;
    double g = t.nodes_[self].grad.v[0];
    Tensor& gx = t.grad_of(x);
    double scale = g / static_cast<double>(gx.size());
    for (double& v : gx.v) v += scale;
  });
}

Tape::NodeId Tape::categorical_log_prob(NodeId logits,
                                        std::vector<int> actions) {
  const Tensor& lv = nodes_[logits].val;
  if (static_cast<int>(actions.size()) != lv.rows)
    throw std::invalid_argument("categorical_log_prob: batch mismatch");
  Tensor out(lv.rows, 1);
  for (int r = 0; r < lv.rows; ++r) {
    double mx = -1e300;
    for (int c = 0; c < lv.cols; ++c) mx = std::max(mx, lv.at(r, c));
    double total = 0.0;
    for (int c = 0; c < lv.cols; ++c) total += std::exp(lv.at(r, c) - mx);
    out.at(r, 0) = lv.at(r, actions[r]) - mx - std::log(total);
  }
  flops::add_transcendental(static_cast<double>(lv.size()) + lv.rows);
  flops::add_muladd(static_cast<double>(lv.size()));
  return push(std::move(out), nodes_[logits].needs_grad,
              [logits, actions = std::move(actions)](Tape& t, int self) {
                if (!t.nodes_[logits].needs_grad) return;
                const Tensor& g = t.nodes_[self].grad;
                const Tensor& lv = t.nodes_[logits].val;
                Tensor& gl = t.grad_of(logits);
                for (int r = 0; r < lv.rows; ++r) {
                  double mx = -1e300;
                  for (int c = 0; c < lv.cols; ++c)
                    mx = std::max(mx, lv.at(r, c));
                  double total = 0.0;
                  for (int c = 0; c < lv.cols; ++c)
                    total += std::exp(lv.at(r, c) - mx);
                  double gr = g.at(r, 0);
                  for (int c = 0; c < lv.cols; ++c) {
                    double p = std::exp(lv.at(r, c) - mx) / total;
                    gl.at(r, c) += gr * ((c == actions[r] ? 1.0 : 0.0) - p);
                  }
                }
                flops::add_transcendental(2.0 * lv.size());
                flops::add_muladd(2.0 * lv.size());
              });
}

Tape::NodeId Tape::categorical_entropy(NodeId logits) {
  const Tensor& lv = nodes_[logits].val;
  Tensor out(lv.rows, 1);
  for (int r = 0; r < lv.rows; ++r) {
    double mx = -1e300;
    for (int c = 0; c < lv.cols; ++c) mx = std::max(mx, lv.at(r, c));
    double total = 0.0;
    for (int c = 0; c < lv.cols; ++c) total += std::exp(lv.at(r, c) - mx);
    double h = 0.0;
    for (int c = 0; c < lv.cols; ++c) {
      double p = std::exp(lv.at(r, c) - mx) / total;
      if (p > 0.0) h -= p * std::log(p);
    }
    out.at(r, 0) = h;
  }
  flops::add_transcendental(3.0 * lv.size());
  flops::add_muladd(2.0 * lv.size());
  return push(std::move(out), nodes_[logits].needs_grad,
              [logits](Tape& t, int self) {
                if (!t.nodes_[logits].needs_grad) return;
                const Tensor& g = t.nodes_[self].grad;
                const Tensor& lv = t.nodes_[logits].val;
                const Tensor& hv = t.nodes_[self].val;
                Tensor& gl = t.grad_of(logits);
                for (int r = 0; r < lv.rows; ++r) {
                  double mx = -1e300;
                  for (int c = 0; c < lv.cols; ++c)
                    mx = std::max(mx, lv.at(r, c));
                  double total = 0.0;
                  for (int c = 0; c < lv.cols; ++c)
                    total += std::exp(lv.at(r, c) - mx);
                  double gr = g.at(r, 0);
                  for (int c = 0; c < lv.cols; ++c) {
                    double p = std::exp(lv.at(r, c) - mx) / total;
                    double logp = lv.at(r, c) - mx - std::log(total);
                    gl.at(r, c) += gr * (-p * (logp + hv.at(r, 0)));
                  }
                }
                flops::add_transcendental(2.0 * lv.size());
                flops::add_muladd(3.0 * lv.size());
              });
}

Tape::NodeId Tape::gaussian_log_prob(NodeId mean, NodeId log_std,
                                     Tensor actions) {
  const Tensor& mv = nodes_[mean].val;
  const Tensor& sv = nodes_[log_std].val;
  if (sv.rows != 1 || sv.cols != mv.cols || actions.rows != mv.rows ||
      actions.cols != mv.cols)
    throw std::invalid_argument("gaussian_log_prob: shape mismatch");
  const double log2pi = std::log(2.0 * std::numbers::pi);
  Tensor out(mv.rows, 1);
  for (int r = 0; r < mv.rows; ++r) {
    double acc = 0.0;
    for (int c = 0; c < mv.cols; ++c) {
      double ls = sv.at(0, c);
      double z = (actions.at(r, c) - mv.at(r, c)) * std::exp(-ls);
      acc += -0.5 * z * z - ls - 0.5 * log2pi;
    }
    out.at(r, 0) = acc;
  }
  flops::add_transcendental(static_cast<double>(mv.size()));
  flops::add_muladd(4.0 * mv.size());
  bool ng = nodes_[mean].needs_grad || nodes_[log_std].needs_grad;
  return push(std::move(out), ng,
              [mean, log_std, actions = std::move(actions)](Tape& t, int self) {
                const Tensor& g = t.nodes_[self].grad;
                const Tensor& mv = t.nodes_[mean].val;
                const Tensor& sv = t.nodes_[log_std].val;
                for (int r = 0; r < mv.rows; ++r) {
                  double gr = g.at(r, 0);
                  if (gr == 0.0) continue;
                  for (int c = 0; c < mv.cols; ++c) {
                    double ls = sv.at(0, c);
                    double inv_var = std::exp(-2.0 * ls);
                    double diff = actions.at(r, c) - mv.at(r, c);
                    if (t.nodes_[mean].needs_grad)
                      t.grad_of(mean).at(r, c) += gr * diff * inv_var;
                    if (t.nodes_[log_std].needs_grad)
                      t.grad_of(log_std).at(0, c) +=
                          gr * (diff * diff * inv_var - 1.0);
                  }
                }
                flops::add_transcendental(static_cast<double>(mv.size()));
                flops::add_muladd(4.0 * mv.size());
              });
}

Tape::NodeId Tape::gaussian_entropy(NodeId log_std, int batch) {
  const Tensor& sv = nodes_[log_std].val;
  const double c0 = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  double base = 0.0;
  for (double ls : sv.v) base += ls + c0;
  Tensor out(batch, 1);
  for (int r = 0; r < batch; ++r) out.at(r, 0) = base;
  return push(std::move(out), nodes_[log_std].needs_grad,
              [log_std](Tape& t, int self) {
                if (!t.nodes_[log_std].needs_grad) return;
                const Tensor& g = t.nodes_[self].grad;
                Tensor& gs = t.grad_of(log_std);
                double total = 0.0;
                for (double v : g.v) total += v;
                for (double& v : gs.v) v += total;
              });
}

Tape::NodeId Tape::huber_quantile_batch(NodeId preds, Tensor targets,
                                        std::vector<double> fractions,
                                        double kappa) {
  const Tensor& pv = nodes_[preds].val;
  if (targets.rows != pv.rows ||
      static_cast<int>(fractions.size()) != pv.cols)
    throw std::invalid_argument("huber_quantile_batch: shape mismatch");
  flops::CategoryScope cat(FlopCategory::value_loss);
  Tensor out(1, 1);
  std::vector<QuantilePrediction> qp(pv.cols);
  for (int r = 0; r < pv.rows; ++r) {
    for (int c = 0; c < pv.cols; ++c) qp[c] = {pv.at(r, c), fractions[c]};
    std::span<const double> row(&targets.at(r, 0),
                                static_cast<std::size_t>(targets.cols));
    out.v[0] += huber_quantile_loss(row, qp, kappa);
  }
  out.v[0] /= static_cast<double>(pv.rows);
  return push(
      std::move(out), nodes_[preds].needs_grad,
      [preds, targets = std::move(targets), fractions = std::move(fractions),
       kappa](Tape& t, int self) {
        if (!t.nodes_[preds].needs_grad) return;
        flops::CategoryScope cat(FlopCategory::value_loss);
        double g = t.nodes_[self].grad.v[0];
        const Tensor& pv = t.nodes_[preds].val;
        Tensor& gp = t.grad_of(preds);
        std::vector<QuantilePrediction> qp(pv.cols);
        double inv_b = 1.0 / static_cast<double>(pv.rows);
        for (int r = 0; r < pv.rows; ++r) {
          for (int c = 0; c < pv.cols; ++c) qp[c] = {pv.at(r, c), fractions[c]};
          std::span<const double> row(&targets.at(r, 0),
                                      static_cast<std::size_t>(targets.cols));
          auto rg = huber_quantile_loss_grad(row, qp, kappa);
          for (int c = 0; c < pv.cols; ++c)
            gp.at(r, c) += g * inv_b * rg[c];
        }
      });
}

Tape::NodeId Tape::energy_sample_batch(NodeId preds, Tensor targets) {
  const Tensor& pv = nodes_[preds].val;
  if (targets.rows != pv.rows)
    throw std::invalid_argument("energy_sample_batch: batch mismatch");
  flops::CategoryScope cat(FlopCategory::value_loss);
  Tensor out(1, 1);
  for (int r = 0; r < pv.rows; ++r) {
    std::span<const double> xs(&pv.at(r, 0), static_cast<std::size_t>(pv.cols));
    std::span<const double> ys(&targets.at(r, 0),
                               static_cast<std::size_t>(targets.cols));
    out.v[0] += energy_samples(xs, ys);
  }
  out.v[0] /= static_cast<double>(pv.rows);
  return push(std::move(out), nodes_[preds].needs_grad,
              [preds, targets = std::move(targets)](Tape& t, int self) {
                if (!t.nodes_[preds].needs_grad) return;
                flops::CategoryScope cat(FlopCategory::value_loss);
                double g = t.nodes_[self].grad.v[0];
                const Tensor& pv = t.nodes_[preds].val;
                Tensor& gp = t.grad_of(preds);
                double inv_b = 1.0 / static_cast<double>(pv.rows);
                for (int r = 0; r < pv.rows; ++r) {
                  std::span<const double> xs(
                      &pv.at(r, 0), static_cast<std::size_t>(pv.cols));
                  std::span<const double> ys(
                      &targets.at(r, 0),
                      static_cast<std::size_t>(targets.cols));
                  auto rg = energy_samples_grad_xs(xs, ys);
                  for (int c = 0; c < pv.cols; ++c)
                    gp.at(r, c) += g * inv_b * rg[c];
                }
              });
}

namespace {
GaussianMixture row_mixture(const Tensor& w, const Tensor& mu,
                            const Tensor& var, int r) {
  std::vector<GaussianComponent> comps(w.cols);
  for (int c = 0; c < w.cols; ++c)
    comps[c] = {w.at(r, c), mu.at(r, c), var.at(r, c)};
  return GaussianMixture(std::move(comps));
}
}  // namespace

Tape::NodeId Tape::energy_gmm_batch(NodeId weights, NodeId means,
                                    NodeId variances,
                                    std::vector<GaussianMixture> targets,
                                    std::vector<double> target_self) {
  const Tensor& wv = nodes_[weights].val;
  const Tensor& mv = nodes_[means].val;
  const Tensor& vv = nodes_[variances].val;
  if (wv.rows != mv.rows || wv.rows != vv.rows || wv.cols != mv.cols ||
      wv.cols != vv.cols ||
      static_cast<int>(targets.size()) != wv.rows)
    throw std::invalid_argument("energy_gmm_batch: shape mismatch");
  flops::CategoryScope cat(FlopCategory::value_loss);
  if (target_self.empty()) {
    target_self.resize(targets.size());
    for (std::size_t r = 0; r < targets.size(); ++r)
      target_self[r] = delta_gmm(targets[r], targets[r]);
  }
  Tensor out(1, 1);
  for (int r = 0; r < wv.rows; ++r)
    out.v[0] += energy_gmm_with_self(row_mixture(wv, mv, vv, r), targets[r],
                                     target_self[r]);
  out.v[0] /= static_cast<double>(wv.rows);
  bool ng = nodes_[weights].needs_grad || nodes_[means].needs_grad ||
            nodes_[variances].needs_grad;
  return push(std::move(out), ng,
              [weights, means, variances, targets = std::move(targets)](
                  Tape& t, int self) {
                flops::CategoryScope cat(FlopCategory::value_loss);
                double g = t.nodes_[self].grad.v[0];
                const Tensor& wv = t.nodes_[weights].val;
                const Tensor& mv = t.nodes_[means].val;
                const Tensor& vv = t.nodes_[variances].val;
                double inv_b = g / static_cast<double>(wv.rows);
                for (int r = 0; r < wv.rows; ++r) {
                  GmmGrad rg = energy_gmm_grad(row_mixture(wv, mv, vv, r),
                                               targets[r]);
                  for (int c = 0; c < wv.cols; ++c) {
                    if (t.nodes_[weights].needs_grad)
                      t.grad_of(weights).at(r, c) += inv_b * rg.dweight[c];
                    if (t.nodes_[means].needs_grad)
                      t.grad_of(means).at(r, c) += inv_b * rg.dmean[c];
                    if (t.nodes_[variances].needs_grad)
                      t.grad_of(variances).at(r, c) += inv_b * rg.dvariance[c];
                  }
                }
              });
}

void Tape::backward(NodeId loss) {
  check_open();
  consumed_ = true;
  Node& top = nodes_[loss];
  if (top.val.rows != 1 || top.val.cols != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  if (!top.needs_grad) return;
  grad_of(loss).v[0] = 1.0;
  for (int id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || !n.back) continue;
    if (n.grad.v.empty()) continue;
    n.back(*this, id);
  }
}

void Tape::clear() {
  nodes_.clear();
  consumed_ = false;
}

}  // namespace dac
