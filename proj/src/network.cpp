#include "network.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "distribution.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace dac {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'C', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void orthogonal_fill(Tensor& w, double gain, Rng& rng) {
  int rows = w.rows, cols = w.cols;
  int big = std::max(rows, cols), small = std::min(rows, cols);
  // Gram-Schmidt columns of a (big x small) normal draw
  std::vector<std::vector<double>> q(small, std::vector<double>(big));
  for (auto& col : q)
    for (double& v : col) v = rng.normal();
  for (int j = 0; j < small; ++j) {
    for (int k = 0; k < j; ++k) {
      double dot = 0.0;
      for (int i = 0; i < big; ++i) dot += q[k][i] * q[j][i];
      for (int i = 0; i < big; ++i) q[j][i] -= dot * q[k][i];
    }
    double norm = 0.0;
    for (int i = 0; i < big; ++i) norm += q[j][i] * q[j][i];
    norm = std::sqrt(std::max(norm, 1e-30));
    for (int i = 0; i < big; ++i) q[j][i] /= norm;
  }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      w.at(r, c) = gain * (rows >= cols ? q[c][r] : q[r][c]);
}

void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void read_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint: truncated stream");
}
template <typename T>
void write_pod(std::ostream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}
template <typename T>
T read_pod(std::istream& in) {
  T v;
  read_bytes(in, &v, sizeof(T));
  return v;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols));
  write_bytes(out, t.v.data(), t.v.size() * sizeof(double));
}
Tensor read_tensor(std::istream& in) {
  auto rows = read_pod<std::uint32_t>(in);
  auto cols = read_pod<std::uint32_t>(in);
  Tensor t(static_cast<int>(rows), static_cast<int>(cols));
  read_bytes(in, t.v.data(), t.v.size() * sizeof(double));
  return t;
}

}  // namespace

Linear::Linear(int in, int out)
    : w(in, out), b(1, out), gw(in, out), gb(1, out) {}

Tape::NodeId Linear::forward(Tape& tape, Tape::NodeId x) {
  Tape::NodeId wid = tape.param(&w, &gw);
  Tape::NodeId bid = tape.param(&b, &gb);
  return tape.add_row(tape.matmul(x, wid), bid);
}

Network::Network(int obs_dim, std::vector<int> hidden, Activation activation,
                 PolicySpec policy, ValueHead value_head, int value_size,
                 std::uint64_t init_seed)
    : obs_dim_(obs_dim),
      hidden_(std::move(hidden)),
      activation_(activation),
      policy_(policy),
      value_head_(value_head),
      value_size_(value_size) {
  if (obs_dim_ < 1 || policy_.size < 1 || value_size_ < 1)
    throw std::invalid_argument("Network: bad dimensions");
  Rng rng(init_seed);
  int in = obs_dim_;
  for (int h : hidden_) {
    torso_.emplace_back(in, h);
    orthogonal_fill(torso_.back().w, std::sqrt(2.0), rng);
    in = h;
  }
  policy_lin_ = Linear(in, policy_.size);
  orthogonal_fill(policy_lin_.w, 0.01, rng);
  if (!policy_.discrete) {
    log_std_ = Tensor(1, policy_.size);
    g_log_std_ = Tensor(1, policy_.size);
  }
  int vout = value_head_ == ValueHead::scalar ? 1
             : value_head_ == ValueHead::quantile ? value_size_
                                                  : 3 * value_size_;
  value_lin_ = Linear(in, vout);
  orthogonal_fill(value_lin_.w, 1.0, rng);
  if (value_head_ == ValueHead::quantile) {
    fractions_.resize(value_size_);
    for (int i = 0; i < value_size_; ++i)
      fractions_[i] = (2.0 * i + 1.0) / (2.0 * value_size_);
  }
}

Tape::NodeId Network::torso(Tape& tape, Tape::NodeId input) {
  flops::CategoryScope cat(FlopCategory::torso);
  Tape::NodeId h = input;
  for (auto& layer : torso_) {
    h = layer.forward(tape, h);
    h = activation_ == Activation::tanh ? tape.tanh_(h) : tape.relu_(h);
  }
  return h;
}

Tape::NodeId Network::policy_out(Tape& tape, Tape::NodeId h) {
  flops::CategoryScope cat(FlopCategory::policy_head);
  return policy_lin_.forward(tape, h);
}

Tape::NodeId Network::log_std_node(Tape& tape) {
  if (policy_.discrete)
    throw std::logic_error("log_std_node: discrete policy has no log-std");
  flops::CategoryScope cat(FlopCategory::policy_head);
  return tape.clamp(tape.param(&log_std_, &g_log_std_), -5.0, 2.0);
}

Tape::NodeId Network::value_raw(Tape& tape, Tape::NodeId h) {
  flops::CategoryScope cat(FlopCategory::value_head);
  return value_lin_.forward(tape, h);
}

Network::GmmNodes Network::gmm_value(Tape& tape, Tape::NodeId raw) {
  if (value_head_ != ValueHead::gmm)
    throw std::logic_error("gmm_value: head is not a mixture head");
  flops::CategoryScope cat(FlopCategory::value_head);
  int k = value_size_;
  GmmNodes nodes;
  nodes.weights = tape.softmax_rows(tape.slice_cols(raw, 0, k));
  nodes.means = tape.slice_cols(raw, k, 2 * k);
  nodes.variances =
      tape.clamp_min(tape.softplus(tape.slice_cols(raw, 2 * k, 3 * k)),
                     kVarianceFloor);
  return nodes;
}

std::vector<ValueDistribution> Network::critic_distributions(
    const Tensor& obs) {
  Tape tape;
  Tape::NodeId h = torso(tape, tape.constant(obs));
  Tape::NodeId raw = value_raw(tape, h);
  std::vector<ValueDistribution> out;
  out.reserve(obs.rows);
  if (value_head_ == ValueHead::scalar) {
    const Tensor& v = tape.value(raw);
    for (int r = 0; r < v.rows; ++r)
      out.emplace_back(DiracMixture({v.at(r, 0)}));
  } else if (value_head_ == ValueHead::quantile) {
    const Tensor& v = tape.value(raw);
    for (int r = 0; r < v.rows; ++r) {
      std::vector<double> atoms(v.cols);
      for (int c = 0; c < v.cols; ++c) atoms[c] = v.at(r, c);
      out.emplace_back(DiracMixture(std::move(atoms)));
    }
  } else {
    GmmNodes nodes = gmm_value(tape, raw);
    const Tensor& w = tape.value(nodes.weights);
    const Tensor& mu = tape.value(nodes.means);
    const Tensor& var = tape.value(nodes.variances);
    for (int r = 0; r < w.rows; ++r) {
      std::vector<GaussianComponent> comps(w.cols);
      for (int c = 0; c < w.cols; ++c)
        comps[c] = {w.at(r, c), mu.at(r, c), var.at(r, c)};
      out.emplace_back(GaussianMixture(std::move(comps)));
    }
  }
  return out;
}

std::vector<double> Network::critic_means(const Tensor& obs) {
  auto dists = critic_distributions(obs);
  std::vector<double> means(dists.size());
  for (std::size_t i = 0; i < dists.size(); ++i) means[i] = mean(dists[i]);
  return means;
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> out;
  for (auto& l : torso_) {
    out.push_back({&l.w, &l.gw});
    out.push_back({&l.b, &l.gb});
  }
  out.push_back({&policy_lin_.w, &policy_lin_.gw});
  out.push_back({&policy_lin_.b, &policy_lin_.gb});
  if (!policy_.discrete) out.push_back({&log_std_, &g_log_std_});
  out.push_back({&value_lin_.w, &value_lin_.gw});
  out.push_back({&value_lin_.b, &value_lin_.gb});
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : torso_) n += l.w.size() + l.b.size();
  n += policy_lin_.w.size() + policy_lin_.b.size();
  if (!policy_.discrete) n += log_std_.size();
  n += value_lin_.w.size() + value_lin_.b.size();
  return n;
}

void Network::save(std::ostream& out) const {
  write_bytes(out, kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, kVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(obs_dim_));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(hidden_.size()));
  for (int h : hidden_)
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(h));
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(activation_));
  write_pod<std::uint8_t>(out, policy_.discrete ? 1 : 0);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(policy_.size));
  write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(value_head_));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(value_size_));
  auto params = const_cast<Network*>(this)->parameters();
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) write_tensor(out, *p.value);
}

Network Network::load(std::istream& in) {
  char magic[8];
  read_bytes(in, magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  if (read_pod<std::uint32_t>(in) != kVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  int obs_dim = static_cast<int>(read_pod<std::uint32_t>(in));
  auto n_hidden = read_pod<std::uint32_t>(in);
  std::vector<int> hidden(n_hidden);
  for (auto& h : hidden) h = static_cast<int>(read_pod<std::uint32_t>(in));
  auto activation = static_cast<Activation>(read_pod<std::uint8_t>(in));
  PolicySpec policy;
  policy.discrete = read_pod<std::uint8_t>(in) != 0;
  policy.size = static_cast<int>(read_pod<std::uint32_t>(in));
  auto head = static_cast<ValueHead>(read_pod<std::uint8_t>(in));
  int value_size = static_cast<int>(read_pod<std::uint32_t>(in));
  Network net(obs_dim, hidden, activation, policy, head, value_size, 0);
  auto params = net.parameters();
  auto count = read_pod<std::uint32_t>(in);
  if (count != params.size())
    throw std::runtime_error("checkpoint: parameter block count mismatch");
  for (auto& p : params) {
    Tensor t = read_tensor(in);
    if (t.rows != p.value->rows || t.cols != p.value->cols)
      throw std::runtime_error("checkpoint: parameter shape mismatch");
    *p.value = std::move(t);
  }
  return net;
}

Adam::Adam(std::vector<ParamRef> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.value->rows, p.value->cols);
    v_.emplace_back(p.value->rows, p.value->cols);
  }
}

Adam::StepReport Adam::step() {
  StepReport report;
  double norm2 = 0.0;
  for (const auto& p : params_)
    for (double g : p.grad->v) {
      if (!std::isfinite(g)) report.applied = false;
      norm2 += g * g;
    }
  report.grad_norm = std::sqrt(norm2);
  if (!report.applied) return report;

  ++step_count_;
  double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& value = *params_[i].value;
    const Tensor& grad = *params_[i].grad;
    for (std::size_t j = 0; j < value.v.size(); ++j) {
      double g = grad.v[j];
      m_[i].v[j] = config_.beta1 * m_[i].v[j] + (1.0 - config_.beta1) * g;
      v_[i].v[j] = config_.beta2 * v_[i].v[j] + (1.0 - config_.beta2) * g * g;
      double mhat = m_[i].v[j] / bc1;
      double vhat = v_[i].v[j] / bc2;
      value.v[j] -=
          config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
    flops::add_muladd(8.0 * value.v.size());
    flops::add_transcendental(static_cast<double>(value.v.size()));
  }
  return report;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.grad->zero();
}

void Adam::save(std::ostream& out) const {
  write_pod<std::uint64_t>(out, step_count_);
  write_pod<double>(out, config_.learning_rate);
  write_pod<double>(out, config_.beta1);
  write_pod<double>(out, config_.beta2);
  write_pod<double>(out, config_.epsilon);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m_.size()));
  for (const auto& t : m_) write_tensor(out, t);
  for (const auto& t : v_) write_tensor(out, t);
}

void Adam::load(std::istream& in) {
  step_count_ = read_pod<std::uint64_t>(in);
  config_.learning_rate = read_pod<double>(in);
  config_.beta1 = read_pod<double>(in);
  config_.beta2 = read_pod<double>(in);
  config_.epsilon = read_pod<double>(in);
  auto count = read_pod<std::uint32_t>(in);
  if (count != m_.size())
    throw std::runtime_error("checkpoint: optimizer block count mismatch");
  for (auto& t : m_) t = read_tensor(in);
  for (auto& t : v_) t = read_tensor(in);
}

void save_checkpoint(const std::string& path, const Network& net,
                     const Adam* opt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  net.save(out);
  write_pod<std::uint8_t>(out, opt ? 1 : 0);
  if (opt) opt->save(out);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path,
                                 const AdamConfig& fallback) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  LoadedCheckpoint out;
  out.net = std::make_unique<Network>(Network::load(in));
  out.opt = std::make_unique<Adam>(out.net->parameters(), fallback);
  if (read_pod<std::uint8_t>(in) != 0) out.opt->load(in);
  return out;
}

}  // namespace dac
