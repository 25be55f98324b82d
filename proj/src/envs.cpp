#include "envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dac {

namespace {

class FiveStateEnv final : public Env {
 public:
  FiveStateEnv() : rng_(0) {
    spec_.obs_dim = 5;
    spec_.action.kind = ActionSpace::Kind::discrete;
    spec_.action.n = 1;
    spec_.step_cap = 5;
  }

  const EnvSpec& spec() const override { return spec_; }
  void seed(std::uint64_t s) override { rng_ = Rng(s); }

  std::vector<double> reset() override {
    state_ = 0;
    return observe();
  }

  StepResult step(const Action&) override {
    StepResult result;
    if (state_ == 3)
      result.reward = rng_.uniform() < 0.5 ? -1.0 : 1.0;
    else if (state_ == 4)
      result.reward = rng_.normal(0.0, 0.01);
    ++state_;
    result.terminal = state_ == 5;
    result.obs = observe();
    return result;
  }

  std::unique_ptr<Env> clone() const override {
    return std::make_unique<FiveStateEnv>();
  }

 private:
  std::vector<double> observe() const {
    std::vector<double> obs(5, 0.0);
    if (state_ < 5) obs[state_] = 1.0;
    return obs;
  }

  EnvSpec spec_;
  int state_ = 0;
  Rng rng_;
};

class GridworldEnv final : public Env {
 public:
  GridworldEnv(int size, GridworldKind kind, double slip)
      : size_(size), kind_(kind), slip_(slip), rng_(0) {
    if (size < 3) throw std::invalid_argument("gridworld: size must be >= 3");
    if (slip < 0.0 || slip >= 1.0)
      throw std::invalid_argument("gridworld: slip must be in [0, 1)");
    spec_.obs_dim = size * size;
    spec_.action.kind = ActionSpace::Kind::discrete;
    spec_.action.n = 4;
    spec_.step_cap = kind == GridworldKind::dense ? 4 * size * size : 200;
    goal_r_ = size - 1;
    goal_c_ = size - 1;
    if (kind == GridworldKind::two_room_sparse) {
      wall_c_ = size / 2;
      door_r_ = size / 2;
    }
  }

  const EnvSpec& spec() const override { return spec_; }
  void seed(std::uint64_t s) override { rng_ = Rng(s); }

  std::vector<double> reset() override {
    r_ = 0;
    c_ = 0;
    steps_ = 0;
    return observe();
  }

  StepResult step(const Action& action) override {
    if (action.index < 0 || action.index >= 4)
      throw std::invalid_argument("gridworld: action out of range");
    int a = action.index;
    if (slip_ > 0.0 && rng_.uniform() < slip_)
      a = static_cast<int>(rng_.uniform_index(4));
    static constexpr int dr[4] = {-1, 1, 0, 0};
    static constexpr int dc[4] = {0, 0, -1, 1};
    int nr = std::clamp(r_ + dr[a], 0, size_ - 1);
    int nc = std::clamp(c_ + dc[a], 0, size_ - 1);
    if (!blocked(nr, nc)) {
      r_ = nr;
      c_ = nc;
    }
    ++steps_;
    StepResult result;
    result.reward = kind_ == GridworldKind::dense ? -0.01 : 0.0;
    if (r_ == goal_r_ && c_ == goal_c_) {
      result.reward += 1.0;
      result.terminal = true;
    } else if (steps_ >= spec_.step_cap) {
      result.truncated = true;
    }
    result.obs = observe();
    return result;
  }

  std::unique_ptr<Env> clone() const override {
    return std::make_unique<GridworldEnv>(size_, kind_, slip_);
  }

 private:
  bool blocked(int r, int c) const {
    if (kind_ != GridworldKind::two_room_sparse) return false;
    return c == wall_c_ && r != door_r_;
  }

  std::vector<double> observe() const {
    std::vector<double> obs(static_cast<std::size_t>(size_) * size_, 0.0);
    obs[static_cast<std::size_t>(r_) * size_ + c_] = 1.0;
    return obs;
  }

  int size_;
  GridworldKind kind_;
  double slip_;
  EnvSpec spec_;
  int r_ = 0, c_ = 0, steps_ = 0;
  int goal_r_, goal_c_;
  int wall_c_ = -1, door_r_ = -1;
  Rng rng_;
};

class Lqr1dEnv final : public Env {
 public:
  explicit Lqr1dEnv(double noise_sigma) : sigma_(noise_sigma), rng_(0) {
    if (noise_sigma < 0.0)
      throw std::invalid_argument("lqr1d: noise sigma must be >= 0");
    const Lqr1dParams p = lqr1d_params();
    spec_.obs_dim = 2;
    spec_.action.kind = ActionSpace::Kind::box;
    spec_.action.dim = 1;
    spec_.action.low = -p.action_limit;
    spec_.action.high = p.action_limit;
    spec_.step_cap = p.horizon;
  }

  const EnvSpec& spec() const override { return spec_; }
  void seed(std::uint64_t s) override { rng_ = Rng(s); }

  std::vector<double> reset() override {
    pos_ = rng_.uniform(-1.0, 1.0);
    vel_ = rng_.uniform(-0.5, 0.5);
    steps_ = 0;
    return {pos_, vel_};
  }

  StepResult step(const Action& action) override {
    if (action.box.size() != 1)
      throw std::invalid_argument("lqr1d: action must be 1-dimensional");
    const Lqr1dParams p = lqr1d_params();
    double u = std::clamp(action.box[0], -p.action_limit, p.action_limit);
    StepResult result;
    result.reward = -(p.pos_cost * pos_ * pos_ + p.action_cost * u * u) * p.dt;
    pos_ += p.dt * vel_;
    vel_ += p.dt * u;
    if (sigma_ > 0.0)
      vel_ += sigma_ * std::sqrt(p.dt) * rng_.normal();
    pos_ = std::clamp(pos_, -5.0, 5.0);
    vel_ = std::clamp(vel_, -5.0, 5.0);
    ++steps_;
    result.truncated = steps_ >= p.horizon;
    result.obs = {pos_, vel_};
    return result;
  }

  std::unique_ptr<Env> clone() const override {
    return std::make_unique<Lqr1dEnv>(sigma_);
  }

 private:
  double sigma_;
  EnvSpec spec_;
  double pos_ = 0.0, vel_ = 0.0;
  int steps_ = 0;
  Rng rng_;
};

}  // namespace

std::unique_ptr<Env> five_state_env() { return std::make_unique<FiveStateEnv>(); }

std::unique_ptr<Env> gridworld_env(int size, GridworldKind kind, double slip) {
  return std::make_unique<GridworldEnv>(size, kind, slip);
}

std::unique_ptr<Env> lqr1d_env(double noise_sigma) {
  return std::make_unique<Lqr1dEnv>(noise_sigma);
}

Lqr1dParams lqr1d_params() { return Lqr1dParams{}; }

std::pair<double, double> lqr1d_riccati_gain() {
  const Lqr1dParams p = lqr1d_params();
  // x' = A x + B u with A = [[1, dt], [0, 1]], B = [0, dt]^T
  const double a00 = 1.0, a01 = p.dt, a10 = 0.0, a11 = 1.0;
  const double b0 = 0.0, b1 = p.dt;
  const double q00 = p.pos_cost * p.dt, q11 = 0.0;
  const double r = p.action_cost * p.dt;
  double p00 = q00, p01 = 0.0, p11 = q11;
  for (int it = 0; it < 100000; ++it) {
    // S = A^T P A
    double pa00 = p00 * a00 + p01 * a10, pa01 = p00 * a01 + p01 * a11;
    double pa10 = p01 * a00 + p11 * a10, pa11 = p01 * a01 + p11 * a11;
    double s00 = a00 * pa00 + a10 * pa10;
    double s01 = a00 * pa01 + a10 * pa11;
    double s11 = a01 * pa01 + a11 * pa11;
    // A^T P B and B^T P B
    double pb0 = p00 * b0 + p01 * b1, pb1 = p01 * b0 + p11 * b1;
    double apb0 = a00 * pb0 + a10 * pb1;
    double apb1 = a01 * pb0 + a11 * pb1;
    double bpb = b0 * pb0 + b1 * pb1;
    double denom = r + bpb;
    double n00 = q00 + s00 - apb0 * apb0 / denom;
    double n01 = s01 - apb0 * apb1 / denom;
    double n11 = q11 + s11 - apb1 * apb1 / denom;
    double delta = std::abs(n00 - p00) + std::abs(n01 - p01) +
                   std::abs(n11 - p11);
    p00 = n00;
    p01 = n01;
    p11 = n11;
    if (delta < 1e-14) break;
  }
  double pb0 = p00 * b0 + p01 * b1, pb1 = p01 * b0 + p11 * b1;
  double denom = r + b0 * pb0 + b1 * pb1;
  double k0 = (b0 * (p00 * a00 + p01 * a10) + b1 * (p01 * a00 + p11 * a10)) /
              denom;
  double k1 = (b0 * (p00 * a01 + p01 * a11) + b1 * (p01 * a01 + p11 * a11)) /
              denom;
  return {k0, k1};
}

std::unique_ptr<Env> make_env(const std::string& name, int grid_size,
                              double slip, double noise_sigma) {
  if (name == "five_state") return five_state_env();
  if (name == "gridworld" || name == "gridworld_dense")
    return gridworld_env(grid_size, GridworldKind::dense, slip);
  if (name == "gridworld_tworoom")
    return gridworld_env(grid_size, GridworldKind::two_room_sparse, slip);
  if (name == "lqr1d") return lqr1d_env(noise_sigma);
  throw std::invalid_argument("unknown environment: " + name);
}

VectorRunner::VectorRunner(std::vector<std::unique_ptr<Env>> envs,
                           std::uint64_t seed)
    : envs_(std::move(envs)) {
  if (envs_.empty()) throw std::invalid_argument("VectorRunner: no envs");
  const EnvSpec& base = envs_[0]->spec();
  for (const auto& e : envs_) {
    const EnvSpec& s = e->spec();
    if (s.obs_dim != base.obs_dim || s.action.kind != base.action.kind ||
        s.action.n != base.action.n || s.action.dim != base.action.dim)
      throw std::invalid_argument("VectorRunner: heterogeneous env specs");
  }
  current_.resize(envs_.size());
  episode_return_.assign(envs_.size(), 0.0);
  for (std::size_t e = 0; e < envs_.size(); ++e) {
    envs_[e]->seed(mix_seed(seed, e));
    current_[e] = envs_[e]->reset();
  }
}

std::vector<EnvTrajectory> VectorRunner::run(const PolicyFn& policy,
                                             int steps) {
  std::vector<EnvTrajectory> out(envs_.size());
  for (auto& t : out) {
    t.obs.reserve(steps);
    t.actions.reserve(steps);
    t.rewards.reserve(steps);
    t.terminal.reserve(steps);
    t.truncated.reserve(steps);
    t.final_obs.resize(steps);
  }
  for (int n = 0; n < steps; ++n) {
    for (std::size_t e = 0; e < envs_.size(); ++e) {
      Action action = policy(current_[e], static_cast<int>(e));
      StepResult result = envs_[e]->step(action);
      EnvTrajectory& t = out[e];
      t.obs.push_back(current_[e]);
      t.actions.push_back(std::move(action));
      t.rewards.push_back(result.reward);
      t.terminal.push_back(result.terminal ? 1 : 0);
      t.truncated.push_back(result.truncated ? 1 : 0);
      episode_return_[e] += result.reward;
      if (result.terminal || result.truncated) {
        t.final_obs[n] = std::move(result.obs);
        completed_.push_back(episode_return_[e]);
        episode_return_[e] = 0.0;
        current_[e] = envs_[e]->reset();
      } else {
        current_[e] = std::move(result.obs);
      }
    }
  }
  return out;
}

std::vector<double> VectorRunner::drain_completed_returns() {
  std::vector<double> out = std::move(completed_);
  completed_.clear();
  return out;
}

}  // namespace dac
