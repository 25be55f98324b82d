#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rng.hpp"

namespace dac {

struct ActionSpace {
  enum class Kind { discrete, box } kind = Kind::discrete;
  int n = 0;        // discrete action count
  int dim = 0;      // box dimension
  double low = 0.0, high = 0.0;
};

struct EnvSpec {
  int obs_dim = 0;
  ActionSpace action;
  int step_cap = 0;  // episodes longer than this are truncated
};

struct Action {
  int index = 0;                // discrete
  std::vector<double> box;      // continuous
};

struct StepResult {
  std::vector<double> obs;  // observation after the step (pre-reset)
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual void seed(std::uint64_t s) = 0;
  virtual std::vector<double> reset() = 0;
  virtual StepResult step(const Action& action) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;  // fresh copy, same params
};

// single-action chain with r4 ~ U{-1,+1} and r5 ~ N(0, 0.1^2)
std::unique_ptr<Env> five_state_env();

enum class GridworldKind { dense, two_room_sparse };

// 4-action gridworld on a size x size board, one-hot observations.
// dense: step cost -0.01, +1 at the far-corner goal;
// two_room_sparse: wall with a single door, +1 at the goal, no step cost.
std::unique_ptr<Env> gridworld_env(int size, GridworldKind kind, double slip);

// scalar double integrator with quadratic cost and bounded action
std::unique_ptr<Env> lqr1d_env(double noise_sigma);

struct Lqr1dParams {
  double dt = 0.05;
  double pos_cost = 1.0;
  double action_cost = 0.1;
  double action_limit = 2.0;
  int horizon = 100;
};
Lqr1dParams lqr1d_params();

// optimal gain (k_pos, k_vel) for the deterministic problem, by Riccati
// iteration; the optimal action is -k x clipped to the action limit
std::pair<double, double> lqr1d_riccati_gain();

std::unique_ptr<Env> make_env(const std::string& name, int grid_size,
                              double slip, double noise_sigma);

// Per-env rollout record.  final_obs[t] holds the true next observation at
// steps that ended an episode (terminal or truncated); the recorded stream
// continues with the reset observation, so nothing post-terminal leaks in.
struct EnvTrajectory {
  std::vector<std::vector<double>> obs;
  std::vector<Action> actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminal;
  std::vector<std::uint8_t> truncated;
  std::vector<std::vector<double>> final_obs;  // empty vector when unused
};

using PolicyFn =
    std::function<Action(const std::vector<double>& obs, int env_index)>;

// Steps E homogeneous environments N times each with auto-reset, keeping
// state across calls.  Deterministic given the construction seed.
class VectorRunner {
 public:
  VectorRunner(std::vector<std::unique_ptr<Env>> envs, std::uint64_t seed);

  int env_count() const { return static_cast<int>(envs_.size()); }
  const EnvSpec& spec() const { return envs_[0]->spec(); }
  const std::vector<double>& current_obs(int e) const { return current_[e]; }

  std::vector<EnvTrajectory> run(const PolicyFn& policy, int steps);

  // undiscounted returns of episodes completed since the last drain
  std::vector<double> drain_completed_returns();

 private:
  std::vector<std::unique_ptr<Env>> envs_;
  std::vector<std::vector<double>> current_;
  std::vector<double> episode_return_;
  std::vector<double> completed_;
};

}  // namespace dac
