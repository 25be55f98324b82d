#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "distribution.hpp"
#include "metrics.hpp"

namespace dac {

// Reward trajectory of length N with the critic's distribution at the state
//"after" the last step as bootstrap.  terminal[t] == 1 means the episode
// ended with step t: nothing after t contributes to returns at or before t.
// truncation_bootstrap[t], when set, means the episode was cut off after
// step t (step cap); returns crossing t bootstrap from that distribution.
struct RewardTrajectory {
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminal;
  ValueDistribution bootstrap;
  double gamma = 0.99;
  double lambda = 0.95;
  std::vector<std::optional<ValueDistribution>> truncation_bootstrap;

  RewardTrajectory(std::vector<double> r, std::vector<std::uint8_t> term,
                   ValueDistribution boot, double g, double l);

  std::size_t length() const { return rewards.size(); }
  void validate() const;
};

// One Bellman target distribution per step; every entry shares the same
// representation (Dirac of m atoms or equal-weight m-component mixture).
struct LambdaTargets {
  std::vector<ValueDistribution> steps;
};

// n-step target: sum_{i<n} gamma^i r_{t+i} + gamma^n Z(x_{t+n}).
// values[k] is the critic's distribution at x_k for k in [0, N); the
// distribution at x_N is traj.bootstrap.  A terminal inside the window
// truncates the tail to a point mass at the partial return.
ValueDistribution n_step_target(const std::vector<ValueDistribution>& values,
                                const RewardTrajectory& traj, std::size_t t,
                                std::size_t n);

// Exact truncated lambda mixture: weights (1-lambda) lambda^(n-1) for
// n < N-t and lambda^(N-t-1) on the final term.
struct WeightedMixture {
  std::vector<double> weights;
  std::vector<ValueDistribution> components;

  double mean() const;
  double cdf(double z) const;
  bool all_gaussian() const;
  GaussianMixture flatten_gaussian() const;
  // expands Dirac components into (atom, weight) pairs
  void flatten_atoms(std::vector<double>& atoms,
                     std::vector<double>& atom_weights) const;
};

WeightedMixture exact_lambda_mixture(
    const std::vector<ValueDistribution>& values, const RewardTrajectory& traj,
    std::size_t t);

struct SrOptions {
  // Re-draw the working set from its own empirical distribution (with
  // replacement) after each record step.  Off by default: the working set is
  // kept as-is between record and replacement.
  bool resample_working_set = false;
};

// Reverse sweep over the trajectory: Bellman-transform the working set,
// record it as Z_t^(lambda), then replace each element by the same-index
// atom of the critic's Z(x_t) independently with probability 1 - lambda.
// Deterministic given the seed; each (step, index) pair draws from its own
// substream.
LambdaTargets sr_lambda_dirac(const std::vector<DiracMixture>& values,
                              const RewardTrajectory& traj, std::uint64_t seed,
                              const SrOptions& options = {});

// Same sweep on (mean, variance) parameter pairs: the Bellman operation maps
// (mu, var) to (r + gamma mu, gamma^2 var) and replacement draws a component
// index from Categorical(w) of the critic's Z(x_t).  Output per step is the
// equal-weight mixture of the m pairs.
LambdaTargets sr_lambda_gmm(const std::vector<GaussianMixture>& values,
                            const RewardTrajectory& traj,
                            std::size_t particles, std::uint64_t seed,
                            const SrOptions& options = {});

// Pools step-0 targets across `replications` seeded runs and reports the
// energy distance to the exact mixture.  Contract: the distance vanishes at
// rate O((replications * m)^(-1/2)).
DistanceReport sr_lambda_distribution_check(
    const std::vector<DiracMixture>& values, const RewardTrajectory& traj,
    std::size_t replications, std::uint64_t seed);
DistanceReport sr_lambda_distribution_check(
    const std::vector<GaussianMixture>& values, const RewardTrajectory& traj,
    std::size_t particles, std::size_t replications, std::uint64_t seed);

}  // namespace dac
