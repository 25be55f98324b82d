#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "distribution.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace dac {

enum class RewardLawKind { constant, uniform_discrete, normal };

struct RewardLaw {
  RewardLawKind kind = RewardLawKind::constant;
  double value = 0.0;                 // constant
  std::vector<double> support;        // uniform_discrete
  double mu = 0.0, variance = 0.0;    // normal

  static RewardLaw constant(double c);
  static RewardLaw uniform(std::vector<double> support);
  static RewardLaw gaussian(double mu, double variance);

  double mean() const;
  double sample(Rng& rng) const;
  // (probability, value, extra variance) branches of the exact law
  struct Branch {
    double prob;
    double value;
    double variance;
  };
  std::vector<Branch> branches() const;
};

// Finite MDP with stochastic per-(state, action) reward laws.  Terminal
// states self-absorb with zero reward.
struct TabularMdp {
  int states = 0;
  int actions = 0;
  double gamma = 0.99;
  std::vector<std::uint8_t> terminal;                    // [s]
  std::vector<std::vector<std::vector<double>>> p;       // [s][a][s']
  std::vector<std::vector<RewardLaw>> reward;            // [s][a]

  void validate() const;

  static TabularMdp load(std::istream& in);
  static TabularMdp load_file(const std::string& path);
  void save(std::ostream& out) const;

  // chain S1 -> ... -> S5 -> T with r4 ~ U{-1,+1} and r5 ~ N(0, 0.1^2)
  static TabularMdp five_state(double gamma = 1.0);

  // random transition kernel (two successors per pair) with mixed reward
  // laws; no terminal states
  static TabularMdp random(int states, int actions, double gamma, Rng& rng);
};

struct PolicyMatrix {
  std::vector<std::vector<double>> pi;  // [s][a], rows are probability vectors
  static PolicyMatrix uniform(const TabularMdp& mdp);
};

// One value distribution per (state, action) pair.
struct TabularValueTable {
  int states = 0;
  int actions = 0;
  std::vector<ValueDistribution> z;  // row-major [s][a]

  const ValueDistribution& at(int s, int a) const;
  ValueDistribution& at(int s, int a);
  static TabularValueTable zeros(const TabularMdp& mdp);
};

struct BellmanOptions {
  std::size_t component_cap = 256;
};

// Exact distributional Bellman operator under a fixed policy.  Entries are
// produced as Gaussian mixtures (Dirac inputs are lifted to floor-variance
// components); mixtures beyond the component cap are reduced by greedy
// pairwise moment-matching merges.
TabularValueTable bellman_apply(const TabularValueTable& table,
                                const TabularMdp& mdp, const PolicyMatrix& pi,
                                const BellmanOptions& options = {});

// Optimality operator: the successor action maximizes the mean, ties broken
// by the lowest action index.
TabularValueTable bellman_optimality_apply(const TabularValueTable& table,
                                           const TabularMdp& mdp,
                                           const BellmanOptions& options = {});

// Greedy pairwise moment-matching reduction; each merge picks the pair whose
// local replacement (two components vs. their moment match) costs the least
// energy distance.
GaussianMixture reduce_mixture(const GaussianMixture& g,
                               std::size_t max_components);

// Empirical distribution of discounted returns over independent rollouts.
// Throws if a rollout exceeds 1e5 steps (non-episodic MDP).
DiracMixture ground_truth_monte_carlo(const TabularMdp& mdp,
                                      const PolicyMatrix& pi, int state,
                                      std::size_t episodes, Rng& rng);

// Iterates the Bellman operator until the sup energy change falls below tol;
// returns the per-state mixture under the policy.
std::vector<GaussianMixture> exact_state_values(const TabularMdp& mdp,
                                                const PolicyMatrix& pi,
                                                double tol = 1e-12,
                                                int max_iters = 400);

struct ContractionReport {
  std::size_t trials = 0;
  std::size_t cramer_failures = 0;
  std::size_t energy_failures = 0;
  double max_cramer_ratio = 0.0;  // sup l_p after / (gamma^(1/p) sup l_p before)
  double max_energy_ratio = 0.0;  // sup E after / (gamma sup E before)
  std::string diagnostics;        // offending tables, serialized
  bool passed() const { return cramer_failures == 0 && energy_failures == 0; }
};

// Draws pairs of random mixture tables, applies the Bellman operator and
// checks the gamma^(1/p) contraction in l_p plus the gamma contraction in
// energy distance (both with 1e-6 slack).
ContractionReport contraction_check(const TabularMdp& mdp,
                                    const PolicyMatrix& pi,
                                    std::size_t trials, double exponent,
                                    Rng& rng);

// Crafted two-action MDP plus near-tied table pair for which the optimality
// operator expands the Cramer distance.  Returns the distance per iteration;
// the caller decides what to do with it (this is a demonstration, not a
// pass/fail check).
std::vector<double> optimality_instability_demo(int iterations = 6,
                                                double tie_gap = 1e-6);

enum class TabularLoss { huber_quantile, energy_samples, energy_gmm };
enum class TabularRepr { dirac_m, gmm_K };

struct FitOptions {
  TabularLoss loss = TabularLoss::energy_gmm;
  TabularRepr repr = TabularRepr::gmm_K;
  int size = 5;              // atoms m or components K
  std::size_t steps = 4000;  // episodes sampled (one SGD pass per episode)
  double learning_rate = 0.05;
  double lambda = 0.95;
  double kappa = 1.0;
  std::size_t curve_every = 200;
};

struct FitResult {
  std::vector<ValueDistribution> per_state;
  std::vector<double> curve_steps;
  std::vector<double> distance_curve;  // mean energy distance to ground truth
  double final_distance = 0.0;
};

// Fits per-state value distributions by SGD against SR(lambda) targets from
// sampled rollouts.  huber_quantile requires the Dirac representation.
FitResult fit_tabular_critic(const TabularMdp& mdp, const PolicyMatrix& pi,
                             const FitOptions& options, Rng& rng);

// Treats fitted quantile atoms as exact quantiles of an implied distribution
// (piecewise-linear quantile function, end slopes extrapolated) and resamples
// through the inverse cdf.
DiracMixture impute_from_quantiles(const DiracMixture& fitted,
                                   std::span<const double> fractions,
                                   std::size_t samples);

// fixed fractions tau_i = (2i - 1) / (2m)
std::vector<double> midpoint_fractions(int m);

}  // namespace dac
