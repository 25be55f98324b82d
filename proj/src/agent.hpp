#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "distribution.hpp"
#include "envs.hpp"
#include "flops.hpp"
#include "metrics.hpp"
#include "network.hpp"
#include "sr_lambda.hpp"

namespace dac {

enum class Variant { ppo_scalar, iqac, iqac_e, gmac };

Variant variant_from_string(const std::string& name);
const char* variant_name(Variant v);

struct TrainConfig {
  Variant variant = Variant::gmac;
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_epsilon = 0.2;
  int epochs = 4;
  int minibatch_size = 128;
  int rollout_steps = 64;
  int env_count = 8;
  double learning_rate = 2.5e-4;
  double entropy_coef = 0.01;
  double value_loss_coef = 0.5;
  int mixtures = 5;       // K (gmac)
  int atoms = 64;         // m (iqac, iqac_e)
  int sr_particles = 16;  // target mixture size for gmac
  bool advantage_norm = true;
  double intrinsic_coef = 0.0;
  std::vector<int> hidden = {64, 64};
  std::uint64_t seed = 1;

  void validate() const;
};

// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1} with
// delta_t = r_t + gamma (1 - terminal_t) next_value_t - value_t.
// next_values[t] is the critic mean at the observation following step t
// (the truncation bootstrap at truncated steps; ignored at terminal steps).
std::vector<double> gae(std::span<const double> rewards,
                        std::span<const double> values,
                        std::span<const double> next_values,
                        std::span<const std::uint8_t> terminal,
                        std::span<const std::uint8_t> truncated, double gamma,
                        double lambda);

// -mean(min(ratio * A, g(eps, A))) with g(eps, A) = (1 +- eps) A
double ppo_clip_loss(std::span<const double> logp_new,
                     std::span<const double> logp_old,
                     std::span<const double> advantages, double clip_epsilon);

// identical in value to energy_gmm(critic, target)
double value_loss_gmac(const GaussianMixture& critic,
                       const GaussianMixture& target);
double value_loss_iqac(std::span<const double> critic_atoms,
                       std::span<const double> fractions,
                       std::span<const double> target_atoms, double kappa);
double value_loss_iqac_e(std::span<const double> critic_atoms,
                         std::span<const double> target_atoms);

// Cramer-squared distance (half the energy distance) between the critic's
// prediction and its target, scaled by the running RMS of past values so a
// constant stream normalizes to 1.
class IntrinsicRewardTracker {
 public:
  double normalized(const ValueDistribution& critic,
                    const ValueDistribution& target);
  std::size_t count() const { return count_; }

 private:
  std::size_t count_ = 0;
  double mean_square_ = 0.0;
};

struct IterationMetrics {
  int iteration = 0;
  long frames = 0;
  double mean_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  double flops_inference = 0.0;
  double flops_update = 0.0;
};

class Trainer {
 public:
  Trainer(TrainConfig config, const Env& prototype);

  IterationMetrics train_iteration();

  Network& network() { return *net_; }
  const Network& network() const { return *net_; }
  Adam& optimizer() { return *opt_; }
  const TrainConfig& config() const { return config_; }
  const FlopCounter& flop_counter() const { return flops_; }
  int iteration() const { return iteration_; }
  long frames() const { return frames_; }

  struct EvalStats {
    double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
    int episodes = 0;
  };
  EvalStats evaluate(int episodes, std::uint64_t eval_seed);

  void restore(std::unique_ptr<Network> net, std::unique_ptr<Adam> opt,
               int iteration, long frames);

 private:
  Action sample_action(const std::vector<double>& obs, double* logp,
                       Rng& rng);

  TrainConfig config_;
  std::unique_ptr<Env> proto_;
  std::unique_ptr<VectorRunner> runner_;
  std::unique_ptr<Network> net_;
  std::unique_ptr<Adam> opt_;
  FlopCounter flops_;
  IntrinsicRewardTracker intrinsic_;
  Rng action_rng_;
  Rng shuffle_rng_;
  Rng sr_rng_;
  int iteration_ = 0;
  long frames_ = 0;
  double last_mean_return_ = 0.0;
};

}  // namespace dac
