#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tape.hpp"

namespace dac {

enum class Activation : std::uint8_t { tanh = 0, relu = 1 };
enum class ValueHead : std::uint8_t { scalar = 0, quantile = 1, gmm = 2 };

struct PolicySpec {
  bool discrete = true;
  int size = 1;  // action count or action dimension
};

struct Linear {
  Tensor w, b, gw, gb;  // w is (in x out)
  Linear() = default;
  Linear(int in, int out);
  Tape::NodeId forward(Tape& tape, Tape::NodeId x);
};

struct ParamRef {
  Tensor* value;
  Tensor* grad;
};

// Shared torso with a policy head and a value head.  The value head emits a
// scalar, m quantile atoms at fixed fractions, or 3K raw mixture outputs
// (weights via softmax, means as-is, variances via softplus with a floor).
class Network {
 public:
  Network(int obs_dim, std::vector<int> hidden, Activation activation,
          PolicySpec policy, ValueHead value_head, int value_size,
          std::uint64_t init_seed);

  int obs_dim() const { return obs_dim_; }
  const std::vector<int>& hidden() const { return hidden_; }
  Activation activation() const { return activation_; }
  const PolicySpec& policy_spec() const { return policy_; }
  ValueHead value_head() const { return value_head_; }
  int value_size() const { return value_size_; }
  const std::vector<double>& fractions() const { return fractions_; }

  Tape::NodeId torso(Tape& tape, Tape::NodeId input);
  // logits (discrete) or action means (continuous)
  Tape::NodeId policy_out(Tape& tape, Tape::NodeId h);
  Tape::NodeId log_std_node(Tape& tape);  // clamped to [-5, 2]

  struct GmmNodes {
    Tape::NodeId weights, means, variances;
  };
  Tape::NodeId value_raw(Tape& tape, Tape::NodeId h);
  GmmNodes gmm_value(Tape& tape, Tape::NodeId raw);

  // convenience: run the critic on a batch of observations (no gradients)
  std::vector<ValueDistribution> critic_distributions(const Tensor& obs);
  std::vector<double> critic_means(const Tensor& obs);

  std::vector<ParamRef> parameters();
  std::size_t parameter_count() const;

  void save(std::ostream& out) const;
  static Network load(std::istream& in);

 private:
  int obs_dim_;
  std::vector<int> hidden_;
  Activation activation_;
  PolicySpec policy_;
  ValueHead value_head_;
  int value_size_;
  std::vector<double> fractions_;

  std::vector<Linear> torso_;
  Linear policy_lin_;
  Tensor log_std_, g_log_std_;
  Linear value_lin_;
};

struct AdamConfig {
  double learning_rate = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Standard Adam with bias correction.  A step with any non-finite gradient
// is skipped and reported instead of applied.
class Adam {
 public:
  Adam(std::vector<ParamRef> params, AdamConfig config);

  struct StepReport {
    bool applied = true;
    double grad_norm = 0.0;
  };
  StepReport step();
  void zero_grad();

  std::uint64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  std::vector<ParamRef> params_;
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  std::uint64_t step_count_ = 0;
};

// checkpoint = network + optional optimizer state, little-endian doubles,
// byte-exact round trip
void save_checkpoint(const std::string& path, const Network& net,
                     const Adam* opt);
struct LoadedCheckpoint {
  std::unique_ptr<Network> net;
  std::unique_ptr<Adam> opt;  // fresh state when none was stored
};
LoadedCheckpoint load_checkpoint(const std::string& path,
                                 const AdamConfig& fallback);

}  // namespace dac
