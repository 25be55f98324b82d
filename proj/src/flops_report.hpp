#pragma once

#include <vector>

#include "agent.hpp"

namespace dac {

struct VariantFlopReport {
  Variant variant = Variant::gmac;
  std::size_t parameter_count = 0;
  FlopCounts inference;
  FlopCounts update;
  // update-phase breakdown used for the overhead accounting
  FlopCounts update_torso;
  FlopCounts update_policy;  // head + loss
  FlopCounts update_value_head;
  FlopCounts update_value_loss;
  FlopCounts update_other;
};

struct FlopSettings {
  int obs_dim = 25;      // 5x5 gridworld one-hot
  int action_count = 4;
  std::vector<int> hidden = {64, 64};
  int atoms = 64;        // N = N' for iqac / iqac_e
  int mixtures = 5;      // K for gmac
  int sr_particles = 16; // gmac target mixture size
  int minibatch = 128;
  double kappa = 1.0;
  double clip_epsilon = 0.2;
};

// Deterministic operation counts for one single-observation inference pass
// and one full minibatch update at matched settings.
VariantFlopReport count_flops(Variant variant, const FlopSettings& settings);

}  // namespace dac
