#include "flops_report.hpp"

#include <cmath>

namespace dac {

VariantFlopReport count_flops(Variant variant, const FlopSettings& s) {
  VariantFlopReport report;
  report.variant = variant;

  PolicySpec pol{true, s.action_count};
  ValueHead head = ValueHead::scalar;
  int vsize = 1;
  if (variant == Variant::iqac || variant == Variant::iqac_e) {
    head = ValueHead::quantile;
    vsize = s.atoms;
  } else if (variant == Variant::gmac) {
    head = ValueHead::gmm;
    vsize = s.mixtures;
  }
  Network net(s.obs_dim, s.hidden, Activation::tanh, pol, head, vsize, 42);
  report.parameter_count = net.parameter_count();

  Rng rng(7);
  FlopCounter counter;

  {
    flops::PhaseScope phase(counter, FlopPhase::inference);
    Tape tape;
    Tensor obs(1, s.obs_dim);
    for (double& v : obs.v) v = rng.uniform(-1.0, 1.0);
    Tape::NodeId h = net.torso(tape, tape.constant(std::move(obs)));
    Tape::NodeId p = net.policy_out(tape, h);
    Tape::NodeId vraw = net.value_raw(tape, h);
    if (head == ValueHead::gmm) (void)net.gmm_value(tape, vraw);
    (void)tape.value(p);
  }
  report.inference = counter.phase_total(FlopPhase::inference);

  {
    flops::PhaseScope phase(counter, FlopPhase::update);
    const int B = s.minibatch;
    Tensor obs(B, s.obs_dim);
    for (double& v : obs.v) v = rng.uniform(-1.0, 1.0);
    std::vector<int> actions(B);
    Tensor logp_old(B, 1), adv(B, 1), clip(B, 1);
    for (int i = 0; i < B; ++i) {
      actions[i] = static_cast<int>(rng.uniform_index(s.action_count));
      logp_old.at(i, 0) = -std::log(static_cast<double>(s.action_count));
      adv.at(i, 0) = rng.normal();
      clip.at(i, 0) = adv.at(i, 0) >= 0.0
                          ? (1.0 + s.clip_epsilon) * adv.at(i, 0)
                          : (1.0 - s.clip_epsilon) * adv.at(i, 0);
    }
    std::vector<std::vector<double>> target_atoms;
    std::vector<GaussianMixture> target_mixtures;
    std::vector<double> target_self;
    if (head == ValueHead::quantile) {
      target_atoms.assign(B, std::vector<double>(s.atoms));
      for (auto& row : target_atoms)
        for (double& v : row) v = rng.normal();
    } else if (head == ValueHead::gmm) {
      for (int i = 0; i < B; ++i) {
        std::vector<double> means(s.sr_particles), vars(s.sr_particles);
        for (int k = 0; k < s.sr_particles; ++k) {
          means[k] = rng.normal();
          vars[k] = rng.uniform(0.05, 0.5);
        }
        target_mixtures.push_back(GaussianMixture::equal_weight(means, vars));
      }
      flops::CategoryScope cat(FlopCategory::value_loss);
      target_self.resize(B);
      for (int i = 0; i < B; ++i)
        target_self[i] = delta_gmm(target_mixtures[i], target_mixtures[i]);
    }
    std::vector<double> returns(B), values_old(B);
    for (int i = 0; i < B; ++i) {
      returns[i] = rng.normal();
      values_old[i] = rng.normal();
    }

    Adam opt(net.parameters(), AdamConfig{});
    opt.zero_grad();
    Tape tape;
    Tape::NodeId h = net.torso(tape, tape.constant(std::move(obs)));
    Tape::NodeId polout = net.policy_out(tape, h);
    Tape::NodeId policy_loss;
    Tape::NodeId entropy;
    {
      flops::CategoryScope cat(FlopCategory::policy_loss);
      Tape::NodeId logp = tape.categorical_log_prob(polout, actions);
      entropy = tape.categorical_entropy(polout);
      Tape::NodeId ratio = tape.exp_(tape.sub_const(logp, logp_old));
      Tape::NodeId surr = tape.min_const(tape.mul_const(ratio, adv), clip);
      policy_loss = tape.scale(tape.mean_all(surr), -1.0);
    }
    Tape::NodeId vraw = net.value_raw(tape, h);
    Tape::NodeId value_loss = 0;
    {
      flops::CategoryScope cat(FlopCategory::value_loss);
      switch (variant) {
        case Variant::ppo_scalar: {
          Tensor ret(B, 1), gap(B, 1), vold(B, 1);
          for (int i = 0; i < B; ++i) {
            ret.at(i, 0) = returns[i];
            vold.at(i, 0) = values_old[i];
            gap.at(i, 0) = returns[i] - values_old[i];
          }
          Tape::NodeId err = tape.square(tape.sub_const(vraw, ret));
          Tape::NodeId dvc = tape.clamp(tape.sub_const(vraw, vold),
                                        -s.clip_epsilon, s.clip_epsilon);
          Tape::NodeId err_clip = tape.square(tape.sub_const(dvc, gap));
          value_loss =
              tape.scale(tape.mean_all(tape.max_elem(err, err_clip)), 0.5);
          break;
        }
        case Variant::iqac:
        case Variant::iqac_e: {
          Tensor t(B, s.atoms);
          for (int i = 0; i < B; ++i)
            for (int c = 0; c < s.atoms; ++c)
              t.at(i, c) = target_atoms[i][c];
          value_loss =
              variant == Variant::iqac
                  ? tape.huber_quantile_batch(vraw, std::move(t),
                                              net.fractions(), s.kappa)
                  : tape.energy_sample_batch(vraw, std::move(t));
          break;
        }
        case Variant::gmac: {
          Network::GmmNodes nodes = net.gmm_value(tape, vraw);
          value_loss =
              tape.energy_gmm_batch(nodes.weights, nodes.means,
                                    nodes.variances, target_mixtures,
                                    target_self);
          break;
        }
      }
    }
    Tape::NodeId total = tape.add(policy_loss, tape.scale(value_loss, 0.5));
    total = tape.add(total, tape.scale(tape.mean_all(entropy), -0.01));
    tape.backward(total);
    opt.step();
  }
  report.update = counter.phase_total(FlopPhase::update);
  report.update_torso = counter.phase_category(FlopPhase::update,
                                               FlopCategory::torso);
  FlopCounts policy = counter.phase_category(FlopPhase::update,
                                             FlopCategory::policy_head);
  policy += counter.phase_category(FlopPhase::update,
                                   FlopCategory::policy_loss);
  report.update_policy = policy;
  report.update_value_head =
      counter.phase_category(FlopPhase::update, FlopCategory::value_head);
  report.update_value_loss =
      counter.phase_category(FlopPhase::update, FlopCategory::value_loss);
  report.update_other =
      counter.phase_category(FlopPhase::update, FlopCategory::other);
  return report;
}

}  // namespace dac
