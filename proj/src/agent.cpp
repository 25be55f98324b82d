#include "agent.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace dac {

Variant variant_from_string(const std::string& name) {
  if (name == "ppo_scalar") return Variant::ppo_scalar;
  if (name == "iqac") return Variant::iqac;
  if (name == "iqac_e") return Variant::iqac_e;
  if (name == "gmac") return Variant::gmac;
  throw std::invalid_argument("unknown variant: " + name);
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::ppo_scalar: return "ppo_scalar";
    case Variant::iqac: return "iqac";
    case Variant::iqac_e: return "iqac_e";
    default: return "gmac";
  }
}

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("TrainConfig: gamma outside (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("TrainConfig: lambda outside [0, 1]");
  if (clip_epsilon <= 0.0)
    throw std::invalid_argument("TrainConfig: clip epsilon must be > 0");
  if (epochs < 1 || minibatch_size < 1 || rollout_steps < 1 || env_count < 1)
    throw std::invalid_argument("TrainConfig: loop sizes must be >= 1");
  if (learning_rate <= 0.0 && learning_rate != 0.0)
    throw std::invalid_argument("TrainConfig: negative learning rate");
  if (mixtures < 1 || atoms < 1 || sr_particles < 1)
    throw std::invalid_argument("TrainConfig: head sizes must be >= 1");
  if (intrinsic_coef < 0.0)
    throw std::invalid_argument("TrainConfig: intrinsic coefficient < 0");
  if (intrinsic_coef > 0.0 && variant == Variant::ppo_scalar)
    throw std::invalid_argument(
        "TrainConfig: intrinsic reward needs a distributional critic");
  if (hidden.empty())
    throw std::invalid_argument("TrainConfig: needs at least one hidden layer");
}

std::vector<double> gae(std::span<const double> rewards,
                        std::span<const double> values,
                        std::span<const double> next_values,
                        std::span<const std::uint8_t> terminal,
                        std::span<const std::uint8_t> truncated, double gamma,
                        double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || next_values.size() != n || terminal.size() != n ||
      truncated.size() != n)
    throw std::invalid_argument("gae: length mismatch");
  std::vector<double> adv(n);
  double carry = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    double boot = terminal[i] ? 0.0 : next_values[i];
    double delta = rewards[i] + gamma * boot - values[i];
    bool done = terminal[i] || truncated[i];
    carry = delta + gamma * lambda * (done ? 0.0 : carry);
    adv[i] = carry;
  }
  return adv;
}

double ppo_clip_loss(std::span<const double> logp_new,
                     std::span<const double> logp_old,
                     std::span<const double> advantages, double clip_epsilon) {
  if (logp_new.size() != logp_old.size() ||
      logp_new.size() != advantages.size() || logp_new.empty())
    throw std::invalid_argument("ppo_clip_loss: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < logp_new.size(); ++i) {
    double ratio = std::exp(logp_new[i] - logp_old[i]);
    double a = advantages[i];
    double clipped = a >= 0.0 ? (1.0 + clip_epsilon) * a
                              : (1.0 - clip_epsilon) * a;
    acc += std::min(ratio * a, clipped);
  }
  return -acc / static_cast<double>(logp_new.size());
}

double value_loss_gmac(const GaussianMixture& critic,
                       const GaussianMixture& target) {
  return energy_gmm(critic, target);
}

double value_loss_iqac(std::span<const double> critic_atoms,
                       std::span<const double> fractions,
                       std::span<const double> target_atoms, double kappa) {
  if (critic_atoms.size() != fractions.size())
    throw std::invalid_argument("value_loss_iqac: fraction count");
  std::vector<QuantilePrediction> preds(critic_atoms.size());
  for (std::size_t i = 0; i < preds.size(); ++i)
    preds[i] = {critic_atoms[i], fractions[i]};
  return huber_quantile_loss(target_atoms, preds, kappa);
}

double value_loss_iqac_e(std::span<const double> critic_atoms,
                         std::span<const double> target_atoms) {
  return energy_samples(critic_atoms, target_atoms);
}

double IntrinsicRewardTracker::normalized(const ValueDistribution& critic,
                                          const ValueDistribution& target) {
  double raw = 0.5 * energy_distance(critic, target);  // squared Cramer
  ++count_;
  mean_square_ += (raw * raw - mean_square_) / static_cast<double>(count_);
  double rms = std::sqrt(mean_square_);
  return rms > 1e-12 ? raw / rms : 0.0;
}

namespace {

constexpr double kHuberKappa = 1.0;

struct FlatBatch {
  Tensor obs;
  std::vector<int> discrete_actions;
  Tensor box_actions;
  std::vector<double> logp_old;
  std::vector<double> advantages;
  std::vector<double> values_old;
  std::vector<double> returns;
  std::vector<std::vector<double>> target_atoms;     // iqac / iqac_e
  std::vector<GaussianMixture> target_mixtures;      // gmac
  std::vector<double> target_self;                   // cached delta(V, V')
  int size = 0;
};

double mean_of(const std::vector<double>& xs, double fallback) {
  if (xs.empty()) return fallback;
  double m = 0.0;
  for (double x : xs) m += x;
  return m / static_cast<double>(xs.size());
}

}  // namespace

Trainer::Trainer(TrainConfig config, const Env& prototype)
    : config_(std::move(config)),
      action_rng_(0),
      shuffle_rng_(0),
      sr_rng_(0) {
  config_.validate();
  proto_ = prototype.clone();
  std::vector<std::unique_ptr<Env>> envs;
  envs.reserve(config_.env_count);
  for (int e = 0; e < config_.env_count; ++e) envs.push_back(prototype.clone());
  runner_ = std::make_unique<VectorRunner>(std::move(envs),
                                           mix_seed(config_.seed, 101));
  const EnvSpec& spec = runner_->spec();
  PolicySpec pol;
  pol.discrete = spec.action.kind == ActionSpace::Kind::discrete;
  pol.size = pol.discrete ? spec.action.n : spec.action.dim;
  ValueHead head = ValueHead::scalar;
  int vsize = 1;
  switch (config_.variant) {
    case Variant::ppo_scalar: break;
    case Variant::iqac:
    case Variant::iqac_e:
      head = ValueHead::quantile;
      vsize = config_.atoms;
      break;
    case Variant::gmac:
      head = ValueHead::gmm;
      vsize = config_.mixtures;
      break;
  }
  net_ = std::make_unique<Network>(spec.obs_dim, config_.hidden,
                                   Activation::tanh, pol, head, vsize,
                                   mix_seed(config_.seed, 202));
  AdamConfig adam;
  adam.learning_rate = config_.learning_rate;
  opt_ = std::make_unique<Adam>(net_->parameters(), adam);
  action_rng_ = Rng(mix_seed(config_.seed, 303));
  shuffle_rng_ = Rng(mix_seed(config_.seed, 404));
  sr_rng_ = Rng(mix_seed(config_.seed, 505));
}

void Trainer::restore(std::unique_ptr<Network> net, std::unique_ptr<Adam> opt,
                      int iteration, long frames) {
  net_ = std::move(net);
  opt_ = std::move(opt);
  iteration_ = iteration;
  frames_ = frames;
}

Action Trainer::sample_action(const std::vector<double>& obs, double* logp,
                              Rng& rng) {
  Tape tape;
  Tensor in(1, net_->obs_dim());
  std::copy(obs.begin(), obs.end(), in.v.begin());
  Tape::NodeId h = net_->torso(tape, tape.constant(std::move(in)));
  Tape::NodeId pol = net_->policy_out(tape, h);
  const Tensor& out = tape.value(pol);
  Action action;
  if (net_->policy_spec().discrete) {
    int n = out.cols;
    double mx = -1e300;
    for (int c = 0; c < n; ++c) mx = std::max(mx, out.at(0, c));
    std::vector<double> probs(n);
    double total = 0.0;
    for (int c = 0; c < n; ++c) {
      probs[c] = std::exp(out.at(0, c) - mx);
      total += probs[c];
    }
    for (double& p : probs) p /= total;
    action.index = static_cast<int>(rng.categorical(probs));
    *logp = std::log(std::max(probs[action.index], 1e-300));
  } else {
    const Tensor& ls = tape.value(net_->log_std_node(tape));
    int d = out.cols;
    action.box.resize(d);
    double acc = 0.0;
    const double log2pi = std::log(2.0 * std::numbers::pi);
    for (int c = 0; c < d; ++c) {
      double sigma = std::exp(ls.at(0, c));
      double z = rng.normal();
      action.box[c] = out.at(0, c) + sigma * z;
      acc += -0.5 * z * z - ls.at(0, c) - 0.5 * log2pi;
    }
    *logp = acc;
  }
  return action;
}

IterationMetrics Trainer::train_iteration() {
  const int E = config_.env_count;
  const int N = config_.rollout_steps;
  const int obs_dim = net_->obs_dim();
  IterationMetrics metrics;
  metrics.iteration = iteration_;

  std::vector<std::vector<double>> logps(E);
  std::vector<EnvTrajectory> trajs;
  {
    flops::PhaseScope phase(flops_, FlopPhase::inference);
    trajs = runner_->run(
        [&](const std::vector<double>& obs, int e) {
          double logp = 0.0;
          Action a = sample_action(obs, &logp, action_rng_);
          logps[e].push_back(logp);
          return a;
        },
        N);
    metrics.flops_inference = flops_.phase_total(FlopPhase::inference).total();
  }
  frames_ += static_cast<long>(E) * N;

  // one batched critic pass over everything the targets need
  std::vector<const std::vector<double>*> extra_obs;  // bootstrap + truncation
  for (int e = 0; e < E; ++e) extra_obs.push_back(&runner_->current_obs(e));
  std::vector<std::pair<int, int>> final_index;  // (env, step) -> extra row
  for (int e = 0; e < E; ++e)
    for (int t = 0; t < N; ++t)
      if (!trajs[e].final_obs[t].empty() && trajs[e].truncated[t]) {
        final_index.emplace_back(e, t);
        extra_obs.push_back(&trajs[e].final_obs[t]);
      }
  Tensor all_obs(E * N + static_cast<int>(extra_obs.size()), obs_dim);
  for (int e = 0; e < E; ++e)
    for (int t = 0; t < N; ++t)
      for (int c = 0; c < obs_dim; ++c)
        all_obs.at(e * N + t, c) = trajs[e].obs[t][c];
  for (std::size_t i = 0; i < extra_obs.size(); ++i)
    for (int c = 0; c < obs_dim; ++c)
      all_obs.at(E * N + static_cast<int>(i), c) = (*extra_obs[i])[c];
  std::vector<ValueDistribution> dists = net_->critic_distributions(all_obs);

  auto critic_of = [&](int e, int t) -> const ValueDistribution& {
    return dists[e * N + t];
  };
  auto bootstrap_of = [&](int e) -> const ValueDistribution& {
    return dists[E * N + e];
  };
  std::vector<std::vector<int>> trunc_row(E, std::vector<int>(N, -1));
  for (std::size_t i = 0; i < final_index.size(); ++i)
    trunc_row[final_index[i].first][final_index[i].second] =
        E * N + E + static_cast<int>(i);

  FlatBatch batch;
  batch.size = E * N;
  batch.obs = Tensor(batch.size, obs_dim);
  for (int r = 0; r < batch.size; ++r)
    for (int c = 0; c < obs_dim; ++c) batch.obs.at(r, c) = all_obs.at(r, c);
  const bool discrete = net_->policy_spec().discrete;
  if (discrete)
    batch.discrete_actions.resize(batch.size);
  else
    batch.box_actions = Tensor(batch.size, net_->policy_spec().size);
  batch.logp_old.resize(batch.size);
  batch.advantages.resize(batch.size);
  batch.values_old.resize(batch.size);
  batch.returns.resize(batch.size);
  const bool dirac_targets =
      config_.variant == Variant::iqac || config_.variant == Variant::iqac_e;
  if (dirac_targets) batch.target_atoms.resize(batch.size);
  if (config_.variant == Variant::gmac) {
    batch.target_mixtures.reserve(batch.size);
    batch.target_self.resize(batch.size);
  }

  for (int e = 0; e < E; ++e) {
    EnvTrajectory& traj = trajs[e];
    std::vector<double> rewards = traj.rewards;

    std::vector<std::optional<ValueDistribution>> trunc_boot(N);
    for (int t = 0; t < N; ++t)
      if (trunc_row[e][t] >= 0) trunc_boot[t] = dists[trunc_row[e][t]];

    LambdaTargets targets;
    auto build_targets = [&](const std::vector<double>& r) {
      RewardTrajectory local(r, traj.terminal, bootstrap_of(e), config_.gamma,
                             config_.lambda);
      local.truncation_bootstrap = trunc_boot;
      if (config_.variant == Variant::gmac) {
        std::vector<GaussianMixture> values;
        values.reserve(N);
        for (int t = 0; t < N; ++t)
          values.push_back(std::get<GaussianMixture>(critic_of(e, t)));
        return sr_lambda_gmm(values, local, config_.sr_particles,
                             sr_rng_.next_u64());
      }
      std::vector<DiracMixture> values;
      values.reserve(N);
      for (int t = 0; t < N; ++t)
        values.push_back(std::get<DiracMixture>(critic_of(e, t)));
      return sr_lambda_dirac(values, local, sr_rng_.next_u64());
    };

    if (config_.variant != Variant::ppo_scalar) {
      targets = build_targets(rewards);
      if (config_.intrinsic_coef > 0.0) {
        for (int t = 0; t < N; ++t)
          rewards[t] += config_.intrinsic_coef *
                        intrinsic_.normalized(critic_of(e, t), targets.steps[t]);
        // value targets are rebuilt on the augmented rewards; the intrinsic
        // signal itself is always derived from the extrinsic-reward targets
        targets = build_targets(rewards);
      }
    }

    std::vector<double> values(N), next_values(N, 0.0);
    for (int t = 0; t < N; ++t) values[t] = mean(critic_of(e, t));
    for (int t = 0; t < N; ++t) {
      if (traj.terminal[t]) continue;
      if (trunc_row[e][t] >= 0)
        next_values[t] = mean(dists[trunc_row[e][t]]);
      else if (t + 1 < N)
        next_values[t] = values[t + 1];
      else
        next_values[t] = mean(bootstrap_of(e));
    }
    std::vector<double> adv = gae(rewards, values, next_values, traj.terminal,
                                  traj.truncated, config_.gamma,
                                  config_.lambda);

    for (int t = 0; t < N; ++t) {
      int r = e * N + t;
      if (discrete)
        batch.discrete_actions[r] = traj.actions[t].index;
      else
        for (int c = 0; c < net_->policy_spec().size; ++c)
          batch.box_actions.at(r, c) = traj.actions[t].box[c];
      batch.logp_old[r] = logps[e][t];
      batch.advantages[r] = adv[t];
      batch.values_old[r] = values[t];
      batch.returns[r] = adv[t] + values[t];
      if (dirac_targets)
        batch.target_atoms[r] =
            std::get<DiracMixture>(targets.steps[t]).atoms();
      if (config_.variant == Variant::gmac)
        batch.target_mixtures.push_back(
            std::get<GaussianMixture>(targets.steps[t]));
    }
  }

  // per-sample target self-distance, reused across epochs
  double policy_loss_acc = 0.0, value_loss_acc = 0.0, entropy_acc = 0.0;
  double clip_count = 0.0, grad_norm_acc = 0.0;
  int minibatches = 0;
  {
    flops::PhaseScope phase(flops_, FlopPhase::update);
    if (config_.variant == Variant::gmac) {
      flops::CategoryScope cat(FlopCategory::value_loss);
      for (int r = 0; r < batch.size; ++r)
        batch.target_self[r] =
            delta_gmm(batch.target_mixtures[r], batch.target_mixtures[r]);
    }
    std::vector<int> order(batch.size);
    for (int i = 0; i < batch.size; ++i) order[i] = i;
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
      for (int i = batch.size - 1; i > 0; --i)
        std::swap(order[i],
                  order[shuffle_rng_.uniform_index(
                      static_cast<std::size_t>(i) + 1)]);
      for (int start = 0; start < batch.size;
           start += config_.minibatch_size) {
        int count = std::min(config_.minibatch_size, batch.size - start);
        std::vector<int> rows(order.begin() + start,
                              order.begin() + start + count);

        Tensor mb_obs(count, obs_dim);
        std::vector<int> mb_actions(discrete ? count : 0);
        Tensor mb_box(discrete ? 0 : count,
                      discrete ? 0 : net_->policy_spec().size);
        Tensor mb_adv(count, 1), mb_clip(count, 1), mb_logp_old(count, 1);
        for (int i = 0; i < count; ++i) {
          int r = rows[i];
          for (int c = 0; c < obs_dim; ++c)
            mb_obs.at(i, c) = batch.obs.at(r, c);
          if (discrete)
            mb_actions[i] = batch.discrete_actions[r];
          else
            for (int c = 0; c < net_->policy_spec().size; ++c)
              mb_box.at(i, c) = batch.box_actions.at(r, c);
          mb_logp_old.at(i, 0) = batch.logp_old[r];
          mb_adv.at(i, 0) = batch.advantages[r];
        }
        if (config_.advantage_norm && count > 1) {
          double m = 0.0, s2 = 0.0;
          for (int i = 0; i < count; ++i) m += mb_adv.at(i, 0);
          m /= count;
          for (int i = 0; i < count; ++i) {
            double d = mb_adv.at(i, 0) - m;
            s2 += d * d;
          }
          double sd = std::sqrt(s2 / count) + 1e-8;
          for (int i = 0; i < count; ++i)
            mb_adv.at(i, 0) = (mb_adv.at(i, 0) - m) / sd;
        }
        for (int i = 0; i < count; ++i) {
          double a = mb_adv.at(i, 0);
          mb_clip.at(i, 0) = a >= 0.0 ? (1.0 + config_.clip_epsilon) * a
                                      : (1.0 - config_.clip_epsilon) * a;
        }

        opt_->zero_grad();
        Tape tape;
        Tape::NodeId h = net_->torso(tape, tape.constant(mb_obs));
        Tape::NodeId pol = net_->policy_out(tape, h);
        Tape::NodeId logp_new = 0, entropy = 0;
        {
          flops::CategoryScope cat(FlopCategory::policy_loss);
          if (discrete) {
            logp_new = tape.categorical_log_prob(pol, mb_actions);
            entropy = tape.categorical_entropy(pol);
          } else {
            Tape::NodeId ls = net_->log_std_node(tape);
            logp_new = tape.gaussian_log_prob(pol, ls, mb_box);
            entropy = tape.gaussian_entropy(ls, count);
          }
        }
        Tape::NodeId policy_loss, ratio_node;
        {
          flops::CategoryScope cat(FlopCategory::policy_loss);
          ratio_node = tape.exp_(tape.sub_const(logp_new, mb_logp_old));
          Tape::NodeId surr = tape.min_const(
              tape.mul_const(ratio_node, mb_adv), mb_clip);
          policy_loss = tape.scale(tape.mean_all(surr), -1.0);
        }

        Tape::NodeId value_loss = 0;
        Tape::NodeId vraw = net_->value_raw(tape, h);
        {
          flops::CategoryScope cat(FlopCategory::value_loss);
          switch (config_.variant) {
            case Variant::ppo_scalar: {
              Tensor mb_ret(count, 1), mb_vold(count, 1), mb_gap(count, 1);
              for (int i = 0; i < count; ++i) {
                mb_ret.at(i, 0) = batch.returns[rows[i]];
                mb_vold.at(i, 0) = batch.values_old[rows[i]];
                mb_gap.at(i, 0) =
                    batch.returns[rows[i]] - batch.values_old[rows[i]];
              }
              Tape::NodeId err = tape.square(tape.sub_const(vraw, mb_ret));
              Tape::NodeId dv = tape.sub_const(vraw, mb_vold);
              Tape::NodeId dvc = tape.clamp(dv, -config_.clip_epsilon,
                                            config_.clip_epsilon);
              // (v_old + clamp(v - v_old) - R)^2
              Tape::NodeId err_clip =
                  tape.square(tape.sub_const(dvc, mb_gap));
              value_loss = tape.scale(
                  tape.mean_all(tape.max_elem(err, err_clip)), 0.5);
              break;
            }
            case Variant::iqac:
            case Variant::iqac_e: {
              int m = config_.atoms;
              Tensor mb_targets(count, m);
              for (int i = 0; i < count; ++i)
                for (int c = 0; c < m; ++c)
                  mb_targets.at(i, c) = batch.target_atoms[rows[i]][c];
              if (config_.variant == Variant::iqac)
                value_loss = tape.huber_quantile_batch(
                    vraw, std::move(mb_targets), net_->fractions(),
                    kHuberKappa);
              else
                value_loss =
                    tape.energy_sample_batch(vraw, std::move(mb_targets));
              break;
            }
            case Variant::gmac: {
              Network::GmmNodes nodes = net_->gmm_value(tape, vraw);
              std::vector<GaussianMixture> mb_targets;
              std::vector<double> mb_self(count);
              mb_targets.reserve(count);
              for (int i = 0; i < count; ++i) {
                mb_targets.push_back(batch.target_mixtures[rows[i]]);
                mb_self[i] = batch.target_self[rows[i]];
              }
              value_loss = tape.energy_gmm_batch(
                  nodes.weights, nodes.means, nodes.variances,
                  std::move(mb_targets), std::move(mb_self));
              break;
            }
          }
        }

        Tape::NodeId total = tape.add(
            policy_loss, tape.scale(value_loss, config_.value_loss_coef));
        if (config_.entropy_coef != 0.0)
          total = tape.add(total, tape.scale(tape.mean_all(entropy),
                                             -config_.entropy_coef));

        double lp = tape.value(policy_loss).v[0];
        double lv = tape.value(value_loss).v[0];
        double le = tape.value(entropy).v[0];
        double lt = tape.value(total).v[0];
        if (!std::isfinite(lt)) {
          std::ostringstream dump;
          dump << "non-finite loss at iteration " << iteration_
               << " (policy " << lp << ", value " << lv << ", entropy mean "
               << le << ")";
          throw std::runtime_error(dump.str());
        }
        tape.backward(total);
        Adam::StepReport report = opt_->step();
        grad_norm_acc += report.grad_norm;

        const Tensor& ratio_v = tape.value(ratio_node);
        double ent_mean = 0.0;
        const Tensor& ev = tape.value(entropy);
        for (int i = 0; i < count; ++i) {
          if (std::abs(ratio_v.at(i, 0) - 1.0) > config_.clip_epsilon)
            clip_count += 1.0;
          ent_mean += ev.at(i, 0);
        }
        policy_loss_acc += lp;
        value_loss_acc += lv;
        entropy_acc += ent_mean / count;
        ++minibatches;
      }
    }
    metrics.flops_update = flops_.phase_total(FlopPhase::update).total();
  }

  std::vector<double> completed = runner_->drain_completed_returns();
  last_mean_return_ = mean_of(completed, last_mean_return_);
  metrics.mean_return = last_mean_return_;
  metrics.frames = frames_;
  metrics.policy_loss = policy_loss_acc / minibatches;
  metrics.value_loss = value_loss_acc / minibatches;
  metrics.entropy = entropy_acc / minibatches;
  metrics.clip_fraction =
      clip_count / (static_cast<double>(minibatches) * config_.minibatch_size);
  metrics.grad_norm = grad_norm_acc / minibatches;
  ++iteration_;
  return metrics;
}

Trainer::EvalStats Trainer::evaluate(int episodes, std::uint64_t eval_seed) {
  EvalStats stats;
  stats.episodes = episodes;
  std::unique_ptr<Env> env = proto_->clone();
  env->seed(mix_seed(eval_seed, 1));
  Rng rng(mix_seed(eval_seed, 2));
  std::vector<double> returns;
  for (int ep = 0; ep < episodes; ++ep) {
    std::vector<double> obs = env->reset();
    double total = 0.0;
    while (true) {
      double logp;
      Action a = sample_action(obs, &logp, rng);
      StepResult r = env->step(a);
      total += r.reward;
      if (r.terminal || r.truncated) break;
      obs = std::move(r.obs);
    }
    returns.push_back(total);
  }
  double m = mean_of(returns, 0.0);
  double s2 = 0.0;
  stats.min = returns[0];
  stats.max = returns[0];
  for (double r : returns) {
    s2 += (r - m) * (r - m);
    stats.min = std::min(stats.min, r);
    stats.max = std::max(stats.max, r);
  }
  stats.mean = m;
  stats.stddev = std::sqrt(s2 / static_cast<double>(returns.size()));
  return stats;
}

}  // namespace dac
