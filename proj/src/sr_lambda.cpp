#include "sr_lambda.hpp"

#include <cmath>
#include <stdexcept>

namespace dac {

namespace {

// substream key tags, one lane per (step, atom)
constexpr std::uint64_t kTagReplace = 0;
constexpr std::uint64_t kTagResample = 1;
constexpr std::uint64_t kTagReinit = 2;

std::uint64_t lane(std::size_t step, std::uint64_t tag) {
  return 4 * static_cast<std::uint64_t>(step) + tag;
}

ValueDistribution point_mass_like(const ValueDistribution& proto, double v) {
  if (std::holds_alternative<GaussianMixture>(proto))
    return GaussianMixture::single(v, 0.0);
  return DiracMixture({v});
}

}  // namespace

RewardTrajectory::RewardTrajectory(std::vector<double> r,
                                   std::vector<std::uint8_t> term,
                                   ValueDistribution boot, double g, double l)
    : rewards(std::move(r)),
      terminal(std::move(term)),
      bootstrap(std::move(boot)),
      gamma(g),
      lambda(l) {
  validate();
}

void RewardTrajectory::validate() const {
  if (rewards.empty())
    throw std::invalid_argument("RewardTrajectory: empty trajectory");
  if (terminal.size() != rewards.size())
    throw std::invalid_argument("RewardTrajectory: terminal flags mismatch");
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("RewardTrajectory: gamma outside (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("RewardTrajectory: lambda outside [0, 1]");
  if (!truncation_bootstrap.empty() &&
      truncation_bootstrap.size() != rewards.size())
    throw std::invalid_argument("RewardTrajectory: truncation list mismatch");
}

ValueDistribution n_step_target(const std::vector<ValueDistribution>& values,
                                const RewardTrajectory& traj, std::size_t t,
                                std::size_t n) {
  const std::size_t N = traj.length();
  if (n < 1 || t + n > N)
    throw std::invalid_argument("n_step_target: horizon overruns trajectory");
  double shift = 0.0;
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = t + i;
    shift += scale * traj.rewards[j];
    scale *= traj.gamma;
    if (traj.terminal[j]) return point_mass_like(traj.bootstrap, shift);
    if (!traj.truncation_bootstrap.empty() && traj.truncation_bootstrap[j])
      return affine(*traj.truncation_bootstrap[j], shift, scale);
  }
  const ValueDistribution& tail =
      (t + n == N) ? traj.bootstrap : values[t + n];
  return affine(tail, shift, scale);
}

double WeightedMixture::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i)
    m += weights[i] * dac::mean(components[i]);
  return m;
}

double WeightedMixture::cdf(double z) const {
  double f = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i)
    f += weights[i] * dac::cdf(components[i], z);
  return f;
}

bool WeightedMixture::all_gaussian() const {
  for (const auto& c : components)
    if (!std::holds_alternative<GaussianMixture>(c)) return false;
  return true;
}

GaussianMixture WeightedMixture::flatten_gaussian() const {
  std::vector<GaussianComponent> comps;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (const auto* g = std::get_if<GaussianMixture>(&components[i])) {
      for (const auto& c : g->components())
        comps.push_back({weights[i] * c.weight, c.mean, c.variance});
    } else {
      const auto& atoms = std::get<DiracMixture>(components[i]).atoms();
      double w = weights[i] / static_cast<double>(atoms.size());
      for (double a : atoms) comps.push_back({w, a, kVarianceFloor});
    }
  }
  return GaussianMixture(std::move(comps));
}

void WeightedMixture::flatten_atoms(std::vector<double>& atoms,
                                    std::vector<double>& atom_weights) const {
  atoms.clear();
  atom_weights.clear();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto& dm = std::get<DiracMixture>(components[i]);
    double w = weights[i] / static_cast<double>(dm.size());
    for (double a : dm.atoms()) {
      atoms.push_back(a);
      atom_weights.push_back(w);
    }
  }
}

WeightedMixture exact_lambda_mixture(
    const std::vector<ValueDistribution>& values, const RewardTrajectory& traj,
    std::size_t t) {
  const std::size_t N = traj.length();
  if (t >= N) throw std::invalid_argument("exact_lambda_mixture: t >= N");
  const std::size_t horizon = N - t;
  WeightedMixture mix;
  for (std::size_t n = 1; n <= horizon; ++n) {
    double w = (n < horizon)
                   ? (1.0 - traj.lambda) * std::pow(traj.lambda, double(n - 1))
                   : std::pow(traj.lambda, double(horizon - 1));
    mix.weights.push_back(w);
    mix.components.push_back(n_step_target(values, traj, t, n));
  }
  return mix;
}

namespace {

struct GaussParticle {
  double mean;
  double var;
};

template <typename Particle, typename Ops>
LambdaTargets sr_sweep(const RewardTrajectory& traj, std::size_t m,
                       std::uint64_t seed, const SrOptions& options,
                       Ops&& ops) {
  traj.validate();
  const std::size_t N = traj.length();
  Rng base(seed);
  std::vector<Particle> working(m);
  for (std::size_t i = 0; i < m; ++i) {
    Rng r = base.substream(lane(N, kTagReinit), i);
    working[i] = ops.draw_bootstrap(i, r);
  }
  std::vector<ValueDistribution> steps(N, traj.bootstrap);
  for (std::size_t rev = 0; rev < N; ++rev) {
    std::size_t t = N - 1 - rev;
    if (traj.terminal[t]) {
      for (auto& p : working) p = ops.zero_particle();
    } else if (!traj.truncation_bootstrap.empty() &&
               traj.truncation_bootstrap[t]) {
      for (std::size_t i = 0; i < m; ++i) {
        Rng r = base.substream(lane(t, kTagReinit), i);
        working[i] = ops.draw_from(*traj.truncation_bootstrap[t], i, r);
      }
    }
    for (auto& p : working) p = ops.bellman(p, traj.rewards[t], traj.gamma);
    steps[t] = ops.record(working);
    if (t == 0) break;
    if (options.resample_working_set) {
      std::vector<Particle> resampled(m);
      for (std::size_t i = 0; i < m; ++i) {
        Rng r = base.substream(lane(t, kTagResample), i);
        resampled[i] = working[r.uniform_index(m)];
      }
      working = std::move(resampled);
    }
    for (std::size_t i = 0; i < m; ++i) {
      Rng r = base.substream(lane(t, kTagReplace), i);
      if (r.uniform() < 1.0 - traj.lambda)
        working[i] = ops.draw_critic(t, i, r);
    }
  }
  return LambdaTargets{std::move(steps)};
}

}  // namespace

LambdaTargets sr_lambda_dirac(const std::vector<DiracMixture>& values,
                              const RewardTrajectory& traj, std::uint64_t seed,
                              const SrOptions& options) {
  const auto* boot = std::get_if<DiracMixture>(&traj.bootstrap);
  if (!boot)
    throw std::invalid_argument("sr_lambda_dirac: bootstrap must be Dirac");
  const std::size_t m = boot->size();
  if (values.size() != traj.length())
    throw std::invalid_argument("sr_lambda_dirac: one critic mixture per step");
  for (const auto& v : values)
    if (v.size() != m)
      throw std::invalid_argument("sr_lambda_dirac: atom counts must match");

  struct Ops {
    const std::vector<DiracMixture>* values;
    const DiracMixture* boot;
    double draw_bootstrap(std::size_t i, Rng&) const {
      return boot->atoms()[i];
    }
    double zero_particle() const { return 0.0; }
    double draw_from(const ValueDistribution& d, std::size_t i, Rng& r) const {
      if (const auto* dm = std::get_if<DiracMixture>(&d))
        return dm->atoms()[i % dm->size()];
      return sample(d, r, 1)[0];
    }
    double bellman(double x, double r, double gamma) const {
      return r + gamma * x;
    }
    ValueDistribution record(const std::vector<double>& w) const {
      return DiracMixture(w);
    }
    double draw_critic(std::size_t t, std::size_t i, Rng&) const {
      return (*values)[t].atoms()[i];
    }
  } ops{&values, boot};
  return sr_sweep<double>(traj, m, seed, options, ops);
}

LambdaTargets sr_lambda_gmm(const std::vector<GaussianMixture>& values,
                            const RewardTrajectory& traj,
                            std::size_t particles, std::uint64_t seed,
                            const SrOptions& options) {
  if (particles < 1)
    throw std::invalid_argument("sr_lambda_gmm: particles must be >= 1");
  const auto* boot = std::get_if<GaussianMixture>(&traj.bootstrap);
  if (!boot)
    throw std::invalid_argument("sr_lambda_gmm: bootstrap must be a mixture");
  if (values.size() != traj.length())
    throw std::invalid_argument("sr_lambda_gmm: one critic mixture per step");

  struct Ops {
    const std::vector<GaussianMixture>* values;
    const GaussianMixture* boot;

    static GaussParticle draw_component(const GaussianMixture& g, Rng& r) {
      std::vector<double> w(g.size());
      for (std::size_t k = 0; k < w.size(); ++k)
        w[k] = g.components()[k].weight;
      const auto& c = g.components()[r.categorical(w)];
      return {c.mean, c.variance};
    }
    GaussParticle draw_bootstrap(std::size_t, Rng& r) const {
      return draw_component(*boot, r);
    }
    GaussParticle zero_particle() const { return {0.0, kVarianceFloor}; }
    GaussParticle draw_from(const ValueDistribution& d, std::size_t,
                            Rng& r) const {
      if (const auto* g = std::get_if<GaussianMixture>(&d))
        return draw_component(*g, r);
      const auto& atoms = std::get<DiracMixture>(d).atoms();
      return {atoms[r.uniform_index(atoms.size())], kVarianceFloor};
    }
    GaussParticle bellman(GaussParticle p, double r, double gamma) const {
      return {r + gamma * p.mean,
              std::max(gamma * gamma * p.var, kVarianceFloor)};
    }
    ValueDistribution record(const std::vector<GaussParticle>& w) const {
      std::vector<GaussianComponent> comps(w.size());
      double weight = 1.0 / static_cast<double>(w.size());
      for (std::size_t i = 0; i < w.size(); ++i)
        comps[i] = {weight, w[i].mean, w[i].var};
      return GaussianMixture(std::move(comps));
    }
    GaussParticle draw_critic(std::size_t t, std::size_t, Rng& r) const {
      return draw_component((*values)[t], r);
    }
  } ops{&values, boot};
  return sr_sweep<GaussParticle>(traj, particles, seed, options, ops);
}

DistanceReport sr_lambda_distribution_check(
    const std::vector<DiracMixture>& values, const RewardTrajectory& traj,
    std::size_t replications, std::uint64_t seed) {
  std::vector<ValueDistribution> vd(values.begin(), values.end());
  WeightedMixture exact = exact_lambda_mixture(vd, traj, 0);
  std::vector<double> exact_atoms, exact_w;
  exact.flatten_atoms(exact_atoms, exact_w);

  std::vector<double> pooled;
  for (std::size_t rep = 0; rep < replications; ++rep) {
    LambdaTargets t = sr_lambda_dirac(values, traj, mix_seed(seed, rep));
    const auto& dm = std::get<DiracMixture>(t.steps[0]);
    pooled.insert(pooled.end(), dm.atoms().begin(), dm.atoms().end());
  }
  std::vector<double> pw(pooled.size(), 1.0);
  double e = energy_weighted_atoms(pooled, pw, exact_atoms, exact_w);
  return {e, DistanceMethod::sample, pooled.size()};
}

DistanceReport sr_lambda_distribution_check(
    const std::vector<GaussianMixture>& values, const RewardTrajectory& traj,
    std::size_t particles, std::size_t replications, std::uint64_t seed) {
  std::vector<ValueDistribution> vd(values.begin(), values.end());
  WeightedMixture exact = exact_lambda_mixture(vd, traj, 0);
  GaussianMixture exact_g = exact.flatten_gaussian();

  std::vector<GaussianComponent> pooled;
  for (std::size_t rep = 0; rep < replications; ++rep) {
    LambdaTargets t =
        sr_lambda_gmm(values, traj, particles, mix_seed(seed, rep));
    const auto& g = std::get<GaussianMixture>(t.steps[0]);
    for (const auto& c : g.components())
      pooled.push_back(
          {c.weight / static_cast<double>(replications), c.mean, c.variance});
  }
  GaussianMixture pooled_g(std::move(pooled));
  // closed form over the pool would be quadratic in replications * particles;
  // the cdf route costs one quadrature instead
  double l2 = cramer_lp_numeric(ValueDistribution(pooled_g),
                                ValueDistribution(exact_g), 2.0);
  return {2.0 * l2 * l2, DistanceMethod::numeric_cdf,
          pooled_g.size() };
}

}  // namespace dac
