#include "tabular.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sr_lambda.hpp"

namespace dac {

RewardLaw RewardLaw::constant(double c) {
  RewardLaw law;
  law.kind = RewardLawKind::constant;
  law.value = c;
  return law;
}

RewardLaw RewardLaw::uniform(std::vector<double> support) {
  if (support.empty())
    throw std::invalid_argument("RewardLaw::uniform: empty support");
  RewardLaw law;
  law.kind = RewardLawKind::uniform_discrete;
  law.support = std::move(support);
  return law;
}

RewardLaw RewardLaw::gaussian(double mu, double variance) {
  if (variance < 0.0)
    throw std::invalid_argument("RewardLaw::gaussian: negative variance");
  RewardLaw law;
  law.kind = RewardLawKind::normal;
  law.mu = mu;
  law.variance = variance;
  return law;
}

double RewardLaw::mean() const {
  switch (kind) {
    case RewardLawKind::constant: return value;
    case RewardLawKind::uniform_discrete: {
      double m = 0.0;
      for (double v : support) m += v;
      return m / static_cast<double>(support.size());
    }
    default: return mu;
  }
}

double RewardLaw::sample(Rng& rng) const {
  switch (kind) {
    case RewardLawKind::constant: return value;
    case RewardLawKind::uniform_discrete:
      return support[rng.uniform_index(support.size())];
    default: return rng.normal(mu, variance);
  }
}

std::vector<RewardLaw::Branch> RewardLaw::branches() const {
  switch (kind) {
    case RewardLawKind::constant: return {{1.0, value, 0.0}};
    case RewardLawKind::uniform_discrete: {
      std::vector<Branch> out;
      double p = 1.0 / static_cast<double>(support.size());
      for (double v : support) out.push_back({p, v, 0.0});
      return out;
    }
    default: return {{1.0, mu, variance}};
  }
}

void TabularMdp::validate() const {
  if (states < 1 || actions < 1)
    throw std::invalid_argument("TabularMdp: empty state or action space");
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("TabularMdp: gamma outside (0, 1]");
  if (static_cast<int>(terminal.size()) != states ||
      static_cast<int>(p.size()) != states ||
      static_cast<int>(reward.size()) != states)
    throw std::invalid_argument("TabularMdp: table sizes mismatch");
  for (int s = 0; s < states; ++s) {
    if (static_cast<int>(p[s].size()) != actions ||
        static_cast<int>(reward[s].size()) != actions)
      throw std::invalid_argument("TabularMdp: per-state sizes mismatch");
    for (int a = 0; a < actions; ++a) {
      if (static_cast<int>(p[s][a].size()) != states)
        throw std::invalid_argument("TabularMdp: transition row size");
      double total = 0.0;
      for (double q : p[s][a]) {
        if (q < 0.0) throw std::invalid_argument("TabularMdp: negative prob");
        total += q;
      }
      if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("TabularMdp: transition row must sum to 1");
      if (terminal[s]) {
        if (std::abs(p[s][a][s] - 1.0) > 1e-12)
          throw std::invalid_argument("TabularMdp: terminal must self-absorb");
        if (reward[s][a].kind != RewardLawKind::constant ||
            reward[s][a].value != 0.0)
          throw std::invalid_argument(
              "TabularMdp: terminal reward must be constant 0");
      }
    }
  }
}

TabularMdp TabularMdp::load(std::istream& in) {
  TabularMdp mdp;
  std::string line;
  std::vector<std::tuple<int, int, int, double>> transitions;
  std::vector<std::tuple<int, int, RewardLaw>> rewards;
  std::vector<int> terminals;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    if (tok == "states") {
      ls >> mdp.states;
    } else if (tok == "actions") {
      ls >> mdp.actions;
    } else if (tok == "gamma") {
      ls >> mdp.gamma;
    } else if (tok == "terminal") {
      int s;
      while (ls >> s) terminals.push_back(s);
    } else if (tok == "transition") {
      int s, a, sp;
      double prob;
      if (!(ls >> s >> a >> sp >> prob))
        throw std::invalid_argument("mdp file: bad transition line");
      transitions.emplace_back(s, a, sp, prob);
    } else if (tok == "reward") {
      int s, a;
      std::string kind;
      if (!(ls >> s >> a >> kind))
        throw std::invalid_argument("mdp file: bad reward line");
      if (kind == "constant") {
        double c;
        ls >> c;
        rewards.emplace_back(s, a, RewardLaw::constant(c));
      } else if (kind == "uniform") {
        std::string values;
        ls >> values;
        std::vector<double> support;
        std::istringstream vs(values);
        std::string item;
        while (std::getline(vs, item, ',')) support.push_back(std::stod(item));
        rewards.emplace_back(s, a, RewardLaw::uniform(std::move(support)));
      } else if (kind == "normal") {
        double m, v;
        ls >> m >> v;
        rewards.emplace_back(s, a, RewardLaw::gaussian(m, v));
      } else {
        throw std::invalid_argument("mdp file: unknown reward law " + kind);
      }
    } else {
      throw std::invalid_argument("mdp file: unknown directive " + tok);
    }
  }
  if (mdp.states < 1 || mdp.actions < 1)
    throw std::invalid_argument("mdp file: states/actions missing");
  mdp.terminal.assign(mdp.states, 0);
  for (int s : terminals) {
    if (s < 0 || s >= mdp.states)
      throw std::invalid_argument("mdp file: terminal state out of range");
    mdp.terminal[s] = 1;
  }
  mdp.p.assign(mdp.states, std::vector<std::vector<double>>(
                               mdp.actions, std::vector<double>(mdp.states)));
  mdp.reward.assign(mdp.states,
                    std::vector<RewardLaw>(mdp.actions, RewardLaw::constant(0)));
  for (int s = 0; s < mdp.states; ++s)
    if (mdp.terminal[s])
      for (int a = 0; a < mdp.actions; ++a) mdp.p[s][a][s] = 1.0;
  for (auto& [s, a, sp, prob] : transitions) {
    if (s < 0 || s >= mdp.states || a < 0 || a >= mdp.actions || sp < 0 ||
        sp >= mdp.states)
      throw std::invalid_argument("mdp file: transition index out of range");
    mdp.p[s][a][sp] = prob;
  }
  for (auto& [s, a, law] : rewards) {
    if (s < 0 || s >= mdp.states || a < 0 || a >= mdp.actions)
      throw std::invalid_argument("mdp file: reward index out of range");
    mdp.reward[s][a] = law;
  }
  mdp.validate();
  return mdp;
}

TabularMdp TabularMdp::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mdp file: " + path);
  return load(in);
}

void TabularMdp::save(std::ostream& out) const {
  out << "states " << states << "\n";
  out << "actions " << actions << "\n";
  out << "gamma " << gamma << "\n";
  out << "terminal";
  for (int s = 0; s < states; ++s)
    if (terminal[s]) out << ' ' << s;
  out << "\n";
  for (int s = 0; s < states; ++s) {
    if (terminal[s]) continue;
    for (int a = 0; a < actions; ++a) {
      for (int sp = 0; sp < states; ++sp)
        if (p[s][a][sp] > 0.0)
          out << "transition " << s << ' ' << a << ' ' << sp << ' '
              << p[s][a][sp] << "\n";
      const auto& law = reward[s][a];
      out << "reward " << s << ' ' << a << ' ';
      if (law.kind == RewardLawKind::constant) {
        out << "constant " << law.value;
      } else if (law.kind == RewardLawKind::uniform_discrete) {
        out << "uniform ";
        for (std::size_t i = 0; i < law.support.size(); ++i)
          out << (i ? "," : "") << law.support[i];
      } else {
        out << "normal " << law.mu << ' ' << law.variance;
      }
      out << "\n";
    }
  }
}

TabularMdp TabularMdp::five_state(double gamma) {
  TabularMdp mdp;
  mdp.states = 6;
  mdp.actions = 1;
  mdp.gamma = gamma;
  mdp.terminal.assign(6, 0);
  mdp.terminal[5] = 1;
  mdp.p.assign(6, {std::vector<double>(6, 0.0)});
  for (int s = 0; s < 5; ++s) mdp.p[s][0][s + 1] = 1.0;
  mdp.p[5][0][5] = 1.0;
  mdp.reward.assign(6, {RewardLaw::constant(0.0)});
  mdp.reward[3][0] = RewardLaw::uniform({-1.0, 1.0});
  mdp.reward[4][0] = RewardLaw::gaussian(0.0, 0.01);
  mdp.validate();
  return mdp;
}

TabularMdp TabularMdp::random(int states, int actions, double gamma,
                              Rng& rng) {
  TabularMdp mdp;
  mdp.states = states;
  mdp.actions = actions;
  mdp.gamma = gamma;
  mdp.terminal.assign(states, 0);
  mdp.p.assign(states, std::vector<std::vector<double>>(
                           actions, std::vector<double>(states, 0.0)));
  mdp.reward.assign(states,
                    std::vector<RewardLaw>(actions, RewardLaw::constant(0)));
  for (int s = 0; s < states; ++s)
    for (int a = 0; a < actions; ++a) {
      std::size_t s1 = rng.uniform_index(states);
      std::size_t s2 = rng.uniform_index(states);
      double q = rng.uniform(0.1, 0.9);
      mdp.p[s][a][s1] += q;
      mdp.p[s][a][s2] += 1.0 - q;
      switch (rng.uniform_index(3)) {
        case 0:
          mdp.reward[s][a] = RewardLaw::constant(rng.uniform(-1.0, 1.0));
          break;
        case 1:
          mdp.reward[s][a] = RewardLaw::uniform(
              {rng.uniform(-1.0, 0.0), rng.uniform(0.0, 1.0)});
          break;
        default:
          mdp.reward[s][a] =
              RewardLaw::gaussian(rng.uniform(-1.0, 1.0),
                                  rng.uniform(0.01, 0.25));
      }
    }
  mdp.validate();
  return mdp;
}

PolicyMatrix PolicyMatrix::uniform(const TabularMdp& mdp) {
  PolicyMatrix pi;
  pi.pi.assign(mdp.states,
               std::vector<double>(mdp.actions,
                                   1.0 / static_cast<double>(mdp.actions)));
  return pi;
}

const ValueDistribution& TabularValueTable::at(int s, int a) const {
  return z[static_cast<std::size_t>(s) * actions + a];
}
ValueDistribution& TabularValueTable::at(int s, int a) {
  return z[static_cast<std::size_t>(s) * actions + a];
}

TabularValueTable TabularValueTable::zeros(const TabularMdp& mdp) {
  TabularValueTable t;
  t.states = mdp.states;
  t.actions = mdp.actions;
  t.z.assign(static_cast<std::size_t>(mdp.states) * mdp.actions,
             ValueDistribution(GaussianMixture::single(0.0, 0.0)));
  return t;
}

namespace {

void lift_components(const ValueDistribution& d, double weight, double shift,
                     double scale, double extra_var,
                     std::vector<GaussianComponent>& out) {
  if (const auto* g = std::get_if<GaussianMixture>(&d)) {
    for (const auto& c : g->components())
      out.push_back({weight * c.weight, shift + scale * c.mean,
                     scale * scale * c.variance + extra_var});
  } else {
    const auto& atoms = std::get<DiracMixture>(d).atoms();
    double w = weight / static_cast<double>(atoms.size());
    for (double a : atoms)
      out.push_back({w, shift + scale * a, extra_var + kVarianceFloor});
  }
}

// moment-matched merge of two weighted components
GaussianComponent moment_match(const GaussianComponent& a,
                               const GaussianComponent& b) {
  double w = a.weight + b.weight;
  double mean = (a.weight * a.mean + b.weight * b.mean) / w;
  double second = (a.weight * (a.variance + a.mean * a.mean) +
                   b.weight * (b.variance + b.mean * b.mean)) /
                  w;
  return {w, mean, std::max(second - mean * mean, kVarianceFloor)};
}

// energy distance between the normalized pair {a, b} and its moment match,
// scaled by the pair's total weight
double merge_cost(const GaussianComponent& a, const GaussianComponent& b) {
  double w = a.weight + b.weight;
  if (w <= 0.0) return 0.0;
  double wa = a.weight / w, wb = b.weight / w;
  GaussianComponent m = moment_match(a, b);
  auto fnm = [](const GaussianComponent& x, const GaussianComponent& y) {
    return folded_normal_abs_mean(x.mean - y.mean, x.variance + y.variance);
  };
  double cross = wa * fnm(a, m) + wb * fnm(b, m);
  double self_p = wa * wa * fnm(a, a) + 2.0 * wa * wb * fnm(a, b) +
                  wb * wb * fnm(b, b);
  double self_m = fnm(m, m);
  return w * std::max(2.0 * cross - self_p - self_m, 0.0);
}

}  // namespace

GaussianMixture reduce_mixture(const GaussianMixture& g,
                               std::size_t max_components) {
  if (max_components < 1)
    throw std::invalid_argument("reduce_mixture: cap must be >= 1");
  if (g.size() <= max_components) return g;
  std::vector<GaussianComponent> comps = g.components();
  // candidates are restricted to mean-adjacent pairs; the merged component's
  // mean lies between the pair's means, so the ordering survives merges
  std::sort(comps.begin(), comps.end(),
            [](const GaussianComponent& a, const GaussianComponent& b) {
              return a.mean < b.mean;
            });
  std::vector<double> cost(comps.size() - 1);
  for (std::size_t i = 0; i + 1 < comps.size(); ++i)
    cost[i] = merge_cost(comps[i], comps[i + 1]);
  while (comps.size() > max_components) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cost.size(); ++i)
      if (cost[i] < cost[best]) best = i;
    comps[best] = moment_match(comps[best], comps[best + 1]);
    comps.erase(comps.begin() + static_cast<std::ptrdiff_t>(best) + 1);
    cost.erase(cost.begin() + static_cast<std::ptrdiff_t>(best));
    if (best > 0) cost[best - 1] = merge_cost(comps[best - 1], comps[best]);
    if (best + 1 < comps.size())
      cost[best] = merge_cost(comps[best], comps[best + 1]);
  }
  return GaussianMixture(std::move(comps));
}

namespace {

// state-value mixture under the policy, as raw components
std::vector<GaussianComponent> policy_mix(const TabularValueTable& table,
                                          const PolicyMatrix& pi, int s) {
  std::vector<GaussianComponent> out;
  for (int a = 0; a < table.actions; ++a) {
    double w = pi.pi[s][a];
    if (w <= 0.0) continue;
    lift_components(table.at(s, a), w, 0.0, 1.0, 0.0, out);
  }
  return out;
}

TabularValueTable bellman_core(
    const TabularMdp& mdp,
    const std::vector<std::vector<GaussianComponent>>& successor,
    const BellmanOptions& options) {
  TabularValueTable out;
  out.states = mdp.states;
  out.actions = mdp.actions;
  out.z.reserve(static_cast<std::size_t>(mdp.states) * mdp.actions);
  for (int s = 0; s < mdp.states; ++s) {
    for (int a = 0; a < mdp.actions; ++a) {
      std::vector<GaussianComponent> comps;
      auto branches = mdp.reward[s][a].branches();
      for (int sp = 0; sp < mdp.states; ++sp) {
        double prob = mdp.p[s][a][sp];
        if (prob <= 0.0) continue;
        for (const auto& br : branches) {
          for (const auto& c : successor[sp])
            comps.push_back({prob * br.prob * c.weight,
                             br.value + mdp.gamma * c.mean,
                             mdp.gamma * mdp.gamma * c.variance + br.variance +
                                 kVarianceFloor});
        }
      }
      GaussianMixture g(std::move(comps));
      if (g.size() > options.component_cap)
        g = reduce_mixture(g, options.component_cap);
      out.z.emplace_back(std::move(g));
    }
  }
  return out;
}

}  // namespace

TabularValueTable bellman_apply(const TabularValueTable& table,
                                const TabularMdp& mdp, const PolicyMatrix& pi,
                                const BellmanOptions& options) {
  mdp.validate();
  for (int s = 0; s < mdp.states; ++s) {
    double total = 0.0;
    for (double w : pi.pi[s]) total += w;
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("bellman_apply: policy rows must sum to 1");
  }
  std::vector<std::vector<GaussianComponent>> successor(mdp.states);
  for (int sp = 0; sp < mdp.states; ++sp)
    successor[sp] = policy_mix(table, pi, sp);
  return bellman_core(mdp, successor, options);
}

TabularValueTable bellman_optimality_apply(const TabularValueTable& table,
                                           const TabularMdp& mdp,
                                           const BellmanOptions& options) {
  mdp.validate();
  std::vector<std::vector<GaussianComponent>> successor(mdp.states);
  for (int sp = 0; sp < mdp.states; ++sp) {
    int best = 0;
    double best_mean = mean(table.at(sp, 0));
    for (int a = 1; a < mdp.actions; ++a) {
      double m = mean(table.at(sp, a));
      if (m > best_mean) {
        best_mean = m;
        best = a;
      }
    }
    lift_components(table.at(sp, best), 1.0, 0.0, 1.0, 0.0, successor[sp]);
  }
  return bellman_core(mdp, successor, options);
}

DiracMixture ground_truth_monte_carlo(const TabularMdp& mdp,
                                      const PolicyMatrix& pi, int state,
                                      std::size_t episodes, Rng& rng) {
  if (episodes < 1)
    throw std::invalid_argument("ground_truth_monte_carlo: episodes >= 1");
  constexpr std::size_t kStepCap = 100000;
  std::vector<double> returns(episodes);
  for (std::size_t e = 0; e < episodes; ++e) {
    int s = state;
    double g = 0.0, scale = 1.0;
    std::size_t steps = 0;
    while (!mdp.terminal[s]) {
      if (++steps > kStepCap)
        throw std::runtime_error(
            "ground_truth_monte_carlo: rollout exceeded step cap; "
            "MDP does not look episodic");
      auto a = rng.categorical(pi.pi[s]);
      g += scale * mdp.reward[s][a].sample(rng);
      scale *= mdp.gamma;
      s = static_cast<int>(rng.categorical(mdp.p[s][a]));
    }
    returns[e] = g;
  }
  return DiracMixture(std::move(returns));
}

std::vector<GaussianMixture> exact_state_values(const TabularMdp& mdp,
                                                const PolicyMatrix& pi,
                                                double tol, int max_iters) {
  TabularValueTable table = TabularValueTable::zeros(mdp);
  for (int it = 0; it < max_iters; ++it) {
    TabularValueTable next = bellman_apply(table, mdp, pi);
    double sup = 0.0;
    for (std::size_t i = 0; i < next.z.size(); ++i)
      sup = std::max(sup, energy_gmm(std::get<GaussianMixture>(table.z[i]),
                                     std::get<GaussianMixture>(next.z[i])));
    table = std::move(next);
    if (sup < tol) break;
  }
  std::vector<GaussianMixture> out;
  out.reserve(mdp.states);
  for (int s = 0; s < mdp.states; ++s) {
    auto comps = policy_mix(table, pi, s);
    GaussianMixture g(std::move(comps));
    if (g.size() > 256) g = reduce_mixture(g, 256);
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

GaussianMixture random_mixture(Rng& rng) {
  int k = 1 + static_cast<int>(rng.uniform_index(3));
  std::vector<GaussianComponent> comps(k);
  double total = 0.0;
  for (auto& c : comps) {
    c.weight = -std::log(1.0 - rng.uniform());  // Dirichlet(1, ..., 1)
    c.mean = rng.uniform(-5.0, 5.0);
    c.variance = rng.uniform(0.1, 2.0);
    total += c.weight;
  }
  for (auto& c : comps) c.weight /= total;
  return GaussianMixture(std::move(comps));
}

std::string describe_table(const TabularValueTable& t) {
  std::ostringstream os;
  for (int s = 0; s < t.states; ++s)
    for (int a = 0; a < t.actions; ++a) {
      os << "(" << s << "," << a << "):";
      const auto& g = std::get<GaussianMixture>(t.at(s, a));
      for (const auto& c : g.components())
        os << " [" << c.weight << "," << c.mean << "," << c.variance << "]";
      os << "\n";
    }
  return os.str();
}

}  // namespace

ContractionReport contraction_check(const TabularMdp& mdp,
                                    const PolicyMatrix& pi,
                                    std::size_t trials, double exponent,
                                    Rng& rng) {
  ContractionReport report;
  report.trials = trials;
  const double factor = std::pow(mdp.gamma, 1.0 / exponent);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    TabularValueTable z1 = TabularValueTable::zeros(mdp);
    TabularValueTable z2 = TabularValueTable::zeros(mdp);
    for (auto& d : z1.z) d = random_mixture(rng);
    for (auto& d : z2.z) d = random_mixture(rng);
    TabularValueTable t1 = bellman_apply(z1, mdp, pi);
    TabularValueTable t2 = bellman_apply(z2, mdp, pi);

    double before_lp = 0.0, after_lp = 0.0;
    double before_e = 0.0, after_e = 0.0;
    for (std::size_t i = 0; i < z1.z.size(); ++i) {
      before_lp =
          std::max(before_lp, cramer_lp_numeric(z1.z[i], z2.z[i], exponent));
      after_lp =
          std::max(after_lp, cramer_lp_numeric(t1.z[i], t2.z[i], exponent));
      before_e =
          std::max(before_e, energy_gmm(std::get<GaussianMixture>(z1.z[i]),
                                        std::get<GaussianMixture>(z2.z[i])));
      after_e =
          std::max(after_e, energy_gmm(std::get<GaussianMixture>(t1.z[i]),
                                       std::get<GaussianMixture>(t2.z[i])));
    }
    bool cramer_ok = after_lp <= factor * before_lp + 1e-6;
    bool energy_ok = after_e <= mdp.gamma * before_e + 1e-6;
    if (before_lp > 0.0)
      report.max_cramer_ratio =
          std::max(report.max_cramer_ratio, after_lp / (factor * before_lp));
    if (before_e > 0.0)
      report.max_energy_ratio =
          std::max(report.max_energy_ratio, after_e / (mdp.gamma * before_e));
    if (!cramer_ok) ++report.cramer_failures;
    if (!energy_ok) ++report.energy_failures;
    if (!cramer_ok || !energy_ok) {
      std::ostringstream os;
      os << "trial " << trial << " lp " << before_lp << " -> " << after_lp
         << " energy " << before_e << " -> " << after_e << "\nZ1:\n"
         << describe_table(z1) << "Z2:\n"
         << describe_table(z2);
      report.diagnostics += os.str();
    }
  }
  return report;
}

std::vector<double> optimality_instability_demo(int iterations,
                                                double tie_gap) {
  // y -> x -> T; at x the two actions tie in mean but differ in shape
  TabularMdp mdp;
  mdp.states = 3;
  mdp.actions = 2;
  mdp.gamma = 0.9;
  mdp.terminal = {0, 0, 1};
  mdp.p.assign(3, std::vector<std::vector<double>>(
                      2, std::vector<double>(3, 0.0)));
  for (int a = 0; a < 2; ++a) {
    mdp.p[0][a][1] = 1.0;
    mdp.p[1][a][2] = 1.0;
    mdp.p[2][a][2] = 1.0;
  }
  mdp.reward.assign(3, {RewardLaw::constant(0.0), RewardLaw::constant(0.0)});
  mdp.reward[1][1] = RewardLaw::uniform({-1.0, 1.0});
  mdp.validate();

  auto bimodal = [&](double shift) {
    return GaussianMixture({{0.5, -1.0 + shift, kVarianceFloor},
                            {0.5, 1.0 + shift, kVarianceFloor}});
  };
  TabularValueTable z1 = TabularValueTable::zeros(mdp);
  TabularValueTable z2 = TabularValueTable::zeros(mdp);
  z1.at(1, 1) = bimodal(0.0);
  z2.at(1, 1) = bimodal(tie_gap);

  std::vector<double> distances;
  for (int it = 0; it <= iterations; ++it) {
    double sup = 0.0;
    for (std::size_t i = 0; i < z1.z.size(); ++i)
      sup = std::max(sup, cramer_lp_numeric(z1.z[i], z2.z[i], 2.0));
    distances.push_back(sup);
    z1 = bellman_optimality_apply(z1, mdp);
    z2 = bellman_optimality_apply(z2, mdp);
  }
  return distances;
}

std::vector<double> midpoint_fractions(int m) {
  std::vector<double> taus(m);
  for (int i = 0; i < m; ++i)
    taus[i] = (2.0 * i + 1.0) / (2.0 * static_cast<double>(m));
  return taus;
}

DiracMixture impute_from_quantiles(const DiracMixture& fitted,
                                   std::span<const double> fractions,
                                   std::size_t samples) {
  if (fractions.size() != fitted.size())
    throw std::invalid_argument("impute_from_quantiles: fraction count");
  std::vector<std::pair<double, double>> knots(fitted.size());
  for (std::size_t i = 0; i < fitted.size(); ++i)
    knots[i] = {fractions[i], fitted.atoms()[i]};
  std::sort(knots.begin(), knots.end());
  auto inverse = [&](double u) {
    if (knots.size() == 1) return knots[0].second;
    std::size_t hi = 1;
    while (hi + 1 < knots.size() && knots[hi].first < u) ++hi;
    std::size_t lo = hi - 1;
    double slope = (knots[hi].second - knots[lo].second) /
                   std::max(knots[hi].first - knots[lo].first, 1e-12);
    return knots[lo].second + slope * (u - knots[lo].first);
  };
  std::vector<double> atoms(samples);
  for (std::size_t j = 0; j < samples; ++j) {
    double u = (2.0 * static_cast<double>(j) + 1.0) /
               (2.0 * static_cast<double>(samples));
    atoms[j] = inverse(u);
  }
  return DiracMixture(std::move(atoms));
}

namespace {

double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
double softplus_inverse(double y) {
  return y > 30.0 ? y : std::log(std::expm1(y));
}
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct GmmParams {
  std::vector<double> logits, means, raw_vars;

  GaussianMixture build() const {
    std::vector<GaussianComponent> comps(logits.size());
    double zmax = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      comps[k].weight = std::exp(logits[k] - zmax);
      total += comps[k].weight;
    }
    for (std::size_t k = 0; k < logits.size(); ++k) {
      comps[k].weight /= total;
      comps[k].mean = means[k];
      comps[k].variance = std::max(softplus(raw_vars[k]), kVarianceFloor);
    }
    return GaussianMixture(std::move(comps));
  }

  void apply_gradient(const GaussianMixture& built, const GmmGrad& g,
                      double lr) {
    const auto& comps = built.components();
    // chain through softmax for the weights
    double dot = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k)
      dot += g.dweight[k] * comps[k].weight;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      double dlogit = comps[k].weight * (g.dweight[k] - dot);
      logits[k] -= lr * dlogit;
      means[k] -= lr * g.dmean[k];
      raw_vars[k] -= lr * g.dvariance[k] * sigmoid(raw_vars[k]);
    }
  }
};

}  // namespace

FitResult fit_tabular_critic(const TabularMdp& mdp, const PolicyMatrix& pi,
                             const FitOptions& options, Rng& rng) {
  mdp.validate();
  if (options.loss == TabularLoss::huber_quantile &&
      options.repr != TabularRepr::dirac_m)
    throw std::invalid_argument(
        "fit_tabular_critic: huber_quantile needs the Dirac representation");
  if (options.loss == TabularLoss::energy_gmm &&
      options.repr != TabularRepr::gmm_K)
    throw std::invalid_argument(
        "fit_tabular_critic: energy_gmm needs the mixture representation");
  if (options.loss == TabularLoss::energy_samples &&
      options.repr != TabularRepr::dirac_m)
    throw std::invalid_argument(
        "fit_tabular_critic: energy_samples needs the Dirac representation");
  const int m = options.size;
  const bool dirac = options.repr == TabularRepr::dirac_m;
  const std::size_t particles =
      dirac ? static_cast<std::size_t>(m) : static_cast<std::size_t>(3 * m);

  std::vector<std::vector<double>> atoms(mdp.states);
  std::vector<GmmParams> gmm(mdp.states);
  for (int s = 0; s < mdp.states; ++s) {
    if (dirac) {
      atoms[s].resize(m);
      for (int i = 0; i < m; ++i)
        atoms[s][i] = -0.05 + 0.1 * (i + 0.5) / m + 0.01 * rng.normal();
      std::sort(atoms[s].begin(), atoms[s].end());
    } else {
      gmm[s].logits.assign(m, 0.0);
      gmm[s].means.resize(m);
      gmm[s].raw_vars.assign(m, softplus_inverse(0.0625));
      for (int k = 0; k < m; ++k)
        gmm[s].means[k] =
            -1.5 + 3.0 * (k + 0.5) / m + 0.05 * rng.normal();
    }
  }

  auto critic_at = [&](int s) -> ValueDistribution {
    if (dirac) return DiracMixture(atoms[s]);
    return gmm[s].build();
  };

  std::vector<GaussianMixture> truth = exact_state_values(mdp, pi);
  auto mean_truth_distance = [&]() {
    double total = 0.0;
    int count = 0;
    for (int s = 0; s < mdp.states; ++s) {
      if (mdp.terminal[s]) continue;
      ValueDistribution c = critic_at(s);
      total += energy_distance(c, ValueDistribution(truth[s]));
      ++count;
    }
    return total / std::max(count, 1);
  };

  std::vector<double> taus = midpoint_fractions(m);
  FitResult result;
  for (std::size_t step = 0; step < options.steps; ++step) {
    // one episode from state 0
    std::vector<int> visited;
    std::vector<double> rewards;
    int s = 0;
    std::size_t guard = 0;
    while (!mdp.terminal[s]) {
      if (++guard > 100000)
        throw std::runtime_error("fit_tabular_critic: non-episodic rollout");
      auto a = rng.categorical(pi.pi[s]);
      visited.push_back(s);
      rewards.push_back(mdp.reward[s][a].sample(rng));
      s = static_cast<int>(rng.categorical(mdp.p[s][a]));
    }
    const std::size_t N = visited.size();
    std::vector<std::uint8_t> terminal(N, 0);
    terminal[N - 1] = 1;

    LambdaTargets targets;
    if (dirac) {
      std::vector<DiracMixture> values;
      values.reserve(N);
      for (std::size_t t = 0; t < N; ++t)
        values.emplace_back(atoms[visited[t]]);
      RewardTrajectory traj(rewards, terminal,
                            DiracMixture(std::vector<double>(m, 0.0)),
                            mdp.gamma, options.lambda);
      targets = sr_lambda_dirac(values, traj, rng.next_u64());
    } else {
      std::vector<GaussianMixture> values;
      values.reserve(N);
      for (std::size_t t = 0; t < N; ++t)
        values.push_back(gmm[visited[t]].build());
      RewardTrajectory traj(rewards, terminal,
                            GaussianMixture::single(0.0, 0.0), mdp.gamma,
                            options.lambda);
      targets = sr_lambda_gmm(values, traj, particles, rng.next_u64());
    }

    for (std::size_t t = 0; t < N; ++t) {
      int st = visited[t];
      if (options.loss == TabularLoss::huber_quantile) {
        const auto& target = std::get<DiracMixture>(targets.steps[t]);
        std::vector<QuantilePrediction> preds(m);
        for (int i = 0; i < m; ++i) preds[i] = {atoms[st][i], taus[i]};
        auto g = huber_quantile_loss_grad(target.atoms(), preds, options.kappa);
        double loss = huber_quantile_loss(target.atoms(), preds, options.kappa);
        if (loss > 1e6)
          throw std::runtime_error("fit_tabular_critic: loss diverged");
        for (int i = 0; i < m; ++i)
          atoms[st][i] -= options.learning_rate * g[i];
      } else if (options.loss == TabularLoss::energy_samples) {
        const auto& target = std::get<DiracMixture>(targets.steps[t]);
        auto g = energy_samples_grad_xs(atoms[st], target.atoms());
        for (int i = 0; i < m; ++i)
          atoms[st][i] -= options.learning_rate * g[i];
      } else {
        const auto& target = std::get<GaussianMixture>(targets.steps[t]);
        GaussianMixture built = gmm[st].build();
        auto g = energy_gmm_grad(built, target);
        gmm[st].apply_gradient(built, g, options.learning_rate);
      }
    }

    if (step % options.curve_every == 0 || step + 1 == options.steps) {
      result.curve_steps.push_back(static_cast<double>(step));
      result.distance_curve.push_back(mean_truth_distance());
    }
  }

  for (int s = 0; s < mdp.states; ++s) result.per_state.push_back(critic_at(s));
  result.final_distance = result.distance_curve.empty()
                              ? mean_truth_distance()
                              : result.distance_curve.back();
  return result;
}

}  // namespace dac
