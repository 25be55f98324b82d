#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "flops.hpp"

namespace dac {

namespace {

constexpr double kSqrt2OverPi = 0.7978845608028654;  // sqrt(2/pi)

double clamp_distance(double e) {
  if (e < -1e-9) throw std::runtime_error("distance unexpectedly negative");
  return std::max(e, 0.0);
}

}  // namespace

double folded_normal_abs_mean(double mu, double variance) {
  if (variance < 0.0)
    throw std::invalid_argument("folded_normal: variance must be >= 0");
  flops::add_muladd(5);
  flops::add_transcendental(3);  // exp, erfc, sqrt
  if (variance == 0.0) return std::abs(mu);
  double sigma = std::sqrt(variance);
  double z = mu / sigma;
  return sigma * kSqrt2OverPi * std::exp(-0.5 * z * z) +
         mu * (2.0 * normal_cdf(z) - 1.0);
}

double folded_normal_dmu(double mu, double variance) {
  if (variance <= 0.0) return mu > 0.0 ? 1.0 : (mu < 0.0 ? -1.0 : 0.0);
  flops::add_muladd(2);
  flops::add_transcendental(2);
  return 2.0 * normal_cdf(mu / std::sqrt(variance)) - 1.0;
}

double folded_normal_dvar(double mu, double variance) {
  if (variance <= 0.0) return 0.0;
  flops::add_muladd(2);
  flops::add_transcendental(2);
  double sigma = std::sqrt(variance);
  return normal_pdf(mu / sigma) / sigma;
}

namespace {

double delta_kernel(double dmu, double var_sum, DeltaKernel kernel) {
  if (kernel == DeltaKernel::folded_normal)
    return folded_normal_abs_mean(dmu, var_sum);
  // diagnostic variant: cdf argument fixed at dmu/sqrt(2), sign flipped
  double sigma = std::sqrt(var_sum);
  double z = var_sum > 0.0 ? dmu / sigma : 0.0;
  return sigma * kSqrt2OverPi * std::exp(-0.5 * z * z) +
         dmu * (1.0 - 2.0 * normal_cdf(dmu / std::numbers::sqrt2));
}

}  // namespace

double delta_gmm(const GaussianMixture& u, const GaussianMixture& v,
                 DeltaKernel kernel) {
  double acc = 0.0;
  for (const auto& cu : u.components())
    for (const auto& cv : v.components()) {
      acc += cu.weight * cv.weight *
             delta_kernel(cu.mean - cv.mean, cu.variance + cv.variance,
                          kernel);
      flops::add_muladd(3);
    }
  return acc;
}

double energy_gmm(const GaussianMixture& u, const GaussianMixture& v,
                  DeltaKernel kernel) {
  double e = 2.0 * delta_gmm(u, v, kernel) - delta_gmm(u, u, kernel) -
             delta_gmm(v, v, kernel);
  flops::add_muladd(2);
  return clamp_distance(e);
}

double energy_gmm_with_self(const GaussianMixture& u, const GaussianMixture& v,
                            double v_self) {
  double e = 2.0 * delta_gmm(u, v) - delta_gmm(u, u) - v_self;
  flops::add_muladd(2);
  return clamp_distance(e);
}

namespace {

// value and both partials of the folded-normal mean from one exp/erfc pass
struct FnmEval {
  double f, dmu, dvar;
};

FnmEval fnm_eval(double mu, double variance) {
  flops::add_muladd(8);
  flops::add_transcendental(3);
  if (variance <= 0.0)
    return {std::abs(mu), mu > 0.0 ? 1.0 : (mu < 0.0 ? -1.0 : 0.0), 0.0};
  double sigma = std::sqrt(variance);
  double z = mu / sigma;
  double pdf = normal_pdf(z);
  double cdf = normal_cdf(z);
  return {sigma * kSqrt2OverPi * std::exp(-0.5 * z * z) +
              mu * (2.0 * cdf - 1.0),
          2.0 * cdf - 1.0, pdf / sigma};
}

}  // namespace

GmmGrad energy_gmm_grad(const GaussianMixture& u, const GaussianMixture& v) {
  const auto& uc = u.components();
  const auto& vc = v.components();
  GmmGrad g{std::vector<double>(uc.size(), 0.0),
            std::vector<double>(uc.size(), 0.0),
            std::vector<double>(uc.size(), 0.0)};
  for (std::size_t i = 0; i < uc.size(); ++i) {
    for (const auto& cv : vc) {
      FnmEval e = fnm_eval(uc[i].mean - cv.mean, uc[i].variance + cv.variance);
      g.dweight[i] += 2.0 * cv.weight * e.f;
      g.dmean[i] += 2.0 * uc[i].weight * cv.weight * e.dmu;
      g.dvariance[i] += 2.0 * uc[i].weight * cv.weight * e.dvar;
      flops::add_muladd(6);
    }
    for (const auto& ck : uc) {
      FnmEval e = fnm_eval(uc[i].mean - ck.mean, uc[i].variance + ck.variance);
      g.dweight[i] -= 2.0 * ck.weight * e.f;
      g.dmean[i] -= 2.0 * uc[i].weight * ck.weight * e.dmu;
      g.dvariance[i] -= 2.0 * uc[i].weight * ck.weight * e.dvar;
      flops::add_muladd(6);
    }
  }
  return g;
}

double energy_samples(std::span<const double> xs, std::span<const double> ys) {
  if (xs.empty() || ys.empty())
    throw std::invalid_argument("energy_samples: empty sample set");
  auto n = static_cast<double>(xs.size());
  auto m = static_cast<double>(ys.size());
  double cross = 0.0, self_x = 0.0, self_y = 0.0;
  for (double x : xs)
    for (double y : ys) cross += std::abs(x - y);
  for (double a : xs)
    for (double b : xs) self_x += std::abs(a - b);
  for (double a : ys)
    for (double b : ys) self_y += std::abs(a - b);
  double pairs = n * m + n * n + m * m;
  flops::add_muladd(pairs);
  flops::add_compare(pairs);
  double e = 2.0 * cross / (n * m) - self_x / (n * n) - self_y / (m * m);
  return clamp_distance(e);
}

std::vector<double> energy_samples_grad_xs(std::span<const double> xs,
                                           std::span<const double> ys) {
  auto n = static_cast<double>(xs.size());
  auto m = static_cast<double>(ys.size());
  std::vector<double> g(xs.size(), 0.0);
  auto sgn = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double acc = 0.0;
    for (double y : ys) acc += sgn(xs[i] - y);
    g[i] = 2.0 * acc / (n * m);
    acc = 0.0;
    for (double b : xs) acc += sgn(xs[i] - b);
    g[i] -= 2.0 * acc / (n * n);
  }
  double pairs = n * m + n * n;
  flops::add_muladd(pairs);
  flops::add_compare(pairs);
  return g;
}

double energy_mixed(const DiracMixture& d, const GaussianMixture& g) {
  const auto& atoms = d.atoms();
  auto m = static_cast<double>(atoms.size());
  double cross = 0.0;
  for (double x : atoms)
    for (const auto& c : g.components()) {
      cross += c.weight * folded_normal_abs_mean(x - c.mean, c.variance);
      flops::add_muladd(2);
    }
  cross /= m;
  double self_d = 0.0;
  for (double a : atoms)
    for (double b : atoms) self_d += std::abs(a - b);
  self_d /= m * m;
  flops::add_muladd(m * m);
  flops::add_compare(m * m);
  double self_g = delta_gmm(g, g);
  return clamp_distance(2.0 * cross - self_d - self_g);
}

GmmGrad energy_mixed_grad_gmm(const DiracMixture& d, const GaussianMixture& g) {
  const auto& atoms = d.atoms();
  const auto& gc = g.components();
  auto m = static_cast<double>(atoms.size());
  GmmGrad out{std::vector<double>(gc.size(), 0.0),
              std::vector<double>(gc.size(), 0.0),
              std::vector<double>(gc.size(), 0.0)};
  for (std::size_t j = 0; j < gc.size(); ++j) {
    for (double x : atoms) {
      FnmEval e = fnm_eval(gc[j].mean - x, gc[j].variance);
      out.dweight[j] += (2.0 / m) * e.f;
      out.dmean[j] += (2.0 / m) * gc[j].weight * e.dmu;
      out.dvariance[j] += (2.0 / m) * gc[j].weight * e.dvar;
      flops::add_muladd(6);
    }
    for (const auto& ck : gc) {
      FnmEval e = fnm_eval(gc[j].mean - ck.mean, gc[j].variance + ck.variance);
      out.dweight[j] -= 2.0 * ck.weight * e.f;
      out.dmean[j] -= 2.0 * gc[j].weight * ck.weight * e.dmu;
      out.dvariance[j] -= 2.0 * gc[j].weight * ck.weight * e.dvar;
      flops::add_muladd(6);
    }
  }
  return out;
}

double energy_weighted_atoms(std::span<const double> xs,
                             std::span<const double> wx,
                             std::span<const double> ys,
                             std::span<const double> wy) {
  if (xs.size() != wx.size() || ys.size() != wy.size() || xs.empty() ||
      ys.empty())
    throw std::invalid_argument("energy_weighted_atoms: bad inputs");
  // 2 * integral (F - G)^2 dz over the merged breakpoints
  struct Point {
    double z;
    double df;  // jump of F - G at z
  };
  std::vector<Point> pts;
  pts.reserve(xs.size() + ys.size());
  double wx_total = 0.0, wy_total = 0.0;
  for (double w : wx) wx_total += w;
  for (double w : wy) wy_total += w;
  for (std::size_t i = 0; i < xs.size(); ++i)
    pts.push_back({xs[i], wx[i] / wx_total});
  for (std::size_t i = 0; i < ys.size(); ++i)
    pts.push_back({ys[i], -wy[i] / wy_total});
  std::sort(pts.begin(), pts.end(),
            [](const Point& a, const Point& b) { return a.z < b.z; });
  double integral = 0.0;
  double diff = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    diff += pts[i].df;
    integral += diff * diff * (pts[i + 1].z - pts[i].z);
  }
  return clamp_distance(2.0 * integral);
}

namespace {

struct Quadrature {
  double tolerance;
  int max_depth;
  bool converged = true;

  template <typename F>
  double simpson(const F& f, double a, double fa, double b, double fb,
                 double fm, double eps, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * eps || (b - a) < 1e-14)
      return left + right + delta / 15.0;
    if (depth >= max_depth) {
      converged = false;
      return left + right + delta / 15.0;
    }
    return simpson(f, a, fa, m, fm, flm, 0.5 * eps, depth + 1) +
           simpson(f, m, fm, b, fb, frm, 0.5 * eps, depth + 1);
  }

  template <typename F>
  double integrate(const F& f, double a, double b, double eps) {
    if (b <= a) return 0.0;
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    return simpson(f, a, fa, b, fb, fm, eps, 0);
  }
};

void collect_atoms(const ValueDistribution& d, std::vector<double>& out) {
  if (const auto* dm = std::get_if<DiracMixture>(&d))
    out.insert(out.end(), dm->atoms().begin(), dm->atoms().end());
}

bool pure_dirac(const ValueDistribution& d) {
  return std::holds_alternative<DiracMixture>(d);
}

}  // namespace

double cramer_lp_numeric(const ValueDistribution& p, const ValueDistribution& q,
                         double exponent) {
  if (exponent < 1.0)
    throw std::invalid_argument("cramer_lp_numeric: exponent must be >= 1");
  if (pure_dirac(p) && pure_dirac(q)) {
    // piecewise-constant cdfs: the integral is an exact finite sum
    struct Point {
      double z, df;
    };
    std::vector<Point> pts;
    const auto& pa = std::get<DiracMixture>(p).atoms();
    const auto& qa = std::get<DiracMixture>(q).atoms();
    for (double a : pa) pts.push_back({a, 1.0 / static_cast<double>(pa.size())});
    for (double a : qa)
      pts.push_back({a, -1.0 / static_cast<double>(qa.size())});
    std::sort(pts.begin(), pts.end(),
              [](const Point& a, const Point& b) { return a.z < b.z; });
    double integral = 0.0, diff = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      diff += pts[i].df;
      integral += std::pow(std::abs(diff), exponent) * (pts[i + 1].z - pts[i].z);
    }
    return std::pow(integral, 1.0 / exponent);
  }

  double lo = std::min(support_lo(p, 8.0), support_lo(q, 8.0));
  double hi = std::max(support_hi(p, 8.0), support_hi(q, 8.0));
  std::vector<double> breaks{lo, hi};
  collect_atoms(p, breaks);
  collect_atoms(q, breaks);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  auto f = [&](double z) {
    return std::pow(std::abs(cdf(p, z) - cdf(q, z)), exponent);
  };
  Quadrature quad{1e-8, 48};
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    double a = breaks[i], b = breaks[i + 1];
    if (b <= a) continue;
    double eps = 1e-8 * std::max((b - a) / (hi - lo), 1e-3);
    // integrate strictly inside the segment so cdf jumps sit on the edges
    double pad = std::min(1e-12, 0.25 * (b - a));
    integral += quad.integrate(f, a + pad, b - pad, eps);
  }
  if (!quad.converged)
    throw std::runtime_error("cramer_lp_numeric: quadrature did not converge");
  return std::pow(integral, 1.0 / exponent);
}

double wasserstein_p_numeric(const ValueDistribution& p,
                             const ValueDistribution& q, double exponent) {
  if (exponent < 1.0)
    throw std::invalid_argument("wasserstein_p_numeric: exponent must be >= 1");
  constexpr int kGrid = 1 << 14;
  double acc = 0.0;
  for (int k = 0; k < kGrid; ++k) {
    double w = (static_cast<double>(k) + 0.5) / kGrid;
    acc += std::pow(std::abs(inverse_cdf(p, w) - inverse_cdf(q, w)), exponent);
  }
  return std::pow(acc / kGrid, 1.0 / exponent);
}

double energy_distance(const ValueDistribution& p, const ValueDistribution& q) {
  if (const auto* pg = std::get_if<GaussianMixture>(&p)) {
    if (const auto* qg = std::get_if<GaussianMixture>(&q))
      return energy_gmm(*pg, *qg);
    return energy_mixed(std::get<DiracMixture>(q), *pg);
  }
  const auto& pd = std::get<DiracMixture>(p);
  if (const auto* qg = std::get_if<GaussianMixture>(&q))
    return energy_mixed(pd, *qg);
  const auto& qd = std::get<DiracMixture>(q);
  std::vector<double> wx(pd.size(), 1.0), wy(qd.size(), 1.0);
  return energy_weighted_atoms(pd.atoms(), wx, qd.atoms(), wy);
}

double huber_quantile_loss(std::span<const double> targets,
                           std::span<const QuantilePrediction> predictions,
                           double kappa) {
  if (kappa <= 0.0)
    throw std::invalid_argument("huber_quantile_loss: kappa must be > 0");
  for (const auto& pr : predictions)
    if (!(pr.tau > 0.0 && pr.tau < 1.0))
      throw std::invalid_argument("huber_quantile_loss: tau outside (0, 1)");
  double acc = 0.0;
  for (const auto& pr : predictions) {
    for (double t : targets) {
      double delta = t - pr.value;
      // ties at delta == 0 take the negative branch
      double indicator = delta <= 0.0 ? 1.0 : 0.0;
      double abs_delta = std::abs(delta);
      double huber = abs_delta <= kappa
                         ? 0.5 * delta * delta
                         : kappa * (abs_delta - 0.5 * kappa);
      acc += std::abs(pr.tau - indicator) * huber / kappa;
    }
  }
  double pairs =
      static_cast<double>(predictions.size()) * static_cast<double>(targets.size());
  flops::add_muladd(3.5 * pairs);
  flops::add_compare(4.0 * pairs);
  return acc / static_cast<double>(targets.size());
}

std::vector<double> huber_quantile_loss_grad(
    std::span<const double> targets,
    std::span<const QuantilePrediction> predictions, double kappa) {
  std::vector<double> g(predictions.size(), 0.0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& pr = predictions[i];
    double acc = 0.0;
    for (double t : targets) {
      double delta = t - pr.value;
      double indicator = delta <= 0.0 ? 1.0 : 0.0;
      double dl = std::abs(delta) <= kappa
                      ? delta
                      : kappa * (delta > 0.0 ? 1.0 : -1.0);
      acc += std::abs(pr.tau - indicator) * dl / kappa;
    }
    g[i] = -acc / static_cast<double>(targets.size());
  }
  double pairs =
      static_cast<double>(predictions.size()) * static_cast<double>(targets.size());
  flops::add_muladd(2.5 * pairs);
  flops::add_compare(2.0 * pairs);
  return g;
}

}  // namespace dac
