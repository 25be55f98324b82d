#include "distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dac {

double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

GaussianMixture::GaussianMixture(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
  if (components_.empty())
    throw std::invalid_argument("GaussianMixture: needs at least 1 component");
  double total = 0.0;
  for (auto& c : components_) {
    if (!std::isfinite(c.weight) || !std::isfinite(c.mean) ||
        !std::isfinite(c.variance))
      throw std::invalid_argument("GaussianMixture: non-finite parameter");
    if (c.weight < 0.0)
      throw std::invalid_argument("GaussianMixture: negative weight");
    if (c.variance < 0.0)
      throw std::invalid_argument("GaussianMixture: negative variance");
    c.variance = std::max(c.variance, kVarianceFloor);
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("GaussianMixture: weights must sum to 1");
  for (auto& c : components_) c.weight /= total;
}

GaussianMixture GaussianMixture::single(double mean, double variance) {
  return GaussianMixture({{1.0, mean, variance}});
}

GaussianMixture GaussianMixture::equal_weight(
    std::span<const double> means, std::span<const double> variances) {
  if (means.size() != variances.size() || means.empty())
    throw std::invalid_argument("equal_weight: bad component lists");
  std::vector<GaussianComponent> comps(means.size());
  double w = 1.0 / static_cast<double>(means.size());
  for (std::size_t i = 0; i < means.size(); ++i)
    comps[i] = {w, means[i], variances[i]};
  return GaussianMixture(std::move(comps));
}

double GaussianMixture::mean() const {
  double m = 0.0;
  for (const auto& c : components_) m += c.weight * c.mean;
  return m;
}

double GaussianMixture::variance() const {
  double m = mean();
  double second = 0.0;
  for (const auto& c : components_)
    second += c.weight * (c.variance + c.mean * c.mean);
  return second - m * m;
}

double GaussianMixture::cdf(double z) const {
  double f = 0.0;
  for (const auto& c : components_)
    f += c.weight * normal_cdf((z - c.mean) / std::sqrt(c.variance));
  return f;
}

double GaussianMixture::pdf(double z) const {
  double f = 0.0;
  for (const auto& c : components_) {
    double s = std::sqrt(c.variance);
    f += c.weight * normal_pdf((z - c.mean) / s) / s;
  }
  return f;
}

DiracMixture::DiracMixture(std::vector<double> atoms)
    : atoms_(std::move(atoms)) {
  if (atoms_.empty())
    throw std::invalid_argument("DiracMixture: needs at least 1 atom");
  for (double a : atoms_)
    if (!std::isfinite(a))
      throw std::invalid_argument("DiracMixture: non-finite atom");
}

double DiracMixture::mean() const {
  double m = 0.0;
  for (double a : atoms_) m += a;
  return m / static_cast<double>(atoms_.size());
}

double DiracMixture::variance() const {
  double m = mean();
  double v = 0.0;
  for (double a : atoms_) v += (a - m) * (a - m);
  return v / static_cast<double>(atoms_.size());
}

double DiracMixture::cdf(double z) const {
  std::size_t count = 0;
  for (double a : atoms_)
    if (a <= z) ++count;
  return static_cast<double>(count) / static_cast<double>(atoms_.size());
}

double mean(const ValueDistribution& d) {
  return std::visit([](const auto& x) { return x.mean(); }, d);
}

double variance(const ValueDistribution& d) {
  return std::visit([](const auto& x) { return x.variance(); }, d);
}

double cdf(const ValueDistribution& d, double z) {
  return std::visit([z](const auto& x) { return x.cdf(z); }, d);
}

std::vector<double> sample(const ValueDistribution& d, Rng& rng,
                           std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample: n must be >= 1");
  std::vector<double> out(n);
  if (const auto* gmm = std::get_if<GaussianMixture>(&d)) {
    std::vector<double> w(gmm->size());
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = gmm->components()[i].weight;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = gmm->components()[rng.categorical(w)];
      out[i] = rng.normal(c.mean, c.variance);
    }
  } else {
    const auto& atoms = std::get<DiracMixture>(d).atoms();
    for (std::size_t i = 0; i < n; ++i)
      out[i] = atoms[rng.uniform_index(atoms.size())];
  }
  return out;
}

GaussianMixture affine(const GaussianMixture& d, double shift, double scale) {
  if (scale < 0.0) throw std::invalid_argument("affine: scale must be >= 0");
  std::vector<GaussianComponent> comps = d.components();
  for (auto& c : comps) {
    c.mean = shift + scale * c.mean;
    c.variance = std::max(scale * scale * c.variance, kVarianceFloor);
  }
  return GaussianMixture(std::move(comps));
}

DiracMixture affine(const DiracMixture& d, double shift, double scale) {
  if (scale < 0.0) throw std::invalid_argument("affine: scale must be >= 0");
  std::vector<double> atoms = d.atoms();
  for (double& a : atoms) a = shift + scale * a;
  return DiracMixture(std::move(atoms));
}

ValueDistribution affine(const ValueDistribution& d, double shift,
                         double scale) {
  return std::visit(
      [&](const auto& x) { return ValueDistribution(affine(x, shift, scale)); },
      d);
}

double quantile(const DiracMixture& d, double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("quantile: tau must be in (0, 1)");
  std::vector<double> sorted = d.atoms();
  std::sort(sorted.begin(), sorted.end());
  auto m = static_cast<double>(sorted.size());
  auto idx = static_cast<std::size_t>(std::ceil(tau * m));
  idx = std::min(std::max<std::size_t>(idx, 1), sorted.size());
  return sorted[idx - 1];
}

double inverse_cdf(const ValueDistribution& d, double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("inverse_cdf: tau must be in (0, 1)");
  if (const auto* dm = std::get_if<DiracMixture>(&d)) return quantile(*dm, tau);
  double lo = support_lo(d, 10.0);
  double hi = support_hi(d, 10.0);
  for (int i = 0; i < 200 && hi - lo > 1e-13 * (1.0 + std::abs(lo)); ++i) {
    double mid = 0.5 * (lo + hi);
    if (cdf(d, mid) < tau)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double support_lo(const ValueDistribution& d, double k_sigma) {
  if (const auto* gmm = std::get_if<GaussianMixture>(&d)) {
    double lo = std::numeric_limits<double>::infinity();
    double smax = 0.0;
    for (const auto& c : gmm->components()) {
      lo = std::min(lo, c.mean);
      smax = std::max(smax, std::sqrt(c.variance));
    }
    return lo - k_sigma * smax;
  }
  const auto& atoms = std::get<DiracMixture>(d).atoms();
  return *std::min_element(atoms.begin(), atoms.end());
}

double support_hi(const ValueDistribution& d, double k_sigma) {
  if (const auto* gmm = std::get_if<GaussianMixture>(&d)) {
    double hi = -std::numeric_limits<double>::infinity();
    double smax = 0.0;
    for (const auto& c : gmm->components()) {
      hi = std::max(hi, c.mean);
      smax = std::max(smax, std::sqrt(c.variance));
    }
    return hi + k_sigma * smax;
  }
  const auto& atoms = std::get<DiracMixture>(d).atoms();
  return *std::max_element(atoms.begin(), atoms.end());
}

}  // namespace dac
