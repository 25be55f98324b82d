#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "rng.hpp"

namespace dac {

// Variances are clamped to this floor everywhere a distribution is built, so
// that degenerate Gaussians stay numerically usable.
inline constexpr double kVarianceFloor = 1e-8;

// standard normal cdf, computed via erfc
double normal_cdf(double z);
// standard normal pdf
double normal_pdf(double z);

struct GaussianComponent {
  double weight;
  double mean;
  double variance;
};

// K-component mixture of Gaussians.  Weights are nonnegative and are
// renormalized to sum to exactly 1 (inputs off by more than 1e-9 are
// rejected); variances are clamped to kVarianceFloor.
class GaussianMixture {
 public:
  explicit GaussianMixture(std::vector<GaussianComponent> components);

  static GaussianMixture single(double mean, double variance);
  static GaussianMixture equal_weight(std::span<const double> means,
                                      std::span<const double> variances);

  const std::vector<GaussianComponent>& components() const {
    return components_;
  }
  std::size_t size() const { return components_.size(); }

  double mean() const;
  double variance() const;
  double cdf(double z) const;
  double pdf(double z) const;

 private:
  std::vector<GaussianComponent> components_;
};

// m equally weighted atoms.  Atoms are kept in insertion order; quantile()
// sorts a copy.
class DiracMixture {
 public:
  explicit DiracMixture(std::vector<double> atoms);

  const std::vector<double>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }

  double mean() const;
  double variance() const;  // population variance
  double cdf(double z) const;

 private:
  std::vector<double> atoms_;
};

using ValueDistribution = std::variant<GaussianMixture, DiracMixture>;

double mean(const ValueDistribution& d);
double variance(const ValueDistribution& d);
double cdf(const ValueDistribution& d, double z);

// n i.i.d. draws; for a mixture the component is chosen by categorical(w)
// followed by a normal draw
std::vector<double> sample(const ValueDistribution& d, Rng& rng,
                           std::size_t n);

// shift + scale * d; requires scale >= 0
ValueDistribution affine(const ValueDistribution& d, double shift,
                         double scale);
GaussianMixture affine(const GaussianMixture& d, double shift, double scale);
DiracMixture affine(const DiracMixture& d, double shift, double scale);

// generalized inverse cdf of the empirical distribution: the atom at index
// ceil(tau * m) of the sorted atoms; requires tau in (0, 1)
double quantile(const DiracMixture& d, double tau);

// generalized inverse cdf; bisection for mixtures, sorted-atom rule for
// Dirac mixtures
double inverse_cdf(const ValueDistribution& d, double tau);

// support bounds padded by k_sigma standard deviations of the widest
// component (atoms have zero width)
double support_lo(const ValueDistribution& d, double k_sigma);
double support_hi(const ValueDistribution& d, double k_sigma);

}  // namespace dac
