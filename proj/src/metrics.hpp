#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "distribution.hpp"

namespace dac {

enum class DistanceMethod { closed_form, sample, numeric_cdf };

struct DistanceReport {
  double value = 0.0;
  DistanceMethod method = DistanceMethod::closed_form;
  std::optional<std::size_t> sample_count;
};

// E|X| for X ~ N(mu, variance):
//   sigma * sqrt(2/pi) * exp(-mu^2 / (2 sigma^2)) + mu * (2 Phi(mu/sigma) - 1)
// For variance == 0 this degenerates to |mu|.
double folded_normal_abs_mean(double mu, double variance);
// d/dmu   = 2 Phi(mu/sigma) - 1
double folded_normal_dmu(double mu, double variance);
// d/dvar  = phi(mu/sigma) / sigma
double folded_normal_dvar(double mu, double variance);

// Kernel used inside delta_gmm.  fixed_sqrt2_cdf is a diagnostic variant
// that evaluates the cdf term at mu/sqrt(2) with inverted sign instead of
// mu/sigma; it is kept so the difference from the true folded-normal mean
// can be demonstrated, and is not used by any loss.
enum class DeltaKernel { folded_normal, fixed_sqrt2_cdf };

// sum_{i,j} w_ui * w_vj * E|Z_ij|,  Z_ij ~ N(mu_ui - mu_vj, var_ui + var_vj)
double delta_gmm(const GaussianMixture& u, const GaussianMixture& v,
                 DeltaKernel kernel = DeltaKernel::folded_normal);

// energy distance 2 d(U,V) - d(U,U') - d(V,V'), closed form; clamped at 0
double energy_gmm(const GaussianMixture& u, const GaussianMixture& v,
                  DeltaKernel kernel = DeltaKernel::folded_normal);

// same with delta_gmm(v, v) supplied by the caller; that term is constant
// when one side is a fixed target evaluated many times
double energy_gmm_with_self(const GaussianMixture& u, const GaussianMixture& v,
                            double v_self);

// gradients of energy_gmm with respect to u's raw (weight, mean, variance)
struct GmmGrad {
  std::vector<double> dweight;
  std::vector<double> dmean;
  std::vector<double> dvariance;
};
GmmGrad energy_gmm_grad(const GaussianMixture& u, const GaussianMixture& v);

// sample-based energy distance between two equally weighted sample sets
double energy_samples(std::span<const double> xs, std::span<const double> ys);
// gradient of energy_samples with respect to xs
std::vector<double> energy_samples_grad_xs(std::span<const double> xs,
                                           std::span<const double> ys);

// closed-form energy distance between an atom set and a Gaussian mixture
double energy_mixed(const DiracMixture& d, const GaussianMixture& g);
GmmGrad energy_mixed_grad_gmm(const DiracMixture& d, const GaussianMixture& g);

// exact energy distance between two weighted atom sets, computed as
// 2 * integral (F - G)^2 via a sorted sweep (O(n log n))
double energy_weighted_atoms(std::span<const double> xs,
                             std::span<const double> wx,
                             std::span<const double> ys,
                             std::span<const double> wy);

// energy distance between arbitrary value distributions, dispatching to the
// closed forms where available and the cdf integral otherwise
double energy_distance(const ValueDistribution& p, const ValueDistribution& q);

// ( integral |F_P - F_Q|^p dz )^(1/p) by adaptive quadrature over the union
// support padded by 8 standard deviations; absolute error target 1e-6 on the
// inner integral.  Throws std::runtime_error if the quadrature fails to
// converge.
double cramer_lp_numeric(const ValueDistribution& p, const ValueDistribution& q,
                         double exponent);

// ( integral_0^1 |F_P^-1 - F_Q^-1|^p dw )^(1/p), midpoint rule on a 2^14 grid
double wasserstein_p_numeric(const ValueDistribution& p,
                             const ValueDistribution& q, double exponent);

struct QuantilePrediction {
  double value;
  double tau;
};

// (1/N') sum_i sum_j rho^kappa_{tau_i}(target_j - prediction_i), where rho is
// the Huber quantile loss.  At delta == 0 the indicator takes the delta < 0
// branch so downstream gradients are deterministic.
double huber_quantile_loss(std::span<const double> targets,
                           std::span<const QuantilePrediction> predictions,
                           double kappa);
// gradient with respect to prediction values
std::vector<double> huber_quantile_loss_grad(
    std::span<const double> targets,
    std::span<const QuantilePrediction> predictions, double kappa);

}  // namespace dac
