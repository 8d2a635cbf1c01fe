#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace palsim {

// ---- Special functions --------------------------------------------------

/// Exponentially scaled modified Bessel functions, I0(x) e^-x and I1(x) e^-x,
/// for x >= 0. Power series below x = 15, Hankel asymptotic series above.
double bessel_i0e(double x) noexcept;
double bessel_i1e(double x) noexcept;

/// Mean resultant length of a von Mises(kappa): I1(kappa) / I0(kappa).
double bessel_ratio(double kappa) noexcept;

inline constexpr double kKappaMax = 1e4;

/// Solves I1(k)/I0(k) = r for k in [0, kKappaMax] by safeguarded Newton.
double inverse_bessel_ratio(double r) noexcept;

// ---- Densities ------------------------------------------------------------

/// Peakedness constant of the inverse power Batschelet transform.
inline constexpr double kBatscheletC = 0.04082284;

/// Throws ValidationError for kappa < 0.
double vonmises_pdf(double theta, double mu, double kappa);
double vonmises_log_pdf(double theta, double mu, double kappa);

/// Closed-form full width at half maximum; 2 pi when kappa < ln2 / 2.
double vonmises_fwhm(double kappa) noexcept;

/// gamma(lambda) = (1 - c lambda) / (1 + c lambda).
double batschelet_gamma(double lambda) noexcept;
/// t*(d) = sign(d) pi (|d| / pi)^gamma for d in (-pi, pi].
double batschelet_transform(double d, double lambda) noexcept;

/// log of the scaled normaliser  int_{-pi}^{pi} exp(kappa (cos t*(d) - 1)) dd.
/// Adaptive tanh-sinh quadrature; results are memoised per (kappa, lambda)
/// behind a mutex, so concurrent fits never see a partial entry.
double batschelet_log_norm(double kappa, double lambda);

/// Inverse power Batschelet density; theta - mu is wrapped to (-pi, pi].
/// Throws ValidationError for |lambda| > 1 or kappa < 0.
double batschelet_pdf(double theta, double mu, double kappa, double lambda);
double batschelet_log_pdf(double theta, double mu, double kappa, double lambda);

/// Full width at half of pdf(mu), found by bisection on each side of mu to
/// 1e-10 rad. Returns 2 pi when a side has no half-maximum crossing.
double fwhm_numeric(const std::function<double(double)>& pdf, double mu);

// ---- Samplers -------------------------------------------------------------

/// Best-Fisher rejection sampler.
double sample_vonmises(std::mt19937_64& rng, double mu, double kappa);
/// Rejection from a uniform envelope.
double sample_batschelet(std::mt19937_64& rng, double mu, double kappa, double lambda);

// ---- Fits -----------------------------------------------------------------

enum class CircularFamily { von_mises, batschelet };

struct CircularComponent {
  CircularFamily family = CircularFamily::von_mises;
  double mu = 0.0;
  double kappa = 0.0;
  double lambda = 0.0;  // batschelet only
  double omega = 1.0;
  double fwhm = 0.0;

  double pdf(double theta) const;
};

struct CircularFitResult {
  std::vector<CircularComponent> components;
  double log_likelihood = 0.0;
  std::size_t n_samples = 0;
  bool converged = true;
  bool kappa_capped = false;
  /// A mixture component fell below the weight floor and a single component
  /// was fitted instead.
  bool collapsed = false;
  /// Log-likelihood after each EM iteration of the winning restart.
  std::vector<double> ll_trace;

  double pdf(double theta) const;
};

struct MixtureOptions {
  int restarts = 20;
  int max_iterations = 500;
  double tolerance = 1e-8;
  double min_weight = 1e-3;
  std::uint64_t seed = 1;
};

struct BatscheletOptions {
  int warm_starts = 10;
  int max_evaluations = 4000;
  std::uint64_t seed = 1;
};

/// Requires >= 10 samples.
CircularFitResult fit_vonmises(std::span<const double> samples);
/// Two-component EM with seeded restarts. Requires >= 50 samples.
CircularFitResult fit_vonmises_mixture2(std::span<const double> samples,
                                        const MixtureOptions& options = {});
/// Two-component inverse power Batschelet mixture by Nelder-Mead from EM
/// warm starts. Requires >= 50 samples.
CircularFitResult fit_batschelet_mixture2(std::span<const double> samples,
                                          const BatscheletOptions& options = {});

/// Sum of log mixture density over samples.
double mixture_log_likelihood(const CircularFitResult& fit, std::span<const double> samples);

nlohmann::json to_json(const CircularFitResult& fit);
CircularFitResult circular_fit_from_json(const nlohmann::json& j);
std::string family_name(CircularFamily f);

}  // namespace palsim
