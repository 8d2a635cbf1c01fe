#include "batschelet_ll.hpp"

#include <cmath>

namespace palsim::kernels {

double batschelet_mixture_ll(const double* theta, std::size_t n, const BatscheletPair& p) {
  constexpr double pi = 3.141592653589793;
  constexpr double two_pi = 2.0 * pi;
  constexpr double tiny = 1e-300;
  const double mu0 = p.mu[0], mu1 = p.mu[1];
  const double g0 = p.gamma[0], g1 = p.gamma[1];
  const double k0 = p.kappa[0], k1 = p.kappa[1];
  const double b0 = p.log_base[0], b1 = p.log_base[1];
  double ll = 0.0;
#pragma omp simd reduction(+ : ll)
  for (std::size_t i = 0; i < n; ++i) {
    double d0 = theta[i] - mu0;
    d0 = d0 > pi ? d0 - two_pi : (d0 <= -pi ? d0 + two_pi : d0);
    double d1 = theta[i] - mu1;
    d1 = d1 > pi ? d1 - two_pi : (d1 <= -pi ? d1 + two_pi : d1);
    const double a0 = std::fmax(std::fabs(d0), tiny) / pi;
    const double a1 = std::fmax(std::fabs(d1), tiny) / pi;
    const double l0 = b0 + k0 * (std::cos(pi * std::exp(g0 * std::log(a0))) - 1.0);
    const double l1 = b1 + k1 * (std::cos(pi * std::exp(g1 * std::log(a1))) - 1.0);
    const double hi = std::fmax(l0, l1);
    ll += hi + std::log(1.0 + std::exp(-std::fabs(l0 - l1)));
  }
  return ll;
}

}  // namespace palsim::kernels
