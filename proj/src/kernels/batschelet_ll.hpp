#pragma once

#include <cstddef>

namespace palsim::kernels {

struct BatscheletPair {
  double mu[2];
  double kappa[2];
  double gamma[2];
  double log_base[2];  // log weight - log normaliser
};

// Two-component inverse power Batschelet log-likelihood over `theta`
// (angles in (-pi, pi]). Built with vectorised libm; used as the search
// objective only, never for reported likelihoods.
double batschelet_mixture_ll(const double* theta, std::size_t n, const BatscheletPair& p);

}  // namespace palsim::kernels
