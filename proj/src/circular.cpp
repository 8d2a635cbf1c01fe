#include "palsim/circular.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <nlohmann/json.hpp>

#include "kernels/batschelet_ll.hpp"
#include "nelder_mead.hpp"
#include "palsim/common.hpp"

namespace palsim {

// ---- Special functions --------------------------------------------------

namespace {

constexpr double kSeriesLimit = 15.0;

double i0_series(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 500; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

double i1_series(double x) {
  const double q = 0.25 * x * x;
  double term = 0.5 * x, sum = term;
  for (int k = 1; k < 500; ++k) {
    term *= q / (static_cast<double>(k) * (k + 1));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

// Hankel expansion of I_nu(x) e^-x with mu = 4 nu^2; stops at the smallest term.
double hankel_scaled(double x, double mu) {
  double term = 1.0, sum = 1.0;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k < 200; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (8.0 * k * x);
    if (std::abs(term) >= prev) break;
    sum += term;
    prev = std::abs(term);
    if (prev < 1e-17 * std::abs(sum)) break;
  }
  return sum / std::sqrt(kTwoPi * x);
}

}  // namespace

double bessel_i0e(double x) noexcept {
  x = std::abs(x);
  if (x <= kSeriesLimit) return i0_series(x) * std::exp(-x);
  return hankel_scaled(x, 0.0);
}

double bessel_i1e(double x) noexcept {
  const double ax = std::abs(x);
  const double v = ax <= kSeriesLimit ? i1_series(ax) * std::exp(-ax) : hankel_scaled(ax, 4.0);
  return x < 0 ? -v : v;
}

double bessel_ratio(double kappa) noexcept {
  if (kappa <= 0.0) return 0.0;
  return bessel_i1e(kappa) / bessel_i0e(kappa);
}

double inverse_bessel_ratio(double r) noexcept {
  if (!(r > 0.0)) return 0.0;
  const double r_max = bessel_ratio(kKappaMax);
  if (r >= r_max) return kKappaMax;
  // Best & Fisher starting point.
  double k;
  if (r < 0.53) {
    k = 2 * r + r * r * r + 5 * r * r * r * r * r / 6;
  } else if (r < 0.85) {
    k = -0.4 + 1.39 * r + 0.43 / (1 - r);
  } else {
    k = 1 / (r * r * r - 4 * r * r + 3 * r);
  }
  double lo = 0.0, hi = kKappaMax;
  k = std::clamp(k, lo, hi);
  for (int it = 0; it < 200; ++it) {
    const double a = bessel_ratio(k);
    const double f = a - r;
    if (f > 0) hi = k; else lo = k;
    if (std::abs(f) < 1e-15 || hi - lo < 1e-13 * std::max(1.0, k)) break;
    const double deriv = k > 0 ? 1.0 - a / k - a * a : 0.5;
    double next = deriv > 0 ? k - f / deriv : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    k = next;
  }
  return k;
}

// ---- Densities ------------------------------------------------------------

namespace {

void check_kappa(double kappa) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ValidationError("kappa must be finite and >= 0", "kappa");
}

void check_lambda(double lambda) {
  if (!(std::abs(lambda) <= 1.0)) throw ValidationError("lambda must lie in [-1, 1]", "lambda");
}

double vonmises_log_norm(double kappa) { return std::log(kTwoPi * bessel_i0e(kappa)); }

// Boost 1.74 declares integrate() non-const, so each thread keeps its own.
boost::math::quadrature::tanh_sinh<double>& quadrature() {
  thread_local boost::math::quadrature::tanh_sinh<double> integrator;
  return integrator;
}

double batschelet_log_norm_uncached(double kappa, double lambda) {
  if (kappa == 0.0) return std::log(kTwoPi);
  const double gamma = batschelet_gamma(lambda);
  auto f = [&](double d) {
    const double t = kPi * std::pow(d / kPi, gamma);
    return std::exp(kappa * (std::cos(t) - 1.0));
  };
  // Symmetric integrand; the peak sits at the d = 0 endpoint where tanh-sinh
  // clusters its nodes.
  double err = 0.0;
  const double half = quadrature().integrate(f, 0.0, kPi, 1e-14, &err);
  return std::log(2.0 * half);
}

class NormCache {
public:
  double get(double kappa, double lambda) {
    const std::pair<double, double> key{kappa, lambda};
    {
      std::lock_guard lock(mutex_);
      if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    const double value = batschelet_log_norm_uncached(kappa, lambda);
    std::lock_guard lock(mutex_);
    if (entries_.size() >= kCapacity) entries_.clear();
    entries_.emplace(key, value);
    return value;
  }

private:
  static constexpr std::size_t kCapacity = 1 << 16;
  std::mutex mutex_;
  std::map<std::pair<double, double>, double> entries_;
};

NormCache& norm_cache() {
  static NormCache cache;
  return cache;
}

// Signed difference theta - mu wrapped to (-pi, pi] for theta, mu in (-pi, pi].
inline double fast_wrap(double d) {
  if (d > kPi) return d - kTwoPi;
  if (d <= -kPi) return d + kTwoPi;
  return d;
}

}  // namespace

double vonmises_log_pdf(double theta, double mu, double kappa) {
  check_kappa(kappa);
  return kappa * (std::cos(theta - mu) - 1.0) - vonmises_log_norm(kappa);
}

double vonmises_pdf(double theta, double mu, double kappa) {
  return std::exp(vonmises_log_pdf(theta, mu, kappa));
}

double vonmises_fwhm(double kappa) noexcept {
  if (kappa < std::log(2.0) / 2.0) return kTwoPi;
  return 2.0 * std::acos(std::max(-1.0, 1.0 - std::log(2.0) / kappa));
}

double batschelet_gamma(double lambda) noexcept {
  return (1.0 - kBatscheletC * lambda) / (1.0 + kBatscheletC * lambda);
}

double batschelet_transform(double d, double lambda) noexcept {
  const double t = kPi * std::pow(std::abs(d) / kPi, batschelet_gamma(lambda));
  return d < 0 ? -t : t;
}

double batschelet_log_norm(double kappa, double lambda) {
  check_kappa(kappa);
  check_lambda(lambda);
  return norm_cache().get(kappa, lambda);
}

double batschelet_log_pdf(double theta, double mu, double kappa, double lambda) {
  const double log_norm = batschelet_log_norm(kappa, lambda);
  const double t = batschelet_transform(wrap_angle(theta - mu), lambda);
  return kappa * (std::cos(t) - 1.0) - log_norm;
}

double batschelet_pdf(double theta, double mu, double kappa, double lambda) {
  return std::exp(batschelet_log_pdf(theta, mu, kappa, lambda));
}

double fwhm_numeric(const std::function<double(double)>& pdf, double mu) {
  const double half = 0.5 * pdf(mu);
  auto side = [&](double sign) -> double {
    if (pdf(mu + sign * kPi) >= half) return -1.0;
    double lo = 0.0, hi = kPi;
    while (hi - lo > 1e-10) {
      const double mid = 0.5 * (lo + hi);
      if (pdf(mu + sign * mid) > half) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
  };
  const double right = side(1.0);
  const double left = side(-1.0);
  if (right < 0 || left < 0) return kTwoPi;
  return right + left;
}

// ---- Samplers -------------------------------------------------------------

double sample_vonmises(std::mt19937_64& rng, double mu, double kappa) {
  check_kappa(kappa);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (kappa < 1e-8) return wrap_angle(kTwoPi * unit(rng) - kPi);
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  while (true) {
    const double u1 = unit(rng);
    const double z = std::cos(kPi * u1);
    const double f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    const double u2 = unit(rng);
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
      const double u3 = unit(rng);
      const double theta = (u3 > 0.5 ? 1.0 : -1.0) * std::acos(std::clamp(f, -1.0, 1.0));
      return wrap_angle(mu + theta);
    }
  }
}

double sample_batschelet(std::mt19937_64& rng, double mu, double kappa, double lambda) {
  check_kappa(kappa);
  check_lambda(lambda);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (true) {
    const double d = kPi * (2.0 * unit(rng) - 1.0);
    const double accept = std::exp(kappa * (std::cos(batschelet_transform(d, lambda)) - 1.0));
    if (unit(rng) < accept) return wrap_angle(mu + d);
  }
}

// ---- Fits -----------------------------------------------------------------

double CircularComponent::pdf(double theta) const {
  return family == CircularFamily::von_mises ? vonmises_pdf(theta, mu, kappa)
                                             : batschelet_pdf(theta, mu, kappa, lambda);
}

double CircularFitResult::pdf(double theta) const {
  double p = 0.0;
  for (const auto& c : components) p += c.omega * c.pdf(theta);
  return p;
}

double mixture_log_likelihood(const CircularFitResult& fit, std::span<const double> samples) {
  long double ll = 0.0L;
  for (double th : samples) ll += std::log(fit.pdf(th));
  return static_cast<double>(ll);
}

namespace {

struct Resultant {
  double mean = 0.0;
  double length = 0.0;  // mean resultant length R-bar
};

Resultant weighted_resultant(std::span<const double> cosines, std::span<const double> sines,
                             const double* weights) {
  long double c = 0.0L, s = 0.0L, w = 0.0L;
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    const double wi = weights ? weights[i] : 1.0;
    c += wi * cosines[i];
    s += wi * sines[i];
    w += wi;
  }
  Resultant r;
  if (w <= 0.0L) return r;
  r.mean = std::atan2(static_cast<double>(s), static_cast<double>(c));
  r.length = static_cast<double>(std::sqrt(c * c + s * s) / w);
  r.mean = wrap_angle(r.mean);
  return r;
}

void require_samples(std::span<const double> samples, std::size_t minimum) {
  if (samples.size() < minimum)
    throw ValidationError("need at least " + std::to_string(minimum) + " samples", "samples");
  for (double s : samples)
    if (!std::isfinite(s)) throw ValidationError("samples must be finite", "samples");
}

inline double log_add_exp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

struct VmParams {
  double mu[2];
  double kappa[2];
  double omega;  // weight of component 0
};

struct EmRun {
  VmParams params;
  double ll = -std::numeric_limits<double>::infinity();
  bool converged = false;
  bool kappa_capped = false;
  bool duplicate = false;
  std::vector<double> trace;
};

class VmEm {
public:
  explicit VmEm(std::span<const double> samples) : n_(samples.size()), c_(n_), s_(n_), resp_(n_) {
    for (std::size_t i = 0; i < n_; ++i) {
      c_[i] = std::cos(samples[i]);
      s_[i] = std::sin(samples[i]);
    }
  }

  std::span<const double> cosines() const { return c_; }
  std::span<const double> sines() const { return s_; }

  // Fills responsibilities of component 0 and returns the log-likelihood.
  double e_step(const VmParams& p) {
    const double lw0 = std::log(p.omega), lw1 = std::log1p(-p.omega);
    const double n0 = vonmises_log_norm(p.kappa[0]), n1 = vonmises_log_norm(p.kappa[1]);
    const double cm0 = std::cos(p.mu[0]), sm0 = std::sin(p.mu[0]);
    const double cm1 = std::cos(p.mu[1]), sm1 = std::sin(p.mu[1]);
    long double ll = 0.0L;
    for (std::size_t i = 0; i < n_; ++i) {
      const double l0 = lw0 + p.kappa[0] * (c_[i] * cm0 + s_[i] * sm0 - 1.0) - n0;
      const double l1 = lw1 + p.kappa[1] * (c_[i] * cm1 + s_[i] * sm1 - 1.0) - n1;
      const double total = log_add_exp(l0, l1);
      resp_[i] = std::exp(l0 - total);
      ll += total;
    }
    return static_cast<double>(ll);
  }

  // Runs EM from `p`. When `known` is given, the run is abandoned (returned
  // with duplicate = true) once its parameters sit within a small
  // neighbourhood of an already converged solution.
  EmRun run(VmParams p, const MixtureOptions& opt, const std::vector<VmParams>* known = nullptr) {
    EmRun out;
    double ll = e_step(p);
    out.trace.push_back(ll);
    std::vector<double> other(n_);
    for (int it = 0; it < opt.max_iterations; ++it) {
      if (known && it % 5 == 4 && near_any(p, *known)) {
        out.duplicate = true;
        break;
      }
      for (std::size_t i = 0; i < n_; ++i) other[i] = 1.0 - resp_[i];
      const double w0 = std::accumulate(resp_.begin(), resp_.end(), 0.0L) / static_cast<long double>(n_);
      p.omega = std::clamp(w0, 1e-12, 1.0 - 1e-12);
      const Resultant r0 = weighted_resultant(c_, s_, resp_.data());
      const Resultant r1 = weighted_resultant(c_, s_, other.data());
      p.mu[0] = r0.mean;
      p.mu[1] = r1.mean;
      p.kappa[0] = inverse_bessel_ratio(r0.length);
      p.kappa[1] = inverse_bessel_ratio(r1.length);
      const double next = e_step(p);
      out.trace.push_back(next);
      const double gain = next - ll;
      ll = next;
      if (gain < opt.tolerance) {
        out.converged = true;
        break;
      }
    }
    out.params = p;
    out.ll = ll;
    out.kappa_capped = p.kappa[0] >= kKappaMax || p.kappa[1] >= kKappaMax;
    return out;
  }

private:
  static bool near(const VmParams& a, const VmParams& b, bool swapped) {
    const int j0 = swapped ? 1 : 0, j1 = swapped ? 0 : 1;
    const double wb = swapped ? 1.0 - b.omega : b.omega;
    auto close_kappa = [](double x, double y) { return std::abs(x - y) <= 1e-2 * std::max(1.0, y); };
    return std::abs(wrap_angle(a.mu[0] - b.mu[j0])) < 1e-3 && std::abs(wrap_angle(a.mu[1] - b.mu[j1])) < 1e-3 &&
           close_kappa(a.kappa[0], b.kappa[j0]) && close_kappa(a.kappa[1], b.kappa[j1]) &&
           std::abs(a.omega - wb) < 1e-3;
  }
  static bool near_any(const VmParams& p, const std::vector<VmParams>& known) {
    return std::any_of(known.begin(), known.end(),
                       [&](const VmParams& k) { return near(p, k, false) || near(p, k, true); });
  }

  std::size_t n_;
  std::vector<double> c_, s_, resp_;
};

std::vector<EmRun> em_restarts(std::span<const double> samples, const CircularFitResult& single,
                               const MixtureOptions& opt, int count) {
  VmEm em(samples);
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<EmRun> runs;
  std::vector<VmParams> finished;
  const double mu0 = single.components.front().mu;
  const double k0 = std::max(single.components.front().kappa, 1.0);
  for (int r = 0; r < count; ++r) {
    VmParams p;
    if (r == 0) {
      // Both components at the single fit: EM keeps them tied, so the best
      // restart can never score below the one-component model.
      p = {{mu0, mu0}, {single.components.front().kappa, single.components.front().kappa}, 0.5};
    } else {
      const auto pick = [&] {
        return samples[std::min(samples.size() - 1,
                                static_cast<std::size_t>(unit(rng) * static_cast<double>(samples.size())))];
      };
      p.mu[0] = pick();
      p.mu[1] = pick();
      p.kappa[0] = k0 * (0.5 + 1.5 * unit(rng));
      p.kappa[1] = k0 * (0.5 + 1.5 * unit(rng));
      p.omega = 0.2 + 0.6 * unit(rng);
    }
    EmRun run = em.run(p, opt, &finished);
    if (run.duplicate) continue;
    finished.push_back(run.params);
    runs.push_back(std::move(run));
  }
  return runs;
}

void canonicalize(CircularFitResult& fit) {
  std::sort(fit.components.begin(), fit.components.end(),
            [](const CircularComponent& a, const CircularComponent& b) { return a.mu < b.mu; });
  double total = 0.0;
  for (const auto& c : fit.components) total += c.omega;
  for (auto& c : fit.components) c.omega /= total;
}

}  // namespace

CircularFitResult fit_vonmises(std::span<const double> samples) {
  require_samples(samples, 10);
  std::vector<double> c(samples.size()), s(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    c[i] = std::cos(samples[i]);
    s[i] = std::sin(samples[i]);
  }
  const Resultant r = weighted_resultant(c, s, nullptr);
  CircularFitResult fit;
  CircularComponent comp;
  comp.family = CircularFamily::von_mises;
  comp.mu = r.mean;
  comp.kappa = inverse_bessel_ratio(r.length);
  comp.omega = 1.0;
  comp.fwhm = vonmises_fwhm(comp.kappa);
  fit.kappa_capped = comp.kappa >= kKappaMax;
  fit.components.push_back(comp);
  fit.n_samples = samples.size();
  long double ll = 0.0L;
  const double log_norm = vonmises_log_norm(comp.kappa);
  for (double th : samples) ll += comp.kappa * (std::cos(th - comp.mu) - 1.0) - log_norm;
  fit.log_likelihood = static_cast<double>(ll);
  return fit;
}

CircularFitResult fit_vonmises_mixture2(std::span<const double> samples, const MixtureOptions& options) {
  require_samples(samples, 50);
  const CircularFitResult single = fit_vonmises(samples);
  std::vector<EmRun> runs = em_restarts(samples, single, options, std::max(1, options.restarts));
  const auto best = std::max_element(runs.begin(), runs.end(),
                                     [](const EmRun& a, const EmRun& b) { return a.ll < b.ll; });

  const double w = best->params.omega;
  if (std::min(w, 1.0 - w) < options.min_weight) {
    CircularFitResult fit = single;
    fit.collapsed = true;
    fit.ll_trace = best->trace;
    return fit;
  }

  CircularFitResult fit;
  fit.n_samples = samples.size();
  fit.log_likelihood = best->ll;
  fit.converged = best->converged;
  fit.kappa_capped = best->kappa_capped;
  fit.ll_trace = best->trace;
  for (int k = 0; k < 2; ++k) {
    CircularComponent c;
    c.family = CircularFamily::von_mises;
    c.mu = best->params.mu[k];
    c.kappa = best->params.kappa[k];
    c.omega = k == 0 ? w : 1.0 - w;
    c.fwhm = vonmises_fwhm(c.kappa);
    fit.components.push_back(c);
  }
  canonicalize(fit);
  return fit;
}

namespace {

// Parameter vector for the Batschelet search:
// [mu0, log kappa0, lambda0, mu1, log kappa1, lambda1, logit omega].
struct BatscheletParams {
  double mu[2];
  double kappa[2];
  double lambda[2];
  double omega;
};

BatscheletParams unpack(const std::vector<double>& x) {
  BatscheletParams p;
  for (int k = 0; k < 2; ++k) {
    p.mu[k] = wrap_angle(x[3 * k]);
    p.kappa[k] = std::min(std::exp(x[3 * k + 1]), kKappaMax);
    p.lambda[k] = std::clamp(x[3 * k + 2], -1.0, 1.0);
  }
  p.omega = 1.0 / (1.0 + std::exp(-x[6]));
  return p;
}

double exact_log_likelihood(const BatscheletParams& p, std::span<const double> samples) {
  const double lw[2] = {std::log(p.omega), std::log1p(-p.omega)};
  double ll = 0.0;
  for (double th : samples) {
    const double l0 = lw[0] + batschelet_log_pdf(th, p.mu[0], p.kappa[0], p.lambda[0]);
    const double l1 = lw[1] + batschelet_log_pdf(th, p.mu[1], p.kappa[1], p.lambda[1]);
    const double hi = std::max(l0, l1);
    ll += hi + std::log1p(std::exp(-std::abs(l0 - l1)));
  }
  return ll;
}

class BatscheletObjective {
public:
  explicit BatscheletObjective(std::span<const double> samples) : samples_(samples) {}

  double search_log_likelihood(const BatscheletParams& p) const {
    if (!(p.omega > 0.0 && p.omega < 1.0)) return -std::numeric_limits<double>::infinity();
    kernels::BatscheletPair pair;
    for (int k = 0; k < 2; ++k) {
      pair.mu[k] = p.mu[k];
      pair.kappa[k] = p.kappa[k];
      pair.gamma[k] = batschelet_gamma(p.lambda[k]);
      pair.log_base[k] = (k == 0 ? std::log(p.omega) : std::log1p(-p.omega)) -
                         batschelet_log_norm(p.kappa[k], p.lambda[k]);
    }
    return kernels::batschelet_mixture_ll(samples_.data(), samples_.size(), pair);
  }

private:
  std::span<const double> samples_;
};

}  // namespace

CircularFitResult fit_batschelet_mixture2(std::span<const double> samples,
                                          const BatscheletOptions& options) {
  require_samples(samples, 50);
  const CircularFitResult single = fit_vonmises(samples);
  MixtureOptions em_opt;
  em_opt.seed = options.seed;
  std::vector<EmRun> runs = em_restarts(samples, single, em_opt, std::max(1, options.warm_starts));
  std::sort(runs.begin(), runs.end(), [](const EmRun& a, const EmRun& b) { return a.ll > b.ll; });

  // Distinct local optima only; restarts landing on the same EM solution
  // would repeat the same search.
  std::vector<const EmRun*> starts;
  for (const auto& run : runs) {
    const bool seen = std::any_of(starts.begin(), starts.end(), [&](const EmRun* s) {
      return std::abs(s->ll - run.ll) < 1e-6 * std::max(1.0, std::abs(run.ll));
    });
    // Starts more than a few nats behind the best rarely overtake it.
    if (!seen && run.ll > runs.front().ll - 2.0) starts.push_back(&run);
    if (starts.size() == 3) break;
  }

  const BatscheletObjective objective(samples);
  std::vector<double> best_x;
  double best_ll = -std::numeric_limits<double>::infinity();
  bool converged = false;
  for (const EmRun* start : starts) {
    const VmParams& p = start->params;
    const double omega = std::clamp(p.omega, 1e-6, 1.0 - 1e-6);
    std::vector<double> x0 = {p.mu[0], std::log(std::max(p.kappa[0], 1e-3)), 0.0,
                              p.mu[1], std::log(std::max(p.kappa[1], 1e-3)), 0.0,
                              std::log(omega / (1.0 - omega))};
    const std::vector<double> steps = {0.1, 0.2, 0.3, 0.1, 0.2, 0.3, 0.3};
    auto negative_ll = [&](const std::vector<double>& x) { return -objective.search_log_likelihood(unpack(x)); };
    detail::NelderMeadOptions nm;
    nm.max_evaluations = options.max_evaluations;
    const detail::NelderMeadResult res = detail::nelder_mead(negative_ll, x0, steps, nm);
    // The search objective uses vectorised libm; rank candidates (including
    // the lambda = 0 start itself) on the exact likelihood.
    for (const std::vector<double>* cand : std::array<const std::vector<double>*, 2>{&res.x, &x0}) {
      const double ll = exact_log_likelihood(unpack(*cand), samples);
      if (ll > best_ll) {
        best_ll = ll;
        best_x = *cand;
        converged = res.converged;
      }
    }
  }

  const BatscheletParams p = unpack(best_x);
  CircularFitResult fit;
  fit.n_samples = samples.size();
  fit.log_likelihood = best_ll;
  fit.converged = converged;
  fit.kappa_capped = p.kappa[0] >= kKappaMax || p.kappa[1] >= kKappaMax;
  for (int k = 0; k < 2; ++k) {
    CircularComponent c;
    c.family = CircularFamily::batschelet;
    c.mu = p.mu[k];
    c.kappa = p.kappa[k];
    c.lambda = p.lambda[k];
    c.omega = k == 0 ? p.omega : 1.0 - p.omega;
    c.fwhm = fwhm_numeric([&](double th) { return batschelet_pdf(th, c.mu, c.kappa, c.lambda); }, c.mu);
    fit.components.push_back(c);
  }
  canonicalize(fit);
  return fit;
}

// ---- JSON -----------------------------------------------------------------

std::string family_name(CircularFamily f) {
  return f == CircularFamily::von_mises ? "von_mises" : "batschelet";
}

nlohmann::json to_json(const CircularFitResult& fit) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : fit.components) {
    nlohmann::json j = {{"family", family_name(c.family)}, {"mu", c.mu}, {"kappa", c.kappa},
                        {"omega", c.omega}, {"fwhm", c.fwhm}};
    if (c.family == CircularFamily::batschelet) j["lambda"] = c.lambda;
    comps.push_back(std::move(j));
  }
  return {{"components", comps},
          {"log_likelihood", fit.log_likelihood},
          {"n_samples", fit.n_samples},
          {"converged", fit.converged},
          {"kappa_capped", fit.kappa_capped},
          {"collapsed", fit.collapsed}};
}

CircularFitResult circular_fit_from_json(const nlohmann::json& j) {
  CircularFitResult fit;
  for (const auto& cj : j.at("components")) {
    CircularComponent c;
    const std::string family = cj.at("family").get<std::string>();
    if (family == "von_mises") c.family = CircularFamily::von_mises;
    else if (family == "batschelet") c.family = CircularFamily::batschelet;
    else throw ValidationError("unknown circular family '" + family + "'", "family");
    c.mu = cj.at("mu").get<double>();
    c.kappa = cj.at("kappa").get<double>();
    c.omega = cj.at("omega").get<double>();
    c.fwhm = cj.at("fwhm").get<double>();
    if (cj.contains("lambda")) c.lambda = cj.at("lambda").get<double>();
    fit.components.push_back(c);
  }
  fit.log_likelihood = j.at("log_likelihood").get<double>();
  fit.n_samples = j.at("n_samples").get<std::size_t>();
  fit.converged = j.value("converged", true);
  fit.kappa_capped = j.value("kappa_capped", false);
  fit.collapsed = j.value("collapsed", false);
  return fit;
}

}  // namespace palsim
