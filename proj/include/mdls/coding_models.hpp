#pragma once
// Probability models, quantizers and ideal codelength functions.
//
// Every codelength in this library is expressed in bits (base-2). Continuous
// models return -log2 of a density; discretized models return -log2 of the
// probability mass of a quantization bin.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace mdls {

using Bits = double;

inline constexpr double kLn2 = 0.69314718055994530942;
inline constexpr double kLog2e = 1.44269504088896340736;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kSqrtPi = 1.77245385090551602730;

/// Probabilities fed to logarithms are clamped to this range.
inline constexpr double kProbFloor = 1e-9;
/// Smallest Laplacian scale used for the residual model (signal units).
inline constexpr double kThetaErrorFloor = 1e-3;

struct QuantizationStep {
  double delta;

  explicit QuantizationStep(double d) : delta(d) {
    if (!(d > 0.0) || !std::isfinite(d))
      throw std::invalid_argument("quantization step must be positive");
  }
};

struct MOEParams {
  double kappa = 3.0;
  double beta = 50.0;
};

struct LGParams {
  double sigma2 = 0.0;
  double theta = 0.0;
};

struct MOEGParams {
  double sigma2 = 0.0;
  double kappa = 3.0;
  double beta = 1.0;
};

inline void validate(const MOEParams& p) {
  if (!(p.kappa > 0.0) || !(p.beta > 0.0)) throw std::invalid_argument("MOE parameters must be positive");
}
inline void validate(const LGParams& p) {
  if (p.sigma2 < 0.0 || p.theta < 0.0 || (p.sigma2 == 0.0 && p.theta == 0.0))
    throw std::invalid_argument("LG parameters need sigma2 >= 0, theta >= 0, one of them positive");
}
inline void validate(const MOEGParams& p) {
  if (p.sigma2 < 0.0 || !(p.kappa > 0.0) || !(p.beta > 0.0))
    throw std::invalid_argument("MOEG parameters out of range");
}

// ---------------------------------------------------------------------------
// Quantization

/// Round-half-away-from-zero to a multiple of delta.
inline double quantize(double x, QuantizationStep step) { return step.delta * std::round(x / step.delta); }

/// Bin index of x for step delta, same rounding rule as quantize().
inline std::int64_t quantize_index(double x, double delta) {
  const double t = x / delta;
  return static_cast<std::int64_t>(t >= 0.0 ? std::floor(t + 0.5) : -std::floor(-t + 0.5));
}

// ---------------------------------------------------------------------------
// Small numeric helpers

inline double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

inline double log2_binomial(std::int64_t n, std::int64_t k) {
  return (std::lgamma(double(n) + 1.0) - std::lgamma(double(k) + 1.0) - std::lgamma(double(n - k) + 1.0)) * kLog2e;
}

/// Scaled complementary error function exp(x^2) erfc(x), x >= 0.
inline double erfcx(double x) {
  if (x < 10.0) return std::exp(x * x) * std::erfc(x);
  // asymptotic series, 12 terms are enough beyond x = 10
  const double inv2x2 = 1.0 / (2.0 * x * x);
  double term = 1.0, sum = 1.0;
  for (int n = 1; n <= 12; ++n) {
    term *= -(2.0 * n - 1.0) * inv2x2;
    sum += term;
  }
  return sum / (x * kSqrtPi);
}

// ---------------------------------------------------------------------------
// Support, sign and magnitude codes

/// Enumerative two-part code for a support of k ones among p positions.
/// The size field ranges over {0..p}, hence log2(p+1).
inline Bits support_codelength(std::int64_t p, std::int64_t k) {
  if (p < 1) throw std::invalid_argument("support_codelength: p must be >= 1");
  if (k < 0 || k > p) throw std::invalid_argument("support_codelength: k out of range");
  return std::log2(double(p) + 1.0) + log2_binomial(p, k);
}

/// Ideal codelength of the Mixture-of-Exponentials density at v >= 0.
inline Bits moe_codelength(double v, const MOEParams& params) {
  validate(params);
  if (v < 0.0) throw std::invalid_argument("moe_codelength: v must be nonnegative");
  return -std::log2(params.kappa) - params.kappa * std::log2(params.beta) +
         (params.kappa + 1.0) * std::log2(v + params.beta);
}

/// Codelength of the magnitude bin [j*delta, (j+1)*delta) under MOE.
inline Bits moe_bin_codelength(std::int64_t j, double delta, const MOEParams& params) {
  const double lo = double(j) * delta + params.beta;
  const double hi = lo + delta;
  // S(v) = (beta / (v + beta))^kappa
  const double log_s_lo = params.kappa * std::log(params.beta / lo);
  const double log_ratio = params.kappa * std::log(lo / hi);
  return -(log_s_lo + std::log(-std::expm1(log_ratio))) * kLog2e;
}

/// Codelength of the magnitude bin [j*delta, (j+1)*delta) of an exponential
/// with mean theta (geometric distribution over bins).
inline Bits exponential_bin_codelength(std::int64_t j, double delta, double theta) {
  const double r = delta / theta;
  return double(j) * r * kLog2e - std::log2(-std::expm1(-r));
}

/// Krichevsky-Trofimov estimate of P(1) for the j-th symbol given n1 ones
/// among the previous j-1 symbols.
inline double kt_probability(std::int64_t n1, std::int64_t j) {
  if (j < 1 || n1 < 0) throw std::invalid_argument("kt_probability: need j >= 1, n1 >= 0");
  if (n1 >= j) throw std::invalid_argument("kt_probability: n1 must be < j");
  return (double(n1) + 0.5) / double(j);
}

inline double clamp_probability(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

/// Maximum-likelihood mean of max(|a| - delta, 0) over the observed values.
/// Returns the floor delta/100 when the estimate degenerates to zero and
/// NaN when there is nothing to estimate from (caller falls back to MOE).
inline double exponential_ml_theta(std::span<const double> values, QuantizationStep delta) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (double a : values) sum += std::max(std::abs(a) - delta.delta, 0.0);
  return std::max(sum / double(values.size()), delta.delta / 100.0);
}

/// theta_e = 0.5 sqrt(max(var - sigma2, 0)), var = residual_sq_sum / count.
inline double lg_theta_estimate(double residual_sq_sum, std::int64_t count, double sigma2) {
  if (count < 1) throw std::invalid_argument("lg_theta_estimate: count must be >= 1");
  if (sigma2 < 0.0) throw std::invalid_argument("lg_theta_estimate: sigma2 must be >= 0");
  return 0.5 * std::sqrt(std::max(residual_sq_sum / double(count) - sigma2, 0.0));
}

/// Rissanen's universal code for positive integers (log-star). The real
/// overload takes integers beyond the int64 range (given as doubles).
inline Bits integer_universal_codelength_real(double k) {
  if (!(k >= 1.0)) throw std::invalid_argument("integer_universal_codelength: k must be >= 1");
  constexpr double c0 = 2.865064;
  double bits = std::log2(c0);
  double t = std::log2(k);
  while (t > 0.0) {
    bits += t;
    t = std::log2(t);
  }
  return bits;
}

inline Bits integer_universal_codelength(std::int64_t k) {
  if (k < 1) throw std::invalid_argument("integer_universal_codelength: k must be >= 1");
  constexpr double c0 = 2.865064;
  double bits = std::log2(c0);
  double t = std::log2(double(k));
  while (t > 0.0) {
    bits += t;
    t = std::log2(t);
  }
  return bits;
}

/// Discretized zero-mean Laplacian with scale theta, bins centred at k*delta.
inline Bits laplace_bin_codelength(std::int64_t k, double delta, double theta) {
  const double r = delta / theta;
  if (k == 0) return -std::log2(std::max(-std::expm1(-0.5 * r), 1e-300));
  // P(k) = exp(-|k| r) sinh(r/2)
  const double log_sinh = 0.5 * r + std::log1p(-std::exp(-r)) - kLn2;
  return (double(std::abs(k)) * r - log_sinh) * kLog2e;
}

// ---------------------------------------------------------------------------
// LG: Laplacian (model deviation) convolved with Gaussian (noise)

/// Natural log of the LG density. Handles the pure Gaussian (theta = 0) and
/// pure Laplacian (sigma2 = 0) limits.
inline double lg_log_density(double e, const LGParams& params) {
  const double sigma2 = params.sigma2, theta = params.theta;
  if (theta <= 0.0) return -0.5 * e * e / sigma2 - 0.5 * std::log(2.0 * M_PI * sigma2);
  if (sigma2 <= 0.0) return -std::abs(e) / theta - std::log(2.0 * theta);
  const double sigma = std::sqrt(sigma2);
  const double shift = sigma2 / theta;
  const double a1 = (e + shift) / (kSqrt2 * sigma);
  const double a2 = (-e + shift) / (kSqrt2 * sigma);
  const double half_ratio = 0.5 * sigma2 / (theta * theta);
  const double gauss = -0.5 * e * e / sigma2;  // s - a^2 + half_ratio, same for both terms
  const double u1 = a1 > 0.0 ? gauss + std::log(erfcx(a1)) : e / theta + half_ratio + std::log(std::erfc(a1));
  const double u2 = a2 > 0.0 ? gauss + std::log(erfcx(a2)) : -e / theta + half_ratio + std::log(std::erfc(a2));
  return -std::log(4.0 * theta) + log_add_exp(u1, u2);
}

/// -log2 of the LG density.
inline Bits lg_neg_log_density(double e, const LGParams& params) {
  validate(params);
  return -lg_log_density(e, params) * kLog2e;
}

/// Derivative of lg_neg_log_density with respect to e (the influence function).
inline double lg_neg_log_density_derivative(double e, const LGParams& params) {
  const double sigma2 = params.sigma2, theta = params.theta;
  if (theta <= 0.0) return e / sigma2 * kLog2e;
  if (sigma2 <= 0.0) return (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0)) / theta * kLog2e;
  const double sigma = std::sqrt(sigma2);
  const double shift = sigma2 / theta;
  const double a1 = (e + shift) / (kSqrt2 * sigma);
  const double a2 = (-e + shift) / (kSqrt2 * sigma);
  const double half_ratio = 0.5 * sigma2 / (theta * theta);
  const double gauss = -0.5 * e * e / sigma2;
  const double u1 = a1 > 0.0 ? gauss + std::log(erfcx(a1)) : e / theta + half_ratio + std::log(std::erfc(a1));
  const double u2 = a2 > 0.0 ? gauss + std::log(erfcx(a2)) : -e / theta + half_ratio + std::log(std::erfc(a2));
  // p' / p = (T1 - T2) / (theta (T1 + T2))
  return -std::tanh(0.5 * (u1 - u2)) / theta * kLog2e;
}

inline double lg_nominal_scale(const LGParams& p) { return std::sqrt(p.sigma2 + 2.0 * p.theta * p.theta); }

// ---------------------------------------------------------------------------
// Discretization

/// -log2 of the probability of the bin [x - delta/2, x + delta/2] under a
/// continuous density given by its natural log. Exact bin integration is
/// used when delta >= 0.5 * nominal_scale, otherwise -log2(p(x) delta)
/// clamped at zero.
template <class LogDensity>
Bits discretized_codelength(const LogDensity& log_density, double x, QuantizationStep step, double nominal_scale) {
  const double delta = step.delta;
  const double log_px = log_density(x);
  if (delta < 0.5 * nominal_scale) return std::max(0.0, -(log_px + std::log(delta)) * kLog2e);
  using boost::math::quadrature::gauss_kronrod;
  auto ratio = [&](double t) { return std::exp(log_density(t) - log_px); };
  const double lo = x - 0.5 * delta, hi = x + 0.5 * delta;
  double mass;
  if (lo < 0.0 && hi > 0.0) {
    // split at the (possible) kink of Laplacian-like densities
    mass = gauss_kronrod<double, 31>::integrate(ratio, lo, 0.0, 12, 1e-12) +
           gauss_kronrod<double, 31>::integrate(ratio, 0.0, hi, 12, 1e-12);
  } else {
    mass = gauss_kronrod<double, 31>::integrate(ratio, lo, hi, 12, 1e-12);
  }
  return std::max(0.0, -(log_px + std::log(mass)) * kLog2e);
}

// ---------------------------------------------------------------------------
// MOEG: Gamma mixture (over the Laplacian scale) of LG densities

namespace detail {

inline double log_gamma_density(double theta, double kappa, double beta) {
  return (kappa - 1.0) * std::log(theta) + kappa * std::log(beta) - beta * theta - std::lgamma(kappa);
}

/// Integrates exp(log_f(theta)) over (0, inf), where log_f is unimodal in
/// log(theta); returns the log of the integral.
template <class LogF>
double log_integrate_unimodal(const LogF& log_f) {
  // golden-section search for the peak in s = log(theta)
  double lo = -30.0, hi = 30.0;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = log_f(std::exp(x1)), f2 = log_f(std::exp(x2));
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    if (f1 < f2) {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + g * (hi - lo); f2 = log_f(std::exp(x2));
    } else {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - g * (hi - lo); f1 = log_f(std::exp(x1));
    }
  }
  const double s_peak = 0.5 * (lo + hi);
  const double peak = log_f(std::exp(s_peak));
  using boost::math::quadrature::gauss_kronrod;
  // integrate over s = log(theta): d theta = theta ds
  auto integrand = [&](double s) {
    const double th = std::exp(s);
    return std::exp(log_f(th) - peak + s);
  };
  double total = 0.0;
  // pieces of width 4 around the peak until contributions vanish
  for (int dir = -1; dir <= 1; dir += 2) {
    double a = s_peak;
    for (int piece = 0; piece < 40; ++piece) {
      const double b = a + dir * 2.0;
      const double part = dir > 0 ? gauss_kronrod<double, 61>::integrate(integrand, a, b, 6, 1e-10)
                                  : gauss_kronrod<double, 61>::integrate(integrand, b, a, 6, 1e-10);
      total += part;
      a = b;
      if (std::abs(part) < 1e-17 * std::abs(total)) break;
    }
  }
  return peak + std::log(total);
}

}  // namespace detail

/// -log2 of the MOEG density, evaluated by quadrature over the Laplacian scale.
inline Bits moeg_codelength_exact(double e, const MOEGParams& params) {
  validate(params);
  auto log_f = [&](double theta) {
    return detail::log_gamma_density(theta, params.kappa, params.beta) +
           lg_log_density(e, LGParams{params.sigma2, theta});
  };
  return -detail::log_integrate_unimodal(log_f) * kLog2e;
}

/// Derivative of moeg_codelength_exact with respect to e.
inline double moeg_codelength_derivative_exact(double e, const MOEGParams& params) {
  validate(params);
  auto log_f = [&](double theta) {
    return detail::log_gamma_density(theta, params.kappa, params.beta) +
           lg_log_density(e, LGParams{params.sigma2, theta});
  };
  if (e == 0.0) return 0.0;
  const double log_q = detail::log_integrate_unimodal(log_f);
  // Q'(e) = int Gamma p_LG * (-ln2 * f_LG'(e)) dtheta; f' = -Q'/(Q ln2).
  // f_LG'(e; theta) has the sign of e for every theta.
  auto log_weighted_f = [&](double theta) {
    return log_f(theta) + std::log(std::abs(lg_neg_log_density_derivative(e, LGParams{params.sigma2, theta})));
  };
  const double log_weighted = detail::log_integrate_unimodal(log_weighted_f);
  return (e > 0.0 ? 1.0 : -1.0) * std::exp(log_weighted - log_q);
}

/// Cubic-Hermite lookup table of the continuous MOEG codelength in |e| on a
/// grid that is uniform near zero and geometric further out.
class MoegTable {
 public:
  explicit MoegTable(const MOEGParams& params, double e_max = 1e6) : params_(params) {
    validate(params);
    scale_ = std::max({std::sqrt(params.sigma2), 1.0 / params.beta, 1e-3});
    linear_step_ = scale_ / 64.0;
    e_max_ = e_max;
    for (int i = 0; i <= 64; ++i) nodes_.push_back(i * linear_step_);
    double x = scale_;
    while (x < e_max) {
      x *= kRatio;
      nodes_.push_back(x);
    }
    values_.resize(nodes_.size());
    slopes_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      values_[i] = moeg_codelength_exact(nodes_[i], params);
      slopes_[i] = moeg_codelength_derivative_exact(nodes_[i], params);
    }
  }

  const MOEGParams& params() const { return params_; }

  Bits operator()(double e) const {
    const double x = std::abs(e);
    if (x >= nodes_.back()) return moeg_codelength_exact(x, params_);
    const std::size_t i = locate(x);
    const double x0 = nodes_[i], x1 = nodes_[i + 1], h = x1 - x0;
    const double t = (x - x0) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * values_[i] + (t3 - 2 * t2 + t) * h * slopes_[i] +
           (-2 * t3 + 3 * t2) * values_[i + 1] + (t3 - t2) * h * slopes_[i + 1];
  }

  double derivative(double e) const {
    const double x = std::abs(e);
    const double sign = e < 0.0 ? -1.0 : 1.0;
    if (x >= nodes_.back()) return sign * moeg_codelength_derivative_exact(x, params_);
    const std::size_t i = locate(x);
    const double x0 = nodes_[i], x1 = nodes_[i + 1], h = x1 - x0;
    const double t = (x - x0) / h;
    const double t2 = t * t;
    const double d = ((6 * t2 - 6 * t) * values_[i] + (3 * t2 - 4 * t + 1) * h * slopes_[i] +
                      (-6 * t2 + 6 * t) * values_[i + 1] + (3 * t2 - 2 * t) * h * slopes_[i + 1]) /
                     h;
    return sign * d;
  }

 private:
  static constexpr double kRatio = 1.0218971486541166;  // 2^(1/32)

  std::size_t locate(double x) const {
    if (x < scale_) return std::min<std::size_t>(static_cast<std::size_t>(x / linear_step_), 63);
    const std::size_t i = 64 + static_cast<std::size_t>(std::log(x / scale_) / std::log(kRatio));
    return std::min(i, nodes_.size() - 2);
  }

  MOEGParams params_;
  double scale_ = 1.0, linear_step_ = 1.0, e_max_ = 1e6;
  std::vector<double> nodes_, values_, slopes_;
};

/// Continuous MOEG codelength; convenience wrapper over the exact quadrature.
inline Bits moeg_codelength(double e, const MOEGParams& params) { return moeg_codelength_exact(e, params); }

inline double moeg_nominal_scale(const MOEGParams& p) {
  return std::sqrt(p.sigma2 + 2.0 * p.kappa * (p.kappa + 1.0) / (p.beta * p.beta));
}

// ---------------------------------------------------------------------------
// Residual bin tables used in the coding inner loop

/// Codelengths of residual bins k*delta for |k| <= K, symmetric in k. Beyond
/// the table the continuous approximation (with a Laplacian tail correction
/// for LG) is evaluated directly.
class ResidualCodeTable {
 public:
  static constexpr int kDefaultHalfWidth = 1024;

  static std::shared_ptr<const ResidualCodeTable> lg(const LGParams& params, QuantizationStep step,
                                                     int half_width = kDefaultHalfWidth) {
    validate(params);
    auto t = std::shared_ptr<ResidualCodeTable>(new ResidualCodeTable(step.delta));
    const double scale = lg_nominal_scale(params);
    auto log_density = [params](double x) { return lg_log_density(x, params); };
    t->bits_.resize(half_width + 1);
    for (int k = 0; k <= half_width; ++k) t->bits_[k] = discretized_codelength(log_density, k * step.delta, step, scale);
    t->tail_ = [params, d = step.delta](double x) {
      const double base = -lg_log_density(x, params) * kLog2e;
      if (params.theta > 0.0) {
        const double r = d / params.theta;
        return base - (0.5 * r + std::log1p(-std::exp(-r)) + std::log(params.theta)) * kLog2e;
      }
      return base - std::log2(d);
    };
    return t;
  }

  static std::shared_ptr<const ResidualCodeTable> moeg(const MOEGParams& params, QuantizationStep step,
                                                       int half_width = kDefaultHalfWidth) {
    auto table = std::make_shared<MoegTable>(params);
    auto t = std::shared_ptr<ResidualCodeTable>(new ResidualCodeTable(step.delta));
    const double scale = moeg_nominal_scale(params);
    auto log_density = [table](double x) { return -(*table)(x)*kLn2; };
    t->bits_.resize(half_width + 1);
    for (int k = 0; k <= half_width; ++k) t->bits_[k] = discretized_codelength(log_density, k * step.delta, step, scale);
    t->tail_ = [table, d = step.delta](double x) { return std::max(0.0, (*table)(x)-std::log2(d)); };
    return t;
  }

  double delta() const { return delta_; }
  int half_width() const { return static_cast<int>(bits_.size()) - 1; }

  Bits bits(std::int64_t k) const {
    const std::uint64_t a = static_cast<std::uint64_t>(k < 0 ? -k : k);
    if (a < bits_.size()) return bits_[a];
    return tail_(double(a) * delta_);
  }

  Bits bits_for(double e) const { return bits(quantize_index(e, delta_)); }

 private:
  explicit ResidualCodeTable(double delta) : delta_(delta) {}
  double delta_;
  std::vector<double> bits_;
  std::function<double(double)> tail_;
};

}  // namespace mdls
