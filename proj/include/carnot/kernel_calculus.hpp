#pragma once

// Pseudodifferential-kernel machinery over the fibred model. A kernel P of
// order m is reconstructed from its smooth datum k = (L_Z - m) P by
//   P = int_0^1 (alpha_lambda)_* k  dlambda / lambda^{m+1},      Re m < 0,
// its local trace for Re m < -Q by
//   tr_h P = int_0^1 tr_{lambda h}(k)  dlambda / lambda^{m+Q+1},
// and for larger orders by the incomplete-Beta extension
//   tr_h P = sum_{j<n} h^j tr_0^(j)(k) / (j! (j-m-Q))
//          + h^n/(n-1)! int_0^1 tr_{hu}^(n)(k) u^{n-m-Q-1} B(1-u; n, m+Q-n+1) du,
// which is meromorphic in m with simple poles at -Q, -Q+1, ...  Residues at
// the first pole are extracted by epsilon-extrapolation, and independently
// from the cocycle f(lambda) = int_1^lambda (alpha_t)_* k dt/t^{m+1}.

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "carnot/fibred_model.hpp"
#include "carnot/numerics.hpp"

namespace carnot {

inline cdouble cpow(double base, cdouble e) {
  // base > 0 assumed by the quadratures (nodes are interior)
  return std::exp(e * std::log(base));
}

// ---------------------------------------------------------------------------
// Trace profiles: h -> tr_h(k) with derivatives

class TraceProfile {
 public:
  using ValueFn = std::function<double(double)>;
  using DerivFn = std::function<double(double, int)>;

  TraceProfile() = default;
  TraceProfile(ValueFn value, DerivFn deriv = nullptr, double h_max = 1e9)
      : value_(std::move(value)), deriv_(std::move(deriv)), h_max_(h_max) {}

  double operator()(double h) const { return value_(h); }

  // Analytic derivative when available; otherwise a 6th-order stencil,
  // one-sided toward positive h at the lower end of the validity range.
  double derivative(double h, int j) const {
    if (j == 0) return value_(h);
    if (deriv_) return deriv_(h, j);
    const double lo = h >= 0.0 ? 0.0 : -h_max_;
    return fd_derivative(value_, h, j, lo, h_max_);
  }

  bool has_analytic_derivatives() const { return static_cast<bool>(deriv_); }
  double h_max() const { return h_max_; }

 private:
  ValueFn value_;
  DerivFn deriv_;
  double h_max_ = 1e9;
};

inline TraceProfile trace_profile(const FibredDensityModel& k) {
  FibredDensityModel copy = k;
  return TraceProfile([copy](double h) { return copy.at_origin(h); }, nullptr,
                      k.h_max());
}

// Analytic profile of a separable kernel scale * Z(z) H(h).
inline TraceProfile separable_trace_profile(const ZProfile& zp,
                                            const HProfile& hp,
                                            double scale = 1.0,
                                            double h_max = 1e9) {
  std::vector<double> zero(zp.dim, 0.0);
  const double z0 = zp.val(zero) * scale;
  auto hd = hp.deriv;
  return TraceProfile([z0, hd](double h) { return z0 * hd(h, 0); },
                      [z0, hd](double h, int j) { return z0 * hd(h, j); },
                      h_max);
}

// ---------------------------------------------------------------------------
// Incomplete Beta function B(x; a, b) = int_0^x t^{a-1} (1-t)^{b-1} dt

namespace beta_detail {

// (1 - w^c)/c, stable through c -> 0.
inline cdouble one_minus_pow_over(double w, cdouble c) {
  if (w == 0.0) return 1.0 / c;
  const double lw = std::log(w);
  const cdouble zeta = c * lw;
  if (std::abs(zeta) < 1e-3) {
    // -lw * (1 + zeta/2 + zeta^2/6 + zeta^3/24 + zeta^4/120)
    cdouble acc = 1.0 + zeta * (0.5 + zeta * (1.0 / 6.0 + zeta * (1.0 / 24.0 +
                                              zeta / 120.0)));
    return -lw * acc;
  }
  return (1.0 - std::exp(zeta)) / c;
}

}  // namespace beta_detail

inline cdouble incomplete_beta(double x, cdouble alpha, cdouble beta,
                               double tol = 1e-14) {
  if (!(x >= 0.0 && x <= 1.0))
    throw std::invalid_argument("incomplete_beta: x outside [0,1]");
  if (!(alpha.real() > 0.0))
    throw std::invalid_argument("incomplete_beta: Re(alpha) must be positive");
  if (x == 1.0 && !(beta.real() > 0.0))
    throw std::invalid_argument("incomplete_beta: x = 1 needs Re(beta) > 0");
  if (x == 0.0) return 0.0;

  const bool integer_alpha = alpha.imag() == 0.0 &&
                             std::abs(alpha.real() - std::round(alpha.real())) <
                                 1e-12 &&
                             alpha.real() <= 40.5;
  if (integer_alpha && x >= 0.5) {
    // substitute v = 1-t and expand (1-v)^{n-1}; the powers w^{beta+j} are
    // well separated in magnitude, so no cancellation for w <= 1/2
    const int n = (int)std::llround(alpha.real());
    const double w = 1.0 - x;
    cdouble acc = 0.0;
    double binom = 1.0;
    for (int j = 0; j < n; ++j) {
      if (j > 0) binom = binom * (n - j) / j;
      const cdouble term =
          binom * beta_detail::one_minus_pow_over(w, beta + (double)j);
      acc += (j % 2 == 0) ? term : -term;
    }
    return acc;
  }

  if (x == 1.0 && alpha.imag() == 0.0 && beta.imag() == 0.0) {
    const double a = alpha.real(), b = beta.real();
    return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
  }

  if (x < 1.0) {
    // t = x v^q lifts the t^{alpha-1} endpoint; 1 - t stays >= 1 - x > 0.
    const int q =
        std::min(40, std::max(1, (int)std::ceil(3.0 / alpha.real())));
    auto f = [&](double v) {
      const double t = x * std::pow(v, q);
      return (double)q * cpow(x, alpha) * cpow(v, (double)q * alpha - 1.0) *
             cpow(1.0 - t, beta - 1.0);
    };
    return adaptive_gauss<cdouble>(f, 0.0, 1.0, tol).value;
  }

  // x = 1 with complex parameters: split and lift both endpoints.
  auto left = [&](double v) {
    const double t = 0.5 * v * v * v;
    return 1.5 * v * v * cpow(t, alpha - 1.0) * cpow(1.0 - t, beta - 1.0);
  };
  auto right = [&](double v) {
    const double u = 0.5 * v * v * v;  // u = 1 - t
    return 1.5 * v * v * cpow(1.0 - u, alpha - 1.0) * cpow(u, beta - 1.0);
  };
  return adaptive_gauss<cdouble>(left, 0.0, 1.0, tol).value +
         adaptive_gauss<cdouble>(right, 0.0, 1.0, tol).value;
}

// ---------------------------------------------------------------------------
// Kernel reconstruction

struct KernelValue {
  cdouble value{};
  double abs_error = 0.0;
  bool singular_at_origin = false;
  bool converged = true;
};

class KernelModel {
 public:
  KernelModel(FibredDensityModel source, cdouble order)
      : source_(std::move(source)), order_(order), d_H_(source_.d_H()) {
    if (!(order.real() < 0.0))
      throw std::invalid_argument("reconstruct_kernel: Re(m) must be negative");
  }

  const FibredDensityModel& source() const { return source_; }
  cdouble order() const { return order_; }
  int d_H() const { return d_H_; }

  // Smallest lambda whose dilation keeps z inside the support; the integrand
  // vanishes below it.
  double support_cutoff(std::span<const double> z) const {
    const auto& w = source_.algebra().weights;
    const double R = source_.support_radius();
    double cut = 0.0;
    for (int i = 0; i < source_.dim(); ++i)
      cut = std::max(cut, std::pow(std::abs(z[i]) / R, 1.0 / w[i]));
    return cut;
  }

  KernelValue evaluate(std::span<const double> z, double h,
                       double tol = 1e-12) const {
    const cdouble m = order_;
    const double cut = support_cutoff(z);
    if (cut >= 1.0) return {0.0, 0.0, false};
    if (cut > 0.0) {
      // proper integral on [cut, 1]; u = -log(lambda), and the pushforward
      // value already carries the lambda^{-Q} density factor
      const double U = -std::log(cut);
      auto f = [&](double u) {
        return std::exp(u * m) *
               pushforward_value(source_, std::exp(-u), z, h);
      };
      auto r = adaptive_gauss<cdouble>(f, 0.0, U, tol);
      return {r.value, r.abs_error, false, r.converged};
    }
    // z = 0: the trace-class regime only
    if (!(m.real() + d_H_ < 0.0)) return {0.0, 0.0, true};
    const double k0 = source_.at_origin(0.0);
    KernelValue out;
    out.value = k0 / (-m - (double)d_H_);
    if (h != 0.0) {
      auto f = [&](double u) {
        return std::exp(u * (m + (double)d_H_)) *
               (source_.at_origin(std::exp(-u) * h) - k0);
      };
      auto r = adaptive_gauss<cdouble>(f, 0.0, 45.0, tol);
      out.value += r.value;
      out.abs_error = r.abs_error;
      out.converged = r.converged;
    }
    return out;
  }

 private:
  FibredDensityModel source_;
  cdouble order_;
  int d_H_;
};

inline KernelModel reconstruct_kernel(const FibredDensityModel& k, cdouble m) {
  return KernelModel(k, m);
}

// ---------------------------------------------------------------------------
// Cocycle f(lambda) = int_1^lambda (alpha_t)_* k dt / t^{m+1}

inline FibredDensityModel cocycle(const FibredDensityModel& k, double m,
                                  double lambda, double tol = 1e-12) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("cocycle: lambda must be positive");
  FibredDensityModel src = k;
  const double U = std::log(lambda);
  auto eval = [src, m, U, tol](std::span<const double> z, double h) {
    // t = e^u; the pushforward value carries t^{-Q} already
    auto f = [&](double u) {
      return std::exp(-u * m) * pushforward_value(src, std::exp(u), z, h);
    };
    auto r = adaptive_gauss<double>(f, 0.0, U, tol);
    if (!r.converged)
      throw NonConvergence("cocycle: quadrature failed to converge");
    return r.value;
  };
  const double stretch =
      lambda > 1.0 ? ipow(lambda, k.algebra().weights.back()) : 1.0;
  return FibredDensityModel(k.algebra(), std::move(eval),
                            k.support_radius() * stretch,
                            k.h_max() / std::max(1.0, lambda));
}

// ---------------------------------------------------------------------------
// Local traces of kernels

struct TraceValue {
  cdouble value{};
  double abs_error = 0.0;
};

// tr_h(P) by the defining integral; requires Re(m) < -Q.
inline TraceValue local_trace_direct(const TraceProfile& k, cdouble m, double h,
                                     int d_H, double tol = 1e-12) {
  if (!(m.real() + d_H < 0.0))
    throw std::invalid_argument(
        "local_trace_direct: divergent, requires Re(m) < -d_H");
  const cdouble expo = -m - (double)d_H - 1.0;
  auto f = [&](double u) { return k(u * h) * cpow(u, expo); };
  auto r = integrate_power_endpoint<cdouble>(f, expo.real(), tol);
  return {r.value, r.abs_error};
}

// Diagnostic thrown when m sits on one of the simple poles -Q, ..., -Q+n-1.
struct PoleDiagnostic : std::runtime_error {
  int j;
  cdouble coefficient;  // tr_h(P) ~ coefficient / (j - m - d_H) near the pole
  PoleDiagnostic(int j_, cdouble coeff)
      : std::runtime_error("local_trace_extended: order at a simple pole j=" +
                           std::to_string(j_)),
        j(j_),
        coefficient(coeff) {}
};

inline constexpr double kPoleWindow = 1e-6;

// Incomplete-Beta extension of tr_h; meromorphic continuation to
// Re(m) < n - Q away from the pole set.
inline TraceValue local_trace_extended(const TraceProfile& k, cdouble m,
                                       double h, int d_H, int n,
                                       double tol = 1e-12) {
  if (n < 1) throw std::invalid_argument("local_trace_extended: n must be >= 1");
  if (!(m.real() < n - d_H))
    throw std::invalid_argument(
        "local_trace_extended: requires Re(m) < n - d_H");
  for (int j = 0; j < n; ++j) {
    if (std::abs(m - cdouble(j - d_H, 0.0)) < kPoleWindow) {
      double fact = 1.0;
      for (int i = 2; i <= j; ++i) fact *= i;
      throw PoleDiagnostic(j, ipow(h, j) / fact * k.derivative(0.0, j));
    }
  }

  TraceValue out;
  double fact = 1.0;
  for (int j = 0; j < n; ++j) {
    if (j > 1) fact *= j;
    out.value += ipow(h, j) / fact * k.derivative(0.0, j) /
                 ((double)j - m - (double)d_H);
  }
  if (h == 0.0) return out;

  const cdouble expo = (double)n - m - (double)d_H - 1.0;
  const cdouble beta_b = m + (double)d_H - (double)n + 1.0;
  auto f = [&](double u) {
    return k.derivative(h * u, n) * cpow(u, expo) *
           incomplete_beta(1.0 - u, (double)n, beta_b);
  };
  auto r = integrate_power_endpoint<cdouble>(f, expo.real(), tol);
  double fact_n1 = 1.0;
  for (int i = 2; i <= n - 1; ++i) fact_n1 *= i;
  out.value += ipow(h, n) / fact_n1 * r.value;
  out.abs_error = std::abs(ipow(h, n) / fact_n1) * r.abs_error;
  return out;
}

// ---------------------------------------------------------------------------
// Residues

struct ResidueEstimate {
  cdouble value{};
  double error = 0.0;
  bool converged = true;
  std::array<double, 3> eps{};
  std::array<cdouble, 3> samples{};
};

// Residue of tr_h(P(s)) at s0, for the family of order mu(s) = -d_H +
// mu_slope (s - s0) with (L_Z - mu(s)) P(s) = k fixed. Evaluates the
// extension at s0 + eps and Richardson-extrapolates eps * tr_h.
inline ResidueEstimate trace_residue_at_pole(const TraceProfile& k, int d_H,
                                             double h, double mu_slope,
                                             int n = 3, double tol = 1e-12,
                                             double flag_tol = 1e-4) {
  if (mu_slope == 0.0)
    throw std::invalid_argument("trace_residue_at_pole: mu_slope must be nonzero");
  ResidueEstimate out;
  out.eps = {1e-1, 1e-2, 1e-3};
  for (int i = 0; i < 3; ++i) {
    const cdouble m = cdouble(-d_H + mu_slope * out.eps[i], 0.0);
    out.samples[i] =
        out.eps[i] * local_trace_extended(k, m, h, d_H, n, tol).value;
  }
  auto ex = extrapolate_to_zero<cdouble>(
      std::span<const double>(out.eps.data(), 3),
      std::span<const cdouble>(out.samples.data(), 3));
  out.value = ex.value;
  out.error = ex.error;
  out.converged = ex.error <= flag_tol * std::max(1.0, std::abs(ex.value));
  return out;
}

struct CocycleResidue {
  double value = 0.0;
  double max_deviation = 0.0;
  bool constant = true;
  std::vector<double> samples;
};

// res(A) = tr_0 f(lambda) / log(lambda), averaged over the sample lambdas;
// lambda-independence is the diagnostic.
inline CocycleResidue residue_from_cocycle(const FibredDensityModel& k,
                                           std::span<const double> lambdas,
                                           double tol = 1e-6,
                                           double quad_tol = 1e-12) {
  if (lambdas.empty())
    throw std::invalid_argument("residue_from_cocycle: no lambda samples");
  CocycleResidue out;
  const int q = k.d_H();
  for (double lam : lambdas) {
    if (!(lam > 0.0) || lam == 1.0)
      throw std::invalid_argument(
          "residue_from_cocycle: lambda samples must be positive and != 1");
    const double tr0 = local_trace(cocycle(k, -(double)q, lam, quad_tol), 0.0);
    out.samples.push_back(tr0 / std::log(lam));
  }
  double mean = 0.0;
  for (double v : out.samples) mean += v;
  mean /= (double)out.samples.size();
  out.value = mean;
  for (double v : out.samples)
    out.max_deviation = std::max(out.max_deviation, std::abs(v - mean));
  out.constant = out.max_deviation <= tol;
  return out;
}

}  // namespace carnot
