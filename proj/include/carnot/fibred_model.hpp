#pragma once

// Single-chart model of r-fibred densities on the deformation groupoid of a
// graded group: scalar coefficient functions f(z, h) against the Lebesgue
// density of an adapted basis, with the zoom pushforward
//   (alpha_lambda)_* f (z, h) = lambda^{-Q} f(delta_{1/lambda} z, lambda h),
// the local trace tr_h f = f(0, h) and the zoom generator
//   (L_Z f)(z, h) = -Q f - sum_i w_i z_i d_i f + h d_h f,
// where Q is the homogeneous dimension.

#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "carnot/graded_lie.hpp"
#include "carnot/numerics.hpp"

namespace carnot {

inline constexpr int kMaxModelDim = 16;

inline double ipow(double base, int e) {
  if (e < 0) return 1.0 / ipow(base, -e);
  double r = 1.0;
  while (e) {
    if (e & 1) r *= base;
    base *= base;
    e >>= 1;
  }
  return r;
}

struct Partials {
  std::vector<double> dz;
  double dh = 0.0;
};

class FibredDensityModel {
 public:
  using Evaluator = std::function<double(std::span<const double>, double)>;
  using PartialEvaluator =
      std::function<Partials(std::span<const double>, double)>;

  FibredDensityModel() = default;
  FibredDensityModel(GradedLieAlgebra<double> algebra, Evaluator f,
                     double support_radius, double h_max,
                     PartialEvaluator df = nullptr)
      : algebra_(std::move(algebra)),
        f_(std::move(f)),
        df_(std::move(df)),
        support_radius_(support_radius),
        h_max_(h_max) {
    if (algebra_.dim > kMaxModelDim)
      throw std::invalid_argument("model dimension too large");
    if (!(support_radius_ > 0.0) || !(h_max_ > 0.0))
      throw std::invalid_argument("support_radius and h_max must be positive");
  }

  double operator()(std::span<const double> z, double h) const {
    return f_(z, h);
  }
  double at_origin(double h) const {
    const std::array<double, kMaxModelDim> zero{};
    return f_(std::span<const double>(zero.data(), algebra_.dim), h);
  }

  bool has_analytic_partials() const { return static_cast<bool>(df_); }

  // Analytic partials when supplied, otherwise 4th-order central stencils
  // with step 1e-4 * (scale of support).
  Partials partials(std::span<const double> z, double h) const {
    if (df_) return df_(z, h);
    Partials p;
    p.dz.resize(algebra_.dim);
    const double step_z = 1e-4 * support_radius_;
    std::array<double, kMaxModelDim> buf{};
    std::copy(z.begin(), z.end(), buf.begin());
    const std::span<const double> zz(buf.data(), algebra_.dim);
    for (int i = 0; i < algebra_.dim; ++i) {
      const double zi = buf[i];
      auto eval = [&](double offset) {
        buf[i] = zi + offset;
        return f_(zz, h);
      };
      p.dz[i] = (eval(-2 * step_z) - 8 * eval(-step_z) + 8 * eval(step_z) -
                 eval(2 * step_z)) /
                (12 * step_z);
      buf[i] = zi;
    }
    const double step_h = 1e-4 * std::max(1.0, std::abs(h));
    auto evalh = [&](double hh) { return f_(zz, hh); };
    p.dh = (evalh(h - 2 * step_h) - 8 * evalh(h - step_h) +
            8 * evalh(h + step_h) - evalh(h + 2 * step_h)) /
           (12 * step_h);
    return p;
  }

  const GradedLieAlgebra<double>& algebra() const { return algebra_; }
  int dim() const { return algebra_.dim; }
  int d_H() const { return homogeneous_dimension(algebra_); }
  double support_radius() const { return support_radius_; }
  double h_max() const { return h_max_; }

 private:
  GradedLieAlgebra<double> algebra_;
  Evaluator f_;
  PartialEvaluator df_;
  double support_radius_ = 1.0;
  double h_max_ = 1.0;
};

// Raw pushforward value without building a model; used by the quadrature
// integrands, which evaluate at many lambda per point.
inline double pushforward_value(const FibredDensityModel& f, double lambda,
                                std::span<const double> z, double h) {
  const auto& w = f.algebra().weights;
  std::array<double, kMaxModelDim> zd{};
  for (int i = 0; i < f.dim(); ++i) zd[i] = z[i] * ipow(lambda, -w[i]);
  return ipow(lambda, -f.d_H()) *
         f(std::span<const double>(zd.data(), f.dim()), lambda * h);
}

// (alpha_lambda)_* f as a new model. Support dilates by delta_lambda and the
// declared h-range shrinks by lambda.
inline FibredDensityModel zoom_pushforward(const FibredDensityModel& f,
                                           double lambda) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("zoom_pushforward: lambda must be positive");
  const auto& w = f.algebra().weights;
  const int d = f.dim();
  const int q = f.d_H();
  const double stretch =
      lambda >= 1.0 ? ipow(lambda, w.back()) : ipow(lambda, w.front());

  FibredDensityModel src = f;  // owned copy for the closures
  auto eval = [src, lambda](std::span<const double> z, double h) {
    return pushforward_value(src, lambda, z, h);
  };
  FibredDensityModel::PartialEvaluator deval = nullptr;
  if (f.has_analytic_partials()) {
    deval = [src, lambda, d, q](std::span<const double> z, double h) {
      const auto& wts = src.algebra().weights;
      std::array<double, kMaxModelDim> zd{};
      for (int i = 0; i < d; ++i) zd[i] = z[i] * ipow(lambda, -wts[i]);
      Partials p =
          src.partials(std::span<const double>(zd.data(), d), lambda * h);
      Partials out;
      out.dz.resize(d);
      for (int i = 0; i < d; ++i)
        out.dz[i] = ipow(lambda, -q - wts[i]) * p.dz[i];
      out.dh = ipow(lambda, -q + 1) * p.dh;
      return out;
    };
  }
  return FibredDensityModel(f.algebra(), std::move(eval),
                            f.support_radius() * stretch, f.h_max() / lambda,
                            std::move(deval));
}

// Restriction to the unit space: tr_h f = f(0, h).
inline double local_trace(const FibredDensityModel& f, double h) {
  if (std::abs(h) > f.h_max())
    throw std::invalid_argument("local_trace: |h| exceeds declared h_max");
  return f.at_origin(h);
}

// L_Z f = d/dlambda|_1 (alpha_lambda)_* f, in chart coordinates.
inline FibredDensityModel lie_derivative_Z(const FibredDensityModel& f) {
  FibredDensityModel src = f;
  const int q = f.d_H();
  auto eval = [src, q](std::span<const double> z, double h) {
    const Partials p = src.partials(z, h);
    double acc = -q * src(z, h);
    const auto& w = src.algebra().weights;
    for (int i = 0; i < src.dim(); ++i) acc -= w[i] * z[i] * p.dz[i];
    return acc + h * p.dh;
  };
  return FibredDensityModel(f.algebra(), std::move(eval), f.support_radius(),
                            f.h_max());
}

// --- built-in test functions -------------------------------------------------

// h-dependence with derivatives of every order.
struct HProfile {
  std::function<double(double h, int j)> deriv;  // j = 0 is the value

  static HProfile constant(double c) {
    return {[c](double, int j) { return j == 0 ? c : 0.0; }};
  }
  static HProfile affine(double a, double b) {
    return {[a, b](double h, int j) {
      if (j == 0) return a + b * h;
      return j == 1 ? b : 0.0;
    }};
  }
  static HProfile exp_decay(double alpha = 1.0) {
    return {[alpha](double h, int j) {
      return ipow(-alpha, j) * std::exp(-alpha * h);
    }};
  }
  static HProfile cosine(double omega) {
    return {[omega](double h, int j) {
      return ipow(omega, j) * std::cos(omega * h + j * M_PI / 2.0);
    }};
  }
  static HProfile by_name(const std::string& name);
};

inline HProfile HProfile::by_name(const std::string& name) {
  if (name == "const") return constant(1.0);
  if (name == "affine") return affine(1.0, 0.5);
  if (name == "exp") return exp_decay(1.0);
  if (name == "cos") return cosine(0.7);
  throw std::invalid_argument("unknown h profile: " + name);
}

// Compactly supported z-dependence with closed-form gradient.
struct ZProfile {
  std::function<double(std::span<const double>)> val;
  std::function<void(std::span<const double>, std::span<double>)> grad;
  double support_radius = 1.0;
  int dim = 0;

  // exp(1 - 1/(1 - |z/R|^2)) inside |z| < R; all derivatives vanish at the
  // support boundary.
  static ZProfile gauss_bump(int dim, double R) {
    auto s_of = [R, dim](std::span<const double> z) {
      double s = 0.0;
      for (int i = 0; i < dim; ++i) s += z[i] * z[i];
      return s / (R * R);
    };
    ZProfile p;
    p.dim = dim;
    p.support_radius = R;
    p.val = [s_of](std::span<const double> z) {
      const double s = s_of(z);
      if (s >= 1.0) return 0.0;
      return std::exp(1.0 - 1.0 / (1.0 - s));
    };
    p.grad = [s_of, R, dim](std::span<const double> z, std::span<double> g) {
      const double s = s_of(z);
      if (s >= 1.0) {
        for (int i = 0; i < dim; ++i) g[i] = 0.0;
        return;
      }
      const double v = std::exp(1.0 - 1.0 / (1.0 - s));
      const double pre = -v / ((1.0 - s) * (1.0 - s)) * 2.0 / (R * R);
      for (int i = 0; i < dim; ++i) g[i] = pre * z[i];
    };
    return p;
  }

  // (1 - |z/R|^2)^degree inside |z| < R; C^(degree-1) at the boundary.
  static ZProfile poly_bump(int dim, int degree, double R) {
    if (degree < 2)
      throw std::invalid_argument("poly_bump: degree must be >= 2");
    ZProfile p;
    p.dim = dim;
    p.support_radius = R;
    p.val = [R, dim, degree](std::span<const double> z) {
      double s = 0.0;
      for (int i = 0; i < dim; ++i) s += z[i] * z[i];
      s /= R * R;
      if (s >= 1.0) return 0.0;
      return ipow(1.0 - s, degree);
    };
    p.grad = [R, dim, degree](std::span<const double> z, std::span<double> g) {
      double s = 0.0;
      for (int i = 0; i < dim; ++i) s += z[i] * z[i];
      s /= R * R;
      if (s >= 1.0) {
        for (int i = 0; i < dim; ++i) g[i] = 0.0;
        return;
      }
      const double pre = -degree * ipow(1.0 - s, degree - 1) * 2.0 / (R * R);
      for (int i = 0; i < dim; ++i) g[i] = pre * z[i];
    };
    return p;
  }

  // prod_i (1 + cos(pi z_i / R))/2 on the cube |z_i| < R; C^1 at the edges.
  static ZProfile cos_window(int dim, double R) {
    ZProfile p;
    p.dim = dim;
    // the cube is inside the ball of radius sqrt(dim) R
    p.support_radius = R * std::sqrt((double)dim);
    p.val = [R, dim](std::span<const double> z) {
      double v = 1.0;
      for (int i = 0; i < dim; ++i) {
        const double u = z[i] / R;
        if (std::abs(u) >= 1.0) return 0.0;
        v *= 0.5 * (1.0 + std::cos(M_PI * u));
      }
      return v;
    };
    p.grad = [R, dim](std::span<const double> z, std::span<double> g) {
      std::array<double, kMaxModelDim> w{};
      bool outside = false;
      for (int i = 0; i < dim; ++i) {
        const double u = z[i] / R;
        if (std::abs(u) >= 1.0) outside = true;
        w[i] = 0.5 * (1.0 + std::cos(M_PI * u));
      }
      for (int i = 0; i < dim; ++i) {
        if (outside) {
          g[i] = 0.0;
          continue;
        }
        double prod = 1.0;
        for (int j = 0; j < dim; ++j)
          if (j != i) prod *= w[j];
        g[i] = prod * (-0.5 * M_PI * std::sin(M_PI * z[i] / R) / R);
      }
    };
    return p;
  }

  static ZProfile by_name(const std::string& name, int dim, double R) {
    if (name == "gauss_bump") return gauss_bump(dim, R);
    if (name.rfind("poly_bump", 0) == 0) {
      const std::string tail = name.substr(9);
      return poly_bump(dim, tail.empty() ? 4 : std::stoi(tail), R);
    }
    if (name == "cos_window") return cos_window(dim, R);
    throw std::invalid_argument("unknown z profile: " + name);
  }
};

// f(z, h) = scale * Z(z) * H(h) with product-rule partials.
inline FibredDensityModel separable_model(const GradedLieAlgebra<double>& g,
                                          const ZProfile& zp,
                                          const HProfile& hp,
                                          double scale = 1.0,
                                          double h_max = 1e9) {
  if (zp.dim != g.dim)
    throw std::invalid_argument("separable_model: dimension mismatch");
  auto zv = zp.val;
  auto zg = zp.grad;
  auto hd = hp.deriv;
  const int d = g.dim;
  auto eval = [zv, hd, scale](std::span<const double> z, double h) {
    return scale * zv(z) * hd(h, 0);
  };
  auto deval = [zv, zg, hd, scale, d](std::span<const double> z, double h) {
    Partials p;
    p.dz.resize(d);
    zg(z, std::span<double>(p.dz.data(), d));
    const double hv = hd(h, 0);
    for (int i = 0; i < d; ++i) p.dz[i] *= scale * hv;
    p.dh = scale * zv(z) * hd(h, 1);
    return p;
  };
  return FibredDensityModel(g, std::move(eval), zp.support_radius, h_max,
                            std::move(deval));
}

// --- diagnostics used by tests and the CLI -----------------------------------

// Max relative deviation between analytic partials and central differences
// over random interior points.
inline double verify_partials(const FibredDensityModel& f, std::uint64_t seed,
                              int samples) {
  if (!f.has_analytic_partials()) return 0.0;
  FibredDensityModel plain(f.algebra(),
                           [&f](std::span<const double> z, double h) {
                             return f(z, h);
                           },
                           f.support_radius(), f.h_max());
  double worst = 0.0;
  const double R = f.support_radius();
  for (int t = 0; t < samples; ++t) {
    std::array<double, kMaxModelDim> z{};
    for (int i = 0; i < f.dim(); ++i)
      z[i] = hash_uniform(seed, (std::uint64_t)t * 37 + i, -0.6 * R, 0.6 * R);
    const double h =
        hash_uniform(seed, (std::uint64_t)t * 37 + 31, -0.5, 0.5) *
        std::min(1.0, f.h_max());
    const std::span<const double> zz(z.data(), f.dim());
    const Partials a = f.partials(zz, h);
    const Partials n = plain.partials(zz, h);
    double scale = std::abs(f(zz, h)) / R + std::abs(n.dh);
    for (int i = 0; i < f.dim(); ++i) scale += std::abs(n.dz[i]);
    scale = std::max(scale, 1e-8);
    for (int i = 0; i < f.dim(); ++i)
      worst = std::max(worst, std::abs(a.dz[i] - n.dz[i]) / scale);
    worst = std::max(worst, std::abs(a.dh - n.dh) / scale);
  }
  return worst;
}

// Spot-check that f vanishes outside the declared support radius.
inline bool verify_support(const FibredDensityModel& f, std::uint64_t seed,
                           int samples) {
  const double R = f.support_radius();
  for (int t = 0; t < samples; ++t) {
    std::array<double, kMaxModelDim> z{};
    double norm = 0.0;
    for (int i = 0; i < f.dim(); ++i) {
      z[i] = hash_uniform(seed, (std::uint64_t)t * 11 + i, -3.0, 3.0);
      norm += z[i] * z[i];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double target = R * hash_uniform(seed, t * 11 + 9, 1.0001, 2.5);
    for (int i = 0; i < f.dim(); ++i) z[i] *= target / norm;
    const double h = hash_uniform(seed, t * 11 + 10, -0.5, 0.5) *
                     std::min(1.0, f.h_max());
    if (f(std::span<const double>(z.data(), f.dim()), h) != 0.0) return false;
  }
  return true;
}

}  // namespace carnot
