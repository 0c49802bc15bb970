#pragma once

// Classical (trivially filtered) noncommutative residue on the flat torus
// R^d/(2 pi Z)^d by cosphere-bundle quadrature:
//
//   res_w(sigma) = (2 pi)^{-d} int_{T^d} int_{S^{d-1}} sigma(x, xi) dxi dx,
//
// with the periodic x-integral on a uniform tensor grid (spectrally accurate)
// and product Gauss rules on the sphere. connes_check compares res_w / d
// against the fitted log-coefficient of the partial eigenvalue sums of
// (1 - Laplacian)^{-d/2}, whose order -d symbol is identically 1 on the
// cosphere.

#include <array>
#include <cstdint>

#include "carnot/numerics.hpp"
#include "carnot/spectral_models.hpp"
#include "carnot/trace_ideals.hpp"

namespace carnot {

struct ClassicalSymbol {
  int d = 2;
  // order -d homogeneous component, sampled at x in T^d and |xi| = 1
  std::function<double(std::span<const double>, std::span<const double>)>
      sigma;
};

struct GridSpec {
  int x_axis_points = 12;  // per-axis uniform points on [0, 2 pi)
  int sphere_order = 12;   // Gauss order per spherical factor
};

struct ResWResult {
  double value = 0.0;             // at the doubled grid
  double refinement_error = 0.0;  // |doubled - base|
  bool resolved = false;
  GridSpec grid;
};

namespace wodzicki_detail {

struct SphereNode {
  std::array<double, 4> xi{};
  double weight = 0.0;
};

inline std::vector<SphereNode> sphere_rule(int d, int order) {
  std::vector<SphereNode> nodes;
  if (d == 2) {
    const int M = 4 * order;
    for (int i = 0; i < M; ++i) {
      const double th = 2.0 * M_PI * (i + 0.5) / M;
      nodes.push_back({{std::cos(th), std::sin(th), 0, 0}, 2.0 * M_PI / M});
    }
  } else if (d == 3) {
    const auto& gl = gauss_legendre(order);
    const int M = 2 * order;
    for (int i = 0; i < order; ++i) {
      const double u = gl.x[i];
      const double r = std::sqrt(std::max(0.0, 1.0 - u * u));
      for (int j = 0; j < M; ++j) {
        const double ph = 2.0 * M_PI * (j + 0.5) / M;
        nodes.push_back({{r * std::cos(ph), r * std::sin(ph), u, 0},
                         gl.w[i] * 2.0 * M_PI / M});
      }
    }
  } else if (d == 4) {
    // polar level: d Omega_3 = sqrt(1 - t^2) dt d Omega_2, handled by
    // Gauss-Chebyshev of the second kind (closed-form nodes, exact for
    // polynomial symbols)
    const auto& gl = gauss_legendre(order);
    const int M = 2 * order;
    for (int i = 1; i <= order; ++i) {
      const double th = (double)i * M_PI / (order + 1);
      const double t = std::cos(th);
      const double wt = M_PI / (order + 1) * std::sin(th) * std::sin(th);
      const double s = std::sin(th);
      for (int j = 0; j < order; ++j) {
        const double u = gl.x[j];
        const double r = std::sqrt(std::max(0.0, 1.0 - u * u));
        for (int k = 0; k < M; ++k) {
          const double ph = 2.0 * M_PI * (k + 0.5) / M;
          nodes.push_back({{t, s * u, s * r * std::cos(ph),
                            s * r * std::sin(ph)},
                           wt * gl.w[j] * 2.0 * M_PI / M});
        }
      }
    }
  } else {
    throw std::invalid_argument("sphere_rule: d must be 2, 3 or 4");
  }
  return nodes;
}

inline double evaluate(const ClassicalSymbol& sym, const GridSpec& grid) {
  const int d = sym.d;
  const auto nodes = sphere_rule(d, grid.sphere_order);
  const int P = grid.x_axis_points;
  std::uint64_t cells = 1;
  for (int i = 0; i < d; ++i) cells *= (std::uint64_t)P;

  std::vector<double> per_point;
  per_point.reserve(cells);
  std::array<double, 4> x{};
  for (std::uint64_t c = 0; c < cells; ++c) {
    std::uint64_t rest = c;
    for (int i = 0; i < d; ++i) {
      x[i] = 2.0 * M_PI * (double)(rest % P) / P;
      rest /= P;
    }
    double acc = 0.0;
    std::vector<double> terms;
    terms.reserve(nodes.size());
    for (const auto& node : nodes)
      terms.push_back(node.weight *
                      sym.sigma(std::span<const double>(x.data(), d),
                                std::span<const double>(node.xi.data(), d)));
    acc = pairwise_sum(terms);
    per_point.push_back(acc);
  }
  // (2 pi)^{-d} * (2 pi)^d * mean over the x grid
  return pairwise_sum(per_point) / (double)cells;
}

}  // namespace wodzicki_detail

// Residue with a grid-refinement error estimate (both resolutions doubled).
inline ResWResult res_w(const ClassicalSymbol& sym, const GridSpec& grid) {
  if (sym.d < 2 || sym.d > 4)
    throw std::invalid_argument("res_w: d must be 2, 3 or 4");
  if (grid.x_axis_points < 2 || grid.sphere_order < 2)
    throw std::invalid_argument("res_w: grid too small");
  ResWResult out;
  out.grid = grid;
  const double coarse = wodzicki_detail::evaluate(sym, grid);
  GridSpec fine{2 * grid.x_axis_points, 2 * grid.sphere_order};
  out.value = wodzicki_detail::evaluate(sym, fine);
  out.refinement_error = std::abs(out.value - coarse);
  out.resolved =
      out.refinement_error <= 1e-8 * std::max(1.0, std::abs(out.value));
  return out;
}

inline double sphere_area(int d) {
  if (d == 2) return 2.0 * M_PI;
  if (d == 3) return 4.0 * M_PI;
  if (d == 4) return 2.0 * M_PI * M_PI;
  throw std::invalid_argument("sphere_area: d must be 2, 3 or 4");
}

struct ConnesCheckReport {
  double A = 0.0;  // res_w(sigma = 1)/d
  double B = 0.0;  // fitted log coefficient of the partial eigenvalue sums
  double rel_discrepancy = 0.0;
  std::uint64_t N_target = 0;
  GridSpec grid;
  ResWResult residue;
  LogCoefficientFit fit;
};

// A = res_w(1)/d against B = log-coefficient of sum_{n<=N} lambda_n^{-d/2}
// on the flat torus.
inline ConnesCheckReport connes_check(int d, std::uint64_t N_target,
                                      GridSpec grid = GridSpec{},
                                      int threads = 1, int fit_points = 14) {
  if (d < 2 || d > 4)
    throw std::invalid_argument("connes_check: d must be 2, 3 or 4");
  ConnesCheckReport rep;
  rep.N_target = N_target;
  rep.grid = grid;

  ClassicalSymbol one;
  one.d = d;
  one.sigma = [](std::span<const double>, std::span<const double>) {
    return 1.0;
  };
  rep.residue = res_w(one, grid);
  rep.A = rep.residue.value / d;

  auto mu = from_spectral(torus_stream(d, threads), 0.5 * d);
  rep.fit = log_coefficient_fit(partial_sums_dyadic(mu, N_target, fit_points));
  rep.B = rep.fit.c;
  rep.rel_discrepancy = std::abs(rep.A - rep.B) / std::abs(rep.A);
  return rep;
}

}  // namespace carnot
