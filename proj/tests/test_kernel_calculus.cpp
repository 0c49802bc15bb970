#include <catch_amalgamated.hpp>

#include "carnot/kernel_calculus.hpp"

using namespace carnot;

namespace {

FibredDensityModel heis_kernel(const HProfile& hp, const char* zname = "gauss_bump",
                               double R = 1.0, double scale = 1.0) {
  auto g = heisenberg_algebra<double>(1);
  return separable_model(g, ZProfile::by_name(zname, 3, R), hp, scale);
}

FibredDensityModel add_models(const FibredDensityModel& a,
                              const FibredDensityModel& b) {
  auto eval = [a, b](std::span<const double> z, double h) {
    return a(z, h) + b(z, h);
  };
  return FibredDensityModel(a.algebra(), eval,
                            std::max(a.support_radius(), b.support_radius()),
                            std::min(a.h_max(), b.h_max()));
}

std::vector<double> dilate_point(const FibredDensityModel& k, double lam,
                                 std::span<const double> z) {
  std::vector<double> zd(k.dim());
  const auto& w = k.algebra().weights;
  for (int i = 0; i < k.dim(); ++i) zd[i] = z[i] * ipow(lam, -w[i]);
  return zd;
}

// Direct fixed-order composite Gauss-Legendre in lambda (independent of the
// production log-substituted adaptive scheme).
cdouble lambda_integral_oracle(const FibredDensityModel& k, cdouble m,
                               std::span<const double> z, double h,
                               double lam_lo, int panels = 240) {
  const auto& rule = gauss_legendre(24);
  const int q = k.d_H();
  cdouble acc = 0.0;
  const double width = (1.0 - lam_lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lam_lo + p * width;
    for (std::size_t i = 0; i < rule.x.size(); ++i) {
      const double lam = a + 0.5 * width * (rule.x[i] + 1.0);
      const auto zd = dilate_point(k, lam, z);
      acc += 0.5 * width * rule.w[i] * cpow(lam, -m - 1.0) * ipow(lam, -q) *
             k(zd, lam * h);
    }
  }
  return acc;
}

}  // namespace

TEST_CASE("incomplete beta function") {
  SECTION("B(x; 1, 1) = x") {
    for (double x : {0.0, 0.1, 0.5, 0.9, 1.0})
      CHECK(incomplete_beta(x, 1.0, 1.0).real() ==
            Catch::Approx(x).margin(1e-14));
  }
  SECTION("complete beta values") {
    CHECK(incomplete_beta(1.0, 2.0, 3.0).real() ==
          Catch::Approx(1.0 / 12.0).epsilon(1e-13));
    const double expect = std::exp(std::lgamma(4.0) + std::lgamma(2.5) -
                                   std::lgamma(6.5));
    CHECK(incomplete_beta(1.0, 4.0, 2.5).real() ==
          Catch::Approx(expect).epsilon(1e-12));
  }
  SECTION("negative beta against a direct quadrature oracle") {
    // closed-form path (x >= 1/2, integer alpha)
    auto oracle = adaptive_gauss<double>(
        [](double t) { return t * t * std::pow(1.0 - t, -3.5); }, 0.0, 0.7,
        1e-15);
    CHECK(incomplete_beta(0.7, 3.0, -2.5).real() ==
          Catch::Approx(oracle.value).epsilon(1e-12));
  }
  SECTION("small-x path against the same oracle") {
    auto oracle = adaptive_gauss<double>(
        [](double t) { return t * std::pow(1.0 - t, -0.5); }, 0.0, 0.3, 1e-15);
    CHECK(incomplete_beta(0.3, 2.0, 0.5).real() ==
          Catch::Approx(oracle.value).epsilon(1e-12));
  }
  SECTION("complex beta") {
    const cdouble b(0.5, 0.3);
    auto oracle = adaptive_gauss<cdouble>(
        [b](double t) { return t * cpow(1.0 - t, b - 1.0); }, 0.0, 0.8, 1e-15);
    const cdouble got = incomplete_beta(0.8, 2.0, b);
    CHECK(std::abs(got - oracle.value) <= 1e-12 * std::abs(oracle.value));
  }
  SECTION("domain checks") {
    CHECK_THROWS_AS(incomplete_beta(1.2, 1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(incomplete_beta(0.5, -1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(incomplete_beta(1.0, 2.0, -0.5), std::invalid_argument);
  }
}

TEST_CASE("kernel reconstruction") {
  SECTION("order must have negative real part") {
    auto k = heis_kernel(HProfile::constant(1.0));
    CHECK_THROWS_AS(reconstruct_kernel(k, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(reconstruct_kernel(k, cdouble(0.0, 1.0)),
                    std::invalid_argument);
  }

  SECTION("zero datum gives the zero kernel") {
    auto zero = FibredDensityModel(
        heisenberg_algebra<double>(1),
        [](std::span<const double>, double) { return 0.0; }, 1.0, 1e9);
    auto P = reconstruct_kernel(zero, -2.0);
    std::vector<double> z{0.3, -0.2, 0.1};
    CHECK(P.evaluate(z, 0.4).value == cdouble(0.0));
  }

  SECTION("linearity in the datum") {
    auto k1 = heis_kernel(HProfile::exp_decay(1.0));
    auto k2 = heis_kernel(HProfile::affine(0.5, 0.2), "poly_bump4", 1.3);
    auto sum = add_models(k1, k2);
    auto P1 = reconstruct_kernel(k1, -2.0);
    auto P2 = reconstruct_kernel(k2, -2.0);
    auto Ps = reconstruct_kernel(sum, -2.0);
    std::vector<double> z{0.4, 0.1, -0.3};
    const double h = 0.2;
    const cdouble lhs = Ps.evaluate(z, h).value;
    const cdouble rhs = P1.evaluate(z, h).value + P2.evaluate(z, h).value;
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(rhs)));
  }

  SECTION("weight-1 line against an independent fixed quadrature") {
    auto g1 = abelian_algebra<double>(1);
    auto k = separable_model(g1, ZProfile::gauss_bump(1, 1.0),
                             HProfile::constant(1.0));
    auto P = reconstruct_kernel(k, -2.0);
    std::vector<double> z{0.5};
    const auto got = P.evaluate(z, 0.0, 1e-13);
    const cdouble oracle = lambda_integral_oracle(k, -2.0, z, 0.0, 0.5);
    CHECK(std::abs(got.value - oracle) <= 1e-10 * std::abs(oracle));
  }

  SECTION("kernel singularity at the origin is flagged") {
    auto k = heis_kernel(HProfile::constant(1.0));
    auto P = reconstruct_kernel(k, -2.0);  // Re(m) = -2 >= -4 = -d_H
    std::vector<double> zero{0.0, 0.0, 0.0};
    auto v = P.evaluate(zero, 0.0);
    CHECK(v.singular_at_origin);
    std::vector<double> z{0.2, 0.0, 0.0};
    CHECK_FALSE(P.evaluate(z, 0.0).singular_at_origin);
  }

  SECTION("origin value equals the direct local trace when trace class") {
    auto k = heis_kernel(HProfile::exp_decay(1.0));
    auto P = reconstruct_kernel(k, -4.75);
    auto prof = separable_trace_profile(ZProfile::gauss_bump(3, 1.0),
                                        HProfile::exp_decay(1.0));
    std::vector<double> zero{0.0, 0.0, 0.0};
    for (double h : {0.0, 0.5, 1.0}) {
      const cdouble lhs = P.evaluate(zero, h).value;
      const cdouble rhs = local_trace_direct(prof, -4.75, h, 4).value;
      CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(rhs)));
    }
  }

  SECTION("kernel identity P - t^{ -m } pushforward = partial cocycle") {
    auto k = heis_kernel(HProfile::exp_decay(0.8));
    const cdouble m = -2.0;
    auto P = reconstruct_kernel(k, m);
    std::vector<double> z{0.35, -0.15, 0.2};
    const double h = 0.25;
    const int q = k.d_H();
    for (double t : {0.25, 0.5}) {
      // t^{-m} (alpha_t)_* P (z, h) = t^{-m} t^{-Q} P(delta_{1/t} z, t h)
      std::vector<double> zd(3);
      const auto& w = k.algebra().weights;
      for (int i = 0; i < 3; ++i) zd[i] = z[i] * ipow(t, -w[i]);
      const cdouble lhs = P.evaluate(z, h, 1e-13).value -
                          cpow(t, -m) * ipow(t, -q) *
                              P.evaluate(zd, t * h, 1e-13).value;
      const cdouble rhs = lambda_integral_oracle(k, m, z, h, t);
      CHECK(std::abs(lhs - rhs) <= 1e-8 * std::max(1.0, std::abs(rhs)));
    }
  }
}

TEST_CASE("direct local trace") {
  const int q = 4;
  SECTION("constant profile closed forms") {
    TraceProfile one([](double) { return 1.0; },
                     [](double, int j) { return j == 0 ? 1.0 : 0.0; });
    CHECK(local_trace_direct(one, -q - 1.0, 0.7, q).value.real() ==
          Catch::Approx(1.0).epsilon(1e-12));
    for (double a : {0.5, 1.5, 3.0})
      CHECK(local_trace_direct(one, -q - a, 0.7, q).value.real() ==
            Catch::Approx(1.0 / a).epsilon(1e-11));
  }
  SECTION("domain check") {
    TraceProfile one([](double) { return 1.0; });
    CHECK_THROWS_AS(local_trace_direct(one, -3.9, 0.0, q),
                    std::invalid_argument);
  }
}

TEST_CASE("extended local trace") {
  const int q = 4;
  auto expprof = TraceProfile(
      [](double h) { return std::exp(-h); },
      [](double h, int j) { return ipow(-1.0, j) * std::exp(-h); });

  SECTION("constant profile: only the j = 0 term survives") {
    TraceProfile one([](double) { return 1.0; },
                     [](double, int j) { return j == 0 ? 1.0 : 0.0; });
    for (int n : {1, 2, 3, 4}) {
      const cdouble m = cdouble(n - q - 0.75, 0.0);
      const cdouble v = local_trace_extended(one, m, 0.9, q, n).value;
      CHECK(std::abs(v - 1.0 / (-m - (double)q)) <= 1e-12);
    }
  }

  SECTION("agreement with the direct integral below the first pole") {
    const cdouble m = cdouble(-q - 0.5, 0.0);
    const cdouble direct = local_trace_direct(expprof, m, 1.0, q).value;
    for (int n : {1, 2, 3}) {
      const cdouble ext = local_trace_extended(expprof, m, 1.0, q, n).value;
      CHECK(std::abs(ext - direct) <= 1e-8 * std::abs(direct));
    }
  }

  SECTION("n-independence in the continuation region") {
    const cdouble m = cdouble(-q + 0.5, 0.0);
    const cdouble v2 = local_trace_extended(expprof, m, 1.0, q, 2).value;
    const cdouble v3 = local_trace_extended(expprof, m, 1.0, q, 3).value;
    CHECK(std::isfinite(v2.real()));
    CHECK(std::abs(v2 - v3) <= 1e-8 * std::abs(v2));
  }

  SECTION("pole diagnostic carries the offending coefficient") {
    bool caught = false;
    try {
      local_trace_extended(expprof, cdouble(1.0 - q, 0.0), 0.8, q, 2);
    } catch (const PoleDiagnostic& d) {
      caught = true;
      CHECK(d.j == 1);
      // coefficient h^1 tr'(0)/1! = 0.8 * (-1)
      CHECK(std::abs(d.coefficient - cdouble(-0.8, 0.0)) <= 1e-12);
    }
    CHECK(caught);
  }

  SECTION("order beyond the expansion is rejected") {
    CHECK_THROWS_AS(local_trace_extended(expprof, cdouble(-q + 2.5, 0.0), 0.5,
                                         q, 2),
                    std::invalid_argument);
  }
}

TEST_CASE("residue at the first pole") {
  const int q = 4;
  auto expprof = TraceProfile(
      [](double h) { return std::exp(-h); },
      [](double h, int j) { return ipow(-1.0, j) * std::exp(-h); });

  SECTION("mu(s) = -Q - s gives tr_0(k), independent of h") {
    for (double h : {0.0, 0.3, 1.0}) {
      auto r = trace_residue_at_pole(expprof, q, h, -1.0);
      CHECK(r.converged);
      CHECK(std::abs(r.value - 1.0) <= 1e-6);
    }
  }
  SECTION("zero datum") {
    TraceProfile zero([](double) { return 0.0; },
                      [](double, int) { return 0.0; });
    auto r = trace_residue_at_pole(zero, q, 0.5, -1.0);
    CHECK(std::abs(r.value) <= 1e-12);
  }
  SECTION("doubling the slope halves the residue") {
    auto r1 = trace_residue_at_pole(expprof, q, 0.3, -1.0);
    auto r2 = trace_residue_at_pole(expprof, q, 0.3, -2.0);
    CHECK(std::abs(r2.value - 0.5 * r1.value) <= 1e-6);
  }
  SECTION("slope of either sign") {
    auto r = trace_residue_at_pole(expprof, q, 0.3, 1.0);
    CHECK(std::abs(r.value + 1.0) <= 1e-5);
  }
}

TEST_CASE("cocycle") {
  auto k = heis_kernel(HProfile::exp_decay(0.6));
  const int q = k.d_H();

  SECTION("lambda = 1 gives the zero cocycle") {
    auto f1 = cocycle(k, -2.0, 1.0);
    std::vector<double> z{0.2, 0.3, -0.1};
    CHECK(f1(z, 0.4) == 0.0);
  }

  SECTION("pointwise cocycle identity") {
    for (double m : {-(double)q, -2.3}) {
      const double lam = 1.6, mu = 0.7;
      auto flm = cocycle(k, m, lam * mu);
      auto fl = cocycle(k, m, lam);
      auto fm = cocycle(k, m, mu);
      const auto& w = k.algebra().weights;
      for (int t = 0; t < 12; ++t) {
        std::vector<double> z(3);
        for (int i = 0; i < 3; ++i)
          z[i] = hash_uniform(77, 16 * t + i, -0.5, 0.5);
        const double h = hash_uniform(77, 16 * t + 7, -0.3, 0.3);
        std::vector<double> zd(3);
        for (int i = 0; i < 3; ++i) zd[i] = z[i] * ipow(lam, -w[i]);
        const double lhs = flm(z, h);
        const double rhs =
            fl(z, h) + std::pow(lam, -m) * ipow(lam, -q) * fm(zd, lam * h);
        CHECK(lhs == Catch::Approx(rhs).epsilon(1e-8).margin(1e-10));
      }
    }
  }

  SECTION("traced cocycle identity at order -Q") {
    const double m = -(double)q;
    for (int t = 0; t < 40; ++t) {
      const double lam = hash_uniform(78, 3 * t, 0.5, 3.0);
      const double mu = hash_uniform(78, 3 * t + 1, 0.5, 3.0);
      const double h = hash_uniform(78, 3 * t + 2, -0.25, 0.25);
      const double lhs = local_trace(cocycle(k, m, lam * mu), h);
      const double rhs = local_trace(cocycle(k, m, lam), h) +
                         local_trace(cocycle(k, m, mu), lam * h);
      CHECK(lhs == Catch::Approx(rhs).epsilon(1e-8).margin(1e-12));
    }
  }
}

TEST_CASE("residue from the cocycle") {
  auto k = heis_kernel(HProfile::exp_decay(0.6));
  const std::vector<double> lambdas{2.0, 4.0, 10.0};

  SECTION("recovers tr_0 of the datum with tight lambda constancy") {
    auto r = residue_from_cocycle(k, lambdas);
    CHECK(r.constant);
    CHECK(r.max_deviation < 1e-6);
    CHECK(r.value == Catch::Approx(local_trace(k, 0.0)).epsilon(1e-9));
  }

  SECTION("vanishing trace gives zero for every lambda") {
    auto k0 = heis_kernel(HProfile::affine(0.0, 1.0));
    REQUIRE(local_trace(k0, 0.0) == 0.0);
    auto r = residue_from_cocycle(k0, lambdas);
    for (double s : r.samples) CHECK(std::abs(s) <= 1e-12);
  }

  SECTION("agreement with the pole residue") {
    auto prof = separable_trace_profile(ZProfile::gauss_bump(3, 1.0),
                                        HProfile::exp_decay(0.6));
    auto rc = residue_from_cocycle(k, lambdas);
    auto rp = trace_residue_at_pole(prof, k.d_H(), 0.0, -1.0);
    CHECK(std::abs(rc.value - rp.value.real()) <= 1e-4);
  }

  SECTION("bad lambda samples rejected") {
    std::vector<double> bad{2.0, 1.0};
    CHECK_THROWS_AS(residue_from_cocycle(k, bad), std::invalid_argument);
    std::vector<double> neg{-2.0};
    CHECK_THROWS_AS(residue_from_cocycle(k, neg), std::invalid_argument);
  }
}
