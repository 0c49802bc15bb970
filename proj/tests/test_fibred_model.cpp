#include <catch_amalgamated.hpp>

#include "carnot/fibred_model.hpp"
#include "carnot/numerics.hpp"

using namespace carnot;

namespace {

FibredDensityModel heis_model(const HProfile& hp, const char* zname = "gauss_bump",
                              double R = 1.0, double scale = 1.0) {
  auto g = heisenberg_algebra<double>(1);
  return separable_model(g, ZProfile::by_name(zname, 3, R), hp, scale);
}

// Pointwise product with product-rule partials (test helper).
FibredDensityModel product_model(const FibredDensityModel& a,
                                 const FibredDensityModel& b) {
  const int d = a.dim();
  auto eval = [a, b](std::span<const double> z, double h) {
    return a(z, h) * b(z, h);
  };
  auto deval = [a, b, d](std::span<const double> z, double h) {
    const Partials pa = a.partials(z, h);
    const Partials pb = b.partials(z, h);
    const double va = a(z, h), vb = b(z, h);
    Partials p;
    p.dz.resize(d);
    for (int i = 0; i < d; ++i) p.dz[i] = pa.dz[i] * vb + va * pb.dz[i];
    p.dh = pa.dh * vb + va * pb.dh;
    return p;
  };
  return FibredDensityModel(a.algebra(), eval,
                            std::min(a.support_radius(), b.support_radius()),
                            std::min(a.h_max(), b.h_max()), deval);
}

std::vector<double> sample_point(const FibredDensityModel& f, std::uint64_t seed,
                                 int t, double frac = 0.7) {
  std::vector<double> z(f.dim());
  for (int i = 0; i < f.dim(); ++i)
    z[i] = hash_uniform(seed, (std::uint64_t)t * 13 + i,
                        -frac * f.support_radius(), frac * f.support_radius());
  return z;
}

}  // namespace

TEST_CASE("zoom pushforward basics") {
  auto f = heis_model(HProfile::affine(1.0, 1.0));

  SECTION("lambda = 1 is the identity") {
    auto g = zoom_pushforward(f, 1.0);
    for (int t = 0; t < 32; ++t) {
      auto z = sample_point(f, 5, t);
      const double h = hash_uniform(5, 1000 + t, -1.0, 1.0);
      CHECK(g(z, h) == Catch::Approx(f(z, h)).epsilon(1e-14).margin(1e-300));
    }
  }

  SECTION("semigroup law") {
    const double lam = 1.7, mu = 0.45;
    auto a = zoom_pushforward(zoom_pushforward(f, lam), mu);
    auto b = zoom_pushforward(f, lam * mu);
    for (int t = 0; t < 32; ++t) {
      auto z = sample_point(f, 6, t);
      const double h = hash_uniform(6, 900 + t, -0.4, 0.4);
      // near the support edge the bump is ~1e-16 and the exponent loses
      // relative accuracy; an absolute floor covers those points
      CHECK(a(z, h) == Catch::Approx(b(z, h)).epsilon(1e-10).margin(1e-12));
    }
  }

  SECTION("value at the origin picks up lambda^-Q") {
    // gauss_bump(0) * (1 + 0) = 1, Q = 4, lambda = 2.
    auto g = zoom_pushforward(f, 2.0);
    std::vector<double> zero{0.0, 0.0, 0.0};
    CHECK(g(zero, 0.0) == Catch::Approx(f(zero, 0.0) / 16.0).epsilon(1e-14));
  }

  SECTION("domain checks") {
    CHECK_THROWS_AS(zoom_pushforward(f, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(zoom_pushforward(f, -1.0), std::invalid_argument);
  }

  SECTION("support radius and h range track the dilation") {
    auto g = zoom_pushforward(f, 2.0);
    CHECK(g.support_radius() == Catch::Approx(4.0 * f.support_radius()));
    CHECK(g.h_max() == Catch::Approx(f.h_max() / 2.0));
  }
}

TEST_CASE("local trace") {
  auto f = heis_model(HProfile::exp_decay(1.0));
  CHECK(local_trace(f, 0.0) == Catch::Approx(1.0));
  CHECK(local_trace(f, 0.8) == Catch::Approx(std::exp(-0.8)));

  auto zero = FibredDensityModel(
      heisenberg_algebra<double>(1),
      [](std::span<const double>, double) { return 0.0; }, 1.0, 1.0);
  CHECK(local_trace(zero, 0.3) == 0.0);

  auto small = FibredDensityModel(
      heisenberg_algebra<double>(1),
      [](std::span<const double>, double) { return 1.0; }, 1.0, 0.5);
  CHECK_THROWS_AS(local_trace(small, 0.75), std::invalid_argument);
}

TEST_CASE("trace scaling identity") {
  auto f = heis_model(HProfile::exp_decay(0.7));
  const int q = f.d_H();
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double lam = hash_uniform(17, 2 * t, 0.1, 10.0);
    const double h = hash_uniform(17, 2 * t + 1, -0.8, 0.8);
    const double lhs = local_trace(zoom_pushforward(f, lam), h);
    const double rhs = ipow(lam, -q) * local_trace(f, lam * h);
    worst = std::max(worst, std::abs(lhs - rhs) /
                                std::max(std::abs(rhs), 1e-300));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("zoom generator") {
  auto f = heis_model(HProfile::affine(1.0, 0.5));
  auto lz = lie_derivative_Z(f);
  const int q = f.d_H();

  SECTION("tr_0(L_Z f) = -Q tr_0(f), analytic partials") {
    CHECK(local_trace(lz, 0.0) ==
          Catch::Approx(-q * local_trace(f, 0.0)).epsilon(1e-12));
  }

  SECTION("tr_0(L_Z f) = -Q tr_0(f), finite-difference fallback") {
    FibredDensityModel plain(f.algebra(),
                             [f](std::span<const double> z, double h) {
                               return f(z, h);
                             },
                             f.support_radius(), f.h_max());
    REQUIRE_FALSE(plain.has_analytic_partials());
    auto lzp = lie_derivative_Z(plain);
    CHECK(local_trace(lzp, 0.0) ==
          Catch::Approx(-q * local_trace(f, 0.0)).epsilon(1e-8));
  }

  SECTION("one-sided pushforward difference converges at rate O(eps)") {
    auto z = sample_point(f, 23, 3);
    const double h = 0.35;
    const double exact = lz(z, h);
    auto fd = [&](double eps) {
      return (pushforward_value(f, 1.0 + eps, z, h) - f(z, h)) / eps;
    };
    const double e4 = std::abs(fd(1e-4) - exact);
    const double e5 = std::abs(fd(1e-5) - exact);
    CHECK(e5 < 1e-4);
    CHECK(e5 < 0.5 * e4);  // first-order decay
  }

  SECTION("h tr_h'(f) = tr_h((L_Z + Q) f) at random h") {
    auto zp = ZProfile::gauss_bump(3, 1.0);
    auto hp = HProfile::exp_decay(0.9);
    auto g = separable_model(heisenberg_algebra<double>(1), zp, hp);
    auto lzg = lie_derivative_Z(g);
    for (int t = 0; t < 24; ++t) {
      const double h = hash_uniform(29, t, -0.8, 0.8);
      const double lhs = h * zp.val(std::vector<double>(3, 0.0)) * hp.deriv(h, 1);
      const double rhs = local_trace(lzg, h) + q * local_trace(g, h);
      CHECK(lhs == Catch::Approx(rhs).epsilon(1e-11).margin(1e-12));
    }
  }
}

TEST_CASE("zoom generator is a twisted derivation") {
  auto a = heis_model(HProfile::exp_decay(0.5));
  auto b = heis_model(HProfile::affine(1.0, 0.25), "poly_bump4", 1.5);
  auto ab = product_model(a, b);
  auto lz_ab = lie_derivative_Z(ab);
  auto lz_a = lie_derivative_Z(a);
  auto lz_b = lie_derivative_Z(b);
  const int q = a.d_H();
  for (int t = 0; t < 48; ++t) {
    auto z = sample_point(a, 31, t);
    const double h = hash_uniform(31, 500 + t, -0.6, 0.6);
    const double lhs = lz_ab(z, h);
    const double rhs =
        lz_a(z, h) * b(z, h) + a(z, h) * lz_b(z, h) + q * a(z, h) * b(z, h);
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-11).margin(1e-13));
  }
}

TEST_CASE("pushforward preserves the fibre integral") {
  SECTION("weight-1 line") {
    auto g1 = abelian_algebra<double>(1);
    auto f = separable_model(g1, ZProfile::gauss_bump(1, 1.0),
                             HProfile::exp_decay(1.0));
    const double lam = 1.8, h = 0.3;
    auto pf = zoom_pushforward(f, lam);
    auto lhs = adaptive_gauss<double>(
        [&](double z) {
          std::array<double, 1> zz{z};
          return pf(std::span<const double>(zz.data(), 1), h);
        },
        -pf.support_radius(), pf.support_radius(), 1e-12);
    auto rhs = adaptive_gauss<double>(
        [&](double z) {
          std::array<double, 1> zz{z};
          return f(std::span<const double>(zz.data(), 1), lam * h);
        },
        -f.support_radius(), f.support_radius(), 1e-12);
    CHECK(lhs.value == Catch::Approx(rhs.value).epsilon(1e-8));
  }

  SECTION("heisenberg fibre, tensor quadrature") {
    auto f = heis_model(HProfile::affine(1.0, 0.4));
    const double lam = 1.5, h = 0.2;
    auto pf = zoom_pushforward(f, lam);
    const int n = 64;
    const auto& rule = gauss_legendre(n);
    // per-axis half-widths matching the (anisotropic) dilated support
    auto cube_integral = [&](const FibredDensityModel& m, double hh,
                             std::array<double, 3> half) {
      double acc = 0.0;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < n; ++c) {
            std::array<double, 3> z{half[0] * rule.x[a], half[1] * rule.x[b],
                                    half[2] * rule.x[c]};
            acc += rule.w[a] * rule.w[b] * rule.w[c] *
                   m(std::span<const double>(z.data(), 3), hh);
          }
      return acc * half[0] * half[1] * half[2];
    };
    const double R = f.support_radius();
    const double lhs =
        cube_integral(pf, h, {R * lam, R * lam, R * lam * lam});
    const double rhs = cube_integral(f, lam * h, {R, R, R});
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-8));
  }
}

TEST_CASE("built-in profiles: support and derivative consistency") {
  auto g = heisenberg_algebra<double>(1);
  for (const char* name : {"gauss_bump", "poly_bump4", "cos_window"}) {
    auto f = separable_model(g, ZProfile::by_name(name, 3, 1.0),
                             HProfile::exp_decay(1.0));
    INFO(name);
    CHECK(verify_support(f, 101, 200));
    CHECK(verify_partials(f, 102, 100) <= 1e-6);
  }
  // pushforward keeps analytic partials available and consistent
  auto f = heis_model(HProfile::cosine(0.7));
  auto pf = zoom_pushforward(f, 1.3);
  CHECK(pf.has_analytic_partials());
  CHECK(verify_partials(pf, 103, 60) <= 1e-6);
}
