#include <catch_amalgamated.hpp>

#include <cstdio>
#include <map>

#include "carnot/heisenberg_oracle.hpp"
#include "carnot/spectral_models.hpp"
#include "carnot/stream_cache.hpp"

using namespace carnot;

namespace {

// Brute-force lattice shells |k|^2 = n for k in [-K, K]^d.
std::map<std::uint64_t, std::uint64_t> brute_shells(int d, int K) {
  std::map<std::uint64_t, std::uint64_t> shells;
  std::vector<int> k(d, -K);
  for (;;) {
    std::uint64_t n = 0;
    for (int i = 0; i < d; ++i) n += (std::uint64_t)(k[i] * k[i]);
    shells[n] += 1;
    int axis = 0;
    while (axis < d && ++k[axis] > K) k[axis++] = -K;
    if (axis == d) break;
  }
  return shells;
}

std::vector<SpectralEntry> take(const SpectralStream& s, int n) {
  auto cur = s.open();
  std::vector<SpectralEntry> out;
  SpectralEntry e;
  while ((int)out.size() < n && cur->next(e)) out.push_back(e);
  return out;
}

}  // namespace

TEST_CASE("torus stream heads match brute-force shells") {
  SECTION("d = 2") {
    auto head = take(torus_stream(2), 5);
    // shells of |k|^2 over k in [-3,3]^2: n = 0,1,2,4,5 with counts 1,4,4,4,8
    REQUIRE(head.size() == 5);
    CHECK(head[0].value == 1.0);
    CHECK(head[0].multiplicity == 1);
    CHECK(head[1].value == 2.0);
    CHECK(head[1].multiplicity == 4);
    CHECK(head[2].value == 3.0);
    CHECK(head[2].multiplicity == 4);
    CHECK(head[3].value == 5.0);
    CHECK(head[3].multiplicity == 4);
    CHECK(head[4].value == 6.0);
    CHECK(head[4].multiplicity == 8);

    auto shells = brute_shells(2, 40);
    auto stream = take(torus_stream(2), 60);
    for (const auto& e : stream) {
      const std::uint64_t n = (std::uint64_t)(e.value - 1.0);
      if (n > 1600) break;
      CHECK(e.multiplicity == shells.at(n));
    }
  }
  SECTION("d = 1 multiplicities") {
    auto head = take(torus_stream(1), 4);
    CHECK(head[0].value == 1.0);
    CHECK(head[0].multiplicity == 1);
    CHECK(head[1].value == 2.0);
    CHECK(head[1].multiplicity == 2);
    CHECK(head[2].value == 5.0);
    CHECK(head[2].multiplicity == 2);
    CHECK(head[3].value == 10.0);
    CHECK(head[3].multiplicity == 2);
  }
  SECTION("d outside 1..5 rejected") {
    CHECK_THROWS_AS(torus_stream(0), std::invalid_argument);
    CHECK_THROWS_AS(torus_stream(6), std::invalid_argument);
  }
}

TEST_CASE("counting function") {
  auto s2 = torus_stream(2);
  CHECK(counting(s2, 0.5) == 0);
  CHECK(counting(s2, 2.0) == 5);
  CHECK_THROWS_AS(counting(s2, -1.0), std::invalid_argument);

  SECTION("against a brute-force double loop at Lambda = 100") {
    std::uint64_t brute = 0;
    for (int a = -10; a <= 10; ++a)
      for (int b = -10; b <= 10; ++b)
        if (1 + a * a + b * b <= 100) ++brute;
    CHECK(counting(s2, 100.0) == brute);
  }

  SECTION("monotone in Lambda") {
    std::uint64_t prev = 0;
    for (double lam : {1.0, 3.0, 10.0, 50.0, 200.0}) {
      const std::uint64_t n = counting(s2, lam);
      CHECK(n >= prev);
      prev = n;
    }
  }

  SECTION("full lattice count at Lambda = 1e4, d = 2 and 3") {
    for (int d : {2, 3}) {
      auto shells = brute_shells(d, 100);
      std::uint64_t brute = 0;
      for (const auto& [n, c] : shells)
        if (n <= 9999) brute += c;
      CHECK(counting(torus_stream(d), 10000.0) == brute);
    }
  }
}

TEST_CASE("stream enumeration is deterministic and thread-count invariant") {
  auto a = take(torus_stream(3, 1), 400);
  auto b = take(torus_stream(3, 1), 400);
  auto c = take(torus_stream(3, 4), 400);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == c.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].value == b[i].value);
    CHECK(a[i].multiplicity == b[i].multiplicity);
    CHECK(a[i].value == c[i].value);
    CHECK(a[i].multiplicity == c[i].multiplicity);
  }
}

TEST_CASE("weyl fits recover the counting asymptotics") {
  SECTION("d = 2: exponent 1, coefficient pi") {
    // the intercept extrapolates to log(Lambda) = 0, so the coefficient
    // needs the fit window high enough that the shell fluctuations are small
    auto fit = weyl_fit(torus_stream(2), 1000.0, 128000.0);
    CHECK(fit.exponent == Catch::Approx(1.0).margin(0.02));
    CHECK(fit.C == Catch::Approx(M_PI).epsilon(0.02));
  }
  SECTION("d = 3: exponent 3/2") {
    auto fit = weyl_fit(torus_stream(3), 100.0, 12800.0);
    CHECK(fit.exponent == Catch::Approx(1.5).margin(0.02));
  }
  SECTION("range and point preconditions") {
    CHECK_THROWS_AS(weyl_fit(torus_stream(2), 100.0, 5000.0),
                    std::invalid_argument);
  }
}

TEST_CASE("heisenberg stream") {
  HeisenbergSpec spec;

  SECTION("refuses to enumerate when unvalidated") {
    auto s = heisenberg_stream(spec);
    auto cur = s.open();
    SpectralEntry e;
    CHECK_THROWS_AS(cur->next(e), UnvalidatedStream);
  }

  SECTION("failed validation allows only the checked range") {
    HeisenbergValidation v;
    v.pass = false;
    v.checked_up_to = 20.0;
    auto s = heisenberg_stream(spec, &v);
    auto cur = s.open();
    SpectralEntry e;
    std::uint64_t seen = 0;
    try {
      while (cur->next(e)) ++seen;
      FAIL("expected the gate to trip");
    } catch (const UnvalidatedStream&) {
      CHECK(seen >= 3);
    }
  }

  SECTION("override flag lifts the gate") {
    HeisenbergSpec free = spec;
    free.override_validation = true;
    auto head = take(heisenberg_stream(free), 4);
    REQUIRE(head.size() == 4);
    CHECK(head[0].value == 1.0);  // constants
    CHECK(head[0].multiplicity == 1);
    // lowest nonconstant level: 1 + 2 pi, multiplicity 1 per sign of n
    CHECK(head[1].value == Catch::Approx(1.0 + 2 * M_PI));
    CHECK(head[1].multiplicity == 2);
  }

  SECTION("merged stream equals the sorted union of its families") {
    HeisenbergSpec free = spec;
    free.override_validation = true;
    auto s = heisenberg_stream(free);
    // independent reconstruction from the definitions
    std::map<double, std::uint64_t> expect;
    const double horizon = 1.0 + 4 * M_PI * M_PI * 600.0;
    for (std::uint64_t j = 0;; ++j) {
      const double v = 1.0 + 4 * M_PI * M_PI * (double)j;
      if (v > horizon) break;
      std::uint64_t r2 = 0;
      const std::uint64_t K = isqrt_u64(j) + 1;
      for (std::uint64_t a = 0; a <= K; ++a)
        for (std::uint64_t b = 0; b <= K; ++b)
          if (a * a + b * b == j)
            r2 += (a ? 2 : 1) * (b ? 2 : 1);
      if (r2) expect[v] += r2;
    }
    for (std::uint64_t v = 1;; ++v) {
      const double val = 1.0 + 2 * M_PI * (double)v;
      if (val > horizon) break;
      std::uint64_t mult = 0;
      for (std::uint64_t q = 1; q <= v; ++q)
        if (v % q == 0 && ((v / q) % 2 == 1)) mult += 2 * q;
      expect[val] += mult;
    }

    auto cur = s.open();
    SpectralEntry e;
    std::uint64_t total = 0;
    auto it = expect.begin();
    while (cur->next(e)) {
      if (e.value > horizon - 1.0 || it == expect.end()) break;
      REQUIRE(e.value == Catch::Approx(it->first).epsilon(1e-14));
      REQUIRE(e.multiplicity == it->second);
      total += e.multiplicity;
      ++it;
    }
    CHECK(total >= 100000);  // property horizon: >= 1e5 entries checked
  }

  SECTION("weyl exponent is d_H / m = 2") {
    HeisenbergSpec free = spec;
    free.override_validation = true;
    // [1e2, 1.28e4]: the smallest dyadic ladder covering two decades with
    // the required eight fit points
    auto fit = weyl_fit(heisenberg_stream(free), 100.0, 12800.0);
    CHECK(fit.exponent == Catch::Approx(2.0).margin(0.02));
  }
}

TEST_CASE("oracle machinery") {
  SECTION("abelian analogue reproduces 1 + |k|^2 exactly") {
    auto oracle = abelian_oracle_check(6, 40);
    auto cur = torus_stream(2).open();
    SpectralEntry e;
    std::vector<double> expect;
    while ((int)expect.size() < 40 && cur->next(e))
      for (std::uint64_t i = 0; i < e.multiplicity && expect.size() < 40; ++i)
        expect.push_back(e.value);
    REQUIRE(oracle.size() == expect.size());
    for (std::size_t i = 0; i < oracle.size(); ++i)
      CHECK(std::abs(oracle[i] - expect[i]) <= 1e-10);
  }

  SECTION("constants are exact: count = 1 gives 1.0") {
    HeisenbergSpec spec;
    auto res = discretization_oracle(spec, 16, 1);
    REQUIRE(res.values.size() == 1);
    CHECK(std::abs(res.values[0].value - 1.0) <= 1e-10);
  }

  SECTION("short validation run passes and opens the gate") {
    HeisenbergSpec spec;
    spec.validate_count = 12;
    auto v = validate_heisenberg(spec, 16);
    INFO("max_rel_dev = " << v.max_rel_dev);
    CHECK(v.pass);
    CHECK(v.max_rel_dev <= 1e-3);
    auto s = heisenberg_stream(spec, &v);
    auto head = take(s, 100);  // far past the checked range
    CHECK(head.size() == 100);
  }

  SECTION("resolution bounds enforced") {
    HeisenbergSpec spec;
    CHECK_THROWS_AS(discretization_oracle(spec, 4, 10), std::invalid_argument);
    CHECK_THROWS_AS(discretization_oracle(spec, 512, 10),
                    std::invalid_argument);
  }
}

TEST_CASE("stream cache round trip") {
  const std::string path = "test_stream_cache.bin";
  auto s = torus_stream(2);
  const std::uint64_t written = write_stream_cache(s, path, 500.0);
  REQUIRE(written > 0);

  auto info = stream_cache_info(path);
  REQUIRE(info.has_value());
  CHECK(info->label == "torus2");
  CHECK(info->d_H == 2);
  CHECK(info->order_m == 2.0);
  CHECK(info->records == written);
  CHECK(info->last_value <= 500.0);

  auto replay = load_stream_cache(path);
  auto a = take(s, (int)written);
  auto b = take(replay, (int)written + 10);  // finite: stops at horizon
  REQUIRE(b.size() == written);
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(a[i].value == b[i].value);
    CHECK(a[i].multiplicity == b[i].multiplicity);
  }
  std::remove(path.c_str());
  CHECK_FALSE(stream_cache_info(path).has_value());
}
