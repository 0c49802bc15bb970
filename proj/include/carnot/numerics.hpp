#pragma once

// Shared numerical kernels: compensated and pairwise summation, Gauss-Legendre
// rules, adaptive panel quadrature, endpoint-singularity substitutions,
// polynomial extrapolation, finite-difference stencils and a deterministic
// block-parallel driver.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

namespace carnot {

using cdouble = std::complex<double>;

// Thrown when an iterative numerical procedure fails to settle.
struct NonConvergence : std::runtime_error {
  explicit NonConvergence(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Summation

// Neumaier-compensated accumulator; error below one ulp per added term.
class KahanSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Pairwise (balanced tree) reduction; deterministic for a fixed input order.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

// ---------------------------------------------------------------------------
// Gauss-Legendre rules

struct GaussRule {
  std::vector<double> x;  // nodes on [-1, 1]
  std::vector<double> w;
};

// Nodes by Newton iteration on P_n from Chebyshev initial guesses; cached.
inline const GaussRule& gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  static std::map<int, GaussRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  GaussRule rule;
  rule.x.resize(n);
  rule.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      // Legendre recurrence for P_n(x) and P'_n(x).
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.x[i] = -x;
    rule.w[i] = w;
    rule.x[n - 1 - i] = x;
    rule.w[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.x[n / 2] = 0.0;
  return cache.emplace(n, std::move(rule)).first->second;
}

// ---------------------------------------------------------------------------
// Adaptive quadrature

template <class T>
struct QuadResult {
  T value{};
  double abs_error = 0.0;
  long evals = 0;
  bool converged = true;
};

namespace detail {

template <class T, class F>
T gauss_panel(F& f, double a, double b, const GaussRule& rule, long& evals) {
  const double mid = 0.5 * (a + b);
  const double hw = 0.5 * (b - a);
  T acc{};
  for (std::size_t i = 0; i < rule.x.size(); ++i) {
    acc += rule.w[i] * f(mid + hw * rule.x[i]);
    ++evals;
  }
  return acc * hw;
}

template <class T, class F>
void adaptive_rec(F& f, double a, double b, T whole, double tol,
                  const GaussRule& rule, int depth, QuadResult<T>& out) {
  const double mid = 0.5 * (a + b);
  const T left = gauss_panel<T>(f, a, mid, rule, out.evals);
  const T right = gauss_panel<T>(f, mid, b, rule, out.evals);
  const double err = std::abs(whole - (left + right));
  if (err <= tol || depth <= 0) {
    out.value += left + right;
    out.abs_error += err;
    if (depth <= 0 && err > tol) out.converged = false;
    return;
  }
  adaptive_rec(f, a, mid, left, 0.5 * tol, rule, depth - 1, out);
  adaptive_rec(f, mid, b, right, 0.5 * tol, rule, depth - 1, out);
}

}  // namespace detail

// Adaptive bisection with 15-point Gauss panels. `abs_tol` is a target for
// the whole interval; the per-panel estimate compares one panel against its
// two halves.
template <class T, class F>
QuadResult<T> adaptive_gauss(F&& f, double a, double b, double abs_tol,
                             int max_depth = 52) {
  QuadResult<T> out;
  if (a == b) return out;
  const GaussRule& rule = gauss_legendre(15);
  double lo = a, hi = b;
  double sign = 1.0;
  if (lo > hi) {
    std::swap(lo, hi);
    sign = -1.0;
  }
  const T whole = detail::gauss_panel<T>(f, lo, hi, rule, out.evals);
  detail::adaptive_rec(f, lo, hi, whole, abs_tol, rule, max_depth, out);
  out.value *= sign;
  return out;
}

// Integrates f over (0, 1] where f(u) ~ u^alpha near u = 0 with alpha > -1
// (fractional-power endpoint). Substitutes u = v^q so the transformed
// integrand is at least C^2 at the origin.
template <class T, class F>
QuadResult<T> integrate_power_endpoint(F&& f, double alpha, double abs_tol) {
  if (!(alpha > -1.0))
    throw std::invalid_argument("integrate_power_endpoint: exponent <= -1");
  int q = 4;
  if (alpha < 0.0) q = std::max(q, (int)std::ceil(3.0 / (alpha + 1.0)));
  q = std::min(q, 40);
  auto g = [&f, q](double v) {
    const double u = std::pow(v, q);
    return f(u) * (q * std::pow(v, q - 1));
  };
  return adaptive_gauss<T>(g, 0.0, 1.0, abs_tol);
}

// ---------------------------------------------------------------------------
// Extrapolation

template <class T>
struct Extrapolation {
  T value{};
  double error = 0.0;
};

namespace detail {

template <class T>
T neville_at_zero(std::span<const double> xs, std::span<const T> ys) {
  const std::size_t n = xs.size();
  std::vector<T> tab(ys.begin(), ys.end());
  for (std::size_t level = 1; level < n; ++level)
    for (std::size_t i = 0; i + level < n; ++i) {
      const double xi = xs[i], xj = xs[i + level];
      tab[i] = (tab[i + 1] * (0.0 - xi) - tab[i] * (0.0 - xj)) / (xj - xi);
    }
  return tab[0];
}

}  // namespace detail

// Neville polynomial extrapolation of samples (x_i, y_i) to x = 0. The error
// estimate compares against the extrapolation with the coarsest sample
// (largest |x|) dropped.
template <class T>
Extrapolation<T> extrapolate_to_zero(std::span<const double> xs,
                                     std::span<const T> ys) {
  const std::size_t n = xs.size();
  if (n == 0 || ys.size() != n)
    throw std::invalid_argument("extrapolate_to_zero: bad sample arrays");
  const T full = detail::neville_at_zero(xs, ys);
  if (n == 1) return {full, 0.0};
  std::size_t coarse = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs(xs[i]) > std::abs(xs[coarse])) coarse = i;
  std::vector<double> xsub;
  std::vector<T> ysub;
  for (std::size_t i = 0; i < n; ++i)
    if (i != coarse) {
      xsub.push_back(xs[i]);
      ysub.push_back(ys[i]);
    }
  const T sub = detail::neville_at_zero(std::span<const double>(xsub),
                                        std::span<const T>(ysub));
  return {full, std::abs(full - sub)};
}

// ---------------------------------------------------------------------------
// Reproducible pseudo-randomness (stateless, index-addressable)

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform in [0, 1), a pure function of (seed, index).
inline double hash_uniform(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t z = splitmix64(seed ^ splitmix64(index + 1));
  return (z >> 11) * 0x1.0p-53;
}

inline double hash_uniform(std::uint64_t seed, std::uint64_t index, double lo,
                           double hi) {
  return lo + (hi - lo) * hash_uniform(seed, index);
}

// ---------------------------------------------------------------------------
// Finite differences (Fornberg weights for arbitrary nodes)

// Weights w_i with f^(m)(x0) ~ sum_i w_i f(nodes[i]).
inline std::vector<double> fd_weights(double x0, std::span<const double> nodes,
                                      int m) {
  const int n = (int)nodes.size() - 1;
  if (n < m) throw std::invalid_argument("fd_weights: too few nodes");
  std::vector<std::vector<double>> c(n + 1, std::vector<double>(m + 1, 0.0));
  double c1 = 1.0;
  double c4 = nodes[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = nodes[i] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = nodes[i] - nodes[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k)
        c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n + 1);
  for (int i = 0; i <= n; ++i) w[i] = c[i][m];
  return w;
}

// j-th derivative of a scalar function, 6th-order stencil. One-sided toward
// positive arguments when the window would cross `lo`.
template <class F>
double fd_derivative(F&& f, double x, int j, double lo = -1e300,
                     double hi = 1e300) {
  if (j == 0) return f(x);
  const int pts = j + 6;
  const double step = std::pow(1e-16, 1.0 / (j + 6));
  std::vector<double> nodes(pts);
  double start = x - step * (pts - 1) / 2.0;
  if (start < lo) start = x;                        // one-sided, forward
  if (start + step * (pts - 1) > hi) start = x - step * (pts - 1);
  for (int i = 0; i < pts; ++i) nodes[i] = start + i * step;
  const std::vector<double> w = fd_weights(x, nodes, j);
  double acc = 0.0;
  for (int i = 0; i < pts; ++i) acc += w[i] * f(nodes[i]);
  return acc;
}

// ---------------------------------------------------------------------------
// Deterministic block-parallel driver

// Runs fn(block) for block = 0..nblocks-1 on `threads` workers. Blocks are
// claimed by an atomic counter; the work content of each block must depend
// only on the block index, so results are identical for any thread count.
inline void run_blocks(std::uint64_t nblocks, int threads,
                       const std::function<void(std::uint64_t)>& fn) {
  if (threads <= 1 || nblocks <= 1) {
    for (std::uint64_t b = 0; b < nblocks; ++b) fn(b);
    return;
  }
  std::atomic<std::uint64_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::uint64_t b = next.fetch_add(1);
      if (b >= nblocks) return;
      fn(b);
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<std::uint64_t>(threads, nblocks);
  pool.reserve(n);
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

inline int default_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : (int)hc;
}

}  // namespace carnot
