#pragma once

// Lazy eigenvalue streams of model positive operators, enumerated in
// nondecreasing order with multiplicities.
//
//   torus_stream(d):  1 + |k|^2 on R^d/(2pi Z)^d, multiplicity = number of
//                     lattice representations of |k|^2 (block-sieved shells).
//   heisenberg_stream: 1 - (X^2 + Y^2) on the integer-lattice quotient of the
//                     polarized Heisenberg group. The eigenvalue families are
//                     derived from the Fourier-Hermite decomposition of the
//                     quotient and are gated on the discretization oracle:
//                       torus family    1 + 4 pi^2 (a^2 + b^2),
//                       Hermite family  1 + 2 pi |n| (2l + 1), multiplicity |n|
//                     per sign of n.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "carnot/numerics.hpp"

namespace carnot {

struct SpectralEntry {
  double value = 0.0;
  std::uint64_t multiplicity = 0;
};

class EigenvalueCursor {
 public:
  virtual ~EigenvalueCursor() = default;
  // Advances to the next distinct eigenvalue; false when the stream's finite
  // horizon (if any) is exhausted.
  virtual bool next(SpectralEntry& out) = 0;
};

struct SpectralStream {
  std::string label;
  double order_m = 2.0;
  int d_H = 0;
  std::string volume_note;
  std::function<std::unique_ptr<EigenvalueCursor>()> open;
};

// ---------------------------------------------------------------------------
// Lattice shell counts

inline std::uint64_t isqrt_u64(std::uint64_t n) {
  if (n == 0) return 0;
  std::uint64_t r = (std::uint64_t)std::sqrt((double)n);
  while (r > 0 && r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

namespace lattice_detail {

// Adds the lattice representation counts of n in [n0, n1) over the last
// coordinate, given the partial squared norm of the fixed prefix.
inline void last_axis(std::uint64_t partial, std::uint64_t n0, std::uint64_t n1,
                      std::uint64_t mult, std::span<std::uint64_t> counts) {
  if (partial >= n1) return;
  std::uint64_t klo = 0;
  if (partial < n0) {
    const std::uint64_t gap = n0 - partial;
    klo = isqrt_u64(gap);
    if (klo * klo < gap) ++klo;
  }
  const std::uint64_t khi = isqrt_u64(n1 - 1 - partial);
  for (std::uint64_t k = klo; k <= khi; ++k)
    counts[partial + k * k - n0] += (k == 0 ? 1 : 2) * mult;
}

inline void walk(int level, int d, std::uint64_t partial, std::uint64_t mult,
                 std::uint64_t n0, std::uint64_t n1,
                 std::span<std::uint64_t> counts) {
  if (level == d - 1) {
    last_axis(partial, n0, n1, mult, counts);
    return;
  }
  for (std::uint64_t k = 0; partial + k * k < n1; ++k)
    walk(level + 1, d, partial + k * k, (k == 0 ? 1 : 2) * mult, n0, n1,
         counts);
}

}  // namespace lattice_detail

// counts[i] += #{k in Z^d : |k|^2 = n0 + i} for n0 + i < n1. Workers split
// the leading coordinate; integer adds make the merge order-free.
inline void lattice_block_counts(int d, std::uint64_t n0, std::uint64_t n1,
                                 std::span<std::uint64_t> counts,
                                 int threads = 1) {
  if (d < 1) throw std::invalid_argument("lattice dimension must be >= 1");
  if (counts.size() < n1 - n0)
    throw std::invalid_argument("lattice_block_counts: buffer too small");
  if (d == 1 || threads <= 1) {
    lattice_detail::walk(0, d, 0, 1, n0, n1, counts);
    return;
  }
  const std::uint64_t kmax = isqrt_u64(n1 - 1);
  std::vector<std::vector<std::uint64_t>> local(
      threads, std::vector<std::uint64_t>(counts.size(), 0));
  std::atomic<std::uint64_t> next_k{0};
  // partition the leading coordinate among workers
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (;;) {
        const std::uint64_t k = next_k.fetch_add(1);
        if (k > kmax) return;
        if (k * k >= n1) return;
        lattice_detail::walk(1, d, k * k, k == 0 ? 1 : 2, n0, n1,
                             std::span<std::uint64_t>(local[w]));
      }
    });
  for (auto& t : pool) t.join();
  for (const auto& l : local)
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += l[i];
}

// ---------------------------------------------------------------------------
// Streams

namespace stream_detail {

// Shared block-buffered cursor: fills counts for [start, start + block) via
// `fill`, emits nonzero entries as (value_of(n), count). Blocks start small
// and double up to a cap, so shallow consumers never pay for a deep sieve
// while deep consumers amortize the prefix walks geometrically.
class BlockCursor : public EigenvalueCursor {
 public:
  using Fill = std::function<void(std::uint64_t n0, std::uint64_t n1,
                                  std::span<std::uint64_t>)>;
  using Value = std::function<double(std::uint64_t n)>;

  BlockCursor(std::uint64_t block0, Fill fill, Value value,
              std::uint64_t block_cap = 1ull << 20)
      : block_(block0), cap_(std::max(block0, block_cap)),
        fill_(std::move(fill)), value_(std::move(value)) {}

  bool next(SpectralEntry& out) override {
    for (;;) {
      while (idx_ < counts_.size()) {
        const std::size_t i = idx_++;
        if (counts_[i] != 0) {
          out.value = value_(start_ + i);
          out.multiplicity = counts_[i];
          return true;
        }
      }
      start_ += counts_.size();
      counts_.assign(block_, 0);
      fill_(start_, start_ + block_, std::span<std::uint64_t>(counts_));
      idx_ = 0;
      block_ = std::min(cap_, block_ * 2);
    }
  }

 private:
  std::uint64_t block_;
  std::uint64_t cap_;
  Fill fill_;
  Value value_;
  std::uint64_t start_ = 0;
  std::vector<std::uint64_t> counts_;
  std::size_t idx_ = 0;
};

}  // namespace stream_detail

// Flat Laplacian 1 + |k|^2 on the 2pi-periodic torus; 1 <= d <= 5.
inline SpectralStream torus_stream(int d, int threads = 1,
                                   std::uint64_t block = 4096) {
  if (d < 1 || d > 5)
    throw std::invalid_argument("torus_stream: d must be in 1..5");
  SpectralStream s;
  s.label = "torus" + std::to_string(d);
  s.order_m = 2.0;
  s.d_H = d;
  s.volume_note =
      "R^d/(2 pi Z)^d; frequency lattice Z^d, no 2 pi factors in eigenvalues";
  s.open = [d, threads, block]() -> std::unique_ptr<EigenvalueCursor> {
    return std::make_unique<stream_detail::BlockCursor>(
        block,
        [d, threads](std::uint64_t n0, std::uint64_t n1,
                     std::span<std::uint64_t> counts) {
          lattice_block_counts(d, n0, n1, counts, threads);
        },
        [](std::uint64_t n) { return 1.0 + (double)n; });
  };
  return s;
}

// ---------------------------------------------------------------------------
// Heisenberg nilmanifold stream (validation-gated)

struct HeisenbergSpec {
  int validate_count = 50;
  double validate_tol = 1e-3;
  bool override_validation = false;
  std::string label() const { return "heisenberg_z3"; }
};

struct HeisenbergValidation {
  bool pass = false;
  int compared = 0;
  double max_rel_dev = 0.0;
  double checked_up_to = 0.0;
  std::vector<std::pair<double, double>> pairs;  // (stream, oracle)
};

struct UnvalidatedStream : std::runtime_error {
  explicit UnvalidatedStream(const std::string& what)
      : std::runtime_error(what) {}
};

namespace stream_detail {

// Hermite family shell v = |n|(2l+1): multiplicity 2 sum_{q | v, v/q odd} q.
inline void hermite_block(std::uint64_t v0, std::uint64_t v1,
                          std::span<std::uint64_t> counts) {
  for (std::uint64_t q = 1; q < v1; ++q) {
    // odd r with q r in [max(v0, q), v1)
    std::uint64_t r = (v0 + q - 1) / q;
    if (r < 1) r = 1;
    if (r % 2 == 0) ++r;
    for (; q * r < v1; r += 2) {
      const std::uint64_t v = q * r;
      if (v >= v0) counts[v - v0] += 2 * q;
    }
  }
}

class MergeCursor : public EigenvalueCursor {
 public:
  MergeCursor(std::unique_ptr<EigenvalueCursor> a,
              std::unique_ptr<EigenvalueCursor> b, double allowed_up_to,
              std::string gate_message)
      : a_(std::move(a)),
        b_(std::move(b)),
        allowed_(allowed_up_to),
        gate_message_(std::move(gate_message)) {
    have_a_ = a_->next(ea_);
    have_b_ = b_->next(eb_);
  }

  bool next(SpectralEntry& out) override {
    if (!have_a_ && !have_b_) return false;
    const bool take_a = have_a_ && (!have_b_ || ea_.value <= eb_.value);
    out = take_a ? ea_ : eb_;
    if (take_a)
      have_a_ = a_->next(ea_);
    else
      have_b_ = b_->next(eb_);
    // coalesce exact ties across the two families
    while ((take_a ? have_b_ : have_a_)) {
      SpectralEntry& other = take_a ? eb_ : ea_;
      if (other.value != out.value) break;
      out.multiplicity += other.multiplicity;
      if (take_a)
        have_b_ = b_->next(eb_);
      else
        have_a_ = a_->next(ea_);
    }
    if (out.value > allowed_) throw UnvalidatedStream(gate_message_);
    return true;
  }

 private:
  std::unique_ptr<EigenvalueCursor> a_, b_;
  SpectralEntry ea_{}, eb_{};
  bool have_a_ = false, have_b_ = false;
  double allowed_;
  std::string gate_message_;
};

}  // namespace stream_detail

// The two Fourier-Hermite families merged into one nondecreasing stream.
// Without a passed validation (or the override flag) the cursor refuses to
// enumerate past the oracle-checked range.
inline SpectralStream heisenberg_stream(
    const HeisenbergSpec& spec, const HeisenbergValidation* validation = nullptr,
    int threads = 1, std::uint64_t block = 4096) {
  double allowed = 0.0;
  std::string gate;
  if (spec.override_validation) {
    allowed = std::numeric_limits<double>::infinity();
  } else if (validation && validation->pass) {
    allowed = std::numeric_limits<double>::infinity();
  } else if (validation) {
    allowed = validation->checked_up_to;
    gate = "heisenberg stream: oracle validation failed; enumeration beyond "
           "the checked range requires override_validation";
  } else {
    gate = "heisenberg stream: not validated against the discretization "
           "oracle; run the validation or set override_validation";
  }

  SpectralStream s;
  s.label = spec.label();
  s.order_m = 2.0;
  s.d_H = 4;
  s.volume_note =
      "integer lattice quotient of the polarized Heisenberg group; "
      "P = 1 - (X^2 + Y^2)";
  s.open = [threads, block, allowed, gate]() -> std::unique_ptr<EigenvalueCursor> {
    auto torus_family = std::make_unique<stream_detail::BlockCursor>(
        block,
        [threads](std::uint64_t n0, std::uint64_t n1,
                  std::span<std::uint64_t> counts) {
          lattice_block_counts(2, n0, n1, counts, threads);
        },
        [](std::uint64_t n) {
          return 1.0 + 4.0 * M_PI * M_PI * (double)n;
        });
    auto hermite_family = std::make_unique<stream_detail::BlockCursor>(
        block,
        [](std::uint64_t v0, std::uint64_t v1, std::span<std::uint64_t> counts) {
          stream_detail::hermite_block(v0, v1, counts);
        },
        [](std::uint64_t v) { return 1.0 + 2.0 * M_PI * (double)v; });
    return std::make_unique<stream_detail::MergeCursor>(
        std::move(torus_family), std::move(hermite_family), allowed, gate);
  };
  return s;
}

// ---------------------------------------------------------------------------
// Counting and Weyl fits

inline std::uint64_t counting(const SpectralStream& s, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("counting: Lambda < 0");
  auto cur = s.open();
  std::uint64_t n = 0;
  SpectralEntry e;
  while (cur->next(e)) {
    if (e.value > lambda) break;
    n += e.multiplicity;
  }
  return n;
}

struct WeylFit {
  double C = 0.0;
  double exponent = 0.0;
  double stderr_exponent = 0.0;
  int points = 0;
  std::vector<double> lambdas;
  std::vector<std::uint64_t> counts;
};

// Least squares of log N(Lambda) against log Lambda on a dyadic ladder.
inline WeylFit weyl_fit(const SpectralStream& s, double lambda_min,
                        double lambda_max) {
  if (!(lambda_min > 0.0) || !(lambda_max > lambda_min))
    throw std::invalid_argument("weyl_fit: bad Lambda range");
  if (lambda_max / lambda_min < 100.0)
    throw std::invalid_argument("weyl_fit: range must span >= 2 decades");
  WeylFit fit;
  for (double lam = lambda_min; lam <= lambda_max * (1 + 1e-12); lam *= 2.0)
    fit.lambdas.push_back(lam);
  fit.points = (int)fit.lambdas.size();
  if (fit.points < 8) throw std::invalid_argument("weyl_fit: fewer than 8 points");

  fit.counts.assign(fit.lambdas.size(), 0);
  auto cur = s.open();
  SpectralEntry e;
  std::uint64_t running = 0;
  std::size_t next_mark = 0;
  while (next_mark < fit.lambdas.size() && cur->next(e)) {
    while (next_mark < fit.lambdas.size() && e.value > fit.lambdas[next_mark])
      fit.counts[next_mark++] = running;
    if (next_mark >= fit.lambdas.size()) break;
    running += e.multiplicity;
  }
  while (next_mark < fit.lambdas.size()) fit.counts[next_mark++] = running;

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int n = fit.points;
  for (int i = 0; i < n; ++i) {
    if (fit.counts[i] == 0)
      throw std::invalid_argument("weyl_fit: empty count at a fit point");
    const double x = std::log(fit.lambdas[i]);
    const double y = std::log((double)fit.counts[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double det = n * sxx - sx * sx;
  fit.exponent = (n * sxy - sx * sy) / det;
  const double intercept = (sy * sxx - sx * sxy) / det;
  fit.C = std::exp(intercept);
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = std::log(fit.lambdas[i]);
    const double y = std::log((double)fit.counts[i]);
    const double r = y - (intercept + fit.exponent * x);
    ss += r * r;
  }
  if (n > 2)
    fit.stderr_exponent = std::sqrt(ss / (n - 2) / (sxx - sx * sx / n));
  return fit;
}

}  // namespace carnot
