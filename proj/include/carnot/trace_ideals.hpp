#pragma once

// Singular-value sequences and the two normalised-trace estimators:
//   weak_norm_estimate    sup (n+1) mu(n)          (weak-l1 norm)
//   dixmier_estimate      (1/log(N+2)) sum_{n<=N} mu(n)
//   log_coefficient_fit   c from S_N = c log N + O(1) at dyadic N.
// Sequences are consumed as runs (value, count); all partial sums use
// compensated accumulation.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "carnot/numerics.hpp"
#include "carnot/spectral_models.hpp"

namespace carnot {

class RunCursor {
 public:
  virtual ~RunCursor() = default;
  virtual bool next(double& value, std::uint64_t& count) = 0;
};

// Lazy nonincreasing positive sequence, stored as runs of equal values. The
// cursor returned by open() enforces monotonicity on every emitted run.
class SingularSequence {
 public:
  using Open = std::function<std::unique_ptr<RunCursor>()>;

  SingularSequence() = default;
  SingularSequence(Open open, std::string provenance)
      : open_(std::move(open)), provenance_(std::move(provenance)) {}

  const std::string& provenance() const { return provenance_; }

  std::unique_ptr<RunCursor> open() const {
    class Monitor : public RunCursor {
     public:
      explicit Monitor(std::unique_ptr<RunCursor> inner)
          : inner_(std::move(inner)) {}
      bool next(double& value, std::uint64_t& count) override {
        if (!inner_->next(value, count)) return false;
        if (!(value > 0.0))
          throw std::logic_error("singular sequence: nonpositive value");
        if (value > prev_ * (1.0 + 1e-13))
          throw std::logic_error("singular sequence: increasing run");
        value = std::min(value, prev_);
        prev_ = value;
        return true;
      }

     private:
      std::unique_ptr<RunCursor> inner_;
      double prev_ = std::numeric_limits<double>::infinity();
    };
    return std::make_unique<Monitor>(open_());
  }

 private:
  Open open_;
  std::string provenance_;
};

// mu(n) = lambda(n)^{-p} over the stream's nondecreasing enumeration.
inline SingularSequence from_spectral(const SpectralStream& s, double p) {
  if (!(p > 0.0))
    throw std::invalid_argument("from_spectral: p must be positive");
  auto open = s.open;
  return SingularSequence(
      [open, p]() -> std::unique_ptr<RunCursor> {
        class Cursor : public RunCursor {
         public:
          Cursor(std::unique_ptr<EigenvalueCursor> cur, double p)
              : cur_(std::move(cur)), p_(p) {}
          bool next(double& value, std::uint64_t& count) override {
            SpectralEntry e;
            if (!cur_->next(e)) return false;
            value = std::pow(e.value, -p_);
            count = e.multiplicity;
            return true;
          }

         private:
          std::unique_ptr<EigenvalueCursor> cur_;
          double p_;
        };
        return std::make_unique<Cursor>(open(), p);
      },
      s.label + "^-" + std::to_string(p));
}

// mu given directly as a function of the index (runs of length one).
inline SingularSequence from_function(std::function<double(std::uint64_t)> mu,
                                      std::string provenance) {
  return SingularSequence(
      [mu]() -> std::unique_ptr<RunCursor> {
        class Cursor : public RunCursor {
         public:
          explicit Cursor(std::function<double(std::uint64_t)> mu)
              : mu_(std::move(mu)) {}
          bool next(double& value, std::uint64_t& count) override {
            value = mu_(n_++);
            count = 1;
            return true;
          }

         private:
          std::function<double(std::uint64_t)> mu_;
          std::uint64_t n_ = 0;
        };
        return std::make_unique<Cursor>(mu);
      },
      std::move(provenance));
}

// Visits runs clipped to the first n_total indices: fn(start, count, value).
template <class Fn>
void for_each_prefix_run(const SingularSequence& seq, std::uint64_t n_total,
                         Fn&& fn) {
  auto cur = seq.open();
  std::uint64_t index = 0;
  double value;
  std::uint64_t count;
  while (index < n_total && cur->next(value, count)) {
    const std::uint64_t take = std::min<std::uint64_t>(count, n_total - index);
    fn(index, take, value);
    index += take;
  }
}

// ---------------------------------------------------------------------------

struct WeakNormEstimate {
  double sup_all = 0.0;          // max over n < N of (n+1) mu(n)
  double sup_last_decade = 0.0;  // max over n in [N/10, N)
  std::uint64_t argmax = 0;
  bool stabilized = false;  // running max unchanged in the last decade
};

inline WeakNormEstimate weak_norm_estimate(const SingularSequence& seq,
                                           std::uint64_t N) {
  if (N < 1) throw std::invalid_argument("weak_norm_estimate: N must be >= 1");
  WeakNormEstimate out;
  const std::uint64_t decade_start = N / 10;
  for_each_prefix_run(seq, N, [&](std::uint64_t start, std::uint64_t count,
                                  double value) {
    // within a run the max of (n+1) mu sits at the last index
    const std::uint64_t last = start + count - 1;
    const double peak = (double)(last + 1) * value;
    if (peak > out.sup_all) {
      out.sup_all = peak;
      out.argmax = last;
    }
    if (last >= decade_start)
      out.sup_last_decade = std::max(out.sup_last_decade, peak);
  });
  out.stabilized = out.argmax < decade_start;
  return out;
}

// (1/log(N+2)) sum_{n=0}^{N} mu(n), compensated.
inline double dixmier_estimate(const SingularSequence& seq, std::uint64_t N) {
  if (N < 1) throw std::invalid_argument("dixmier_estimate: N must be >= 1");
  KahanSum sum;
  for_each_prefix_run(seq, N + 1,
                      [&](std::uint64_t, std::uint64_t count, double value) {
                        sum.add(value * (double)count);
                      });
  return sum.value() / std::log((double)N + 2.0);
}

// ---------------------------------------------------------------------------
// Partial sums at dyadic N and the log-coefficient estimator

struct DyadicSums {
  std::vector<std::uint64_t> N;  // N_0, 2 N_0, ..., exact doublings
  std::vector<double> S;         // S(N) = sum_{n < N} mu(n)
};

inline DyadicSums partial_sums_dyadic(const SingularSequence& seq,
                                      std::uint64_t n_max, int points) {
  if (points < 2 || n_max >> (points - 1) == 0)
    throw std::invalid_argument("partial_sums_dyadic: bad ladder");
  DyadicSums out;
  const std::uint64_t n0 = n_max >> (points - 1);
  for (int j = 0; j < points; ++j) out.N.push_back(n0 << j);
  out.S.assign(out.N.size(), 0.0);

  KahanSum sum;
  std::size_t mark = 0;
  std::uint64_t index = 0;
  auto cur = seq.open();
  double value;
  std::uint64_t count;
  while (mark < out.N.size() && cur->next(value, count)) {
    std::uint64_t remaining = count;
    while (remaining > 0 && mark < out.N.size()) {
      const std::uint64_t to_mark = out.N[mark] - index;
      const std::uint64_t take = std::min(remaining, to_mark);
      sum.add(value * (double)take);
      index += take;
      remaining -= take;
      if (index == out.N[mark]) out.S[mark++] = sum.value();
    }
  }
  if (mark < out.N.size())
    throw std::invalid_argument("partial_sums_dyadic: sequence too short");
  return out;
}

struct LogCoefficientFit {
  double c = 0.0;
  double spread = 0.0;  // max - min of the used increments
  std::vector<double> increments;
};

// c as the mean dyadic increment (S_{2N} - S_N)/log 2 over the upper half of
// the ladder; the spread bounds the O(1) drift.
inline LogCoefficientFit log_coefficient_fit(const DyadicSums& sums) {
  if (sums.N.size() < 8)
    throw std::invalid_argument("log_coefficient_fit: need >= 8 dyadic points");
  for (std::uint64_t n : sums.N)
    if (n == 0)
      throw std::invalid_argument("log_coefficient_fit: nonpositive N");
  LogCoefficientFit fit;
  for (std::size_t j = 0; j + 1 < sums.N.size(); ++j)
    fit.increments.push_back(
        (sums.S[j + 1] - sums.S[j]) /
        std::log((double)sums.N[j + 1] / (double)sums.N[j]));
  const std::size_t half = fit.increments.size() / 2;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, mean = 0.0;
  for (std::size_t j = half; j < fit.increments.size(); ++j) {
    mean += fit.increments[j];
    lo = std::min(lo, fit.increments[j]);
    hi = std::max(hi, fit.increments[j]);
  }
  fit.c = mean / (double)(fit.increments.size() - half);
  fit.spread = hi - lo;
  return fit;
}

}  // namespace carnot
