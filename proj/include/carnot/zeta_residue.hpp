#pragma once

// Spectral zeta functions zeta_{A,P}(s) = sum a_n lambda_n^{-s} for diagonal
// weights, with Weyl tail completion past a truncation point, and numerical
// residue extraction at the first pole s0 = d_H/m:
//
//   residue_at:  eps * zeta(s0 + eps) extrapolated over the fixed eps ladder
//                {0.2, 0.1, 0.05, 0.025}, with the truncation point doubled
//                until the extrapolant stabilizes.
//   c_of:        (m/d_H) * residue at s0.
//   res_dh:      Res_{s=0} sum t_n lambda_n^{-s/m} for t_n of order -d_H,
//                extrapolated on the s variable with the same ladder.
//
// The tail coefficient is the arithmetic mean of W(L_j)/L_j^{s0} over a
// dyadic window below the truncation point, where W is the weighted counting
// function; being linear in the weights, it keeps the residue functionals
// linear. The free-exponent log-log fit is kept alongside as a validity
// check (exponent within 5% of d_H/m).

#include <algorithm>
#include <cstdint>
#include <vector>

#include "carnot/numerics.hpp"
#include "carnot/spectral_models.hpp"

namespace carnot {

// weight(index, lambda): diagonal coefficient of the index-th eigenvector.
using WeightFn = std::function<double(std::uint64_t, double)>;

inline WeightFn unit_weights() {
  return [](std::uint64_t, double) { return 1.0; };
}

class ZetaProfile {
 public:
  ZetaProfile(SpectralStream stream, WeightFn weights, double lambda_cut,
              bool weights_are_unit = false)
      : stream_(std::move(stream)),
        weights_(std::move(weights)),
        unit_weights_(weights_are_unit) {
    if (!weights_) {
      weights_ = carnot::unit_weights();
      unit_weights_ = true;
    }
    cursor_ = stream_.open();
    extend(lambda_cut);
  }

  double s0() const { return (double)stream_.d_H / stream_.order_m; }
  double order_m() const { return stream_.order_m; }
  int d_H() const { return stream_.d_H; }
  bool unit_weights_declared() const { return unit_weights_; }
  double lambda_cut() const { return lambda_cut_; }
  const SpectralStream& stream() const { return stream_; }

  // Enumerates further so that all eigenvalues <= new_cut are aggregated.
  void extend(double new_cut) {
    if (new_cut <= lambda_cut_) return;
    if (pending_valid_ && pending_.value <= new_cut) absorb(pending_);
    while (pending_valid_ ? pending_.value <= new_cut : true) {
      SpectralEntry e;
      if (!cursor_->next(e)) {
        // a finite (cached) stream must cover the requested truncation
        exhausted_ = true;
        throw NonConvergence(
            "zeta profile: stream exhausted below the requested truncation "
            "point");
      }
      if (e.value > new_cut) {
        pending_ = e;
        pending_valid_ = true;
        break;
      }
      absorb(e);
    }
    lambda_cut_ = new_cut;
  }

  // sum of a_n lambda_n^{-s} over lambda_n <= lambda_cut (compensated).
  cdouble direct_sum(cdouble s) const {
    KahanSum re, im;
    for (std::size_t i = 0; i < lam_.size(); ++i) {
      const cdouble t = wsum_[i] * cpow_pos(lam_[i], -s);
      re.add(t.real());
      im.add(t.imag());
    }
    return {re.value(), im.value()};
  }

  // weighted counting function W(lambda) = sum_{lambda_n <= lambda} a_n.
  double weighted_count(double lambda) const {
    auto it = std::upper_bound(lam_.begin(), lam_.end(), lambda);
    const std::size_t idx = (std::size_t)(it - lam_.begin());
    return idx == 0 ? 0.0 : wprefix_[idx - 1];
  }

  // Pinned-exponent tail coefficient: mean of W(L)/L^{s0} over the dyadic
  // window [lambda_cut / 2^octaves, lambda_cut]. Linear in the weights.
  double tail_coefficient(int octaves = 3) const {
    if (weighted_count(lambda_cut_) == 0.0) return 0.0;  // zero weights
    double acc = 0.0;
    int n = 0;
    for (int j = 0; j <= octaves; ++j) {
      const double lam = lambda_cut_ / (double)(1u << j);
      const double w = weighted_count(lam);
      if (w == 0.0) break;  // window reached below the first eigenvalue
      acc += w / std::pow(lam, s0());
      ++n;
    }
    if (n == 0) throw NonConvergence("zeta tail: empty counting window");
    return acc / n;
  }

  // Free-exponent log-log fit of the weighted counting on dyadic marks;
  // usable once the window spans two decades.
  WeylFit tail_model(int max_points = 16) const {
    WeylFit fit;
    std::vector<double> lams, counts;
    for (int j = 0; j < max_points; ++j) {
      const double lam = lambda_cut_ / std::pow(2.0, j);
      const double w = weighted_count(lam);
      if (w <= 0.0) break;
      lams.push_back(lam);
      counts.push_back(w);
    }
    std::reverse(lams.begin(), lams.end());
    std::reverse(counts.begin(), counts.end());
    if (lams.size() < 8 || lams.back() / lams.front() < 100.0)
      throw std::invalid_argument("tail_model: window too short for a fit");
    fit.points = (int)lams.size();
    fit.lambdas = lams;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = fit.points;
    for (int i = 0; i < n; ++i) {
      const double x = std::log(lams[i]);
      const double y = std::log(counts[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double det = n * sxx - sx * sx;
    fit.exponent = (n * sxy - sx * sy) / det;
    fit.C = std::exp((sy * sxx - sx * sxy) / det);
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = std::log(lams[i]);
      const double y = std::log(counts[i]);
      const double r = y - (std::log(fit.C) + fit.exponent * x);
      ss += r * r;
    }
    if (n > 2)
      fit.stderr_exponent = std::sqrt(ss / (n - 2) / (sxx - sx * sx / n));
    return fit;
  }

  bool tail_model_valid() const {
    const WeylFit fit = tail_model();
    return std::abs(fit.exponent - s0()) <= 0.05 * s0();
  }

 private:
  static cdouble cpow_pos(double base, cdouble e) {
    return std::exp(e * std::log(base));
  }

  void absorb(const SpectralEntry& e) {
    double wacc = 0.0;
    if (unit_weights_) {
      wacc = (double)e.multiplicity;
      index_ += e.multiplicity;
    } else {
      for (std::uint64_t i = 0; i < e.multiplicity; ++i)
        wacc += weights_(index_++, e.value);
    }
    lam_.push_back(e.value);
    wsum_.push_back(wacc);
    wprefix_.push_back((wprefix_.empty() ? 0.0 : wprefix_.back()) + wacc);
    pending_valid_ = false;
  }

  SpectralStream stream_;
  WeightFn weights_;
  bool unit_weights_ = false;
  std::unique_ptr<EigenvalueCursor> cursor_;
  SpectralEntry pending_{};
  bool pending_valid_ = false;
  bool exhausted_ = false;
  std::uint64_t index_ = 0;
  double lambda_cut_ = 0.0;
  std::vector<double> lam_, wsum_, wprefix_;
};

struct ZetaValue {
  cdouble value{};
  bool tail_completed = false;
};

// Truncated sum plus the closed-form tail int_cut^inf t^{-s} d(C t^{s0}).
// Tail completion is applied for declared-unit weights only; otherwise the
// value is the truncated sum, flagged.
inline ZetaValue zeta(const ZetaProfile& zp, cdouble s) {
  if (!(s.real() > zp.s0()))
    throw std::invalid_argument("zeta: Re(s) must exceed d_H/m");
  ZetaValue out;
  out.value = zp.direct_sum(s);
  if (zp.unit_weights_declared()) {
    const double C = zp.tail_coefficient();
    const double s0 = zp.s0();
    out.value += C * s0 * std::exp((s0 - s) * std::log(zp.lambda_cut())) /
                 (s - s0);
    out.tail_completed = true;
  }
  return out;
}

struct ResidueOptions {
  double lambda_cut0 = 256.0;
  int max_escalations = 16;  // 1 disables escalation (single fixed cut)
  double stabilize_rel = 2.5e-3;
  std::array<double, 4> eps{0.2, 0.1, 0.05, 0.025};
  int fit_octaves = 3;
};

struct ResidueRow {
  double eps = 0.0;
  double zeta_value = 0.0;
  double eps_times_zeta = 0.0;
  double extrapolant = 0.0;
};

struct ResidueResult {
  double residue = 0.0;
  double error = 0.0;
  bool stabilized = false;
  double lambda_cut = 0.0;
  std::vector<ResidueRow> rows;
};

namespace zeta_detail {

// Shared escalation loop: extrapolates eps * zeta_w(s0 + eps * eps_scale)
// to eps = 0, doubling the truncation until the extrapolant settles. The
// weighted tail model supplies the pole part for non-unit weights as well.
inline ResidueResult residue_core(ZetaProfile& zp, double eps_scale,
                                  const ResidueOptions& opt) {
  const double s0 = zp.s0();
  ResidueResult out;
  double prev = 0.0;
  bool have_prev = false;
  double cut = std::max(opt.lambda_cut0, zp.lambda_cut());
  double last_change = 0.0;
  Extrapolation<double> ex{};
  for (int esc = 0; esc < opt.max_escalations; ++esc) {
    zp.extend(cut);
    const double C = zp.tail_coefficient(opt.fit_octaves);
    out.rows.clear();
    std::vector<double> xs, ys;
    for (double eps : opt.eps) {
      const double sigma = s0 + eps * eps_scale;
      const double direct = zp.direct_sum(sigma).real();
      const double tail =
          C * s0 * std::pow(zp.lambda_cut(), s0 - sigma) / (sigma - s0);
      const double zv = direct + tail;
      xs.push_back(eps);
      ys.push_back(eps * zv);
      ResidueRow row;
      row.eps = eps;
      row.zeta_value = zv;
      row.eps_times_zeta = eps * zv;
      row.extrapolant = detail::neville_at_zero<double>(
          std::span<const double>(xs), std::span<const double>(ys));
      out.rows.push_back(row);
    }
    ex = extrapolate_to_zero<double>(std::span<const double>(xs),
                                     std::span<const double>(ys));
    if (have_prev) {
      last_change = std::abs(ex.value - prev);
      if (last_change <=
          opt.stabilize_rel * std::max(std::abs(ex.value), 1e-300)) {
        out.stabilized = true;
        prev = ex.value;
        break;
      }
    }
    prev = ex.value;
    have_prev = true;
    cut = zp.lambda_cut() * 2.0;
  }
  out.residue = ex.value;
  out.error = ex.error + last_change;
  out.lambda_cut = zp.lambda_cut();
  return out;
}

}  // namespace zeta_detail

// Residue of zeta at its largest pole s0 = d_H/m.
inline ResidueResult residue_at(ZetaProfile& zp, double s0,
                                const ResidueOptions& opt = {}) {
  if (std::abs(s0 - zp.s0()) > 1e-9 * std::max(1.0, zp.s0()))
    throw std::invalid_argument(
        "residue_at: s0 must equal d_H/m of the stream");
  return zeta_detail::residue_core(zp, 1.0, opt);
}

// C(A, P) = (m/d_H) Res_{s = d_H/m} zeta_{A,P}(s).
inline ResidueResult c_of(ZetaProfile& zp, const ResidueOptions& opt = {}) {
  ResidueResult r = residue_at(zp, zp.s0(), opt);
  const double scale = zp.order_m() / zp.d_H();
  r.residue *= scale;
  r.error *= scale;
  return r;
}

// Res_{s=0} sum_n t_n lambda_n^{-s/m} for t_n = a_n lambda_n^{-d_H/m} with
// bounded a_n, evaluated directly on the s variable.
inline ResidueResult res_dh(const WeightFn& t_weights,
                            const SpectralStream& P,
                            const ResidueOptions& opt = {}) {
  const double s0 = (double)P.d_H / P.order_m;
  WeightFn a = [t_weights, s0](std::uint64_t n, double lambda) {
    return t_weights(n, lambda) * std::pow(lambda, s0);
  };
  ZetaProfile zp(P, a, opt.lambda_cut0);
  return zeta_detail::residue_core(zp, 1.0 / P.order_m, opt);
}

}  // namespace carnot
