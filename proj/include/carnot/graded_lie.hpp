#pragma once

// Graded nilpotent Lie algebras given by structure constants: dilations,
// homogeneous dimension, the exponential-coordinate group law, and the
// structural diagnostics (antisymmetry / Jacobi / grading).

#include <algorithm>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "carnot/rational.hpp"

namespace carnot {

inline constexpr int kMaxBchDepth = 6;

template <class S>
struct GradedLieAlgebra {
  int dim = 0;
  std::vector<int> weights;  // nondecreasing, positive
  int depth = 0;             // max weight
  std::vector<S> c;          // dim^3, [e_i, e_j] = sum_k c(i,j,k) e_k

  const S& cc(int i, int j, int k) const { return c[(i * dim + j) * dim + k]; }
  S& cc(int i, int j, int k) { return c[(i * dim + j) * dim + k]; }

  static GradedLieAlgebra make(std::vector<int> w) {
    GradedLieAlgebra g;
    g.dim = (int)w.size();
    g.weights = std::move(w);
    if (g.dim == 0) throw std::invalid_argument("algebra of dimension 0");
    for (int wi : g.weights)
      if (wi <= 0) throw std::invalid_argument("weights must be positive");
    if (!std::is_sorted(g.weights.begin(), g.weights.end()))
      throw std::invalid_argument("weights must be nondecreasing");
    g.depth = g.weights.back();
    g.c.assign((std::size_t)g.dim * g.dim * g.dim, ScalarOps<S>::from_int(0));
    return g;
  }

  // Sets [e_i, e_j] = v e_k together with the antisymmetric counterpart.
  void set_bracket(int i, int j, int k, const S& v) {
    cc(i, j, k) = v;
    cc(j, i, k) = -v;
  }
};

// --- presets ---------------------------------------------------------------

template <class S = double>
GradedLieAlgebra<S> abelian_algebra(int d) {
  return GradedLieAlgebra<S>::make(std::vector<int>(d, 1));
}

// heisenberg(n): dimension 2n+1, [e_i, e_{n+i}] = e_{2n+1}.
template <class S = double>
GradedLieAlgebra<S> heisenberg_algebra(int n = 1) {
  std::vector<int> w(2 * n + 1, 1);
  w.back() = 2;
  auto g = GradedLieAlgebra<S>::make(std::move(w));
  for (int i = 0; i < n; ++i)
    g.set_bracket(i, n + i, 2 * n, ScalarOps<S>::from_int(1));
  return g;
}

// engel: dimension 4, weights (1,1,2,3), [e1,e2]=e3, [e1,e3]=e4.
template <class S = double>
GradedLieAlgebra<S> engel_algebra() {
  auto g = GradedLieAlgebra<S>::make({1, 1, 2, 3});
  g.set_bracket(0, 1, 2, ScalarOps<S>::from_int(1));
  g.set_bracket(0, 2, 3, ScalarOps<S>::from_int(1));
  return g;
}

// filiform chain of given depth: [e1, e_j] = e_{j+1}; used to exercise the
// depth limit of the group law.
template <class S = double>
GradedLieAlgebra<S> filiform_algebra(int depth) {
  std::vector<int> w(depth + 1);
  w[0] = w[1] = 1;
  for (int j = 2; j <= depth; ++j) w[j] = j;
  auto g = GradedLieAlgebra<S>::make(std::move(w));
  for (int j = 1; j < depth; ++j)
    g.set_bracket(0, j, j + 1, ScalarOps<S>::from_int(1));
  return g;
}

template <class S>
GradedLieAlgebra<S> preset_algebra(const std::string& name) {
  if (name.rfind("abelian", 0) == 0 && name.size() > 7)
    return abelian_algebra<S>(std::stoi(name.substr(7)));
  if (name.rfind("heisenberg", 0) == 0) {
    const std::string tail = name.substr(10);
    return heisenberg_algebra<S>(tail.empty() ? 1 : std::stoi(tail));
  }
  if (name == "engel") return engel_algebra<S>();
  throw std::invalid_argument("unknown algebra preset: " + name);
}

inline GradedLieAlgebra<double> to_double_algebra(
    const GradedLieAlgebra<Rat>& g) {
  auto out = GradedLieAlgebra<double>::make(g.weights);
  for (std::size_t i = 0; i < g.c.size(); ++i) out.c[i] = to_double(g.c[i]);
  return out;
}

// --- basic operations -------------------------------------------------------

template <class S>
int homogeneous_dimension(const GradedLieAlgebra<S>& g) {
  int q = 0;
  for (int w : g.weights) q += w;
  return q;
}

template <class S, class T>
std::vector<S> dilate(const GradedLieAlgebra<S>& g, const T& t,
                      std::span<const S> v) {
  if (!(t > T{})) throw std::invalid_argument("dilate: t must be positive");
  if ((int)v.size() != g.dim) throw std::invalid_argument("dilate: bad size");
  std::vector<S> out(v.begin(), v.end());
  for (int i = 0; i < g.dim; ++i)
    out[i] = out[i] * ScalarOps<S>::int_pow(S(t), g.weights[i]);
  return out;
}

template <class S, class T>
S dilation_determinant(const GradedLieAlgebra<S>& g, const T& t) {
  S det = ScalarOps<S>::from_int(1);
  for (int i = 0; i < g.dim; ++i)
    det = det * ScalarOps<S>::int_pow(S(t), g.weights[i]);
  return det;
}

template <class S>
std::vector<S> bracket(const GradedLieAlgebra<S>& g, std::span<const S> x,
                       std::span<const S> y) {
  std::vector<S> out(g.dim, ScalarOps<S>::from_int(0));
  for (int i = 0; i < g.dim; ++i) {
    if (ScalarOps<S>::is_zero(x[i])) continue;
    for (int j = 0; j < g.dim; ++j) {
      if (ScalarOps<S>::is_zero(y[j])) continue;
      for (int k = 0; k < g.dim; ++k) {
        const S& cijk = g.cc(i, j, k);
        if (!ScalarOps<S>::is_zero(cijk)) out[k] += x[i] * y[j] * cijk;
      }
    }
  }
  return out;
}

// --- the group law ----------------------------------------------------------

namespace bch_detail {

template <class S>
using Mat = std::vector<S>;  // dim*dim, row-major: m[r*dim + c]
template <class S>
using Poly = std::vector<S>;  // coefficient per degree in t
template <class S>
using PolyVec = std::vector<Poly<S>>;  // per component
template <class S>
using PolyMat = std::vector<Mat<S>>;  // coefficient matrix per degree

template <class S>
Mat<S> ad_matrix(const GradedLieAlgebra<S>& g, std::span<const S> x) {
  Mat<S> a((std::size_t)g.dim * g.dim, ScalarOps<S>::from_int(0));
  for (int k = 0; k < g.dim; ++k)
    for (int j = 0; j < g.dim; ++j) {
      S acc = ScalarOps<S>::from_int(0);
      for (int i = 0; i < g.dim; ++i) acc += x[i] * g.cc(i, j, k);
      a[(std::size_t)k * g.dim + j] = acc;
    }
  return a;
}

template <class S>
Mat<S> mat_mul(const Mat<S>& a, const Mat<S>& b, int d) {
  Mat<S> out((std::size_t)d * d, ScalarOps<S>::from_int(0));
  for (int r = 0; r < d; ++r)
    for (int k = 0; k < d; ++k) {
      const S& ark = a[(std::size_t)r * d + k];
      if (ScalarOps<S>::is_zero(ark)) continue;
      for (int c = 0; c < d; ++c) out[(std::size_t)r * d + c] += ark * b[(std::size_t)k * d + c];
    }
  return out;
}

template <class S>
PolyVec<S> apply(const PolyMat<S>& m, const PolyVec<S>& v, int d) {
  std::size_t vdeg = 0;
  for (const auto& p : v) vdeg = std::max(vdeg, p.size());
  const std::size_t odeg = m.size() + vdeg - 1;
  PolyVec<S> out((std::size_t)d, Poly<S>(odeg, ScalarOps<S>::from_int(0)));
  for (std::size_t a = 0; a < m.size(); ++a)
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) {
        const S& mrc = m[a][(std::size_t)r * d + c];
        if (ScalarOps<S>::is_zero(mrc)) continue;
        const Poly<S>& pc = v[c];
        for (std::size_t b = 0; b < pc.size(); ++b)
          out[r][a + b] += mrc * pc[b];
      }
  return out;
}

}  // namespace bch_detail

// Group product in exponential coordinates. Exact for nilpotent algebras:
// z = x + int_0^1 psi(e^{ad x} e^{t ad y}) y dt with psi(w) = w log(w)/(w-1),
// evaluated as a polynomial in the nilpotent part and integrated term by
// term. Depth is capped at 6 (documented interface limit).
template <class S>
std::vector<S> bch_multiply(const GradedLieAlgebra<S>& g, std::span<const S> x,
                            std::span<const S> y) {
  using namespace bch_detail;
  if (g.depth > kMaxBchDepth)
    throw std::invalid_argument("bch_multiply: depth > 6 not supported");
  if ((int)x.size() != g.dim || (int)y.size() != g.dim)
    throw std::invalid_argument("bch_multiply: bad vector size");
  const int d = g.dim;
  const int N = g.depth;
  const S one = ScalarOps<S>::from_int(1);
  const S zero = ScalarOps<S>::from_int(0);

  Mat<S> A = ad_matrix(g, x);
  Mat<S> B = ad_matrix(g, y);

  // Ex = sum_{k<N} A^k / k!   (ad is nilpotent of index <= depth)
  Mat<S> Ex((std::size_t)d * d, zero);
  {
    Mat<S> pw((std::size_t)d * d, zero);
    for (int r = 0; r < d; ++r) pw[(std::size_t)r * d + r] = one;
    S fact = one;
    for (int k = 0; k < N; ++k) {
      if (k > 0) {
        pw = mat_mul(pw, A, d);
        fact = fact * ScalarOps<S>::from_int(k);
      }
      for (std::size_t i = 0; i < Ex.size(); ++i) Ex[i] += pw[i] / fact;
    }
  }

  // W(t) = Ex * sum_{k<N} t^k B^k / k!, as a matrix polynomial in t.
  PolyMat<S> W(N, Mat<S>((std::size_t)d * d, zero));
  {
    Mat<S> pw((std::size_t)d * d, zero);
    for (int r = 0; r < d; ++r) pw[(std::size_t)r * d + r] = one;
    S fact = one;
    for (int k = 0; k < N; ++k) {
      if (k > 0) {
        pw = mat_mul(pw, B, d);
        fact = fact * ScalarOps<S>::from_int(k);
      }
      Mat<S> term = mat_mul(Ex, pw, d);
      for (std::size_t i = 0; i < term.size(); ++i) W[k][i] = term[i] / fact;
    }
  }
  // U = W - I is nilpotent (raises weight by at least one).
  for (int r = 0; r < d; ++r) W[0][(std::size_t)r * d + r] -= one;
  const PolyMat<S>& U = W;

  // psi(I + U) y = (I + U) sum_{k<N} (-1)^k U^k y / (k+1)
  PolyVec<S> vk((std::size_t)d);
  for (int i = 0; i < d; ++i) vk[i] = Poly<S>{y[i]};
  PolyVec<S> acc((std::size_t)d, Poly<S>{});
  for (int k = 0; k < N; ++k) {
    if (k > 0) vk = apply(U, vk, d);
    const S coeff = (k % 2 == 0 ? one : -one) / ScalarOps<S>::from_int(k + 1);
    for (int i = 0; i < d; ++i) {
      if (acc[i].size() < vk[i].size()) acc[i].resize(vk[i].size(), zero);
      for (std::size_t b = 0; b < vk[i].size(); ++b)
        acc[i][b] += coeff * vk[i][b];
    }
  }
  PolyVec<S> integrand = apply(U, acc, d);
  for (int i = 0; i < d; ++i) {
    if (integrand[i].size() < acc[i].size())
      integrand[i].resize(acc[i].size(), zero);
    for (std::size_t b = 0; b < acc[i].size(); ++b)
      integrand[i][b] += acc[i][b];
  }

  // z = x + int_0^1 integrand dt, term by term.
  std::vector<S> z(x.begin(), x.end());
  for (int i = 0; i < d; ++i)
    for (std::size_t b = 0; b < integrand[i].size(); ++b)
      z[i] += integrand[i][b] / ScalarOps<S>::from_int((long long)b + 1);
  return z;
}

// --- diagnostics -------------------------------------------------------------

struct FiltrationViolation {
  int i = 0, j = 0, k = 0;  // 1-based indices of the offending triple
  double magnitude = 0.0;
};

struct FiltrationReport {
  bool antisymmetry_ok = true;
  bool jacobi_ok = true;
  bool grading_ok = true;
  std::optional<FiltrationViolation> antisymmetry_violation;
  std::optional<FiltrationViolation> jacobi_violation;
  std::optional<FiltrationViolation> grading_violation;
  bool pass() const { return antisymmetry_ok && jacobi_ok && grading_ok; }
};

// Antisymmetry / Jacobi / grading, reported rather than thrown. For S = Rat
// the checks are exact (tol ignored).
template <class S>
FiltrationReport verify_filtration(const GradedLieAlgebra<S>& g,
                                   double tol = 1e-12) {
  FiltrationReport rep;
  const int d = g.dim;
  auto mag = [](const S& v) { return std::abs(to_double(v)); };
  const bool exact = !std::is_same_v<S, double>;

  for (int i = 0; i < d && rep.antisymmetry_ok; ++i)
    for (int j = 0; j < d && rep.antisymmetry_ok; ++j)
      for (int k = 0; k < d; ++k) {
        const S r = g.cc(i, j, k) + g.cc(j, i, k);
        const double m = mag(r);
        if (exact ? !ScalarOps<S>::is_zero(r) : m > tol) {
          rep.antisymmetry_ok = false;
          rep.antisymmetry_violation = {i + 1, j + 1, k + 1, m};
          break;
        }
      }

  for (int i = 0; i < d && rep.jacobi_ok; ++i)
    for (int j = i + 1; j < d && rep.jacobi_ok; ++j)
      for (int k = j + 1; k < d && rep.jacobi_ok; ++k)
        for (int l = 0; l < d; ++l) {
          S acc = ScalarOps<S>::from_int(0);
          for (int m = 0; m < d; ++m) {
            acc += g.cc(i, j, m) * g.cc(m, k, l);
            acc += g.cc(j, k, m) * g.cc(m, i, l);
            acc += g.cc(k, i, m) * g.cc(m, j, l);
          }
          const double mval = mag(acc);
          if (exact ? !ScalarOps<S>::is_zero(acc) : mval > tol) {
            rep.jacobi_ok = false;
            rep.jacobi_violation = {i + 1, j + 1, k + 1, mval};
            break;
          }
        }

  for (int i = 0; i < d && rep.grading_ok; ++i)
    for (int j = 0; j < d && rep.grading_ok; ++j)
      for (int k = 0; k < d; ++k) {
        const bool nonzero = exact ? !ScalarOps<S>::is_zero(g.cc(i, j, k))
                                   : mag(g.cc(i, j, k)) > tol;
        if (nonzero && g.weights[k] != g.weights[i] + g.weights[j]) {
          rep.grading_ok = false;
          rep.grading_violation = {i + 1, j + 1, k + 1, mag(g.cc(i, j, k))};
          break;
        }
      }
  return rep;
}

// --- text format -------------------------------------------------------------
//
//   # comment
//   dim 3
//   weights 1 1 2
//   1 2 3 1        (one line per bracket: [e_i, e_j] = v e_k, 1-based)
//   values may be integers, decimals (double mode) or "p/q".

template <class S>
GradedLieAlgebra<S> load_algebra(std::istream& in) {
  int dim = -1;
  std::vector<int> weights;
  struct Entry {
    int i, j, k;
    S v;
  };
  std::vector<Entry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "dim") {
      if (!(ls >> dim) || dim <= 0)
        throw std::invalid_argument("algebra file: bad dim line");
    } else if (first == "weights") {
      int w;
      while (ls >> w) weights.push_back(w);
    } else {
      Entry e;
      std::string val;
      e.i = std::stoi(first);
      if (!(ls >> e.j >> e.k >> val))
        throw std::invalid_argument("algebra file: bad bracket line " +
                                    std::to_string(lineno));
      e.v = ScalarOps<S>::parse(val);
      entries.push_back(std::move(e));
    }
  }
  if (dim <= 0 || (int)weights.size() != dim)
    throw std::invalid_argument("algebra file: dim/weights missing or inconsistent");
  auto g = GradedLieAlgebra<S>::make(weights);
  for (const auto& e : entries) {
    if (e.i < 1 || e.i > dim || e.j < 1 || e.j > dim || e.k < 1 || e.k > dim)
      throw std::invalid_argument("algebra file: bracket index out of range");
    g.set_bracket(e.i - 1, e.j - 1, e.k - 1, e.v);
  }
  return g;
}

template <class S>
GradedLieAlgebra<S> load_algebra_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open algebra file: " + path);
  return load_algebra<S>(in);
}

}  // namespace carnot
