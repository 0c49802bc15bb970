#pragma once

// Exact rational scalar used by the algebra layer. Arbitrary-precision
// integers keep the group-law coefficients (factorials up to 6!) exact.

#include <boost/multiprecision/cpp_int.hpp>
#include <boost/rational.hpp>

#include <cmath>
#include <stdexcept>
#include <string>

namespace carnot {

using BigInt = boost::multiprecision::cpp_int;
using Rat = boost::rational<BigInt>;

inline double to_double(const Rat& r) {
  return r.numerator().convert_to<double>() /
         r.denominator().convert_to<double>();
}
inline double to_double(double x) { return x; }

// Parses "p", "-p" or "p/q".
inline Rat rat_from_string(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) return Rat(BigInt(s));
  const BigInt num(s.substr(0, slash));
  const BigInt den(s.substr(slash + 1));
  if (den == 0) throw std::invalid_argument("rational with zero denominator");
  return Rat(num, den);
}

// Scalar adapters so algebra code can be written once for Rat and double.
template <class S>
struct ScalarOps;

template <>
struct ScalarOps<double> {
  static double from_int(long long v) { return (double)v; }
  static double parse(const std::string& s) { return std::stod(s); }
  static bool is_zero(double v) { return v == 0.0; }
  static double int_pow(double base, int e) {
    double r = 1.0;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
  }
};

template <>
struct ScalarOps<Rat> {
  static Rat from_int(long long v) { return Rat(BigInt(v)); }
  static Rat parse(const std::string& s) { return rat_from_string(s); }
  static bool is_zero(const Rat& v) { return v.numerator() == 0; }
  static Rat int_pow(Rat base, int e) {
    Rat r = from_int(1);
    for (int i = 0; i < e; ++i) r *= base;
    return r;
  }
};

}  // namespace carnot
