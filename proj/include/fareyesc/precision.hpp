#pragma once

#include <boost/multiprecision/mpfr.hpp>

#include <cmath>
#include <cstdint>

namespace fareyesc {

using Mp = boost::multiprecision::mpfr_float;

/// Working precision of a computation.
///
/// `bits` is the mantissa width for MPFR arithmetic; `hardware` selects IEEE
/// double instead. Kernels that sum cancelling series add guard bits to
/// `bits` on top of this (see transfer_operator.hpp), so `bits` is the number
/// of bits the caller wants to keep, not necessarily the width in use.
struct Precision {
  unsigned bits = 256;
  bool hardware = false;

  static Precision hardware_float() { return {53, true}; }
  static Precision multi(unsigned bits) { return {bits, false}; }

  void validate() const;
};

/// Scoped override of the MPFR default precision used for new `Mp` values.
///
/// Boost keeps one process-wide default, so all threads working inside a
/// scope see the same width. Nested scopes restore on exit.
class WorkingPrecision {
 public:
  explicit WorkingPrecision(unsigned bits);
  ~WorkingPrecision();
  WorkingPrecision(const WorkingPrecision&) = delete;
  WorkingPrecision& operator=(const WorkingPrecision&) = delete;

  unsigned bits() const { return bits_; }

 private:
  unsigned saved_digits10_;
  unsigned bits_;
};

/// Mantissa bits currently applied to freshly constructed `Mp` values.
unsigned current_mp_bits();

// Small in-place kernels shared by the double and MPFR code paths. The MPFR
// overloads call the C API directly so hot loops do not allocate.

inline void mul_add(double& acc, double a, double b) { acc = std::fma(a, b, acc); }
inline void mul_add(long double& acc, long double a, long double b) { acc += a * b; }
inline void mul_add(Mp& acc, const Mp& a, const Mp& b) {
  mpfr_fma(acc.backend().data(), a.backend().data(), b.backend().data(),
           acc.backend().data(), MPFR_RNDN);
}

inline void mul_ui(double& x, unsigned long u) { x *= static_cast<double>(u); }
inline void mul_ui(long double& x, unsigned long u) { x *= static_cast<long double>(u); }
inline void mul_ui(Mp& x, unsigned long u) {
  mpfr_mul_ui(x.backend().data(), x.backend().data(), u, MPFR_RNDN);
}

inline void div_ui(double& x, unsigned long u) { x /= static_cast<double>(u); }
inline void div_ui(long double& x, unsigned long u) { x /= static_cast<long double>(u); }
inline void div_ui(Mp& x, unsigned long u) {
  mpfr_div_ui(x.backend().data(), x.backend().data(), u, MPFR_RNDN);
}

inline double to_double(double x) { return x; }
inline double to_double(long double x) { return static_cast<double>(x); }
inline double to_double(const Mp& x) { return mpfr_get_d(x.backend().data(), MPFR_RNDN); }

}  // namespace fareyesc
