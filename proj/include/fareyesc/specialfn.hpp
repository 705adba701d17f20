#pragma once

#include "fareyesc/precision.hpp"

#include <gmp.h>

#include <cmath>
#include <cstdint>

namespace fareyesc {

/// Largest Laguerre index accepted by `laguerre_e`.
inline constexpr unsigned kBasisCap = 4096;

/// Binomials with n up to this value are computed exactly in 64-bit integers.
inline constexpr unsigned kExactBinomialMax = 62;

/// Error function. Rejects non-finite input with DomainError. For |x| > 6 the
/// value is formed as sign(x)(1 - erfc(|x|)).
double erf(double x);
/// Complementary error function, finite input only.
double erfc(double x);

/// e_nu(t) = L_nu^{(1)}(t) by the three-term recurrence.
/// Throws OverflowError when the value leaves the double range and
/// DomainError for nu > kBasisCap or non-finite t.
double laguerre_e(unsigned nu, double t);

/// Same recurrence in any real type; no range checks.
template <class Real>
Real laguerre_e_recurrence(unsigned nu, const Real& t) {
  Real prev = 1;
  if (nu == 0) return prev;
  Real cur = 2 - t;
  for (unsigned n = 1; n < nu; ++n) {
    Real next = ((2 * n + 2) - t) * cur - (n + 1) * prev;
    div_ui(next, n + 1);
    prev = cur;
    cur = next;
  }
  return cur;
}

/// 2F1(nu+2, k+m+2; k+2; -1) by the terminating Pfaff sum, in `Real` at the
/// ambient precision:
///   2^-(nu+2) * sum_{s<=m} (nu+2)_s (-m)_s / ((k+2)_s s! 2^s).
template <class Real>
Real hyp2f1_pfaff(unsigned nu, unsigned k, unsigned m) {
  using std::ldexp;
  Real term = 1;
  Real sum = 1;
  for (unsigned s = 0; s < m; ++s) {
    // (nu+2+s)(s-m) / ((k+2+s)(s+1) 2)
    mul_ui(term, nu + 2 + s);
    mul_ui(term, m - s);
    div_ui(term, k + 2 + s);
    div_ui(term, 2 * (s + 1));
    term = -term;
    sum += term;
  }
  return ldexp(sum, -static_cast<int>(nu + 2));
}

double hyp2f1_at_minus1(unsigned nu, unsigned k, unsigned m);
/// Multiprecision variant; `prec.hardware` evaluates in double and widens.
Mp hyp2f1_at_minus1(unsigned nu, unsigned k, unsigned m, const Precision& prec);

struct Hyp1f1Result {
  double value = 0;
  /// Set when the largest series term exceeds |value| by more than half the
  /// working digits.
  bool precision_loss = false;
  unsigned terms = 0;
};

/// 1F1(a; b; x) by its power series. Terminates for a <= 0.
Hyp1f1Result hyp1f1(int a, unsigned b, double x, const Precision& prec = Precision::hardware_float());

/// C(n, k); exact for n <= kExactBinomialMax, log-gamma beyond. k > n gives 0.
double binomial(unsigned n, unsigned k);
/// Exact C(n, k) into an initialized mpz.
void binomial_exact(mpz_t out, unsigned long n, unsigned long k);
/// C(n, k) rounded to the ambient MPFR precision.
Mp binomial_mp(unsigned long n, unsigned long k);

/// Rising factorial (x)_s. Direct product for s <= 64, log-gamma beyond when
/// x > 0.
double pochhammer(double x, unsigned s);

}  // namespace fareyesc
