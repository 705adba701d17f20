#include "fareyesc/specialfn.hpp"

#include "fareyesc/error.hpp"

#include <boost/multiprecision/mpfr.hpp>

#include <algorithm>
#include <limits>
#include <string>

namespace fareyesc {

namespace {

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw DomainError(std::string(what) + ": non-finite argument");
}

}  // namespace

double erf(double x) {
  require_finite(x, "erf");
  if (std::fabs(x) <= 6.0) return std::erf(x);
  const double tail = std::erfc(std::fabs(x));
  return std::copysign(1.0 - tail, x);
}

double erfc(double x) {
  require_finite(x, "erfc");
  return std::erfc(x);
}

double laguerre_e(unsigned nu, double t) {
  require_finite(t, "laguerre_e");
  if (nu > kBasisCap) {
    throw DomainError("laguerre_e: index " + std::to_string(nu) + " above basis cap");
  }
  double prev = 1.0;
  if (nu == 0) return prev;
  double cur = 2.0 - t;
  for (unsigned n = 1; n < nu; ++n) {
    const double next = ((2.0 * n + 2.0 - t) * cur - (n + 1.0) * prev) / (n + 1.0);
    if (!std::isfinite(next)) {
      throw OverflowError("laguerre_e: overflow at degree " + std::to_string(n + 1) +
                          " for t = " + std::to_string(t));
    }
    prev = cur;
    cur = next;
  }
  return cur;
}

double hyp2f1_at_minus1(unsigned nu, unsigned k, unsigned m) {
  if (k == 0) throw DomainError("hyp2f1_at_minus1: k must be positive");
  return hyp2f1_pfaff<double>(nu, k, m);
}

Mp hyp2f1_at_minus1(unsigned nu, unsigned k, unsigned m, const Precision& prec) {
  prec.validate();
  if (k == 0) throw DomainError("hyp2f1_at_minus1: k must be positive");
  if (prec.hardware) {
    return Mp(hyp2f1_pfaff<double>(nu, k, m));
  }
  WorkingPrecision guard(prec.bits);
  return hyp2f1_pfaff<Mp>(nu, k, m);
}

namespace {

template <class Real>
Hyp1f1Result hyp1f1_series(int a, unsigned b, const Real& x, unsigned bits) {
  using std::abs;
  using std::ldexp;
  Real term = 1;
  Real sum = 1;
  Real largest = 1;
  const Real eps = ldexp(Real(1), -static_cast<int>(bits));
  unsigned s = 0;
  constexpr unsigned kMaxTerms = 100000;
  for (; s < kMaxTerms; ++s) {
    const long double as = static_cast<long double>(a) + s;
    if (as == 0) break;
    term *= x;
    term *= static_cast<double>(as);
    div_ui(term, b + s);
    div_ui(term, s + 1);
    sum += term;
    if (abs(term) > largest) largest = abs(term);
    if (as > 0 && as > abs(x) && abs(term) <= eps * abs(sum)) break;
  }
  if (s == kMaxTerms) throw Error("hyp1f1: series did not terminate");
  Hyp1f1Result r;
  r.value = to_double(sum);
  r.terms = s + 1;
  // log2(largest / |sum|) against half the working bits.
  const double lost = std::log2(to_double(largest)) - std::log2(std::fabs(to_double(sum)));
  r.precision_loss = !(lost <= bits / 2.0);
  return r;
}

}  // namespace

Hyp1f1Result hyp1f1(int a, unsigned b, double x, const Precision& prec) {
  prec.validate();
  require_finite(x, "hyp1f1");
  if (b == 0) throw DomainError("hyp1f1: b must be positive");
  if (prec.hardware) return hyp1f1_series<double>(a, b, x, 53);
  WorkingPrecision guard(prec.bits);
  return hyp1f1_series<Mp>(a, b, Mp(x), prec.bits);
}

double binomial(unsigned n, unsigned k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  if (n <= kExactBinomialMax) {
    unsigned __int128 c = 1;
    for (unsigned i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
    return static_cast<double>(static_cast<std::uint64_t>(c));
  }
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}

void binomial_exact(mpz_t out, unsigned long n, unsigned long k) {
  if (k > n) {
    mpz_set_ui(out, 0);
    return;
  }
  mpz_bin_uiui(out, n, k);
}

Mp binomial_mp(unsigned long n, unsigned long k) {
  mpz_t z;
  mpz_init(z);
  binomial_exact(z, n, k);
  Mp r;
  mpfr_set_z(r.backend().data(), z, MPFR_RNDN);
  mpz_clear(z);
  return r;
}

double pochhammer(double x, unsigned s) {
  require_finite(x, "pochhammer");
  if (s > 64 && x > 0) {
    return std::exp(std::lgamma(x + s) - std::lgamma(x));
  }
  double p = 1.0;
  for (unsigned i = 0; i < s; ++i) p *= x + i;
  return p;
}

}  // namespace fareyesc
