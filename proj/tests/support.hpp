#pragma once

// Reference values computed independently of the library formulas.
//
// Closed and open matrix entries come from the action of the transfer
// operator on x-space densities. The basis vector e_nu corresponds to
// (nu+1)(1-x)^nu, so an entry (j, nu) is 1/(j+1) times the coefficient of
// w^j, w = 1 - x, in the image of (nu+1)(1-x)^nu:
//   P0 part: (nu+1) (2-w)^-(nu+2)
//   P1 part: (nu+1) (1-w)^nu (2-w)^-(nu+2)
// and the hole multiplies the P0 part by 1 - xi(1 - w).

#include "fareyesc/holes.hpp"
#include "fareyesc/precision.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/gmp.hpp>

#include <cmath>
#include <vector>

namespace oracle {

using Q = boost::multiprecision::mpq_rational;
using Z = boost::multiprecision::mpz_int;
using fareyesc::Mp;

inline Z choose(unsigned n, unsigned k) {
  if (k > n) return 0;
  Z r = 1;
  for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline Q pow2(int e) {
  Z p = 1;
  p <<= static_cast<unsigned>(std::abs(e));
  return e >= 0 ? Q(p) : Q(Z(1), p);
}

/// Coefficient of w^i in (2-w)^-(nu+2).
inline Q inv_two_minus_w(unsigned nu, unsigned i) {
  return Q(choose(nu + 1 + i, i)) * pow2(-static_cast<int>(nu + 2 + i));
}

inline Q closed_m(unsigned j, unsigned nu) {
  return Q(nu + 1, j + 1) * inv_two_minus_w(nu, j);
}

inline Q closed_n(unsigned j, unsigned nu) {
  Q c = 0;
  for (unsigned i = 0; i <= std::min(j, nu); ++i) {
    const Q b = Q(choose(nu, i)) * inv_two_minus_w(nu, j - i);
    c += (i % 2 ? -b : b);
  }
  return Q(nu + 1, j + 1) * c;
}

/// Terminating 2F1(a, -m; c; z) summed in rationals.
inline Q hyp2f1_terminating(int a, unsigned m, int c, const Q& z) {
  Q term = 1, sum = 1;
  for (unsigned s = 0; s < m; ++s) {
    term *= Q(Z(a + static_cast<int>(s)) * Z(-static_cast<int>(m) + static_cast<int>(s)),
              Z(c + static_cast<int>(s)) * Z(s + 1));
    term *= z;
    sum += term;
  }
  return sum;
}

inline Mp to_mp(const Q& q) {
  return Mp(Mp(boost::multiprecision::numerator(q).str()) /
            Mp(boost::multiprecision::denominator(q).str()));
}

inline double to_double(const Q& q) { return q.convert_to<double>(); }

/// Open entry from the Taylor expansion of 1 - xi(1 - w) at w = 0, with
/// z = mu (1 - a):  g_0 = (1 + Erf z)/2 and, through the Hermite form of the
/// derivatives of Erf, g_k = -mu^k H_{k-1}(z) e^{-z^2} / (sqrt(pi) k!).
/// The caller sets the working precision.
inline Mp open_entry(unsigned j, unsigned nu, double mu, double a) {
  using boost::multiprecision::erf;
  using boost::multiprecision::exp;
  using boost::multiprecision::sqrt;
  const Mp m = mu;
  const Mp z = m * (1 - Mp(a));
  const Mp pi = boost::math::constants::pi<Mp>();
  std::vector<Mp> g(j + 1);
  g[0] = (1 + erf(z)) / 2;
  Mp h_prev = 0, h = 1;  // H_{k-2}, H_{k-1}
  Mp scale = exp(-z * z) / sqrt(pi);
  for (unsigned k = 1; k <= j; ++k) {
    scale *= m;
    scale /= k;
    g[k] = -scale * h;
    const Mp next = 2 * z * h - 2 * Mp(k - 1) * h_prev;
    h_prev = h;
    h = next;
  }
  Mp c = 0;
  for (unsigned i = 0; i <= j; ++i) c += g[i] * to_mp(inv_two_minus_w(nu, j - i));
  return c * (nu + 1) / (j + 1) + to_mp(closed_n(j, nu));
}

/// Farey transfer operator on a density f at x, split into branch images.
template <class F>
double p0(const F& f, double x) {
  return f(x / (1 + x)) / ((1 + x) * (1 + x));
}
template <class F>
double p1(const F& f, double x) {
  return f(1 / (1 + x)) / ((1 + x) * (1 + x));
}

}  // namespace oracle
