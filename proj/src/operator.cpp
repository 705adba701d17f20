#include "fareyesc/operator.hpp"

#include "fareyesc/specialfn.hpp"

#include <boost/math/constants/constants.hpp>
#include <gmp.h>
#include <mpfr.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fareyesc {

void SeriesControl::validate() const {
  if (n_cap < 1) throw ConfigError("series: n_cap must be at least 1");
  if (!(rel_tol > 0 && rel_tol < 1)) throw ConfigError("series: rel_tol must lie in (0, 1)");
  if (consecutive_small < 1) throw ConfigError("series: consecutive_small must be at least 1");
  if (consecutive_small > n_cap) throw ConfigError("series: consecutive_small exceeds n_cap");
  precision.validate();
}

std::string to_string(MatrixKind kind) { return kind == MatrixKind::closed ? "closed" : "open"; }

MatrixKind matrix_kind_from_string(const std::string& s) {
  if (s == "closed") return MatrixKind::closed;
  if (s == "open") return MatrixKind::open;
  throw ConfigError("unknown matrix kind '" + s + "'");
}

namespace {

std::string non_convergent_message(unsigned j, unsigned nu, unsigned terms, double partial,
                                   double last) {
  std::ostringstream os;
  os << "series for entry (" << j << ", " << nu << ") not converged after " << terms
     << " terms: partial sum " << partial << ", last term " << last;
  return os.str();
}

}  // namespace

NonConvergent::NonConvergent(unsigned j, unsigned nu, unsigned terms, double partial_sum,
                             double last_term)
    : Error(non_convergent_message(j, nu, terms, partial_sum, last_term)),
      j_(j), nu_(nu), terms_(terms), partial_(partial_sum), last_(last_term) {}

// ---------------------------------------------------------------------------
// Closed entries, exact over the common denominator 2^(nu+j+2).

namespace {

class Mpz {
 public:
  Mpz() { mpz_init(v_); }
  ~Mpz() { mpz_clear(v_); }
  Mpz(const Mpz&) = delete;
  Mpz& operator=(const Mpz&) = delete;
  mpz_ptr get() { return v_; }
  mpz_srcptr get() const { return v_; }

 private:
  mpz_t v_;
};

void closed_m_numerator(mpz_ptr out, unsigned j, unsigned nu) {
  mpz_bin_uiui(out, nu + j + 1, nu);
}

// sum_l (-1)^l C(nu+1, l+1) C(l+j+1, l) 2^(nu-l)
void closed_n_numerator(mpz_ptr out, unsigned j, unsigned nu) {
  Mpz b1, b2, t;
  mpz_set_ui(out, 0);
  mpz_set_ui(b1.get(), nu + 1);  // C(nu+1, 1)
  mpz_set_ui(b2.get(), 1);       // C(j+1, 0)
  for (unsigned l = 0; l <= nu; ++l) {
    mpz_mul(t.get(), b1.get(), b2.get());
    mpz_mul_2exp(t.get(), t.get(), nu - l);
    if (l % 2 == 0) {
      mpz_add(out, out, t.get());
    } else {
      mpz_sub(out, out, t.get());
    }
    if (l == nu) break;
    mpz_mul_ui(b1.get(), b1.get(), nu - l);
    mpz_divexact_ui(b1.get(), b1.get(), l + 2);
    mpz_mul_ui(b2.get(), b2.get(), l + j + 2);
    mpz_divexact_ui(b2.get(), b2.get(), l + 1);
  }
}

double round_dyadic(mpz_srcptr num, long exp2) {
  mpfr_t x;
  mpfr_init2(x, 53);
  mpfr_set_z(x, num, MPFR_RNDN);
  mpfr_mul_2si(x, x, exp2, MPFR_RNDN);
  const double d = mpfr_get_d(x, MPFR_RNDN);
  mpfr_clear(x);
  return d;
}

void set_dyadic(Mp& out, mpz_srcptr num, long exp2) {
  mpfr_set_z(out.backend().data(), num, MPFR_RNDN);
  mpfr_mul_2si(out.backend().data(), out.backend().data(), exp2, MPFR_RNDN);
}

}  // namespace

double closed_m_entry(unsigned j, unsigned nu) {
  Mpz z;
  closed_m_numerator(z.get(), j, nu);
  return round_dyadic(z.get(), -static_cast<long>(nu + j + 2));
}

double closed_n_entry(unsigned j, unsigned nu) {
  Mpz z;
  closed_n_numerator(z.get(), j, nu);
  return round_dyadic(z.get(), -static_cast<long>(nu + j + 2));
}

double closed_entry(unsigned j, unsigned nu) {
  Mpz m, n;
  closed_m_numerator(m.get(), j, nu);
  closed_n_numerator(n.get(), j, nu);
  mpz_add(m.get(), m.get(), n.get());
  return round_dyadic(m.get(), -static_cast<long>(nu + j + 2));
}

// ---------------------------------------------------------------------------
// Open entries.
//
// With c(n,k) = C(2n+1,k) (-1)^(n+k-1) mu^(2n+1) a^(2n+1-k) / (n! (2n+1)) and
// F(nu,k,m) = 2F1(nu+2, k+m+2; k+2; -1), the hole series of entry (j, nu) is
//   (nu+1)/((j+1) sqrt(pi)) sum_n sum_{k=1}^{2n+1} c(n,k)
//       sum_{m<=j} (-1)^m C(j+1, m+1) C(k+m+1, m) F(nu,k,m).

namespace {

template <class Real>
Real sqrt_pi() {
  if constexpr (std::is_same_v<Real, Mp>) {
    return sqrt(boost::math::constants::pi<Mp>());
  } else {
    return std::sqrt(boost::math::constants::pi<Real>());
  }
}

template <class Real>
Real real_abs(const Real& x) {
  using std::abs;
  return abs(x);
}

// Adds c(n, k), k = 1..2n+1, into acc[k] (optionally only into `level`).
// `qn` is mu^(2n+1)/n!. With Abs all factors are replaced by magnitudes.
template <class Real, bool Abs>
void level_coefficients(unsigned n, const Real& qn, const Real& a, Real* acc, Real* level) {
  Real c = qn;
  div_ui(c, 2 * n + 1);
  if (!Abs && n % 2 == 1) c = -c;
  for (unsigned k = 2 * n + 1; k >= 1; --k) {
    if (acc) acc[k] += c;
    if (level) level[k] = c;
    if (k == 1) break;
    // C(2n+1, k-1) / C(2n+1, k) = k / (2n+2-k), one more power of a, sign flip.
    c *= a;
    mul_ui(c, k);
    div_ui(c, 2 * n + 2 - k);
    if (!Abs) c = -c;
  }
}

/// Factored evaluation. With W_k = sum_n c(n,k) the series becomes
///   V(m,s)   = sum_k W_k C(k+m+1, m) / (k+2)_s
///   U(nu,m)  = 2^-(nu+2) sum_{s<=m} (nu+2)_s (-m)_s / (s! 2^s) V(m,s)
///   S(j,nu)  = sum_{m<=j} (-1)^m C(j+1, m+1) U(nu,m)
/// Batch 0 carries W; batches 1..q carry single levels n*-q+1..n* so the
/// stopping rule can be checked per entry.
template <class Real, bool Abs>
class FactoredSeries {
 public:
  FactoredSeries(std::size_t rows, const std::vector<unsigned>& cols, double mu, double a,
                 unsigned n_star, unsigned q, bool parallel)
      : rows_(rows), cols_(cols), n_star_(n_star), q_(q), parallel_(parallel) {
    K_ = 2 * n_star_ + 1;
    batches_ = 1 + q_;
    Real mu_r = Abs ? std::fabs(mu) : mu;
    Real a_r = Abs ? std::fabs(a) : a;
    w_.assign(batches_ * (K_ + 1), Real(0));
    Real qn = mu_r;
    const Real mu2 = mu_r * mu_r;
    const unsigned first_level = n_star_ + 1 - q_;
    for (unsigned n = 0; n <= n_star_; ++n) {
      Real* level = nullptr;
      if (q_ > 0 && n >= first_level) level = &w_[(1 + n - first_level) * (K_ + 1)];
      level_coefficients<Real, Abs>(n, qn, a_r, &w_[0], level);
      qn *= mu2;
      div_ui(qn, n + 1);
    }
  }

  /// out[b][c * rows + j] = (nu+1)/((j+1) sqrt(pi)) * S_b(j, nu_c)
  std::vector<std::vector<Real>> run() {
    const std::size_t R = rows_;
    const std::size_t tri = R * (R + 1) / 2;
    std::vector<Real> V(batches_ * tri, Real(0));
    const bool par = parallel_;

#pragma omp parallel for schedule(dynamic) if (par)
    for (long mi = static_cast<long>(R) - 1; mi >= 0; --mi) {
      const unsigned m = static_cast<unsigned>(mi);
      std::vector<Real> r(K_ + 1, Real(0));
      // C(k+m+1, m) for k = 1..K
      r[1] = Real((m + 2.0) * (m + 1.0) / 2.0);
      for (unsigned k = 1; k < K_; ++k) {
        r[k + 1] = r[k];
        mul_ui(r[k + 1], k + m + 2);
        div_ui(r[k + 1], k + 2);
      }
      Real acc;
      for (unsigned s = 0; s <= m; ++s) {
        for (unsigned b = 0; b < batches_; ++b) {
          const Real* w = &w_[b * (K_ + 1)];
          const unsigned kmax = b == 0 ? K_ : 2 * (n_star_ + 1 - q_ + b - 1) + 1;
          acc = 0;
          for (unsigned k = 1; k <= kmax; ++k) mul_add(acc, w[k], r[k]);
          V[b * tri + index(m, s)] = acc;
        }
        if (s == m) break;
        for (unsigned k = 1; k <= K_; ++k) div_ui(r[k], k + 2 + s);
      }
    }

    const std::size_t C = cols_.size();
    std::vector<Real> U(batches_ * C * R, Real(0));
#pragma omp parallel for schedule(dynamic) if (par)
    for (long idx = 0; idx < static_cast<long>(C * R); ++idx) {
      const std::size_t c = static_cast<std::size_t>(idx) / R;
      const unsigned m = static_cast<unsigned>(static_cast<std::size_t>(idx) % R);
      const unsigned nu = cols_[c];
      std::vector<Real> acc(batches_, Real(0));
      Real beta = 1;
      for (unsigned s = 0; s <= m; ++s) {
        for (unsigned b = 0; b < batches_; ++b) mul_add(acc[b], beta, V[b * tri + index(m, s)]);
        if (s == m) break;
        mul_ui(beta, nu + 2 + s);
        mul_ui(beta, m - s);
        div_ui(beta, 2 * (s + 1));
        if (!Abs) beta = -beta;
      }
      for (unsigned b = 0; b < batches_; ++b) {
        U[(b * C + c) * R + m] = ldexp_real(acc[b], -static_cast<int>(nu + 2));
      }
    }

    std::vector<std::vector<Real>> out(batches_, std::vector<Real>(C * R, Real(0)));
    const Real spi = sqrt_pi<Real>();
#pragma omp parallel for schedule(dynamic) if (par)
    for (long idx = 0; idx < static_cast<long>(C * R); ++idx) {
      const std::size_t c = static_cast<std::size_t>(idx) / R;
      const unsigned j = static_cast<unsigned>(static_cast<std::size_t>(idx) % R);
      const unsigned nu = cols_[c];
      std::vector<Real> acc(batches_, Real(0));
      Real binom = j + 1;  // C(j+1, m+1) at m = 0
      for (unsigned m = 0; m <= j; ++m) {
        Real coef = (!Abs && m % 2 == 1) ? Real(-binom) : binom;
        for (unsigned b = 0; b < batches_; ++b) mul_add(acc[b], coef, U[(b * C + c) * R + m]);
        if (m == j) break;
        mul_ui(binom, j - m);
        div_ui(binom, m + 2);
      }
      for (unsigned b = 0; b < batches_; ++b) {
        Real v = acc[b];
        mul_ui(v, nu + 1);
        div_ui(v, j + 1);
        out[b][c * R + j] = v / spi;
      }
    }
    return out;
  }

 private:
  static std::size_t index(std::size_t m, std::size_t s) { return m * (m + 1) / 2 + s; }

  static Real ldexp_real(const Real& x, int e) {
    using std::ldexp;
    return ldexp(x, e);
  }

  std::size_t rows_;
  std::vector<unsigned> cols_;
  unsigned n_star_, q_;
  bool parallel_;
  unsigned K_ = 0, batches_ = 0;
  std::vector<Real> w_;
};

unsigned ceil_log2(long double x) {
  if (!(x > 1)) return 0;
  return static_cast<unsigned>(std::ceil(std::log2(x)));
}

/// Mantissa width that keeps `target` absolute bits after cancellation
/// bounded by `magnitude` over a summation of depth `depth`.
unsigned guarded_bits(unsigned target, long double magnitude, std::size_t depth) {
  return target + ceil_log2(magnitude) + ceil_log2(static_cast<long double>(depth)) + 32;
}

long double max_abs(const std::vector<long double>& v) {
  long double m = 0;
  for (long double x : v) m = std::max(m, std::fabs(x));
  return m;
}

/// Smallest n* for which the magnitude bound of level n* falls below the
/// stopping threshold of a unit-size sum. The bound ignores cancellation
/// inside a level, so the real rule usually fires earlier; build_series
/// verifies it either way.
unsigned initial_levels(std::size_t rows, const std::vector<unsigned>& cols, double mu, double a,
                        const SeriesControl& ctl, bool parallel) {
  const unsigned q = ctl.consecutive_small;
  const long double threshold = ctl.rel_tol;
  auto level_ok = [&](unsigned n) {
    FactoredSeries<long double, true> sh(rows, cols, mu, a, n, 1, parallel);
    return max_abs(sh.run()[1]) <= threshold;
  };
  unsigned lo = q - 1, hi = ctl.n_cap - 1;
  if (!level_ok(hi)) return hi;
  // Smallest hi with the bound below threshold, assuming the bound decreases
  // past its peak; the peak lies below the first passing point found.
  while (hi - lo > 1) {
    const unsigned mid = lo + (hi - lo) / 2;
    if (level_ok(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return std::min(ctl.n_cap - 1, hi + q - 1);
}

struct SeriesValues {
  std::vector<Mp> hole_series;  // c * rows + j
  unsigned n_star = 0;
  unsigned working_bits = 0;
};

SeriesValues build_series_mp(std::size_t rows, const std::vector<unsigned>& cols,
                             const HoleParams& hole, const SeriesControl& ctl, bool parallel) {
  const double mu = hole.mu();
  const double a = hole.shift();
  const unsigned q = ctl.consecutive_small;
  const unsigned top = ctl.n_cap - 1;
  unsigned n_star = std::max(q - 1, initial_levels(rows, cols, mu, a, ctl, parallel));
  for (;;) {
    FactoredSeries<long double, true> shadow(rows, cols, mu, a, n_star, 0, parallel);
    const long double magnitude = max_abs(shadow.run()[0]);
    const std::size_t depth = (2 * n_star + 2) + 2 * rows + n_star;
    const unsigned bits = guarded_bits(ctl.precision.bits, magnitude, depth);

    WorkingPrecision guard(bits);
    FactoredSeries<Mp, false> series(rows, cols, mu, a, n_star, q, parallel);
    auto out = series.run();
    const Mp floor = ldexp(Mp(1), -static_cast<int>(ctl.precision.bits));
    const Mp tol = ctl.rel_tol;
    long failing = -1;
    for (std::size_t i = 0; i < out[0].size() && failing < 0; ++i) {
      const Mp scale = tol * std::max<Mp>(abs(out[0][i]), floor);
      for (unsigned b = 1; b <= q; ++b) {
        if (abs(out[b][i]) > scale) {
          failing = static_cast<long>(i);
          break;
        }
      }
    }
    if (failing < 0) return {std::move(out[0]), n_star, bits};
    if (n_star >= top) {
      const std::size_t i = static_cast<std::size_t>(failing);
      throw NonConvergent(static_cast<unsigned>(i % rows), cols[i / rows], n_star + 1,
                          to_double(out[0][i]), to_double(out[q][i]));
    }
    n_star = std::min(top, n_star + std::max(q, n_star / 4));
  }
}

struct SeriesValuesD {
  std::vector<double> hole_series;
  unsigned n_star = 0;
};

SeriesValuesD build_series_hw(std::size_t rows, const std::vector<unsigned>& cols,
                              const HoleParams& hole, const SeriesControl& ctl, bool parallel) {
  const double mu = hole.mu();
  const double a = hole.shift();
  const unsigned q = ctl.consecutive_small;
  const unsigned top = ctl.n_cap - 1;
  unsigned n_star = std::max(q - 1, initial_levels(rows, cols, mu, a, ctl, parallel));
  for (;;) {
    FactoredSeries<double, false> series(rows, cols, mu, a, n_star, q, parallel);
    auto out = series.run();
    const double floor = 0x1p-53;
    long failing = -1;
    for (std::size_t i = 0; i < out[0].size() && failing < 0; ++i) {
      const double scale = ctl.rel_tol * std::max(std::fabs(out[0][i]), floor);
      for (unsigned b = 1; b <= q; ++b) {
        if (!(std::fabs(out[b][i]) <= scale)) {
          failing = static_cast<long>(i);
          break;
        }
      }
    }
    if (failing < 0) return {std::move(out[0]), n_star};
    if (n_star >= top) {
      const std::size_t i = static_cast<std::size_t>(failing);
      throw NonConvergent(static_cast<unsigned>(i % rows), cols[i / rows], n_star + 1, out[0][i],
                          out[q][i]);
    }
    n_star = std::min(top, n_star + std::max(q, n_star / 4));
  }
}

/// (1 - Erf(mu a)) C(nu+j+1, nu) / 2^(nu+j+3) at the ambient precision.
Mp first_term_mp(unsigned j, unsigned nu, const HoleParams& hole) {
  Mpz z;
  closed_m_numerator(z.get(), j, nu);
  Mp m;
  set_dyadic(m, z.get(), -static_cast<long>(nu + j + 3));
  const Mp damp = 1 - boost::multiprecision::erf(Mp(hole.mu()) * Mp(hole.shift()));
  return damp * m;
}

Mp closed_n_mp(unsigned j, unsigned nu) {
  Mpz z;
  closed_n_numerator(z.get(), j, nu);
  Mp r;
  set_dyadic(r, z.get(), -static_cast<long>(nu + j + 2));
  return r;
}

std::vector<unsigned> all_columns(std::size_t n) {
  std::vector<unsigned> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = static_cast<unsigned>(i);
  return c;
}

}  // namespace

MPart open_m_part(std::size_t rows, const std::vector<unsigned>& columns, const HoleParams& hole,
                  const SeriesControl& ctl, Execution execution) {
  ctl.validate();
  if (rows == 0 || columns.empty()) throw DomainError("open_m_part: empty block");
  if (ctl.precision.hardware) {
    throw ConfigError("open_m_part: requires multiprecision series control");
  }
  const bool par = execution == Execution::parallel;
  SeriesValues sv = build_series_mp(rows, columns, hole, ctl, par);
  WorkingPrecision guard(sv.working_bits);
  MPart out;
  out.rows = rows;
  out.columns = columns;
  out.series_terms_used = sv.n_star + 1;
  out.working_bits = sv.working_bits;
  out.values.resize(rows * columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t j = 0; j < rows; ++j) {
      out.values[c * rows + j] =
          first_term_mp(static_cast<unsigned>(j), columns[c], hole) + sv.hole_series[c * rows + j];
    }
  }
  return out;
}

namespace {

OperatorMatrix build_closed(std::size_t n, bool parallel) {
  OperatorMatrix out;
  out.size = n;
  out.kind = MatrixKind::closed;
  out.entries.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (long j = 0; j < static_cast<long>(n); ++j) {
    for (std::size_t nu = 0; nu < n; ++nu) {
      out.entries(j, static_cast<Eigen::Index>(nu)) =
          closed_entry(static_cast<unsigned>(j), static_cast<unsigned>(nu));
    }
  }
  return out;
}

}  // namespace

OperatorMatrix build_matrix(std::size_t n, MatrixKind kind, const std::optional<HoleParams>& hole,
                            const SeriesControl& ctl, const BuildOptions& opts) {
  if (n < 2) throw DomainError("build_matrix: truncation order must be at least 2");
  const bool par = opts.execution == Execution::parallel;
  if (kind == MatrixKind::closed) {
    OperatorMatrix out = build_closed(n, par);
    out.hole = hole;
    return out;
  }
  if (!hole) throw ConfigError("build_matrix: open matrix needs hole parameters");
  ctl.validate();
  if (n > 512 || !hole->in_supported_box()) {
    std::ostringstream os;
    os << "open matrix of order " << n << " requested outside the supported box";
    warn(os.str());
  }
  if (opts.zero_hole_term) {
    OperatorMatrix out = build_closed(n, par);
    out.kind = MatrixKind::open;
    out.hole = hole;
    out.series = ctl;
    return out;
  }
  OperatorMatrix out;
  out.size = n;
  out.kind = MatrixKind::open;
  out.hole = hole;
  out.series = ctl;
  out.entries.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const auto cols = all_columns(n);

  if (ctl.precision.hardware) {
    SeriesValuesD sv = build_series_hw(n, cols, *hole, ctl, par);
    const double damp = 1.0 - erf(hole->mu() * hole->shift());
    for (std::size_t nu = 0; nu < n; ++nu) {
      for (std::size_t j = 0; j < n; ++j) {
        const double first =
            damp * closed_m_entry(static_cast<unsigned>(j), static_cast<unsigned>(nu)) / 2;
        out.entries(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(nu)) =
            first + closed_n_entry(static_cast<unsigned>(j), static_cast<unsigned>(nu)) +
            sv.hole_series[nu * n + j];
      }
    }
    out.series_terms_used = sv.n_star + 1;
    out.working_bits = 53;
    return out;
  }

  SeriesValues sv = build_series_mp(n, cols, *hole, ctl, par);
  {
    WorkingPrecision guard(sv.working_bits);
#pragma omp parallel for schedule(dynamic) if (par)
    for (long nu = 0; nu < static_cast<long>(n); ++nu) {
      for (std::size_t j = 0; j < n; ++j) {
        const unsigned ju = static_cast<unsigned>(j), nuu = static_cast<unsigned>(nu);
        const Mp v = first_term_mp(ju, nuu, *hole) + closed_n_mp(ju, nuu) +
                     sv.hole_series[static_cast<std::size_t>(nu) * n + j];
        out.entries(static_cast<Eigen::Index>(j), nu) = to_double(v);
      }
    }
  }
  out.series_terms_used = sv.n_star + 1;
  out.working_bits = sv.working_bits;
  return out;
}

// ---------------------------------------------------------------------------
// Direct per-entry evaluation.

namespace {

/// H_k = sum_{m<=j} (-1)^m C(j+1, m+1) C(k+m+1, m) F(nu, k, m), in Real at
/// the ambient precision (magnitudes only with Abs).
template <class Real, bool Abs>
Real inner_sum(unsigned j, unsigned nu, unsigned k) {
  Real total = 0;
  Real binom_j = j + 1;  // C(j+1, m+1)
  Real binom_k = 1;      // C(k+m+1, m)
  for (unsigned m = 0; m <= j; ++m) {
    // Pfaff sum of F(nu, k, m), magnitudes for Abs.
    Real term = 1, f = 1;
    for (unsigned s = 0; s < m; ++s) {
      mul_ui(term, nu + 2 + s);
      mul_ui(term, m - s);
      div_ui(term, k + 2 + s);
      div_ui(term, 2 * (s + 1));
      if (!Abs) term = -term;
      f += term;
    }
    using std::ldexp;
    f = ldexp(f, -static_cast<int>(nu + 2));
    Real t = binom_j * binom_k;
    t *= f;
    if (!Abs && m % 2 == 1) {
      total -= t;
    } else {
      total += t;
    }
    if (m == j) break;
    mul_ui(binom_j, j - m);
    div_ui(binom_j, m + 2);
    mul_ui(binom_k, k + m + 2);
    div_ui(binom_k, m + 1);
  }
  return total;
}

template <class Real, bool Abs>
struct DirectSeries {
  unsigned j, nu;
  Real mu, a;
  std::vector<Real> H{Real(0)};  // index k, H[0] unused

  const Real& h(unsigned k) {
    while (H.size() <= k) H.push_back(inner_sum<Real, Abs>(j, nu, static_cast<unsigned>(H.size())));
    return H[k];
  }

  /// Level n term without the (nu+1)/((j+1) sqrt(pi)) prefactor.
  Real level(unsigned n, const Real& qn) {
    std::vector<Real> c(2 * n + 2, Real(0));
    level_coefficients<Real, Abs>(n, qn, a, nullptr, c.data());
    Real acc = 0;
    for (unsigned k = 1; k <= 2 * n + 1; ++k) mul_add(acc, c[k], h(k));
    return acc;
  }
};

}  // namespace

OpenEntryResult open_entry_detail(unsigned j, unsigned nu, const HoleParams& hole,
                                  const SeriesControl& ctl) {
  ctl.validate();
  const double mu = hole.mu();
  const double a = hole.shift();
  const unsigned q = ctl.consecutive_small;
  OpenEntryResult res;

  if (ctl.precision.hardware) {
    DirectSeries<double, false> ds{j, nu, mu, a};
    const double pre = (nu + 1.0) / ((j + 1.0) * sqrt_pi<double>());
    double partial = 0, qn = mu, last = 0;
    unsigned small = 0, n = 0;
    for (; n < ctl.n_cap; ++n) {
      last = pre * ds.level(n, qn);
      partial += last;
      small = std::fabs(last) <= ctl.rel_tol * std::max(std::fabs(partial), 0x1p-53) ? small + 1 : 0;
      qn = qn * mu * mu / (n + 1);
      if (small >= q) break;
    }
    if (small < q) throw NonConvergent(j, nu, ctl.n_cap, partial, last);
    const double first = (1.0 - erf(mu * a)) * closed_m_entry(j, nu) / 2;
    res.value = first + closed_n_entry(j, nu) + partial;
    res.hole_series = partial;
    res.last_term = last;
    res.terms_used = n + 1;
    res.working_bits = 53;
    return res;
  }

  // Magnitude pass over the full cap picks the guard bits.
  long double bar_sum = 0;
  {
    DirectSeries<long double, true> sh{j, nu, std::fabs(mu), std::fabs(a)};
    const long double pre = (nu + 1.0L) / ((j + 1.0L) * sqrt_pi<long double>());
    long double qn = std::fabs(mu);
    for (unsigned n = 0; n < ctl.n_cap; ++n) {
      bar_sum += pre * sh.level(n, qn);
      qn = qn * mu * mu / (n + 1);
    }
  }
  const std::size_t depth = 2 * static_cast<std::size_t>(ctl.n_cap) + 2 + 2 * (j + 1) + ctl.n_cap;
  const unsigned bits = guarded_bits(ctl.precision.bits, bar_sum, depth);
  WorkingPrecision guard(bits);

  DirectSeries<Mp, false> ds{j, nu, Mp(mu), Mp(a)};
  const Mp pre = Mp(nu + 1) / (Mp(j + 1) * sqrt_pi<Mp>());
  const Mp floor = ldexp(Mp(1), -static_cast<int>(ctl.precision.bits));
  Mp partial = 0, qn = mu, last = 0;
  const Mp mu2 = Mp(mu) * Mp(mu);
  unsigned small = 0, n = 0;
  for (; n < ctl.n_cap; ++n) {
    last = pre * ds.level(n, qn);
    partial += last;
    small = abs(last) <= Mp(ctl.rel_tol) * std::max<Mp>(abs(partial), floor) ? small + 1 : 0;
    qn *= mu2;
    div_ui(qn, n + 1);
    if (small >= q) break;
  }
  if (small < q) throw NonConvergent(j, nu, ctl.n_cap, to_double(partial), to_double(last));
  const Mp v = first_term_mp(j, nu, hole) + closed_n_mp(j, nu) + partial;
  res.value = to_double(v);
  res.hole_series = to_double(partial);
  res.last_term = to_double(last);
  res.terms_used = n + 1;
  res.working_bits = bits;
  return res;
}

double open_entry(unsigned j, unsigned nu, const HoleParams& hole, const SeriesControl& ctl) {
  return open_entry_detail(j, nu, hole, ctl).value;
}

// ---------------------------------------------------------------------------
// Convergence-bound diagnostic.

double appendix_constant(const HoleParams& hole) {
  const double a = std::fabs(hole.shift());
  if (a == 0) throw DomainError("appendix bound: undefined for a = 0");
  return a <= 1 ? 16 * hole.mu() / a : 16 * hole.mu() * a;
}

double appendix_bound_log(const HoleParams& hole, unsigned n) {
  const double c = appendix_constant(hole);
  return std::log(2.0 * n + 1) + (2.0 * n + 1) * std::log(c) - std::lgamma(n + 1.0);
}

double appendix_bound_diagnostic(const HoleParams& hole, unsigned n) {
  return std::exp(appendix_bound_log(hole, n));
}

unsigned appendix_decrease_index(const HoleParams& hole) {
  // bound(n+1)/bound(n) = (2n+3) c^2 / ((2n+1)(n+1)), decreasing in n.
  const double c2 = std::pow(appendix_constant(hole), 2);
  unsigned n = static_cast<unsigned>(std::max(0.0, std::floor(c2) - 2));
  while ((2.0 * n + 3) * c2 >= (2.0 * n + 1) * (n + 1.0)) ++n;
  while (n > 0 && (2.0 * (n - 1) + 3) * c2 < (2.0 * (n - 1) + 1) * n) --n;
  return n;
}

// ---------------------------------------------------------------------------
// Serialization.

void to_json(nlohmann::json& j, const SeriesControl& ctl) {
  j = {{"n_cap", ctl.n_cap},
       {"rel_tol", ctl.rel_tol},
       {"consecutive_small", ctl.consecutive_small},
       {"precision_bits", ctl.precision.bits},
       {"hardware_float", ctl.precision.hardware}};
}

SeriesControl series_from_json(const nlohmann::json& j, SeriesControl base) {
  if (!j.is_object()) throw ConfigError("series: expected an object");
  for (const auto& [key, val] : j.items()) {
    if (key == "n_cap") {
      base.n_cap = val.get<unsigned>();
    } else if (key == "rel_tol") {
      base.rel_tol = val.get<double>();
    } else if (key == "consecutive_small") {
      base.consecutive_small = val.get<unsigned>();
    } else if (key == "precision_bits") {
      base.precision.bits = val.get<unsigned>();
    } else if (key == "hardware_float") {
      base.precision.hardware = val.get<bool>();
    } else {
      throw ConfigError("series: unknown key '" + key + "'");
    }
  }
  base.validate();
  return base;
}

nlohmann::json matrix_to_json(const OperatorMatrix& m) {
  nlohmann::json j;
  j["size"] = m.size;
  j["kind"] = to_string(m.kind);
  j["hole"] = m.hole ? nlohmann::json(*m.hole) : nlohmann::json(nullptr);
  j["series"] = m.series ? nlohmann::json(*m.series) : nlohmann::json(nullptr);
  j["series_terms_used"] = m.series_terms_used;
  j["working_bits"] = m.working_bits;
  auto& e = j["entries"] = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.entries.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.entries.cols(); ++c) e.push_back(m.entries(r, c));
  }
  return j;
}

OperatorMatrix matrix_from_json(const nlohmann::json& j) {
  try {
    OperatorMatrix m;
    m.size = j.at("size").get<std::size_t>();
    m.kind = matrix_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("hole") && !j.at("hole").is_null()) m.hole = hole_from_json(j.at("hole"));
    if (j.contains("series") && !j.at("series").is_null()) {
      m.series = series_from_json(j.at("series"));
    }
    m.series_terms_used = j.value("series_terms_used", 0u);
    m.working_bits = j.value("working_bits", 0u);
    const auto& e = j.at("entries");
    if (!e.is_array() || e.size() != m.size * m.size) {
      throw ConfigError("matrix: entries must hold size*size numbers");
    }
    const auto n = static_cast<Eigen::Index>(m.size);
    m.entries.resize(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < n; ++c) {
        m.entries(r, c) = e.at(static_cast<std::size_t>(r * n + c)).get<double>();
      }
    }
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("matrix: ") + ex.what());
  }
}

std::string matrix_to_csv(const OperatorMatrix& m) {
  std::string out = "j";
  char buf[32];
  for (std::size_t c = 0; c < m.size; ++c) out += "," + std::to_string(c);
  out += '\n';
  for (Eigen::Index r = 0; r < m.entries.rows(); ++r) {
    out += std::to_string(r);
    for (Eigen::Index c = 0; c < m.entries.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m.entries(r, c));
      out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace fareyesc
