#include "fareyesc/oracles.hpp"

#include "fareyesc/specialfn.hpp"

#include <boost/multiprecision/mpfr.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace fareyesc {

double farey(double x) {
  if (!(x >= 0 && x <= 1)) throw DomainError("farey: argument outside [0, 1]");
  return x <= 0.5 ? x / (1 - x) : (1 - x) / x;
}

double km_map(double x) {
  if (!(x > 0 && x <= 1)) throw DomainError("km_map: argument outside (0, 1]");
  if (x >= 0.5) return 2 - 2 * x;
  double n = std::floor(1 / x);
  while (n > 2 && x > 1 / n) n -= 1;
  while (x < 1 / (n + 1)) n += 1;
  return (n + 1) / (n - 1) * x - 1 / (n * (n - 1));
}

KmResult km_open_eigenvalue_detail(unsigned n_hole, double tol, std::size_t max_iter) {
  if (n_hole < 2) throw DomainError("km_open_eigenvalue: n_hole must be at least 2");
  // Cell k (index k-1) is (1/(k+1), 1/k). Cell 1 covers [0, 1] with slope 2,
  // so it feeds every cell with weight 1/2; cell k >= 2 maps onto cell k-1
  // with slope (k+1)/(k-1).
  const std::size_t cells = n_hole - 1;
  auto apply = [cells](const Eigen::VectorXd& f, Eigen::VectorXd& g) {
    const double from_top = 0.5 * f[0];
    for (std::size_t i = 0; i < cells; ++i) {
      const double k = static_cast<double>(i + 1);
      g[static_cast<Eigen::Index>(i)] =
          from_top + (i + 1 < cells ? f[static_cast<Eigen::Index>(i + 1)] * k / (k + 2) : 0.0);
    }
  };
  KmResult r;
  r.spectral = principal_eigenvalue(apply, cells, tol, max_iter);
  r.lambda = r.spectral.lambda;
  r.gamma = -std::log(r.lambda);
  return r;
}

double km_open_eigenvalue(unsigned n_hole) { return km_open_eigenvalue_detail(n_hole).lambda; }

std::string to_string(MapKind kind) { return kind == MapKind::farey ? "farey" : "km"; }

MapKind map_kind_from_string(const std::string& s) {
  if (s == "farey") return MapKind::farey;
  if (s == "km") return MapKind::km;
  throw ConfigError("unknown map '" + s + "'");
}

AllDead::AllDead(std::size_t step)
    : Error("all orbits died by step " + std::to_string(step)), step_(step) {}

namespace {

double uniform01(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1p-53;
}

void validate_hole(const HoleSpec& hole) {
  if (const auto* ind = std::get_if<IndicatorHole>(&hole)) {
    if (!(ind->epsilon >= 0 && ind->epsilon < 0.5)) {
      throw ConfigError("indicator hole: epsilon must lie in [0, 1/2)");
    }
  }
}

}  // namespace

SurvivalEstimate mc_survival(MapKind map, const HoleSpec& hole, const McOptions& opts) {
  validate_hole(hole);
  if (opts.n_steps < 1) throw ConfigError("mc: n_steps must be positive");
  if (opts.samples < 1) throw ConfigError("mc: samples must be positive");
  if (opts.streams < 1) throw ConfigError("mc: streams must be positive");
  const std::size_t fit_end = opts.fit_end ? opts.fit_end : opts.n_steps;
  const std::size_t fit_begin = opts.fit_begin ? opts.fit_begin : opts.n_steps / 2;
  if (!(fit_begin < fit_end && fit_end <= opts.n_steps)) {
    throw ConfigError("mc: fit window must satisfy begin < end <= n_steps");
  }
  const HoleParams* smooth = std::get_if<HoleParams>(&hole);
  if (smooth && map != MapKind::farey) {
    throw ConfigError("mc: smooth holes are defined for the Farey map only");
  }
  const double eps = smooth ? 0.0 : std::get<IndicatorHole>(hole).epsilon;

  const std::size_t S = opts.streams;
  std::vector<std::vector<std::uint64_t>> per_stream(S, std::vector<std::uint64_t>(opts.n_steps + 1, 0));
  const bool par = opts.execution == Execution::parallel;

#pragma omp parallel for schedule(dynamic) if (par)
  for (long s = 0; s < static_cast<long>(S); ++s) {
    const std::size_t su = static_cast<std::size_t>(s);
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                      static_cast<std::uint32_t>(su)};
    std::mt19937_64 rng(seq);
    const std::size_t count = opts.samples / S + (su < opts.samples % S ? 1 : 0);
    auto& alive = per_stream[su];
    for (std::size_t i = 0; i < count; ++i) {
      double x = uniform01(rng);
      alive[0] += 1;
      for (std::size_t n = 1; n <= opts.n_steps; ++n) {
        if (smooth) {
          if (x < 0.5) {
            const double y = farey(x);
            if (uniform01(rng) < xi(y, *smooth)) break;
            x = y;
          } else {
            x = farey(x);
          }
        } else {
          if (x < eps) break;
          x = map == MapKind::farey ? farey(x) : km_map(x);
        }
        alive[n] += 1;
        // km_map(1) = 0 lies outside the domain; keep the orbit at the smallest double.
        if (x == 0) x = 0x1p-1074;
      }
    }
  }

  SurvivalEstimate est;
  est.n_steps = opts.n_steps;
  est.samples = opts.samples;
  est.counts.assign(opts.n_steps + 1, 0);
  for (const auto& c : per_stream) {
    for (std::size_t n = 0; n <= opts.n_steps; ++n) est.counts[n] += c[n];
  }
  for (std::size_t n = 0; n <= opts.n_steps; ++n) {
    est.p.push_back(static_cast<double>(est.counts[n]) / static_cast<double>(opts.samples));
  }
  for (std::size_t n = 0; n <= fit_end; ++n) {
    if (est.counts[n] == 0) throw AllDead(n);
  }
  est.fit_begin = fit_begin;
  est.fit_end = fit_end;
  const double c0 = static_cast<double>(est.counts[fit_begin]);
  const double c1 = static_cast<double>(est.counts[fit_end]);
  const double span = static_cast<double>(fit_end - fit_begin);
  const double q = c1 / c0;
  est.gamma_hat = -std::log(q) / span + 0.0;
  est.stderr_gamma = std::sqrt((1 - q) / (q * c0)) / span;
  return est;
}

void UlamConfig::validate() const {
  if (bins < 16) throw ConfigError("ulam: bins must be at least 16");
  if (samples_per_bin < 1) throw ConfigError("ulam: samples_per_bin must be positive");
  validate_hole(hole);
}

Eigen::SparseMatrix<double, Eigen::RowMajor> ulam_matrix(const UlamConfig& cfg, Execution execution) {
  cfg.validate();
  const std::size_t B = cfg.bins, S = cfg.samples_per_bin;
  const HoleParams* smooth = std::get_if<HoleParams>(&cfg.hole);
  const double eps = smooth ? 0.0 : std::get<IndicatorHole>(cfg.hole).epsilon;
  std::vector<std::vector<Eigen::Triplet<double>>> rows(B);
  const bool par = execution == Execution::parallel;

#pragma omp parallel for schedule(static) if (par)
  for (long i = 0; i < static_cast<long>(B); ++i) {
    auto& row = rows[static_cast<std::size_t>(i)];
    for (std::size_t s = 0; s < S; ++s) {
      const double y = (static_cast<double>(i) + (s + 0.5) / static_cast<double>(S)) / static_cast<double>(B);
      const double x = farey(y);
      double w = 1.0 / static_cast<double>(S);
      if (smooth) {
        if (y < 0.5) w *= 1 - xi(x, *smooth);
      } else if (y < eps) {
        w = 0;
      }
      if (w == 0) continue;
      const auto j = std::min<std::size_t>(B - 1, static_cast<std::size_t>(x * static_cast<double>(B)));
      row.emplace_back(static_cast<int>(i), static_cast<int>(j), w);
    }
  }
  std::vector<Eigen::Triplet<double>> all;
  for (auto& r : rows) all.insert(all.end(), r.begin(), r.end());
  Eigen::SparseMatrix<double, Eigen::RowMajor> t(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(B));
  t.setFromTriplets(all.begin(), all.end());
  return t;
}

SpectralResult ulam_eigenvalue(const UlamConfig& cfg, double tol, std::size_t max_iter,
                               Execution execution) {
  const Eigen::SparseMatrix<double, Eigen::ColMajor> tt = ulam_matrix(cfg, execution).transpose();
  return principal_eigenvalue([&tt](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y.noalias() = tt * x; },
                              cfg.bins, tol, max_iter);
}

// ---------------------------------------------------------------------------
// Gauss-Laguerre rules.

namespace {

/// L_n^(alpha)(x) and L_{n-1}^(alpha)(x).
std::pair<Mp, Mp> laguerre_pair(unsigned n, const Mp& x, const Mp& alpha) {
  Mp prev = 1;
  Mp cur = 1 + alpha - x;
  if (n == 0) return {prev, Mp(0)};
  for (unsigned k = 1; k < n; ++k) {
    Mp next = ((2 * k + 1) + alpha - x) * cur - (k + alpha) * prev;
    div_ui(next, k + 1);
    prev = cur;
    cur = next;
  }
  return {cur, prev};
}

}  // namespace

QuadratureRule gauss_laguerre(unsigned order, double alpha, unsigned bits) {
  if (order < 1) throw DomainError("gauss_laguerre: order must be positive");
  if (!(alpha > -1)) throw DomainError("gauss_laguerre: alpha must exceed -1");
  const auto n = static_cast<Eigen::Index>(order);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    jac(i, i) = 2.0 * static_cast<double>(i) + alpha + 1;
    if (i > 0) {
      const double b = std::sqrt(static_cast<double>(i) * (static_cast<double>(i) + alpha));
      jac(i, i - 1) = jac(i - 1, i) = b;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd guess = es.eigenvalues();

  const unsigned work = bits + 32;
  WorkingPrecision guard(work);
  QuadratureRule rule;
  rule.alpha = alpha;
  rule.bits = work;
  const Mp a = alpha;
  const Mp tiny = ldexp(Mp(1), -static_cast<int>(work) + 8);
  const Mp scale = boost::multiprecision::tgamma(Mp(order) + a + 1) / boost::multiprecision::tgamma(Mp(order) + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    Mp x = guess[i];
    for (int it = 0; it < 100; ++it) {
      auto [ln, lm] = laguerre_pair(order, x, a);
      // x L_n' = n L_n - (n + alpha) L_{n-1}
      const Mp deriv = (order * ln - (order + a) * lm) / x;
      const Mp dx = ln / deriv;
      x -= dx;
      if (abs(dx) <= tiny * abs(x)) break;
    }
    // w = Gamma(n+alpha+1)/n! * x / ((n+1)^2 L_{n+1}(x)^2)
    const Mp l_next = laguerre_pair(order + 1, x, a).first;
    Mp w = scale * x / (l_next * l_next);
    div_ui(w, (order + 1) * (order + 1));
    rule.nodes.push_back(x);
    rule.weights.push_back(w);
  }
  for (std::size_t i = 1; i < rule.nodes.size(); ++i) {
    if (!(rule.nodes[i] > rule.nodes[i - 1])) throw QuadratureFailure("gauss_laguerre: nodes not separated");
  }
  return rule;
}

Mp borel_transform(const std::function<Mp(const Mp&)>& phi, const Mp& x, const QuadratureRule& rule) {
  if (rule.alpha != 1) throw DomainError("borel_transform: needs an alpha = 1 rule");
  WorkingPrecision guard(rule.bits);
  Mp sum = 0, mass = 0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const Mp t = rule.weights[i] * phi(x * rule.nodes[i]);
    sum += t;
    mass += abs(t);
  }
  if (!boost::multiprecision::isfinite(sum)) throw QuadratureFailure("borel_transform: non-finite value");
  if (mass > ldexp(abs(sum), static_cast<int>(rule.bits / 2))) {
    throw QuadratureFailure("borel_transform: cancellation exceeds half the working digits");
  }
  return sum;
}

std::vector<BorelReport> borel_identity_check(const HoleParams& hole, const std::vector<unsigned>& nus,
                                              const std::vector<double>& xs, const SeriesControl& ctl,
                                              const BorelOptions& opts) {
  for (double x : xs) {
    if (!(x >= 0.05 && x < 1)) throw DomainError("borel_identity_check: samples must lie in [0.05, 1)");
  }
  if (nus.empty()) throw ConfigError("borel: no columns requested");
  for (unsigned nu : nus) {
    if (opts.expansion_terms < nu + 1) throw ConfigError("borel: expansion_terms must exceed nu");
  }
  const MPart part = open_m_part(opts.expansion_terms, nus, hole, ctl);
  const QuadratureRule rule = gauss_laguerre(opts.quad_order, 1.0, ctl.precision.bits);

  WorkingPrecision guard(rule.bits);
  const std::size_t J = part.rows;
  std::vector<BorelReport> reports;
  for (std::size_t c = 0; c < nus.size(); ++c) {
    const unsigned nu = nus[c];
    std::vector<Mp> coeff(J);
    for (std::size_t j = 0; j < J; ++j) coeff[j] = part.at(j, c);
    auto psi = [&coeff, J](const Mp& t) {
      // sum_j psi_j e_j(t) along the three-term recurrence
      Mp prev = 1, cur = 2 - t;
      Mp sum = coeff[0];
      if (J > 1) sum += coeff[1] * cur;
      for (unsigned n = 1; n + 1 < J; ++n) {
        Mp next = ((2 * n + 2) - t) * cur - (n + 1) * prev;
        div_ui(next, n + 1);
        prev = cur;
        cur = next;
        sum += coeff[n + 1] * cur;
      }
      return sum;
    };
    auto m_image = [nu](const Mp& t) { return Mp(exp(-t) * laguerre_e_recurrence(nu, t)); };

    BorelReport rep;
    rep.nu = nu;
    for (double x : xs) {
      const Mp xm = x;
      const Mp lhs = borel_transform(psi, xm, rule);
      const Mp rhs = (1 - xi_mp(xm, hole)) * borel_transform(m_image, xm, rule);
      BorelSample s;
      s.x = x;
      s.lhs = to_double(lhs);
      s.rhs = to_double(rhs);
      s.rel_error = to_double(Mp(abs(lhs - rhs) / abs(rhs)));
      rep.max_rel_error = std::max(rep.max_rel_error, s.rel_error);
      rep.samples.push_back(s);
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

BorelReport borel_identity_check(const HoleParams& hole, unsigned nu, const std::vector<double>& xs,
                                 const SeriesControl& ctl, const BorelOptions& opts) {
  return borel_identity_check(hole, std::vector<unsigned>{nu}, xs, ctl, opts).front();
}

nlohmann::json survival_to_json(const SurvivalEstimate& s) {
  return {{"n_steps", s.n_steps},   {"samples", s.samples},     {"counts", s.counts},
          {"p", s.p},               {"gamma_hat", s.gamma_hat}, {"stderr", s.stderr_gamma},
          {"fit_begin", s.fit_begin}, {"fit_end", s.fit_end}};
}

nlohmann::json borel_to_json(const BorelReport& r) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : r.samples) {
    samples.push_back({{"x", s.x}, {"lhs", s.lhs}, {"rhs", s.rhs}, {"rel_error", s.rel_error}});
  }
  return {{"nu", r.nu}, {"max_rel_error", r.max_rel_error}, {"samples", std::move(samples)}};
}

}  // namespace fareyesc
