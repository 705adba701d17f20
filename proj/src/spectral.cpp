#include "fareyesc/spectral.hpp"

#include "fareyesc/holes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace fareyesc {

namespace {

constexpr std::size_t kOscillationWindow = 256;

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

SpectralResult principal_eigenvalue(const LinearOperator& apply, std::size_t n, double tol,
                                    std::size_t max_iter) {
  if (n == 0) throw DomainError("principal_eigenvalue: empty operator");
  if (!(tol > 0)) throw DomainError("principal_eigenvalue: tol must be positive");
  const auto dim = static_cast<Eigen::Index>(n);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(dim) / std::sqrt(static_cast<double>(n));
  Eigen::VectorXd w(dim);

  SpectralResult best;
  best.residual = std::numeric_limits<double>::infinity();
  best.truncation = n;

  double prev_lambda = std::numeric_limits<double>::quiet_NaN();
  double prev_step = 0;
  std::size_t sign_changes = 0;
  double window_residual = std::numeric_limits<double>::infinity();

  for (std::size_t it = 1; it <= max_iter; ++it) {
    apply(v, w);
    if (!w.allFinite()) throw DomainError("principal_eigenvalue: operator produced non-finite values");
    const double lambda = v.dot(w);
    const double residual = (w - lambda * v).norm();
    if (residual < best.residual) {
      best.lambda = lambda;
      best.residual = residual;
      best.iterations = it;
      best.vector = v;
    }
    if (residual <= tol) {
      SpectralResult r;
      r.lambda = lambda;
      r.residual = residual;
      r.iterations = it;
      r.truncation = n;
      r.vector = v;
      return r;
    }

    const double step = lambda - prev_lambda;
    if (std::isfinite(step)) {
      if (step * prev_step < 0 || lambda * prev_lambda < 0) ++sign_changes;
      prev_step = step;
    }
    prev_lambda = lambda;
    if (it % kOscillationWindow == 0) {
      if (residual > 0.5 * window_residual && sign_changes >= kOscillationWindow / 4) {
        std::ostringstream os;
        os << "power iteration oscillates (" << sign_changes << " sign changes in "
           << kOscillationWindow << " steps, residual " << residual << ")";
        throw ComplexDominance(os.str());
      }
      window_residual = residual;
      sign_changes = 0;
    }

    const double norm = w.norm();
    if (norm == 0) throw DomainError("principal_eigenvalue: iterate collapsed to zero");
    v = w / norm;
  }
  std::ostringstream os;
  os << "power iteration: no convergence in " << max_iter << " steps (best residual "
     << best.residual << ")";
  throw NoConvergence(os.str(), best);
}

SpectralResult principal_eigenvalue(const Eigen::MatrixXd& a, double tol, std::size_t max_iter) {
  if (a.rows() != a.cols()) throw DomainError("principal_eigenvalue: matrix not square");
  if (!a.allFinite()) throw DomainError("principal_eigenvalue: matrix has non-finite entries");
  return principal_eigenvalue([&a](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y.noalias() = a * x; },
                              static_cast<std::size_t>(a.rows()), tol, max_iter);
}

SpectralResult principal_eigenvalue(const OperatorMatrix& a, double tol, std::size_t max_iter) {
  return principal_eigenvalue(a.entries, tol, max_iter);
}

double escape_rate(const SpectralResult& open, const SpectralResult& closed) {
  if (open.truncation != closed.truncation) {
    throw TruncationMismatch("escape_rate: truncations differ (" + std::to_string(open.truncation) +
                             " vs " + std::to_string(closed.truncation) + ")");
  }
  if (!(open.lambda > 0 && closed.lambda > 0)) {
    throw DomainError("escape_rate: eigenvalues must be positive");
  }
  return -std::log1p((open.lambda - closed.lambda) / closed.lambda);
}

std::vector<double> default_epsilon_grid() {
  return {0.1, 0, -0.5, -1, -2, -5, -10, -20, -50, -100, -1e3, -1e4};
}

EscapeCurve escape_curve(double mu, const std::vector<double>& eps_grid, std::size_t n,
                         const SeriesControl& ctl, const CurveOptions& opts) {
  if (eps_grid.empty()) throw ConfigError("escape_curve: empty epsilon grid");
  if (!(mu > 0)) throw ConfigError("escape_curve: mu must be positive");
  std::vector<HoleParams> holes;
  holes.reserve(eps_grid.size());
  for (double e : eps_grid) holes.emplace_back(e, mu);
  ctl.validate();

  BuildOptions build;
  build.execution = opts.execution;
  const SpectralResult closed =
      principal_eigenvalue(build_matrix(n, MatrixKind::closed), opts.eig_tol, opts.max_iter);
  std::optional<SpectralResult> closed2;
  if (opts.check_doubling) {
    closed2 = principal_eigenvalue(build_matrix(2 * n, MatrixKind::closed), opts.eig_tol, opts.max_iter);
  }

  EscapeCurve curve;
  curve.mu = mu;
  curve.truncation = n;
  for (const HoleParams& hole : holes) {
    CurvePoint p;
    p.epsilon = hole.epsilon();
    p.truncation = n;
    p.lambda_closed = closed.lambda;
    p.residual_closed = closed.residual;
    p.hole_measure = hole_measure(hole).value;
    try {
      const OperatorMatrix a = build_matrix(n, MatrixKind::open, hole, ctl, build);
      const SpectralResult open = principal_eigenvalue(a, opts.eig_tol, opts.max_iter);
      p.lambda_open = open.lambda;
      p.residual_open = open.residual;
      p.series_terms_used = a.series_terms_used;
      p.gamma = escape_rate(open, closed);
      if (closed2) {
        const OperatorMatrix a2 = build_matrix(2 * n, MatrixKind::open, hole, ctl, build);
        const SpectralResult open2 = principal_eigenvalue(a2, opts.eig_tol, opts.max_iter);
        p.lambda_open_doubled = open2.lambda;
        p.gamma_doubled = escape_rate(open2, *closed2);
        if (std::fabs(open.lambda - open2.lambda) / open2.lambda > opts.doubling_tol) {
          p.status = "unstable_doubling";
        }
      }
    } catch (const Error& e) {
      p.status = std::string("failed: ") + e.what();
      p.gamma = p.lambda_open = p.residual_open = std::numeric_limits<double>::quiet_NaN();
    }
    curve.points.push_back(std::move(p));
  }
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const CurvePoint& x, const CurvePoint& y) { return x.hole_measure < y.hole_measure; });
  return curve;
}

ScalingReport scaling_compare(const EscapeCurve& curve, double m_lo, double m_hi) {
  ScalingReport rep;
  std::vector<double> d_id, d_f, lx, ly;
  for (const CurvePoint& p : curve.points) {
    if (p.failed() || !(p.gamma > 0)) continue;
    const double m = p.hole_measure;
    if (!(m >= m_lo && m < m_hi && m > 0 && m < 1)) continue;
    ScalingPoint s;
    s.hole_measure = m;
    s.gamma = p.gamma;
    const double f = m / -std::log(m);
    s.ratio_identity = p.gamma / m;
    s.ratio_f = p.gamma / f;
    rep.points.push_back(s);
    d_id.push_back(std::log(s.ratio_identity));
    d_f.push_back(std::log(s.ratio_f));
    lx.push_back(std::log(m));
    ly.push_back(std::log(p.gamma));
  }
  if (rep.points.size() < 3) {
    throw InsufficientPoints("scaling_compare: need at least 3 usable points below M = " + fmt(m_hi) +
                             ", have " + std::to_string(rep.points.size()));
  }
  auto rss = [](const std::vector<double>& d, double offset) {
    double s = 0;
    for (double x : d) s += (x - offset) * (x - offset);
    return s;
  };
  auto mean = [](const std::vector<double>& d) {
    double s = 0;
    for (double x : d) s += x;
    return s / static_cast<double>(d.size());
  };
  rep.rss_identity = rss(d_id, 0);
  rep.rss_f = rss(d_f, 0);
  rep.shape_rss_identity = rss(d_id, mean(d_id));
  rep.shape_rss_f = rss(d_f, mean(d_f));
  const double mx = mean(lx), my = mean(ly);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  rep.slope = sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
  rep.selected = rep.rss_f <= rep.rss_identity ? "f" : "identity";
  rep.ratio_f_min = std::numeric_limits<double>::infinity();
  rep.ratio_f_max = -std::numeric_limits<double>::infinity();
  for (const ScalingPoint& s : rep.points) {
    rep.ratio_f_min = std::min(rep.ratio_f_min, s.ratio_f);
    rep.ratio_f_max = std::max(rep.ratio_f_max, s.ratio_f);
  }
  return rep;
}

std::string curve_csv_header() {
  return "mu,epsilon,N,hole_measure,lambda_open,lambda_closed,gamma,residual_open,"
         "residual_closed,series_terms_used,status,lambda_open_2N,gamma_2N\n";
}

std::string curve_to_csv_rows(const EscapeCurve& curve) {
  std::string out;
  for (const CurvePoint& p : curve.points) {
    out += fmt(curve.mu) + ',' + fmt(p.epsilon) + ',' + std::to_string(p.truncation) + ',' +
           fmt(p.hole_measure) + ',' + fmt(p.lambda_open) + ',' + fmt(p.lambda_closed) + ',' +
           fmt(p.gamma) + ',' + fmt(p.residual_open) + ',' + fmt(p.residual_closed) + ',' +
           std::to_string(p.series_terms_used) + ',' + csv_quote(p.status) + ',' +
           (p.lambda_open_doubled ? fmt(*p.lambda_open_doubled) : std::string()) + ',' +
           (p.gamma_doubled ? fmt(*p.gamma_doubled) : std::string()) + '\n';
  }
  return out;
}

nlohmann::json curve_to_json(const EscapeCurve& curve) {
  nlohmann::json pts = nlohmann::json::array();
  for (const CurvePoint& p : curve.points) {
    nlohmann::json r = {{"mu", curve.mu},
                        {"epsilon", std::isinf(p.epsilon) ? nlohmann::json("-inf") : nlohmann::json(p.epsilon)},
                        {"N", p.truncation},
                        {"hole_measure", p.hole_measure},
                        {"lambda_open", p.lambda_open},
                        {"lambda_closed", p.lambda_closed},
                        {"gamma", p.gamma},
                        {"residual_open", p.residual_open},
                        {"residual_closed", p.residual_closed},
                        {"series_terms_used", p.series_terms_used},
                        {"status", p.status}};
    if (p.lambda_open_doubled) r["lambda_open_2N"] = *p.lambda_open_doubled;
    if (p.gamma_doubled) r["gamma_2N"] = *p.gamma_doubled;
    pts.push_back(std::move(r));
  }
  return {{"mu", curve.mu}, {"N", curve.truncation}, {"points", std::move(pts)}};
}

nlohmann::json scaling_to_json(const ScalingReport& rep) {
  nlohmann::json pts = nlohmann::json::array();
  for (const ScalingPoint& s : rep.points) {
    pts.push_back({{"hole_measure", s.hole_measure},
                   {"gamma", s.gamma},
                   {"ratio_identity", s.ratio_identity},
                   {"ratio_f", s.ratio_f}});
  }
  return {{"points", std::move(pts)},
          {"rss_identity", rep.rss_identity},
          {"rss_f", rep.rss_f},
          {"shape_rss_identity", rep.shape_rss_identity},
          {"shape_rss_f", rep.shape_rss_f},
          {"slope", rep.slope},
          {"selected", rep.selected},
          {"ratio_f_min", rep.ratio_f_min},
          {"ratio_f_max", rep.ratio_f_max}};
}

}  // namespace fareyesc
