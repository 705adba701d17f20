#pragma once

#include "fareyesc/error.hpp"
#include "fareyesc/operator.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fareyesc {

struct SpectralResult {
  double lambda = 0;
  /// ||A v - lambda v|| / ||v|| at the returned vector.
  double residual = 0;
  std::size_t iterations = 0;
  std::size_t truncation = 0;
  Eigen::VectorXd vector;
};

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, SpectralResult best)
      : Error(what), best_(std::move(best)) {}
  const SpectralResult& best() const { return best_; }

 private:
  SpectralResult best_;
};

/// Power iteration oscillates without progress: the dominant eigenvalues
/// are a complex pair, or a real pair of equal modulus.
class ComplexDominance : public Error {
 public:
  using Error::Error;
};

class TruncationMismatch : public Error {
 public:
  using Error::Error;
};

class InsufficientPoints : public Error {
 public:
  using Error::Error;
};

inline constexpr double kDefaultEigTol = 1e-13;
inline constexpr std::size_t kDefaultMaxIter = 200000;

/// y = A x for a square operator of the given dimension.
using LinearOperator = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& y)>;

/// Power iteration from the normalized all-ones vector with Rayleigh quotient
/// lambda = v.Av. Stops once the residual is at most tol.
SpectralResult principal_eigenvalue(const LinearOperator& apply, std::size_t n,
                                    double tol = kDefaultEigTol,
                                    std::size_t max_iter = kDefaultMaxIter);
SpectralResult principal_eigenvalue(const Eigen::MatrixXd& a, double tol = kDefaultEigTol,
                                    std::size_t max_iter = kDefaultMaxIter);
SpectralResult principal_eigenvalue(const OperatorMatrix& a, double tol = kDefaultEigTol,
                                    std::size_t max_iter = kDefaultMaxIter);

/// -log(lambda_open / lambda_closed), formed as -log1p of the relative gap.
double escape_rate(const SpectralResult& open, const SpectralResult& closed);

struct CurvePoint {
  double epsilon = 0;
  double hole_measure = 0;
  double gamma = 0;
  double lambda_open = 0;
  double lambda_closed = 0;
  std::size_t truncation = 0;
  double residual_open = 0;
  double residual_closed = 0;
  unsigned series_terms_used = 0;
  /// "ok", "unstable_doubling", or "failed: <reason>".
  std::string status = "ok";
  /// Filled when the doubling check ran.
  std::optional<double> lambda_open_doubled;
  std::optional<double> gamma_doubled;

  bool ok() const { return status == "ok"; }
  bool failed() const { return status.rfind("failed", 0) == 0; }
};

struct EscapeCurve {
  double mu = 0;
  std::size_t truncation = 0;
  /// Sorted by hole_measure.
  std::vector<CurvePoint> points;
};

struct CurveOptions {
  double eig_tol = kDefaultEigTol;
  std::size_t max_iter = kDefaultMaxIter;
  /// Recompute every point at 2N and flag relative eigenvalue changes above
  /// doubling_tol.
  bool check_doubling = false;
  double doubling_tol = 1e-4;
  Execution execution = Execution::parallel;
};

/// The grid used when none is given.
std::vector<double> default_epsilon_grid();

/// One closed eigenvalue per truncation order, reused for every grid point.
/// Failures of single points are recorded in their status.
EscapeCurve escape_curve(double mu, const std::vector<double>& eps_grid, std::size_t n,
                         const SeriesControl& ctl = {}, const CurveOptions& opts = {});

struct ScalingPoint {
  double hole_measure = 0;
  double gamma = 0;
  /// gamma / M
  double ratio_identity = 0;
  /// gamma / (M / (-log M))
  double ratio_f = 0;
};

struct ScalingReport {
  std::vector<ScalingPoint> points;
  /// Sum of squared log residuals against each reference curve.
  double rss_identity = 0;
  double rss_f = 0;
  /// Same with a fitted constant offset in log space (shape only).
  double shape_rss_identity = 0;
  double shape_rss_f = 0;
  /// Least-squares slope of log gamma against log M.
  double slope = 0;
  /// "f" or "identity", by the smaller rss.
  std::string selected;
  double ratio_f_min = 0;
  double ratio_f_max = 0;
};

/// Compares the usable points (not failed, gamma > 0, m_lo <= M < m_hi) with
/// t and t/(-log t). Throws InsufficientPoints below 3 such points.
ScalingReport scaling_compare(const EscapeCurve& curve, double m_lo = 0, double m_hi = 0.1);

/// Columns mu, epsilon, N, hole_measure, lambda_open, lambda_closed, gamma,
/// residual_open, residual_closed, series_terms_used, status,
/// lambda_open_2N, gamma_2N. Numbers in %.17g.
std::string curve_csv_header();
std::string curve_to_csv_rows(const EscapeCurve& curve);
nlohmann::json curve_to_json(const EscapeCurve& curve);
nlohmann::json scaling_to_json(const ScalingReport& report);

}  // namespace fareyesc
