#pragma once

#include "fareyesc/error.hpp"
#include "fareyesc/holes.hpp"
#include "fareyesc/operator.hpp"
#include "fareyesc/precision.hpp"
#include "fareyesc/spectral.hpp"

#include <Eigen/Sparse>
#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace fareyesc {

/// x/(1-x) on [0, 1/2], (1-x)/x on [1/2, 1]. DomainError outside [0, 1].
double farey(double x);

/// Piecewise-linear Markov model: 2 - 2x on [1/2, 1] and
/// (n+1)/(n-1) x - 1/(n(n-1)) on [1/(n+1), 1/n], n >= 2. DomainError for
/// x outside (0, 1].
double km_map(double x);

struct KmResult {
  double lambda = 0;
  double gamma = 0;
  SpectralResult spectral;
};

/// Dominant eigenvalue of the open transfer operator of km_map with hole
/// [0, 1/n_hole), on piecewise-constant densities over the surviving cells
/// (1/(k+1), 1/k), k = 1..n_hole-1.
KmResult km_open_eigenvalue_detail(unsigned n_hole, double tol = kDefaultEigTol,
                                   std::size_t max_iter = kDefaultMaxIter);
double km_open_eigenvalue(unsigned n_hole);

/// Hole [0, epsilon); epsilon = 0 is the closed system.
struct IndicatorHole {
  double epsilon = 0;
};
using HoleSpec = std::variant<IndicatorHole, HoleParams>;

enum class MapKind { farey, km };
std::string to_string(MapKind kind);
MapKind map_kind_from_string(const std::string& s);

/// Every simulated orbit died before step `step`.
class AllDead : public Error {
 public:
  explicit AllDead(std::size_t step);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct McOptions {
  std::size_t n_steps = 40;
  std::size_t samples = 1000000;
  std::uint64_t seed = 1;
  /// Fit window [fit_begin, fit_end]; 0 selects n_steps/2 and n_steps.
  std::size_t fit_begin = 0;
  std::size_t fit_end = 0;
  /// Independent random streams; fixed so results do not depend on threads.
  std::size_t streams = 64;
  Execution execution = Execution::parallel;
};

struct SurvivalEstimate {
  std::size_t n_steps = 0;
  std::size_t samples = 0;
  /// counts[n] orbits alive after n steps; counts[0] = samples.
  std::vector<std::uint64_t> counts;
  std::vector<double> p;
  double gamma_hat = 0;
  double stderr_gamma = 0;
  std::size_t fit_begin = 0;
  std::size_t fit_end = 0;
};

/// Lebesgue-distributed orbits. Each step first applies the hole to the
/// current point, then maps it. An indicator hole removes points in
/// [0, epsilon). A smooth hole acts on the left Farey branch only: the orbit
/// survives the move y -> F(y) with probability 1 - xi(F(y), a). The decay
/// rate is -log(counts[end]/counts[begin]) / (end - begin) with its binomial
/// standard error.
SurvivalEstimate mc_survival(MapKind map, const HoleSpec& hole, const McOptions& opts);

struct UlamConfig {
  std::size_t bins = 2048;
  HoleSpec hole = IndicatorHole{0};
  std::size_t samples_per_bin = 32;

  void validate() const;
};

/// Row-stochastic (sub-stochastic with a hole) transition matrix of the
/// Farey map: row i spreads bin i over the bins hit by its midpoint samples.
Eigen::SparseMatrix<double, Eigen::RowMajor> ulam_matrix(const UlamConfig& cfg,
                                                         Execution execution = Execution::parallel);
/// Dominant eigenvalue of the transpose (the action on densities).
SpectralResult ulam_eigenvalue(const UlamConfig& cfg, double tol = 1e-12,
                               std::size_t max_iter = kDefaultMaxIter,
                               Execution execution = Execution::parallel);

class QuadratureFailure : public Error {
 public:
  using Error::Error;
};

/// Gauss rule for integrals of t^alpha e^-t f(t) over (0, inf), alpha > -1:
/// Golub-Welsch starting values refined by Newton steps in `bits` precision.
struct QuadratureRule {
  std::vector<Mp> nodes;
  std::vector<Mp> weights;
  double alpha = 0;
  unsigned bits = 0;
};
QuadratureRule gauss_laguerre(unsigned order, double alpha, unsigned bits);

/// B[phi](x) = (1/x^2) int t e^(-t/x) phi(t) dt = int u e^-u phi(x u) du,
/// evaluated with an alpha = 1 rule at the rule's precision.
Mp borel_transform(const std::function<Mp(const Mp&)>& phi, const Mp& x,
                   const QuadratureRule& rule);

struct BorelOptions {
  unsigned quad_order = 128;
  /// Laguerre coefficients kept in the expansion of the perturbed image.
  unsigned expansion_terms = 96;
};

struct BorelSample {
  double x = 0;
  double lhs = 0;
  double rhs = 0;
  double rel_error = 0;
};

struct BorelReport {
  unsigned nu = 0;
  std::vector<BorelSample> samples;
  double max_rel_error = 0;
};

/// Compares B[psi](x), psi the series-built image of e_nu under the perturbed
/// M, with (1 - xi(x)) B[M e_nu](x). Requires x in [0.05, 1).
BorelReport borel_identity_check(const HoleParams& hole, unsigned nu, const std::vector<double>& xs,
                                 const SeriesControl& ctl = {}, const BorelOptions& opts = {});
/// Several nu at once; the series evaluation is shared across columns.
std::vector<BorelReport> borel_identity_check(const HoleParams& hole, const std::vector<unsigned>& nus,
                                              const std::vector<double>& xs,
                                              const SeriesControl& ctl = {},
                                              const BorelOptions& opts = {});

nlohmann::json survival_to_json(const SurvivalEstimate& s);
nlohmann::json borel_to_json(const BorelReport& r);

}  // namespace fareyesc
