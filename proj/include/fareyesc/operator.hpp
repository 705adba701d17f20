#pragma once

#include "fareyesc/error.hpp"
#include "fareyesc/holes.hpp"
#include "fareyesc/precision.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace fareyesc {

/// Truncation of the outer n-series of the open entries.
///
/// The series is stopped once `consecutive_small` successive level terms are
/// each below rel_tol * max(|partial sum|, 2^-bits). `precision.bits` is the
/// absolute accuracy kept through the summation; the mantissa in use is
/// widened by the measured cancellation (see OperatorMatrix::working_bits).
struct SeriesControl {
  unsigned n_cap = 400;
  double rel_tol = 1e-30;
  unsigned consecutive_small = 3;
  Precision precision{};

  void validate() const;
};

enum class MatrixKind { closed, open };
enum class Execution { serial, parallel };

std::string to_string(MatrixKind kind);
MatrixKind matrix_kind_from_string(const std::string& s);

/// Leading N x N block of the operator in the Laguerre basis; entry (j, nu)
/// is the e_j coefficient of the image of e_nu.
struct OperatorMatrix {
  std::size_t size = 0;
  MatrixKind kind = MatrixKind::closed;
  Eigen::MatrixXd entries;
  std::optional<HoleParams> hole;
  std::optional<SeriesControl> series;
  /// Outer series levels summed (open only).
  unsigned series_terms_used = 0;
  /// MPFR mantissa width actually used (open only); 53 in hardware mode.
  unsigned working_bits = 0;
};

/// The outer series was cut at n_cap before the stopping rule fired.
class NonConvergent : public Error {
 public:
  NonConvergent(unsigned j, unsigned nu, unsigned terms, double partial_sum, double last_term);

  unsigned j() const { return j_; }
  unsigned nu() const { return nu_; }
  unsigned terms() const { return terms_; }
  double partial_sum() const { return partial_; }
  double last_term() const { return last_; }

 private:
  unsigned j_, nu_, terms_;
  double partial_, last_;
};

/// (M e_nu, e_j) / (j+1) = C(nu+j+1, nu) / 2^(nu+j+2), correctly rounded.
double closed_m_entry(unsigned j, unsigned nu);
/// (N e_nu, e_j) / (j+1), summed exactly in integers and rounded once. The
/// alternating sum over l loses all digits in double for nu, j beyond ~40.
double closed_n_entry(unsigned j, unsigned nu);
/// closed_m_entry + closed_n_entry, rounded once.
double closed_entry(unsigned j, unsigned nu);

struct OpenEntryResult {
  double value = 0;
  /// The n-series part alone.
  double hole_series = 0;
  double last_term = 0;
  unsigned terms_used = 0;
  unsigned working_bits = 0;
};

/// One open entry, summing the triple series in its written order (n
/// outermost, then k, then m). Used as the reference for build_matrix.
OpenEntryResult open_entry_detail(unsigned j, unsigned nu, const HoleParams& hole,
                                  const SeriesControl& ctl = {});
double open_entry(unsigned j, unsigned nu, const HoleParams& hole,
                  const SeriesControl& ctl = {});

struct BuildOptions {
  Execution execution = Execution::parallel;
  /// Test hook: drop every hole contribution, so an open build reproduces
  /// the closed matrix.
  bool zero_hole_term = false;
};

/// Dense truncation of order n >= 2. Open entries share one factored
/// evaluation of the n-series; each entry is still checked against the
/// stopping rule individually. Throws NonConvergent with the failing (j, nu).
OperatorMatrix build_matrix(std::size_t n, MatrixKind kind,
                            const std::optional<HoleParams>& hole = std::nullopt,
                            const SeriesControl& ctl = {}, const BuildOptions& opts = {});

/// Coefficients of the hole-perturbed M applied to e_nu: rows j < rows for
/// each requested column, i.e. the open entries minus closed_n_entry.
/// Values carry `working_bits` of mantissa.
struct MPart {
  std::size_t rows = 0;
  std::vector<unsigned> columns;
  /// values[c * rows + j]
  std::vector<Mp> values;
  unsigned series_terms_used = 0;
  unsigned working_bits = 0;

  const Mp& at(std::size_t j, std::size_t c) const { return values[c * rows + j]; }
};

MPart open_m_part(std::size_t rows, const std::vector<unsigned>& columns, const HoleParams& hole,
                  const SeriesControl& ctl = {}, Execution execution = Execution::parallel);

/// Constant of the convergence bound: 16 mu / |a| for |a| <= 1, else 16 mu |a|.
double appendix_constant(const HoleParams& hole);
/// Bound term (2n+1) c^(2n+1) / n!; may overflow to +inf for large c.
double appendix_bound_diagnostic(const HoleParams& hole, unsigned n);
/// Natural log of the bound term, finite wherever the bound is.
double appendix_bound_log(const HoleParams& hole, unsigned n);
/// Smallest n0 with bound(n+1) < bound(n) for every n >= n0 (about c^2).
unsigned appendix_decrease_index(const HoleParams& hole);

void to_json(nlohmann::json& j, const SeriesControl& ctl);
SeriesControl series_from_json(const nlohmann::json& j, SeriesControl base = {});

/// {size, kind, hole, series, entries (row-major)}; doubles round-trip exactly.
nlohmann::json matrix_to_json(const OperatorMatrix& m);
OperatorMatrix matrix_from_json(const nlohmann::json& j);
/// Header row "j,0,1,...", one row per j, entries in %.17g.
std::string matrix_to_csv(const OperatorMatrix& m);

}  // namespace fareyesc
