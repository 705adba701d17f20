#pragma once

#include "fareyesc/precision.hpp"

#include <json.hpp>

#include <limits>

namespace fareyesc {

/// Parameters of the smooth hole xi_mu(x, a) = (1 - Erf(mu (x - a))) / 2.
///
/// epsilon is the nominal hole endpoint and may be any value below 1/2,
/// including -infinity (a = -1). The shift a = epsilon / (1 - epsilon) is
/// derived on demand. mu = 0 is accepted as the degenerate hole xi = 1/2.
class HoleParams {
 public:
  /// Throws ConfigError unless epsilon < 1/2 (or -inf) and mu >= 0 is finite.
  /// Warns when the pair lies outside the supported box
  /// mu in (0, 3.5], epsilon in [-1e4, 0.49].
  HoleParams(double epsilon, double mu);

  double epsilon() const { return epsilon_; }
  double mu() const { return mu_; }
  /// a = epsilon / (1 - epsilon); -1 for epsilon = -inf.
  double shift() const;

  bool in_supported_box() const;

  friend bool operator==(const HoleParams&, const HoleParams&) = default;

 private:
  double epsilon_;
  double mu_;
};

inline constexpr double kSupportedMuMax = 3.5;
inline constexpr double kSupportedEpsMin = -1e4;
inline constexpr double kSupportedEpsMax = 0.49;

double xi(double x, const HoleParams& hole);
/// xi at the ambient MPFR precision.
Mp xi_mp(const Mp& x, const HoleParams& hole);

struct HoleMeasure {
  double value = 0;
};

/// Integral of xi over the positive half-line:
///   a - (a/2) erfc(mu a) + exp(-mu^2 a^2) / (2 mu sqrt(pi)).
/// Evaluated in 192-bit arithmetic, since for a near -1 the first two terms
/// cancel to erfc(mu)/2. Requires mu > 0.
HoleMeasure hole_measure(const HoleParams& hole);

/// JSON object {"epsilon": ..., "mu": ...}; epsilon = -inf is written as the
/// string "-inf".
void to_json(nlohmann::json& j, const HoleParams& hole);
HoleParams hole_from_json(const nlohmann::json& j);

}  // namespace fareyesc
