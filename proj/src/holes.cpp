#include "fareyesc/holes.hpp"

#include "fareyesc/error.hpp"
#include "fareyesc/specialfn.hpp"

#include <boost/math/constants/constants.hpp>

#include <cmath>
#include <sstream>

namespace fareyesc {

HoleParams::HoleParams(double epsilon, double mu) : epsilon_(epsilon), mu_(mu) {
  const bool eps_ok = (std::isfinite(epsilon) && epsilon < 0.5) ||
                      (std::isinf(epsilon) && epsilon < 0);
  if (!eps_ok) {
    std::ostringstream os;
    os << "hole: epsilon must be below 1/2, got " << epsilon;
    throw ConfigError(os.str());
  }
  if (!std::isfinite(mu) || mu < 0) {
    std::ostringstream os;
    os << "hole: mu must be finite and nonnegative, got " << mu;
    throw ConfigError(os.str());
  }
  if (!in_supported_box()) {
    std::ostringstream os;
    os << "hole (epsilon=" << epsilon << ", mu=" << mu << ") is outside the supported box";
    warn(os.str());
  }
}

double HoleParams::shift() const {
  if (std::isinf(epsilon_)) return -1.0;
  return epsilon_ / (1.0 - epsilon_);
}

bool HoleParams::in_supported_box() const {
  return mu_ > 0 && mu_ <= kSupportedMuMax && epsilon_ >= kSupportedEpsMin &&
         epsilon_ <= kSupportedEpsMax;
}

double xi(double x, const HoleParams& hole) {
  return 0.5 * erfc(hole.mu() * (x - hole.shift()));
}

Mp xi_mp(const Mp& x, const HoleParams& hole) {
  const Mp arg = Mp(hole.mu()) * (x - Mp(hole.shift()));
  return boost::multiprecision::erfc(arg) / 2;
}

HoleMeasure hole_measure(const HoleParams& hole) {
  if (!(hole.mu() > 0)) throw DomainError("hole_measure: mu must be positive");
  WorkingPrecision guard(192);
  const Mp mu = hole.mu();
  const Mp a = hole.shift();
  const Mp pi = boost::math::constants::pi<Mp>();
  const Mp m = a - a / 2 * boost::multiprecision::erfc(mu * a) +
               exp(-mu * mu * a * a) / (2 * mu * sqrt(pi));
  return {to_double(m)};
}

void to_json(nlohmann::json& j, const HoleParams& hole) {
  j = nlohmann::json::object();
  if (std::isinf(hole.epsilon())) {
    j["epsilon"] = "-inf";
  } else {
    j["epsilon"] = hole.epsilon();
  }
  j["mu"] = hole.mu();
}

HoleParams hole_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("epsilon") || !j.contains("mu")) {
    throw ConfigError("hole: expected an object with keys epsilon and mu");
  }
  double eps;
  const auto& e = j.at("epsilon");
  if (e.is_string()) {
    if (e.get<std::string>() != "-inf") throw ConfigError("hole: epsilon string must be \"-inf\"");
    eps = -std::numeric_limits<double>::infinity();
  } else if (e.is_number()) {
    eps = e.get<double>();
  } else {
    throw ConfigError("hole: epsilon must be a number or \"-inf\"");
  }
  if (!j.at("mu").is_number()) throw ConfigError("hole: mu must be a number");
  return HoleParams(eps, j.at("mu").get<double>());
}

}  // namespace fareyesc
