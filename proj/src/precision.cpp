#include "fareyesc/precision.hpp"

#include "fareyesc/error.hpp"

#include <string>

namespace fareyesc {

namespace {

unsigned digits10_for_bits(unsigned bits) {
  // Boost maps digits10 back to bits by rounding up, so this never undershoots.
  return static_cast<unsigned>(std::ceil(bits * 0.30103)) + 1;
}

}  // namespace

void Precision::validate() const {
  if (!hardware && bits < 53) {
    throw ConfigError("precision must be at least 53 bits, got " + std::to_string(bits));
  }
}

WorkingPrecision::WorkingPrecision(unsigned bits)
    : saved_digits10_(Mp::default_precision()), bits_(bits) {
  Mp::default_precision(digits10_for_bits(bits));
}

WorkingPrecision::~WorkingPrecision() { Mp::default_precision(saved_digits10_); }

unsigned current_mp_bits() {
  Mp probe;
  return static_cast<unsigned>(mpfr_get_prec(probe.backend().data()));
}

}  // namespace fareyesc
