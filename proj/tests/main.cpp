#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "fareyesc/error.hpp"

int main(int argc, char** argv) {
  // Out-of-box warnings are expected in several tests; tests that check
  // them install their own handler.
  fareyesc::set_warning_handler([](const std::string&) {});
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
