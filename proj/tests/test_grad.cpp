#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "grad_suite.hpp"

// The full finite-difference suite; the acceptance runner re-executes the
// same harness under its time budget.
TEST_CASE("every differentiable op passes central finite-difference checks") {
  const auto results = gradcheck::run_suite(/*seed=*/20240811, /*tol=*/1e-4);
  REQUIRE(!results.empty());
  for (const auto& r : results) {
    INFO(r.op, " max relative error ", r.max_rel_err);
    CHECK(r.pass);
  }
}
