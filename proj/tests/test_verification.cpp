#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "rsgd/verification.hpp"

using namespace rsgd;

TEST_CASE("sample-conditional bias of zero-imputed linear gradients") {
  const TheoremCheck c = check_sample_conditional_bias_linear();
  CHECK(c.passed);
  CHECK(c.measured.at("max_abs_error") < c.tolerance);
}

TEST_CASE("first-order operator removes the linear part of the bias") {
  const TheoremCheck c = check_first_order_operator();
  CHECK(c.passed);
  CHECK(c.measured.at("linear_zero_quadratic_residual_error") < 1e-10);
}

TEST_CASE("plug-in bias shape") {
  const TheoremCheck c = check_plugin_bound_shape();
  CHECK(c.passed);
  CHECK(c.measured.at("zero_shift_gap") < 1e-12);
  CHECK(c.measured.at("sign_agreement") == 1.0);
}

TEST_CASE("variance inflation is measured for orders up to three") {
  const TheoremCheck c = check_variance_inflation();
  CHECK(c.passed);
  CHECK(c.measured.at("inflation_order0") == 1.0);
  CHECK(c.measured.at("inflation_order3") > c.measured.at("inflation_order1"));
}

TEST_CASE("verdict file") {
  std::ostringstream out;
  write_verdicts(out, run_all_checks());
  const auto doc = nlohmann::json::parse(out.str());
  CHECK(doc.at("passed").get<bool>());
  CHECK(doc.at("checks").size() == 4);
  CHECK(doc.at("checks")[0].at("verdict") == "pass");
}
