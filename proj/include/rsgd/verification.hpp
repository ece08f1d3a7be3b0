#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace rsgd {

/// Outcome of one property check. `passed` is computed from `measured`
/// against `tolerance` and nothing else.
struct TheoremCheck {
  std::string name;
  std::map<std::string, std::string> inputs;
  double tolerance = 0.0;
  bool passed = false;
  std::map<std::string, double> measured;
  std::vector<std::string> details;
};

/// Per-sample expectation of the zero-imputed squared-loss gradient over
/// all 2^4 masks against the coordinate formula, 50 random instances.
TheoremCheck check_sample_conditional_bias_linear(std::uint64_t seed = 1);

/// Residual of the exact bias after removing sum_j t p_j A_j is O(t^2):
/// the fitted linear coefficient in t vanishes for every family and for
/// zero and mean imputation. Also compares the linear + zero residual with
/// p_j sum_{k != j} p_k S_jk w_k.
TheoremCheck check_first_order_operator(std::uint64_t seed = 2);

/// Plug-in Richardson bias under hMCAR with a shifted p: equals the exact
/// mechanism bias at zero shift, grows about linearly in the shift, and its
/// leading change has the sign of -A(e)/(C-1).
TheoremCheck check_plugin_bound_shape(std::uint64_t seed = 3);

/// Per-sample gradient variance of the order-k estimator (k = 0..3, C = 2)
/// over mask and thinning draws, averaged over rows and reported relative to
/// k = 0. Passes whenever the measurements are finite.
TheoremCheck check_variance_inflation(std::uint64_t seed = 4);

std::vector<TheoremCheck> run_all_checks();

/// JSON verdict file: {"passed": bool, "checks": [...]}.
void write_verdicts(std::ostream& out, const std::vector<TheoremCheck>& checks);

}  // namespace rsgd
