#pragma once

#include <functional>
#include <span>
#include <string>

#include "evoquer/neural/graph.hpp"

namespace evoquer::neural {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // cap on checked coordinates per parameter; <= 0 checks all of them
  int max_coords_per_param = -1;
  std::uint64_t subsample_seed = 17;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_row = -1;
  int worst_col = -1;
};

// Central finite differences against already-populated analytic gradients.
// `loss` must re-evaluate the scalar objective from the parameters' current
// values and must not touch the stored gradients.
GradCheckResult grad_check(const std::function<double()>& loss,
                           std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace evoquer::neural
