#include "evoquer/neural/gradcheck.hpp"

#include <cmath>
#include <vector>

namespace evoquer::neural {

GradCheckResult grad_check(const std::function<double()>& loss,
                           std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  GradCheckResult result;
  Rng rng(options.subsample_seed);
  for (Parameter* p : params) {
    const int rows = p->rows(), cols = p->cols();
    const long long n_coords = static_cast<long long>(rows) * cols;

    std::vector<std::pair<int, int>> coords;
    if (options.max_coords_per_param > 0 &&
        n_coords > options.max_coords_per_param) {
      for (int i = 0; i < options.max_coords_per_param; ++i)
        coords.emplace_back(rng.uniform_int(rows), rng.uniform_int(cols));
    } else {
      for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) coords.emplace_back(r, c);
    }

    for (const auto& [r, c] : coords) {
      const double saved = p->value(r, c);
      const double eps = options.epsilon * std::max(1.0, std::abs(saved));
      p->value(r, c) = saved + eps;
      const double up = loss();
      p->value(r, c) = saved - eps;
      const double down = loss();
      p->value(r, c) = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad(r, c);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      const double rel = std::abs(numeric - analytic) / denom;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = p->name;
        result.worst_row = r;
        result.worst_col = c;
      }
    }
  }
  return result;
}

}  // namespace evoquer::neural
