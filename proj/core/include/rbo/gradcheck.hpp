#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rbo/graph.hpp"

namespace rbo {

// Builds a scalar output from a single input leaf on a fresh graph.
using ScalarFn = std::function<Var(Graph&, Var)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_coord = 0;
  double analytic = 0.0;  // at worst_coord
  double numeric = 0.0;   // at worst_coord
};

// Compares backward() against central differences
//   (f(x + h e_i) - f(x - h e_i)) / 2h
// coordinate by coordinate. Per-coordinate error is
//   |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
// `coords` restricts the check to a subset of coordinates (all when empty).
// Throws NumericError if f is non-finite at a perturbed point.
GradCheckReport finite_diff_report(const ScalarFn& f, const Tensor& point, double step,
                                   std::span<const std::size_t> coords = {});

// Max relative error over all coordinates.
double finite_diff_check(const ScalarFn& f, const Tensor& point, double step);

}  // namespace rbo
