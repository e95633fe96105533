#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace rbo {

struct GradSuiteResult {
  std::string op;
  std::size_t points = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t skipped = 0;  // end-to-end weights whose stencil straddled a kink
  bool passed() const { return max_rel_error < tolerance; }
};

// Finite-difference checks of every differentiable op and of the end-to-end
// training objective, each at `points` random points drawn from `seed`.
std::vector<GradSuiteResult> run_gradient_suite(std::uint64_t seed, std::size_t points = 10);

}  // namespace rbo
