#include "rbo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rbo/error.hpp"

namespace rbo {

namespace {

double evaluate(const ScalarFn& f, const Tensor& point) {
  Graph g;
  Var x = g.leaf(Tensor(point.shape(), point.values()), false);
  const Var out = f(g, x);
  if (out.size() != 1) throw ShapeError("finite_diff_check: function is not scalar-valued");
  const double v = out.item();
  if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite value at perturbed point");
  return v;
}

}  // namespace

GradCheckReport finite_diff_report(const ScalarFn& f, const Tensor& point, double step,
                                   std::span<const std::size_t> coords) {
  if (!(step > 0.0)) throw Error("finite_diff_check: step must be positive");

  Tensor analytic;
  {
    Graph g;
    Var x = g.leaf(Tensor(point.shape(), point.values()), true);
    const Var out = f(g, x);
    if (out.size() != 1) throw ShapeError("finite_diff_check: function is not scalar-valued");
    if (out.requires_grad()) {
      g.backward(out);
      analytic = g.grad(x);
    } else {
      analytic = Tensor(point.shape(), 0.0);
    }
  }

  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(point.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    coords = all;
  }

  GradCheckReport report;
  bool first = true;
  Tensor probe(point.shape(), point.values());
  for (std::size_t i : coords) {
    if (i >= point.size()) throw ShapeError("finite_diff_check: coordinate out of range");
    const double x0 = point[i];
    probe[i] = x0 + step;
    const double fp = evaluate(f, probe);
    probe[i] = x0 - step;
    const double fm = evaluate(f, probe);
    probe[i] = x0;
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
    if (first || err > report.max_rel_error) {
      report = {err, i, a, numeric};
      first = false;
    }
  }
  return report;
}

double finite_diff_check(const ScalarFn& f, const Tensor& point, double step) {
  return finite_diff_report(f, point, step).max_rel_error;
}

}  // namespace rbo
