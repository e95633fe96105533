#include "rbo/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "rbo/correlation.hpp"
#include "rbo/gradcheck.hpp"
#include "rbo/losses.hpp"
#include "rbo/model.hpp"
#include "rbo/objective.hpp"
#include "rbo/ops.hpp"
#include "rbo/rng.hpp"
#include "rbo/train.hpp"

namespace rbo {

namespace {

constexpr double kOpTolerance = 1e-4;
constexpr double kEndToEndTolerance = 1e-3;
constexpr std::size_t kEndToEndWeights = 20;

Tensor random_tensor(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Splits a flat leaf into consecutive pieces of the given shapes.
std::vector<Var> unpack(Var flat, const std::vector<Shape>& shapes) {
  std::vector<Var> out;
  std::size_t offset = 0;
  for (const auto& s : shapes) {
    const std::size_t n = shape_numel(s);
    out.push_back(reshape(slice(flat, offset, offset + n), s));
    offset += n;
  }
  return out;
}

std::size_t total_size(const std::vector<Shape>& shapes) {
  std::size_t n = 0;
  for (const auto& s : shapes) n += shape_numel(s);
  return n;
}

// Fixed random weights so that reductions have non-trivial gradients.
Var contract(Graph& g, Var v, Rng& rng) {
  Tensor w(v.shape());
  for (auto& x : w.data()) x = rng.uniform(-1.0, 1.0);
  return sum(v * g.constant(w));
}

struct Case {
  std::string op;
  double tolerance;
  double step;
  // Builds the point and the function for point index k.
  std::function<std::pair<Tensor, ScalarFn>(Rng&)> make;
};

std::vector<Case> op_cases() {
  std::vector<Case> cases;

  cases.push_back({"softmax", kOpTolerance, 1e-6, [](Rng& rng) {
                     Tensor x = random_tensor(rng, {6}, -2.0, 2.0);
                     const std::uint64_t s = rng.next();
                     ScalarFn f = [s](Graph& g, Var v) {
                       Rng w(s);
                       const Var m = reshape(v, {2, 3});
                       return contract(g, softmax(v), w) + contract(g, softmax(m, 0), w) +
                              contract(g, softmax(m, 1), w);
                     };
                     return std::pair{x, f};
                   }});

  // Bilinear ops: central differences are exact at any step, so a wide one
  // keeps roundoff away from small gradient components.
  cases.push_back({"conv2d", kOpTolerance, 1e-3, [](Rng& rng) {
                     const std::vector<Shape> shapes{{2, 5, 5}, {3, 2, 2, 2}, {3}};
                     Tensor x = random_tensor(rng, {total_size(shapes)}, -1.0, 1.0);
                     const std::uint64_t s = rng.next();
                     ScalarFn f = [s, shapes](Graph& g, Var v) {
                       Rng w(s);
                       const auto p = unpack(v, shapes);
                       return contract(g, conv2d(p[0], p[1], p[2], 1), w) +
                              contract(g, conv2d(p[0], p[1], p[2], 2), w) + contract(g, conv2d(p[0], p[1], 3), w);
                     };
                     return std::pair{x, f};
                   }});

  cases.push_back({"dw_corr", kOpTolerance, 1e-3, [](Rng& rng) {
                     const std::vector<Shape> shapes{{3, 3, 3}, {3, 6, 6}};
                     Tensor x = random_tensor(rng, {total_size(shapes)}, -1.0, 1.0);
                     const std::uint64_t s = rng.next();
                     ScalarFn f = [s, shapes](Graph& g, Var v) {
                       Rng w(s);
                       const auto p = unpack(v, shapes);
                       return contract(g, corr::dw_corr(p[0], p[1]), w);
                     };
                     return std::pair{x, f};
                   }});

  cases.push_back({"pw_corr", kOpTolerance, 1e-6, [](Rng& rng) {
                     const std::vector<Shape> shapes{{4, 2, 2}, {4, 3, 3}};
                     Tensor x = random_tensor(rng, {total_size(shapes)}, -1.0, 1.0);
                     const std::uint64_t s = rng.next();
                     ScalarFn f = [s, shapes](Graph& g, Var v) {
                       Rng w(s);
                       const auto p = unpack(v, shapes);
                       const auto pw = corr::pw_corr_full(p[0], p[1]);
                       return contract(g, pw.similarity, w) + contract(g, pw.weights, w);
                     };
                     return std::pair{x, f};
                   }});

  cases.push_back({"cross_entropy", kOpTolerance, 1e-6, [](Rng& rng) {
                     Tensor x = random_tensor(rng, {2, 5, 5}, -2.0, 2.0);
                     const geom::HeadGrid grid{5, 5, 8.0, 4.0};
                     const double c = rng.uniform(14.0, 26.0);
                     const geom::LabelMap labels =
                         geom::assign_labels(grid, geom::Box::from_center(c, c, rng.uniform(16, 28), rng.uniform(16, 28)));
                     const double tau = rng.uniform(0.3, 0.7);
                     ScalarFn f = [labels, tau](Graph&, Var v) {
                       return loss::cross_entropy(v, labels) + loss::two_stage_ce(v, labels, tau);
                     };
                     return std::pair{x, f};
                   }});

  cases.push_back({"iou_loss", kOpTolerance, 1e-6, [](Rng& rng) {
                     const std::size_t n = 5;
                     Tensor x = random_tensor(rng, {4 * n}, 4.0, 16.0);
                     std::vector<geom::Point> pts;
                     for (std::size_t i = 0; i < n; ++i) pts.push_back({rng.uniform(20, 40), rng.uniform(20, 40)});
                     const geom::Box gt = geom::Box::from_center(30, 30, rng.uniform(12, 24), rng.uniform(12, 24));
                     ScalarFn f = [pts, gt, n](Graph& g, Var v) {
                       const auto p = unpack(v, {{n}, {n}, {n}, {n}});
                       return geom::iou_loss(geom::decode(g, pts, p[0], p[1], p[2], p[3]), gt);
                     };
                     return std::pair{x, f};
                   }});

  cases.push_back({"expectations", kOpTolerance, 1e-6, [](Rng& rng) {
                     Tensor x = random_tensor(rng, {9}, 0.05, 0.95);
                     const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
                     ScalarFn f = [a, b](Graph&, Var v) {
                       const auto p = unpack(v, {{4}, {5}});
                       const auto e = loss::expectations(p[0], p[1]);
                       return e.p_plus * a + e.p_minus * b;
                     };
                     return std::pair{x, f};
                   }});

  cases.push_back({"rank_cls_loss", kOpTolerance, 1e-5, [](Rng& rng) {
                     Tensor x = random_tensor(rng, {2}, 0.0, 1.0);
                     ScalarFn f = [](Graph&, Var v) {
                       return loss::rank_cls_loss(slice(v, 0, 1), slice(v, 1, 2), 0.5, 4.0);
                     };
                     return std::pair{x, f};
                   }});

  cases.push_back({"rank_iou_loss", kOpTolerance, 1e-6, [](Rng& rng) {
                     const std::size_t n = 6;
                     Tensor x = random_tensor(rng, {2 * n}, 0.05, 0.95);
                     const Tensor frozen(Shape{n}, std::vector<double>(x.values().begin() + n, x.values().end()));
                     ScalarFn f = [frozen, n](Graph& g, Var v) {
                       const auto p = unpack(v, {{n}, {n}});
                       return loss::rank_iou_loss(p[0], p[1], g.constant(frozen), 3.0);
                     };
                     return std::pair{x, f};
                   }});

  cases.push_back({"rank_iou_loss_ori", kOpTolerance, 1e-6, [](Rng& rng) {
                     const std::size_t n = 6;
                     Tensor x = random_tensor(rng, {2 * n}, 0.05, 0.95);
                     ScalarFn f = [n](Graph&, Var v) {
                       const auto p = unpack(v, {{n}, {n}});
                       return loss::rank_iou_loss_ori(p[0], p[1], 0.5);
                     };
                     return std::pair{x, f};
                   }});

  cases.push_back({"combine", kOpTolerance, 1e-6, [](Rng& rng) {
                     Tensor x = random_tensor(rng, {4}, 0.0, 2.0);
                     const loss::LossWeights w{rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.1, 2)};
                     ScalarFn f = [w](Graph&, Var v) {
                       const loss::LossTerms t{slice(v, 0, 1), slice(v, 1, 2), slice(v, 2, 3), slice(v, 3, 4)};
                       return loss::combine(t, w).total;
                     };
                     return std::pair{x, f};
                   }});

  return cases;
}

// Training objective at a fresh initialization, differentiated with respect
// to a random sample of weights. The IoU ranking term is exercised in its
// coupled form here: the frozen form's detached operand is invisible to
// central differences by construction and is covered by its own case.
GradSuiteResult end_to_end(std::uint64_t seed, std::size_t points) {
  GradSuiteResult r{"end_to_end_total", points, 0.0, kEndToEndTolerance};
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.objective.rank_cls = true;
  cfg.objective.rank_iou_ori = true;
  cfg.objective.two_stage_ce = true;
  for (std::size_t k = 0; k < points; ++k) {
    const std::uint64_t ks = derive_seed(seed, k);
    ModelParams model = ModelParams::init(cfg.model, ks);
    TrainingStream stream(cfg, derive_seed(ks, 1));
    const std::vector<synth::CropPair> pairs{stream.next(), stream.next()};

    std::vector<Shape> shapes;
    std::vector<double> flat;
    for (const auto& p : model.params) {
      shapes.push_back(p.value.shape());
      flat.insert(flat.end(), p.value.values().begin(), p.value.values().end());
    }
    const Tensor point(Shape{flat.size()}, flat);
    const ModelConfig* mc = &model.config;
    const loss::ObjectiveConfig obj = cfg.objective;
    const std::uint64_t bs = derive_seed(ks, 2);
    ScalarFn f = [&, mc, obj, bs](Graph& g, Var v) {
      const BoundModel bound{mc, unpack(v, shapes)};
      return batch_objective(g, bound, pairs, obj, bs);
    };

    // Sample among weights whose gradient is large enough for central
    // differences to resolve at 64-bit precision.
    Graph g;
    const Var leaf = g.leaf(point);
    const Var out = f(g, leaf);
    const double f0 = out.item();
    g.backward(out);
    const Tensor grad = g.grad(leaf);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < grad.size(); ++i)
      if (std::abs(grad[i]) > 1e-5) candidates.push_back(i);
    Rng rng(derive_seed(ks, 3));
    for (std::size_t i = candidates.size(); i > 1; --i) std::swap(candidates[i - 1], candidates[rng.index(i)]);

    // ReLUs, argmax sampling and the hard-negative threshold leave kinks close
    // to some weights. A stencil that straddles one shows up as one-sided
    // slopes that disagree, which a smooth function with a wrong gradient
    // would not produce; such weights are replaced by the next candidate.
    Tensor probe = point;
    auto value_at = [&](std::size_t i, double x) {
      probe[i] = x;
      Graph h;
      const double v = f(h, h.leaf(probe, false)).item();
      probe[i] = point[i];
      return v;
    };
    constexpr double step = 1e-6;
    std::size_t checked = 0;
    for (std::size_t i : candidates) {
      if (checked == kEndToEndWeights) break;
      const double fp = value_at(i, point[i] + step);
      const double fm = value_at(i, point[i] - step);
      const double right = fp - f0, left = f0 - fm;
      if (std::abs(right - left) > 1e-2 * std::max(std::abs(right), std::abs(left))) {
        ++r.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * step);
      const double err = std::abs(grad[i] - numeric) / std::max(1e-12, std::abs(grad[i]) + std::abs(numeric));
      r.max_rel_error = std::max(r.max_rel_error, err);
      ++checked;
    }
    if (checked < kEndToEndWeights) r.max_rel_error = std::max(r.max_rel_error, 1.0);  // too few smooth weights
  }
  return r;
}

}  // namespace

std::vector<GradSuiteResult> run_gradient_suite(std::uint64_t seed, std::size_t points) {
  std::vector<GradSuiteResult> results;
  Rng rng(seed);
  for (const auto& c : op_cases()) {
    GradSuiteResult r{c.op, points, 0.0, c.tolerance};
    for (std::size_t k = 0; k < points; ++k) {
      auto [x, f] = c.make(rng);
      r.max_rel_error = std::max(r.max_rel_error, finite_diff_check(f, x, c.step));
    }
    results.push_back(r);
  }
  results.push_back(end_to_end(derive_seed(seed, 0xe2e), points));
  return results;
}

}  // namespace rbo
