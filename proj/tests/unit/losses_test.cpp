#include <gtest/gtest.h>

#include <cmath>

#include "rbo/error.hpp"
#include "rbo/gradcheck.hpp"
#include "rbo/losses.hpp"
#include "rbo/ops.hpp"
#include "rbo/rng.hpp"

namespace rbo::loss {
namespace {

// A [2,1,n] class map whose foreground probabilities are exactly `p`
// (background logit 0, foreground logit = logit(p)).
Tensor class_map_for(const std::vector<double>& p) {
  Tensor t({2, 1, p.size()});
  for (std::size_t i = 0; i < p.size(); ++i) t[p.size() + i] = std::log(p[i] / (1.0 - p[i]));
  return t;
}

geom::LabelMap labels_for(const std::vector<geom::Label>& ls) {
  geom::LabelMap m;
  m.grid = {1, ls.size(), 8.0, 0.0};
  m.labels = ls;
  m.targets.resize(ls.size());
  for (std::size_t i = 0; i < ls.size(); ++i) {
    if (ls[i] == geom::Label::positive) m.positives.push_back(i);
    if (ls[i] == geom::Label::negative) m.negatives.push_back(i);
  }
  return m;
}

double brute_rank_iou(const std::vector<double>& p, const std::vector<double>& v, double gamma) {
  const std::size_t n = p.size();
  if (n <= 1) return 0.0;
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (v[i] > v[j]) s1 += std::exp((p[i] - p[j]) * -gamma);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (p[i] > p[j]) s2 += std::exp((v[i] - v[j]) * -gamma);
  return (s1 + s2) / static_cast<double>(n);
}

TEST(CrossEntropy, WorkedExamples) {
  using geom::Label;
  Graph g;
  const auto labels = labels_for({Label::positive, Label::negative});
  EXPECT_NEAR(cross_entropy(g.leaf(class_map_for({0.8, 0.4})), labels).item(), 0.7339691750802004, 1e-14);
  EXPECT_NEAR(cross_entropy(g.leaf(class_map_for({0.5, 0.5})), labels).item(), 2 * std::log(2.0), 1e-15);

  Tensor saturated({2, 1, 2});
  saturated[2] = 20.0;   // positive: confident foreground
  saturated[3] = -20.0;  // negative: confident background
  EXPECT_LT(cross_entropy(g.leaf(saturated), labels).item(), 1e-6);
}

TEST(CrossEntropy, IgnoredLocationsDoNotContribute) {
  using geom::Label;
  Graph g;
  const auto with_ignore = labels_for({Label::positive, Label::ignore, Label::negative});
  const double a = cross_entropy(g.leaf(class_map_for({0.8, 0.01, 0.4})), with_ignore).item();
  EXPECT_NEAR(a, 0.7339691750802004, 1e-14);
}

TEST(TwoStageCe, AddsHardNegativeStage) {
  using geom::Label;
  Graph g;
  const auto labels = labels_for({Label::positive, Label::negative});
  const Var easy = g.leaf(class_map_for({0.8, 0.4}));
  EXPECT_DOUBLE_EQ(two_stage_ce(easy, labels, 0.5).item(), cross_entropy(easy, labels).item());
  const Var hard = g.leaf(class_map_for({0.8, 0.8}));
  EXPECT_NEAR(two_stage_ce(hard, labels, 0.5).item() - cross_entropy(hard, labels).item(), 1.6094379124341003,
              1e-12);
}

TEST(HardNegatives, StrictThreshold) {
  EXPECT_EQ(hard_negative_set(std::vector<double>{0.6, 0.4}, 0.5), (std::vector<double>{0.6}));
  EXPECT_TRUE(hard_negative_set(std::vector<double>{0.1, 0.2}, 0.5).empty());
  EXPECT_TRUE(hard_negative_set(std::vector<double>{0.5}, 0.5).empty());
  EXPECT_EQ(hard_negative_indices(std::vector<double>{0.9, 0.1, 0.7}, 0.5), (std::vector<std::size_t>{0, 2}));
}

TEST(Expectations, WorkedExamples) {
  Graph g;
  const Var pos = g.leaf(Tensor::vector({0.2, 0.4, 0.6}));
  EXPECT_NEAR(expectations(pos, g.leaf(Tensor::vector({0.8}))).p_minus.item(), 0.8, 1e-15);
  const Expectations e = expectations(pos, g.leaf(Tensor::vector({0.6, 0.8})));
  EXPECT_NEAR(e.p_plus.item(), 0.4, 1e-15);
  EXPECT_NEAR(e.p_minus.item(), 0.7099667994624956, 1e-15);
}

TEST(Expectations, PMinusIsConvexCombination) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    Tensor h({1 + rng.index(20)});
    for (auto& v : h.data()) v = rng.uniform(0.5, 1.0);
    Graph g;
    const double pm = expectations(g.leaf(Tensor::vector({0.5})), g.leaf(h)).p_minus.item();
    const auto [lo, hi] = std::minmax_element(h.values().begin(), h.values().end());
    EXPECT_GE(pm, *lo - 1e-15);
    EXPECT_LE(pm, *hi + 1e-15);
  }
}

TEST(RankClsLoss, WorkedExamples) {
  Graph g;
  auto L = [&](double pm, double pp) {
    return rank_cls_loss(g.leaf(Tensor::scalar(pm)), g.leaf(Tensor::scalar(pp)), 0.5, 4.0).item();
  };
  EXPECT_NEAR(L(0.9, 0.6), 0.8099883332906076, 1e-14);
  EXPECT_NEAR(L(0.1, 0.95), 0.055104352479612734, 1e-14);
  EXPECT_NEAR(L(0.6, 1.1), std::log(2.0) / 4.0, 1e-15);
  EXPECT_THROW(rank_cls_loss(g.leaf(Tensor::scalar(0)), g.leaf(Tensor::scalar(0)), 0.5, 0.0), Error);
  EXPECT_THROW(rank_cls_loss(g.leaf(Tensor::scalar(0)), g.leaf(Tensor::scalar(0)), -0.1, 4.0), Error);
}

TEST(RankClsLoss, MonotoneInBothExpectations) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    Graph g;
    const Var pm = g.leaf(Tensor::scalar(rng.uniform()));
    const Var pp = g.leaf(Tensor::scalar(rng.uniform()));
    g.backward(rank_cls_loss(pm, pp, 0.5, 4.0));
    EXPECT_GT(g.grad(pm).item(), 0.0);
    EXPECT_LT(g.grad(pp).item(), 0.0);
  }
}

TEST(RankIouLoss, WorkedExamples) {
  Graph g;
  auto L = [&](std::vector<double> p, std::vector<double> v) {
    return rank_iou_loss(g.leaf(Tensor::vector(p)), g.leaf(Tensor::vector(v)), 3.0).item();
  };
  EXPECT_DOUBLE_EQ(L({0.7}, {0.4}), 0.0);
  EXPECT_NEAR(L({0.8, 0.6}, {0.9, 0.5}), 0.42500292400311424, 1e-15);
  EXPECT_DOUBLE_EQ(L({0.5, 0.5, 0.5}, {0.3, 0.3, 0.3}), 0.0);
}

TEST(RankIouLoss, MatchesBruteForceEnumeration) {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.index(64);
    std::vector<double> p(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse values so that ties occur.
      p[i] = std::round(rng.uniform() * 20) / 20;
      v[i] = std::round(rng.uniform() * 20) / 20;
    }
    Graph g;
    const double got = rank_iou_loss(g.leaf(Tensor::vector(p)), g.leaf(Tensor::vector(v)), 3.0).item();
    EXPECT_EQ(got, brute_rank_iou(p, v, 3.0));
  }
}

TEST(RankIouLoss, FreezeRuleOnTwoPositives) {
  // p1 > p2 and v1 > v2: the second sum is exp(-gamma (v1 - v2)) / 2 with v2
  // frozen, so only v1 receives gradient from it.
  Graph g;
  const Var p = g.leaf(Tensor::vector({0.9, 0.3}), false);
  const Var v = g.leaf(Tensor::vector({0.7, 0.4}));
  g.backward(rank_iou_loss(p, v, 3.0));
  const Tensor dv = g.grad(v);
  EXPECT_NEAR(dv[0], -1.5 * std::exp(-0.9), 1e-15);
  EXPECT_EQ(dv[1], 0.0);
}

TEST(RankIouLossOri, WorkedExamples) {
  Graph g;
  auto L = [&](std::vector<double> p, std::vector<double> v, double a) {
    return rank_iou_loss_ori(g.leaf(Tensor::vector(p)), g.leaf(Tensor::vector(v)), a).item();
  };
  EXPECT_DOUBLE_EQ(L({0.4}, {0.9}, 4.0), 0.0);
  EXPECT_NEAR(L({0.9, 0.1}, {0.9, 0.1}, 4.0), 0.018615577802107586, 1e-15);
  EXPECT_NEAR(L({0.5, 0.5}, {0.9, 0.1}, 4.0), std::log(2.0) / 4.0, 1e-15);
}

TEST(Losses, NonNegativeAtRandomPoints) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(10);
    std::vector<double> p(n), v(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = rng.uniform(), v[i] = rng.uniform();
    Graph g;
    const Var pv = g.leaf(Tensor::vector(p)), vv = g.leaf(Tensor::vector(v));
    EXPECT_GE(rank_iou_loss(pv, vv, 3.0).item(), 0.0);
    EXPECT_GE(rank_iou_loss_ori(pv, vv, 0.5).item(), 0.0);
    EXPECT_GE(rank_cls_loss(g.leaf(Tensor::scalar(v[0])), g.leaf(Tensor::scalar(p[0])), 0.5, 4.0).item(), 0.0);
  }
}

TEST(Combine, WeightedTotal) {
  const LossBreakdown parts{0.7, 0.3, 0.2, 0.4, 0.0, false};
  EXPECT_NEAR(combine(parts).total, 1.2, 1e-15);
  EXPECT_DOUBLE_EQ(combine(LossBreakdown{0.7, 0.3, 0, 0, 0, false}).total, 1.0);
  EXPECT_DOUBLE_EQ(combine(LossBreakdown{}).total, 0.0);

  LossBreakdown skipped = parts;
  skipped.skipped_rank_cls = true;
  const LossBreakdown s = combine(skipped);
  EXPECT_DOUBLE_EQ(s.rank_cls, 0.0);
  EXPECT_TRUE(s.skipped_rank_cls);
  EXPECT_NEAR(s.total, 1.1, 1e-15);
}

TEST(Combine, VarTotalMatchesBreakdownAndRejectsNonFinite) {
  Graph g;
  const LossTerms t{g.constant(0.7), g.constant(0.3), g.constant(0.2), g.constant(0.4), false};
  const Combined c = combine(t);
  EXPECT_NEAR(c.total.item(), 1.2, 1e-15);
  EXPECT_DOUBLE_EQ(c.breakdown.total, c.total.item());
  EXPECT_THROW(combine(LossBreakdown{std::nan(""), 0, 0, 0, 0, false}), NumericError);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x({12});
    for (auto& v : x.data()) v = rng.uniform(0.05, 0.95);
    const ScalarFn ori = [](Graph&, Var v) { return rank_iou_loss_ori(slice(v, 0, 6), slice(v, 6, 12), 0.5); };
    EXPECT_LT(finite_diff_check(ori, x, 1e-6), 1e-4);
    const ScalarFn exp_fn = [](Graph&, Var v) {
      const Expectations e = expectations(slice(v, 0, 5), slice(v, 5, 12));
      return e.p_plus * 0.3 - e.p_minus * 1.7;
    };
    EXPECT_LT(finite_diff_check(exp_fn, x, 1e-6), 1e-4);
  }
}

}  // namespace
}  // namespace rbo::loss
