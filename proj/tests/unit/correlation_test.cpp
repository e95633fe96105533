#include <gtest/gtest.h>

#include <cmath>

#include "rbo/correlation.hpp"
#include "rbo/error.hpp"
#include "rbo/gradcheck.hpp"
#include "rbo/ops.hpp"
#include "rbo/rng.hpp"

namespace rbo::corr {
namespace {

Tensor random_features(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

TEST(DwCorr, UnitTemplateIsIdentity) {
  Rng rng(1);
  Graph g;
  const Tensor fx = random_features(rng, {3, 5, 6});
  const Var out = dw_corr(g.leaf(Tensor({3, 1, 1}, 1.0)), g.leaf(fx));
  EXPECT_EQ(out.value().values(), fx.values());
}

TEST(DwCorr, OutputShape) {
  Graph g;
  const Var out = dw_corr(g.leaf(Tensor({4, 3, 3}, 0.5)), g.leaf(Tensor({4, 7, 7}, 0.5)));
  EXPECT_EQ(out.shape(), (Shape{4, 5, 5}));
  EXPECT_THROW(dw_corr(g.leaf(Tensor({4, 3, 3}, 0.5)), g.leaf(Tensor({3, 7, 7}, 0.5))), ShapeError);
}

TEST(DwCorr, TemplateCutFromSearchPeaksAtItsOffset) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor fx = random_features(rng, {2, 8, 8}, 0.0, 1.0);
    const std::size_t r = rng.index(6), c = rng.index(6);
    Tensor fz({2, 3, 3});
    for (std::size_t ch = 0; ch < 2; ++ch)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 3; ++x) fz.at(ch, y, x) = fx.at(ch, r + y, c + x);
    Graph g;
    const Var out = dw_corr(g.leaf(fz), g.leaf(fx));
    // Per channel: <z, patch> <= |z||patch|, and the patch norm varies, so
    // compare against the normalized response.
    for (std::size_t ch = 0; ch < 2; ++ch) {
      double best = -1.0;
      std::size_t best_at = 0;
      for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 6; ++x) {
          double norm = 0.0;
          for (std::size_t dy = 0; dy < 3; ++dy)
            for (std::size_t dx = 0; dx < 3; ++dx) norm += fx.at(ch, y + dy, x + dx) * fx.at(ch, y + dy, x + dx);
          const double v = out.value().at(ch, y, x) / std::sqrt(norm);
          if (v > best) {
            best = v;
            best_at = y * 6 + x;
          }
        }
      EXPECT_EQ(best_at, r * 6 + c);
    }
  }
}

TEST(DwCorr, LinearInSearchFeatures) {
  Rng rng(3);
  const Tensor fz = random_features(rng, {3, 2, 2});
  const Tensor fx = random_features(rng, {3, 5, 5});
  Tensor scaled = fx;
  for (auto& v : scaled.data()) v *= 2.5;
  Graph g;
  const Var a = dw_corr(g.leaf(fz), g.leaf(fx));
  const Var b = dw_corr(g.leaf(fz), g.leaf(scaled));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], 2.5 * a[i], 1e-10);
}

TEST(PwCorr, SingleTemplatePixelGetsAllWeight) {
  Rng rng(4);
  Graph g;
  const PwCorr pw = pw_corr_full(g.leaf(random_features(rng, {4, 1, 1})), g.leaf(random_features(rng, {4, 3, 3})));
  EXPECT_EQ(pw.weights.shape(), (Shape{1, 9}));
  for (std::size_t j = 0; j < 9; ++j) EXPECT_DOUBLE_EQ(pw.weights[j], 1.0);
}

TEST(PwCorr, IdenticalTemplatePixelsShareWeight) {
  Rng rng(5);
  Tensor fz({3, 1, 2});
  for (std::size_t c = 0; c < 3; ++c) fz.at(c, 0, 0) = fz.at(c, 0, 1) = rng.uniform(-1, 1);
  Graph g;
  const PwCorr pw = pw_corr_full(g.leaf(fz), g.leaf(random_features(rng, {3, 4, 4})));
  for (double w : pw.weights.value().values()) EXPECT_DOUBLE_EQ(w, 0.5);
}

TEST(PwCorr, ColumnsNormalizedAndSearchFeaturesPassThrough) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 1 + rng.index(6);
    const Tensor fz = random_features(rng, {c, 1 + rng.index(4), 1 + rng.index(4)}, -3, 3);
    const Tensor fx = random_features(rng, {c, 2 + rng.index(5), 2 + rng.index(5)}, -3, 3);
    Graph g;
    const PwCorr pw = pw_corr_full(g.leaf(fz), g.leaf(fx));
    const std::size_t nz = fz.dim(1) * fz.dim(2), nx = fx.dim(1) * fx.dim(2);
    for (std::size_t j = 0; j < nx; ++j) {
      double total = 0.0;
      for (std::size_t i = 0; i < nz; ++i) total += pw.weights[i * nx + j];
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
    EXPECT_EQ(pw.similarity.shape(), (Shape{2 * c, fx.dim(1), fx.dim(2)}));
    for (std::size_t i = 0; i < fx.size(); ++i) EXPECT_EQ(pw.similarity[i], fx[i]);
  }
}

TEST(Correlation, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_features(rng, {3 * 4 + 3 * 16});
    Tensor w({3 * 9});
    for (auto& v : w.data()) v = rng.uniform(-1, 1);
    Tensor w2({6 * 16 + 4 * 16});
    for (auto& v : w2.data()) v = rng.uniform(-1, 1);
    const ScalarFn dw = [&](Graph& g, Var v) {
      const Var fz = reshape(slice(v, 0, 12), {3, 2, 2});
      const Var fx = reshape(slice(v, 12, 60), {3, 4, 4});
      return sum(reshape(dw_corr(fz, fx), {27}) * g.constant(w));
    };
    EXPECT_LT(finite_diff_check(dw, x, 1e-6), 1e-4);
    const ScalarFn pw = [&](Graph& g, Var v) {
      const Var fz = reshape(slice(v, 0, 12), {3, 2, 2});
      const Var fx = reshape(slice(v, 12, 60), {3, 4, 4});
      const PwCorr out = pw_corr_full(fz, fx);
      return sum(concat({reshape(out.similarity, {96}), reshape(out.weights, {64})}) * g.constant(w2));
    };
    EXPECT_LT(finite_diff_check(pw, x, 1e-6), 1e-4);
  }
}

TEST(Mode, ParsesNames) {
  EXPECT_EQ(parse_mode("dw"), Mode::dw);
  EXPECT_EQ(parse_mode("pw"), Mode::pw);
  EXPECT_EQ(to_string(Mode::pw), "pw");
  EXPECT_THROW(parse_mode("xcorr"), Error);
}

}  // namespace
}  // namespace rbo::corr
