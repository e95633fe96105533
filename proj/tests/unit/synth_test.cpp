#include <gtest/gtest.h>

#include <cmath>

#include "rbo/error.hpp"
#include "rbo/raster.hpp"
#include "rbo/synth.hpp"
#include "test_paths.hpp"

namespace rbo::synth {
namespace {

SequenceSpec small_spec(std::uint64_t seed) {
  SequenceSpec s;
  s.seed = seed;
  s.frames = 6;
  s.width = s.height = 128;
  s.target_width = 20;
  s.target_height = 16;
  return s;
}

TEST(GenSequence, DeterministicInSpec) {
  const SequenceSpec s = small_spec(42);
  const Sequence a = gen_sequence(s);
  const Sequence b = gen_sequence(s);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(digest(a), digest(b));
  EXPECT_NE(digest(a), digest(gen_sequence(small_spec(43))));
}

TEST(GenSequence, FrameCountsAndBounds) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SequenceSpec s = small_spec(seed);
    s.motion_sigma = 8.0;
    s.frames = 12;
    const Sequence q = gen_sequence(s);
    ASSERT_EQ(q.frames.size(), s.frames);
    ASSERT_EQ(q.gt.size(), s.frames);
    ASSERT_EQ(q.distractors.size(), s.frames);
    for (std::size_t f = 0; f < s.frames; ++f) {
      const auto& b = q.gt[f];
      EXPECT_TRUE(b.valid());
      EXPECT_GE(b.x1, 0.0);
      EXPECT_GE(b.y1, 0.0);
      EXPECT_LE(b.x2, 128.0);
      EXPECT_LE(b.y2, 128.0);
      EXPECT_EQ(q.distractors[f].size(), s.distractors);
      for (double v : q.frames[f].data) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
    }
  }
}

TEST(GenSequence, NoDistractorsAndStaticTarget) {
  SequenceSpec s = small_spec(5);
  s.distractors = 0;
  s.motion_sigma = 0.0;
  const Sequence q = gen_sequence(s);
  for (std::size_t f = 0; f < s.frames; ++f) {
    EXPECT_TRUE(q.distractors[f].empty());
    EXPECT_EQ(q.gt[f], q.gt[0]);
  }
}

TEST(GenSequence, IdenticalDistractorsMatchTargetStatistics) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SequenceSpec s = small_spec(seed);
    s.similarity = 1.0;
    s.clutter = 0.0;
    s.distractors = 1;
    s.width = s.height = 192;
    const Sequence q = gen_sequence(s);
    auto stats = [&](const geom::Box& b) {
      double sum = 0, sq = 0, n = 0;
      const auto& img = q.frames[0];
      for (std::size_t c = 0; c < 3; ++c)
        for (auto y = static_cast<std::size_t>(std::ceil(b.y1)); y < static_cast<std::size_t>(b.y2); ++y)
          for (auto x = static_cast<std::size_t>(std::ceil(b.x1)); x < static_cast<std::size_t>(b.x2); ++x) {
            const double v = img.at(c, y, x);
            sum += v;
            sq += v * v;
            n += 1;
          }
      const double mean = sum / n;
      return std::pair{mean, sq / n - mean * mean};
    };
    const geom::Box t = q.gt[0], d = q.distractors[0][0];
    if (geom::iou(t.scaled(1.5), d.scaled(1.5)) > 0.0) continue;  // clamped into contact
    const auto [tm, tv] = stats(t);
    const auto [dm, dv] = stats(d);
    EXPECT_NEAR(tm, dm, 0.05);
    EXPECT_NEAR(tv, dv, 0.05);
  }
}

TEST(GenSequence, RejectsInvalidSpecs) {
  SequenceSpec s = small_spec(1);
  s.similarity = 1.5;
  try {
    gen_sequence(s);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "similarity");
  }
  s = small_spec(1);
  s.frames = 0;
  EXPECT_THROW(gen_sequence(s), ConfigError);
  s = small_spec(1);
  s.target_width = 80;  // does not fit a 128-pixel frame
  EXPECT_THROW(gen_sequence(s), ConfigError);
}

TEST(SequenceSpec, KeyValueRoundTrip) {
  SequenceSpec s = small_spec(99);
  s.shape = ShapeKind::triangle;
  s.color = {0.1, 0.25, 0.9};
  const SequenceSpec r = SequenceSpec::from_keyvalues(s.to_keyvalues());
  EXPECT_EQ(digest(gen_sequence(r)), digest(gen_sequence(s)));
  KeyValues bad = s.to_keyvalues();
  bad.set("shape", "hexagon");
  EXPECT_THROW(SequenceSpec::from_keyvalues(bad), ConfigError);
}

TEST(CropPair, CentredTargetMapsToSearchCentre) {
  SequenceSpec s = small_spec(3);
  s.motion_sigma = 0.0;
  const Sequence q = gen_sequence(s);
  const CropPair p = crop_pair(q, 0, 64, 128);
  EXPECT_EQ(p.templ.width, 64u);
  EXPECT_EQ(p.search.width, 128u);
  EXPECT_NEAR(p.gt.cx(), 64.0, 1e-9);
  EXPECT_NEAR(p.gt.cy(), 64.0, 1e-9);
  const CropPair shifted = crop_pair(q, 0, 64, 128, {10, -6});
  EXPECT_NEAR(shifted.gt.cx(), 74.0, 1e-9);
  EXPECT_NEAR(shifted.gt.cy(), 58.0, 1e-9);
}

TEST(CropPair, PaddingUsesChannelMean) {
  Raster img(3, 10, 10);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i % 7) / 7.0;
  const Raster out = crop(img, {-100.0, -100.0, 20.0, 8});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) EXPECT_DOUBLE_EQ(out.at(c, y, x), img.channel_mean(c));
}

TEST(CropPair, ScaleRoundTripWithinHalfPixel) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SequenceSpec s = small_spec(seed);
    s.motion_sigma = 5.0;
    const Sequence q = gen_sequence(s);
    for (std::size_t f = 0; f < q.frames.size(); ++f) {
      const CropPair p = crop_pair(q, f, 64, 128, {3.5, -2.25});
      const geom::Box back = p.search_window.to_image(p.gt);
      EXPECT_NEAR(back.x1, q.gt[f].x1, 0.5);
      EXPECT_NEAR(back.y1, q.gt[f].y1, 0.5);
      EXPECT_NEAR(back.x2, q.gt[f].x2, 0.5);
      EXPECT_NEAR(back.y2, q.gt[f].y2, 0.5);
    }
  }
}

TEST(Export, RoundTripThroughDisk) {
  const auto dir = rbo::testing::scratch_dir();
  const Sequence q = gen_sequence(small_spec(8));
  export_sequence(q, dir / "seq");
  EXPECT_TRUE(std::filesystem::exists(dir / "seq" / "frame_0000.ppm"));
  const Sequence r = import_sequence(dir / "seq");
  ASSERT_EQ(r.frames.size(), q.frames.size());
  EXPECT_EQ(r.gt, q.gt);
  EXPECT_EQ(r.distractors, q.distractors);
  for (std::size_t f = 0; f < q.frames.size(); ++f)
    for (std::size_t i = 0; i < q.frames[f].data.size(); ++i)
      ASSERT_NEAR(r.frames[f].data[i], q.frames[f].data[i], 0.5 / 255.0 + 1e-12);
}

TEST(Pnm, GrayAndColourRoundTrip) {
  const auto dir = rbo::testing::scratch_dir();
  Raster gray(1, 3, 4);
  for (std::size_t i = 0; i < gray.data.size(); ++i) gray.data[i] = static_cast<double>(i) * 20.0 / 255.0;
  write_pnm(gray, dir / "g.pgm");
  EXPECT_EQ(read_pnm(dir / "g.pgm"), gray);
  EXPECT_THROW(read_pnm(dir / "missing.ppm"), Error);
}

}  // namespace
}  // namespace rbo::synth
