#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rbo/geometry.hpp"
#include "rbo/keyvalue.hpp"
#include "rbo/raster.hpp"

namespace rbo::synth {

enum class ShapeKind : std::uint8_t { rectangle, ellipse, triangle };

ShapeKind parse_shape(const std::string& text);
std::string to_string(ShapeKind kind);

struct SequenceSpec {
  std::uint64_t seed = 0;
  std::size_t frames = 30;
  std::size_t width = 192;
  std::size_t height = 192;
  ShapeKind shape = ShapeKind::rectangle;
  std::array<double, 3> color{0.8, 0.2, 0.2};
  double target_width = 28.0;
  double target_height = 28.0;
  std::size_t distractors = 2;
  // 1 = distractors look exactly like the target.
  double similarity = 0.8;
  // Number of background clutter shapes is round(10 * clutter).
  double clutter = 0.3;
  // Random-walk step (pixels, per axis, per frame).
  double motion_sigma = 2.0;
  // Distractors start between 1.1 and this many target sizes from the target.
  double distractor_spread = 2.0;
  double noise_sigma = 0.05;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
  KeyValues to_keyvalues() const;
  static SequenceSpec from_keyvalues(const KeyValues& kv);
};

struct Sequence {
  SequenceSpec spec;
  std::vector<Raster> frames;
  std::vector<geom::Box> gt;
  std::vector<std::vector<geom::Box>> distractors;  // [frame][distractor]
};

Sequence gen_sequence(const SequenceSpec& spec);

// FNV-1a over frame bytes and boxes.
std::uint64_t digest(const Sequence& seq);

// Square crop of side `side` (image pixels) around (cx, cy), resampled to
// `size` x `size`.
struct CropWindow {
  double cx = 0.0;
  double cy = 0.0;
  double side = 1.0;
  std::size_t size = 1;

  double scale() const { return static_cast<double>(size) / side; }
  geom::Box to_crop(const geom::Box& b) const;
  geom::Box to_image(const geom::Box& b) const;
};

// Side of the context region around a target: sqrt((w + p)(h + p)) with
// p = context * (w + h).
double context_side(const geom::Box& target, double context = 0.5);

// Bilinear resampling; samples outside the image take the per-channel mean.
Raster crop(const Raster& image, const CropWindow& window);

struct CropPair {
  Raster templ;
  Raster search;
  geom::Box gt;  // in search coordinates
  CropWindow template_window;
  CropWindow search_window;
};

// Template around frame-0 gt; search around the gt of `frame`, displaced by
// `shift` (search pixels), at the template's scale times search/template size.
CropPair crop_pair(const Sequence& seq, std::size_t frame, std::size_t template_size,
                   std::size_t search_size, geom::Point shift = {});

// Directory layout: frame_%04d.ppm, annotations.txt, spec.txt.
void export_sequence(const Sequence& seq, const std::filesystem::path& dir);
Sequence import_sequence(const std::filesystem::path& dir);

}  // namespace rbo::synth
