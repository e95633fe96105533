#pragma once

#include <vector>

#include "rbo/geometry.hpp"
#include "rbo/model.hpp"
#include "rbo/synth.hpp"

namespace rbo {

struct TrackOptions {
  // Hanning-window prior on the score map; off for all measured runs.
  bool cosine_window = false;
  double window_influence = 0.3;
  // Fraction of the predicted size taken each frame (1 = no smoothing).
  double size_lr = 0.5;
};

// Hanning window over the head grid, row-major, peak 1 at the center.
std::vector<double> cosine_window(const geom::HeadGrid& grid);

// Location index of the best foreground score, first maximum on ties.
std::size_t select_location(const std::vector<double>& scores, const geom::HeadGrid& grid,
                            const TrackOptions& options);

// Frame 0 returns the given first-frame box; later frames search around the
// previous estimate. Boxes are clamped to the image.
std::vector<geom::Box> track(const ModelParams& model, const synth::Sequence& seq,
                             const TrackOptions& options = {});

}  // namespace rbo
