#include "rbo/track.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rbo/error.hpp"
#include "rbo/losses.hpp"
#include "rbo/objective.hpp"

namespace rbo {

std::vector<double> cosine_window(const geom::HeadGrid& grid) {
  auto hann = [](std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (n < 2) return w;
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(i) + 1.0) /
                                  (static_cast<double>(n) + 1.0));
    return w;
  };
  const auto wr = hann(grid.rows);
  const auto wc = hann(grid.cols);
  std::vector<double> out(grid.size());
  for (std::size_t r = 0; r < grid.rows; ++r)
    for (std::size_t c = 0; c < grid.cols; ++c) out[r * grid.cols + c] = wr[r] * wc[c];
  return out;
}

std::size_t select_location(const std::vector<double>& scores, const geom::HeadGrid& grid,
                            const TrackOptions& options) {
  if (scores.size() != grid.size()) throw ShapeError("score map does not match head grid");
  std::vector<double> weighted = scores;
  if (options.cosine_window) {
    const auto window = cosine_window(grid);
    const double k = options.window_influence;
    for (std::size_t i = 0; i < weighted.size(); ++i) weighted[i] = (1.0 - k) * weighted[i] + k * window[i];
  }
  return static_cast<std::size_t>(std::max_element(weighted.begin(), weighted.end()) - weighted.begin());
}

std::vector<geom::Box> track(const ModelParams& model, const synth::Sequence& seq,
                             const TrackOptions& options) {
  if (seq.frames.empty() || seq.gt.empty()) throw Error("sequence has no frames");
  const ModelConfig& cfg = model.config;
  const double img_w = static_cast<double>(seq.frames[0].width);
  const double img_h = static_cast<double>(seq.frames[0].height);

  const geom::Box first = seq.gt[0];
  const synth::CropWindow twin{first.cx(), first.cy(), synth::context_side(first), cfg.template_size};
  Tensor template_features;
  {
    Graph g;
    const BoundModel m = bind_frozen(g, model);
    template_features = backbone(m, image_input(g, synth::crop(seq.frames[0], twin))).value();
  }

  std::vector<geom::Box> out{first};
  geom::Box prev = first;
  const double ratio = static_cast<double>(cfg.search_size) / static_cast<double>(cfg.template_size);
  for (std::size_t f = 1; f < seq.frames.size(); ++f) {
    const synth::CropWindow swin{prev.cx(), prev.cy(), synth::context_side(prev) * ratio, cfg.search_size};
    Graph g;
    const BoundModel m = bind_frozen(g, model);
    const Var zf = g.constant(template_features);
    const Var xf = backbone(m, image_input(g, synth::crop(seq.frames[f], swin)));
    const HeadOutput head = heads(m, zf, xf);
    const Var scores = loss::fg_scores(head.cls);
    const std::vector<double>& s = scores.value().values();
    const std::size_t loc = select_location(s, head.grid, options);

    const Tensor& lm = head.loc.value();
    const std::size_t hw = head.grid.size();
    const geom::Offsets o{lm[loc], lm[hw + loc], lm[2 * hw + loc], lm[3 * hw + loc]};
    const geom::Box pred = swin.to_image(geom::decode(head.grid.point(loc), o));

    const double lr = options.size_lr;
    const double w = std::max(4.0, (1.0 - lr) * prev.width() + lr * pred.width());
    const double h = std::max(4.0, (1.0 - lr) * prev.height() + lr * pred.height());
    const double cx = std::clamp(pred.cx(), 0.0, img_w);
    const double cy = std::clamp(pred.cy(), 0.0, img_h);
    geom::Box next = geom::Box::from_center(cx, cy, w, h).clamped(img_w, img_h);
    if (!next.valid() || next.width() < 1.0 || next.height() < 1.0) next = prev;
    out.push_back(next);
    prev = next;
  }
  return out;
}

}  // namespace rbo
