#include "rbo/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "rbo/ops.hpp"

namespace rbo::geom {

Box Box::clamped(double width_limit, double height_limit) const {
  auto cl = [](double v, double hi) { return std::clamp(v, 0.0, hi); };
  return {cl(x1, width_limit), cl(y1, height_limit), cl(x2, width_limit), cl(y2, height_limit)};
}

double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double center_distance(const Box& a, const Box& b) {
  return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

Box decode(Point p, Offsets o) {
  const double l = std::max(0.0, o.l), t = std::max(0.0, o.t);
  const double r = std::max(0.0, o.r), b = std::max(0.0, o.b);
  return {p.x - l, p.y - t, p.x + r, p.y + b};
}

Offsets encode(Point p, const Box& box) {
  return {p.x - box.x1, p.y - box.y1, box.x2 - p.x, box.y2 - p.y};
}

LabelMap assign_labels(const HeadGrid& grid, const Box& gt, double shrink) {
  LabelMap map;
  map.grid = grid;
  map.labels.resize(grid.size());
  map.targets.resize(grid.size());
  const Box inner = gt.scaled(shrink);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Point p = grid.point(i);
    if (inner.contains(p.x, p.y)) {
      map.labels[i] = Label::positive;
      map.targets[i] = encode(p, gt);
      map.positives.push_back(i);
    } else if (!gt.contains(p.x, p.y)) {
      map.labels[i] = Label::negative;
      map.negatives.push_back(i);
    } else {
      map.labels[i] = Label::ignore;
    }
  }
  return map;
}

BoxVar decode(Graph& g, const std::vector<Point>& points, Var l, Var t, Var r, Var b) {
  std::vector<double> xs, ys;
  xs.reserve(points.size());
  ys.reserve(points.size());
  for (const auto& p : points) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  const Var px = g.constant(Tensor::vector(std::move(xs)));
  const Var py = g.constant(Tensor::vector(std::move(ys)));
  return {px - relu(l), py - relu(t), px + relu(r), py + relu(b)};
}

Var iou(const BoxVar& pred, const Box& gt) {
  Graph& g = pred.x1.graph();
  const Var gx1 = g.constant(gt.x1), gy1 = g.constant(gt.y1);
  const Var gx2 = g.constant(gt.x2), gy2 = g.constant(gt.y2);
  const Var iw = relu(minimum(pred.x2, gx2) - maximum(pred.x1, gx1));
  const Var ih = relu(minimum(pred.y2, gy2) - maximum(pred.y1, gy1));
  const Var inter = iw * ih;
  const Var area = (pred.x2 - pred.x1) * (pred.y2 - pred.y1);
  const Var uni = area + gt.area() - inter;
  return inter / maximum(uni, g.constant(1e-12));
}

Var iou_loss(const BoxVar& pred, const Box& gt) { return 1.0 - mean(iou(pred, gt)); }

}  // namespace rbo::geom
