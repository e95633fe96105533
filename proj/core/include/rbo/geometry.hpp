#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "rbo/graph.hpp"

namespace rbo::geom {

// Axis-aligned rectangle in continuous pixel coordinates; pixel (i, j) covers
// [i, i+1) x [j, j+1).
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  static Box from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  double cx() const noexcept { return 0.5 * (x1 + x2); }
  double cy() const noexcept { return 0.5 * (y1 + y2); }
  bool valid() const noexcept { return x2 >= x1 && y2 >= y1; }
  bool contains(double x, double y) const noexcept { return x >= x1 && x <= x2 && y >= y1 && y <= y2; }

  Box translated(double dx, double dy) const { return {x1 + dx, y1 + dy, x2 + dx, y2 + dy}; }
  // Scaled about its own center.
  Box scaled(double factor) const { return from_center(cx(), cy(), width() * factor, height() * factor); }
  Box clamped(double width_limit, double height_limit) const;

  friend bool operator==(const Box&, const Box&) = default;
};

double iou(const Box& a, const Box& b);
double center_distance(const Box& a, const Box& b);

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Regression target / prediction: distances from a point to the four sides.
struct Offsets {
  double l = 0.0;
  double t = 0.0;
  double r = 0.0;
  double b = 0.0;
};

// Negative raw offsets are clamped to zero.
Box decode(Point p, Offsets o);
Offsets encode(Point p, const Box& box);

// Head-grid geometry: location (row, col) sits at pixel
// (offset + col * stride, offset + row * stride) of the search image.
struct HeadGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double stride = 8.0;
  double offset = 0.0;

  std::size_t size() const noexcept { return rows * cols; }
  Point point(std::size_t index) const {
    return {offset + static_cast<double>(index % cols) * stride,
            offset + static_cast<double>(index / cols) * stride};
  }
};

enum class Label : std::uint8_t { negative = 0, positive = 1, ignore = 2 };

struct LabelMap {
  HeadGrid grid;
  std::vector<Label> labels;      // one per grid location, row-major
  std::vector<Offsets> targets;   // ltrb targets; meaningful at positives only
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;

  std::size_t n_pos() const noexcept { return positives.size(); }
  std::size_t n_neg() const noexcept { return negatives.size(); }
};

// Positive inside gt shrunk by `shrink` about its center, negative outside gt,
// ignore in between. A gt outside the search region yields no positives.
LabelMap assign_labels(const HeadGrid& grid, const Box& gt, double shrink = 0.5);

// Differentiable boxes: each field is a vector with one entry per box.
struct BoxVar {
  Var x1, y1, x2, y2;
};

// Boxes from points and non-negative offset vectors (l, t, r, b).
BoxVar decode(Graph& g, const std::vector<Point>& points, Var l, Var t, Var r, Var b);

// Elementwise IoU of each predicted box against one fixed gt.
Var iou(const BoxVar& pred, const Box& gt);

// Mean over boxes of 1 - IoU. Zero-area predictions sit on a flat region:
// loss 1 with zero gradient.
Var iou_loss(const BoxVar& pred, const Box& gt);

}  // namespace rbo::geom
