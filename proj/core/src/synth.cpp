#include "rbo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rbo/error.hpp"
#include "rbo/rng.hpp"

namespace rbo::synth {

ShapeKind parse_shape(const std::string& text) {
  if (text == "rectangle") return ShapeKind::rectangle;
  if (text == "ellipse") return ShapeKind::ellipse;
  if (text == "triangle") return ShapeKind::triangle;
  throw ConfigError("shape", "expected rectangle, ellipse or triangle, got '" + text + "'");
}

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::ellipse: return "ellipse";
    case ShapeKind::triangle: return "triangle";
  }
  return "rectangle";
}

void SequenceSpec::validate() const {
  if (frames < 1) throw ConfigError("frames", "must be >= 1");
  if (!(similarity >= 0.0 && similarity <= 1.0)) throw ConfigError("similarity", "must lie in [0,1]");
  if (!(clutter >= 0.0)) throw ConfigError("clutter", "must be >= 0");
  if (!(motion_sigma >= 0.0)) throw ConfigError("motion_sigma", "must be >= 0");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma", "must be >= 0");
  if (!(distractor_spread >= 1.1)) throw ConfigError("distractor_spread", "must be >= 1.1");
  for (double c : color) {
    if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("color", "channels must lie in [0,1]");
  }
  if (!(target_width >= 2.0)) throw ConfigError("target_width", "must be >= 2 pixels");
  if (!(target_height >= 2.0)) throw ConfigError("target_height", "must be >= 2 pixels");
  // Shapes must fit with room to move.
  if (static_cast<double>(width) < 2.0 * target_width * 1.3) {
    throw ConfigError("width", "image too small for the target size");
  }
  if (static_cast<double>(height) < 2.0 * target_height * 1.3) {
    throw ConfigError("height", "image too small for the target size");
  }
}

KeyValues SequenceSpec::to_keyvalues() const {
  KeyValues kv;
  kv.set("seed", std::to_string(seed));
  kv.set("frames", std::to_string(frames));
  kv.set("width", std::to_string(width));
  kv.set("height", std::to_string(height));
  kv.set("shape", to_string(shape));
  kv.set("color", format_double(color[0]) + "," + format_double(color[1]) + "," + format_double(color[2]));
  kv.set("target_width", format_double(target_width));
  kv.set("target_height", format_double(target_height));
  kv.set("distractors", std::to_string(distractors));
  kv.set("similarity", format_double(similarity));
  kv.set("clutter", format_double(clutter));
  kv.set("motion_sigma", format_double(motion_sigma));
  kv.set("distractor_spread", format_double(distractor_spread));
  kv.set("noise_sigma", format_double(noise_sigma));
  return kv;
}

SequenceSpec SequenceSpec::from_keyvalues(const KeyValues& kv) {
  kv.reject_unknown({"seed", "frames", "width", "height", "shape", "color", "target_width",
                     "target_height", "distractors", "similarity", "clutter", "motion_sigma",
                     "distractor_spread", "noise_sigma"});
  SequenceSpec s;
  s.seed = kv.get_uint("seed", s.seed);
  s.frames = kv.get_uint("frames", s.frames);
  s.width = kv.get_uint("width", s.width);
  s.height = kv.get_uint("height", s.height);
  s.shape = parse_shape(kv.get_string("shape", to_string(s.shape)));
  if (auto c = kv.raw("color")) {
    std::array<double, 3> rgb{};
    std::stringstream ss(*c);
    std::string part;
    std::size_t k = 0;
    while (std::getline(ss, part, ',')) {
      if (k >= 3) throw ConfigError("color", "expected three comma-separated values");
      KeyValues one;
      one.set("color", part);
      rgb[k++] = one.get_double("color", 0.0);
    }
    if (k != 3) throw ConfigError("color", "expected three comma-separated values");
    s.color = rgb;
  }
  s.target_width = kv.get_double("target_width", s.target_width);
  s.target_height = kv.get_double("target_height", s.target_height);
  s.distractors = kv.get_uint("distractors", s.distractors);
  s.similarity = kv.get_double("similarity", s.similarity);
  s.clutter = kv.get_double("clutter", s.clutter);
  s.motion_sigma = kv.get_double("motion_sigma", s.motion_sigma);
  s.distractor_spread = kv.get_double("distractor_spread", s.distractor_spread);
  s.noise_sigma = kv.get_double("noise_sigma", s.noise_sigma);
  s.validate();
  return s;
}

namespace {

struct Object {
  ShapeKind shape;
  std::array<double, 3> color;
  double cx, cy, w, h;

  geom::Box box() const { return geom::Box::from_center(cx, cy, w, h); }
};

bool covers(const Object& o, double x, double y) {
  const double u = (x - o.cx) / (0.5 * o.w);  // [-1, 1] inside the box
  const double v = (y - o.cy) / (0.5 * o.h);
  if (u < -1.0 || u > 1.0 || v < -1.0 || v > 1.0) return false;
  switch (o.shape) {
    case ShapeKind::rectangle: return true;
    case ShapeKind::ellipse: return u * u + v * v <= 1.0;
    case ShapeKind::triangle:
      // Apex at top centre, base along the bottom edge.
      return std::abs(u) <= 0.5 * (v + 1.0);
  }
  return false;
}

void draw(Raster& img, const Object& o) {
  const geom::Box b = o.box();
  const auto x0 = static_cast<std::ptrdiff_t>(std::floor(std::max(0.0, b.x1)));
  const auto y0 = static_cast<std::ptrdiff_t>(std::floor(std::max(0.0, b.y1)));
  const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(std::min<double>(img.width, b.x2)));
  const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(std::min<double>(img.height, b.y2)));
  for (auto y = y0; y < y1; ++y) {
    for (auto x = x0; x < x1; ++x) {
      if (!covers(o, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = o.color[c];
      }
    }
  }
}

void keep_inside(Object& o, const SequenceSpec& spec) {
  o.cx = std::clamp(o.cx, 0.5 * o.w, static_cast<double>(spec.width) - 0.5 * o.w);
  o.cy = std::clamp(o.cy, 0.5 * o.h, static_cast<double>(spec.height) - 0.5 * o.h);
}

std::array<double, 3> random_color(Rng& rng) {
  return {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
}

}  // namespace

Sequence gen_sequence(const SequenceSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Sequence seq;
  seq.spec = spec;

  const double W = static_cast<double>(spec.width);
  const double H = static_cast<double>(spec.height);
  const std::array<double, 3> background{rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6),
                                         rng.uniform(0.3, 0.6)};

  Object target{spec.shape, spec.color,
                rng.uniform(0.35 * W, 0.65 * W), rng.uniform(0.35 * H, 0.65 * H),
                spec.target_width, spec.target_height};
  keep_inside(target, spec);

  std::vector<Object> distractors;
  const double size = std::max(spec.target_width, spec.target_height);
  for (std::size_t k = 0; k < spec.distractors; ++k) {
    const auto other = random_color(rng);
    Object d{spec.shape, {}, 0.0, 0.0, 0.0, 0.0};
    for (std::size_t c = 0; c < 3; ++c) {
      d.color[c] = spec.similarity * spec.color[c] + (1.0 - spec.similarity) * other[c];
    }
    const double sw = rng.uniform(0.7, 1.3), sh = rng.uniform(0.7, 1.3);
    d.w = spec.target_width * (spec.similarity + (1.0 - spec.similarity) * sw);
    d.h = spec.target_height * (spec.similarity + (1.0 - spec.similarity) * sh);
    const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double dist = size * rng.uniform(1.1, spec.distractor_spread);
    d.cx = target.cx + dist * std::cos(angle);
    d.cy = target.cy + dist * std::sin(angle);
    keep_inside(d, spec);
    distractors.push_back(d);
  }

  std::vector<Object> clutter;
  const auto n_clutter = static_cast<std::size_t>(std::lround(10.0 * spec.clutter));
  for (std::size_t k = 0; k < n_clutter; ++k) {
    // Clutter never shares the target's shape family.
    const auto family = static_cast<ShapeKind>((static_cast<std::size_t>(spec.shape) + 1 + rng.index(2)) % 3);
    Object o{family, random_color(rng), rng.uniform(0.0, W), rng.uniform(0.0, H),
             size * rng.uniform(0.3, 0.8), size * rng.uniform(0.3, 0.8)};
    keep_inside(o, spec);
    clutter.push_back(o);
  }

  for (std::size_t f = 0; f < spec.frames; ++f) {
    if (f > 0) {
      target.cx += rng.normal(0.0, spec.motion_sigma);
      target.cy += rng.normal(0.0, spec.motion_sigma);
      keep_inside(target, spec);
      for (auto& d : distractors) {
        d.cx += rng.normal(0.0, spec.motion_sigma);
        d.cy += rng.normal(0.0, spec.motion_sigma);
        keep_inside(d, spec);
      }
    }
    Raster img(3, spec.height, spec.width);
    for (std::size_t c = 0; c < 3; ++c) {
      std::fill(img.data.begin() + static_cast<std::ptrdiff_t>(c * spec.width * spec.height),
                img.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * spec.width * spec.height),
                background[c]);
    }
    for (const auto& o : clutter) draw(img, o);
    for (const auto& d : distractors) draw(img, d);
    draw(img, target);
    if (spec.noise_sigma > 0.0) {
      for (double& v : img.data) v = std::clamp(v + rng.normal(0.0, spec.noise_sigma), 0.0, 1.0);
    }
    seq.frames.push_back(std::move(img));
    seq.gt.push_back(target.box());
    std::vector<geom::Box> dboxes;
    for (const auto& d : distractors) dboxes.push_back(d.box());
    seq.distractors.push_back(std::move(dboxes));
  }
  return seq;
}

std::uint64_t digest(const Sequence& seq) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& f : seq.frames) mix(f.data.data(), f.data.size() * sizeof(double));
  for (const auto& b : seq.gt) mix(&b, sizeof(b));
  for (const auto& ds : seq.distractors) {
    for (const auto& b : ds) mix(&b, sizeof(b));
  }
  return h;
}

geom::Box CropWindow::to_crop(const geom::Box& b) const {
  const double s = scale();
  const double half = 0.5 * static_cast<double>(size);
  return {(b.x1 - cx) * s + half, (b.y1 - cy) * s + half, (b.x2 - cx) * s + half,
          (b.y2 - cy) * s + half};
}

geom::Box CropWindow::to_image(const geom::Box& b) const {
  const double s = 1.0 / scale();
  const double half = 0.5 * static_cast<double>(size);
  return {(b.x1 - half) * s + cx, (b.y1 - half) * s + cy, (b.x2 - half) * s + cx,
          (b.y2 - half) * s + cy};
}

double context_side(const geom::Box& target, double context) {
  const double p = context * (target.width() + target.height());
  return std::sqrt((target.width() + p) * (target.height() + p));
}

Raster crop(const Raster& image, const CropWindow& window) {
  Raster out(image.channels, window.size, window.size);
  std::vector<double> pad(image.channels);
  for (std::size_t c = 0; c < image.channels; ++c) pad[c] = image.channel_mean(c);
  const double step = window.side / static_cast<double>(window.size);
  const double half = 0.5 * static_cast<double>(window.size);
  const auto W = static_cast<std::ptrdiff_t>(image.width);
  const auto H = static_cast<std::ptrdiff_t>(image.height);
  for (std::size_t v = 0; v < window.size; ++v) {
    // Continuous image coordinate of the output pixel centre, shifted so that
    // integer values land on input pixel centres.
    const double fy = window.cy + (static_cast<double>(v) + 0.5 - half) * step - 0.5;
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(fy));
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t u = 0; u < window.size; ++u) {
      const double fx = window.cx + (static_cast<double>(u) + 0.5 - half) * step - 0.5;
      const auto x0 = static_cast<std::ptrdiff_t>(std::floor(fx));
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < image.channels; ++c) {
        auto sample = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
          if (x < 0 || y < 0 || x >= W || y >= H) return pad[c];
          return image.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        };
        const double top = (1.0 - wx) * sample(x0, y0) + wx * sample(x0 + 1, y0);
        const double bottom = (1.0 - wx) * sample(x0, y0 + 1) + wx * sample(x0 + 1, y0 + 1);
        out.at(c, v, u) = (1.0 - wy) * top + wy * bottom;
      }
    }
  }
  return out;
}

CropPair crop_pair(const Sequence& seq, std::size_t frame, std::size_t template_size,
                   std::size_t search_size, geom::Point shift) {
  if (frame >= seq.frames.size()) throw Error("crop_pair: frame index out of range");
  const geom::Box& first = seq.gt.front();
  const double side = context_side(first);
  CropPair pair;
  pair.template_window = {first.cx(), first.cy(), side, template_size};
  const double search_side = side * static_cast<double>(search_size) / static_cast<double>(template_size);
  const geom::Box& cur = seq.gt[frame];
  const double px = search_side / static_cast<double>(search_size);
  // A target displaced by +shift in the crop means the window moved by -shift.
  pair.search_window = {cur.cx() - shift.x * px, cur.cy() - shift.y * px, search_side, search_size};
  pair.templ = crop(seq.frames.front(), pair.template_window);
  pair.search = crop(seq.frames[frame], pair.search_window);
  pair.gt = pair.search_window.to_crop(cur);
  return pair;
}

void export_sequence(const Sequence& seq, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.ppm", f);
    write_pnm(seq.frames[f], dir / name);
  }
  std::ofstream ann(dir / "annotations.txt");
  if (!ann) throw IoError("cannot write " + (dir / "annotations.txt").string());
  auto block = [&](const std::string& title, auto box_at) {
    ann << "# " << title << "\n";
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
      const geom::Box b = box_at(f);
      ann << f << " " << format_double(b.x1) << " " << format_double(b.y1) << " "
          << format_double(b.x2) << " " << format_double(b.y2) << "\n";
    }
  };
  block("target", [&](std::size_t f) { return seq.gt[f]; });
  const std::size_t n_distractors = seq.distractors.empty() ? 0 : seq.distractors.front().size();
  for (std::size_t k = 0; k < n_distractors; ++k) {
    block("distractor " + std::to_string(k), [&](std::size_t f) { return seq.distractors[f][k]; });
  }
  if (!ann) throw IoError("failed writing annotations");
  std::ofstream spec(dir / "spec.txt");
  const KeyValues kv = seq.spec.to_keyvalues();
  for (const auto& [k, v] : kv.entries()) spec << k << " = " << v << "\n";
  if (!spec) throw IoError("failed writing spec.txt");
}

Sequence import_sequence(const std::filesystem::path& dir) {
  Sequence seq;
  if (std::filesystem::exists(dir / "spec.txt")) {
    seq.spec = SequenceSpec::from_keyvalues(KeyValues::load(dir / "spec.txt"));
  }
  std::ifstream ann(dir / "annotations.txt");
  if (!ann) throw IoError("missing " + (dir / "annotations.txt").string());
  std::vector<std::vector<geom::Box>> blocks;
  std::string line;
  while (std::getline(ann, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      blocks.emplace_back();
      continue;
    }
    if (blocks.empty()) blocks.emplace_back();
    std::istringstream ss(line);
    std::size_t f = 0;
    geom::Box b;
    if (!(ss >> f >> b.x1 >> b.y1 >> b.x2 >> b.y2)) throw IoError("malformed annotation line: " + line);
    if (f != blocks.back().size()) throw IoError("annotation frames out of order: " + line);
    blocks.back().push_back(b);
  }
  if (blocks.empty() || blocks.front().empty()) throw IoError("no target annotations in " + dir.string());
  const std::size_t n = blocks.front().size();
  seq.gt = blocks.front();
  seq.distractors.assign(n, {});
  for (std::size_t k = 1; k < blocks.size(); ++k) {
    if (blocks[k].size() != n) throw IoError("distractor block length differs from target block");
    for (std::size_t f = 0; f < n; ++f) seq.distractors[f].push_back(blocks[k][f]);
  }
  for (std::size_t f = 0; f < n; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.ppm", f);
    seq.frames.push_back(read_pnm(dir / name));
  }
  seq.spec.frames = n;
  return seq;
}

}  // namespace rbo::synth
