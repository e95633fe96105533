#include "rbo/model.hpp"

#include <cmath>
#include <sstream>

#include "rbo/error.hpp"
#include "rbo/ops.hpp"
#include "rbo/rng.hpp"

namespace rbo {

std::size_t ModelConfig::total_stride() const {
  std::size_t s = 1;
  for (std::size_t i = 0; i < channels.size(); ++i) s *= layer_stride;
  return s;
}

std::size_t ModelConfig::receptive_field() const {
  std::size_t rf = 1, jump = 1;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    rf += (kernel - 1) * jump;
    jump *= layer_stride;
  }
  return rf;
}

std::size_t ModelConfig::feature_size(std::size_t image_size) const {
  std::size_t n = image_size;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (n < kernel) throw ShapeError("image too small for the backbone");
    n = (n - kernel) / layer_stride + 1;
  }
  return n;
}

std::size_t ModelConfig::head_channels() const {
  return mode == corr::Mode::dw ? feature_channels() : 2 * feature_channels();
}

geom::HeadGrid ModelConfig::head_grid() const {
  const std::size_t fz = feature_size(template_size);
  const std::size_t fx = feature_size(search_size);
  const double stride = static_cast<double>(total_stride());
  const double rf = static_cast<double>(receptive_field());
  geom::HeadGrid grid;
  grid.stride = stride;
  if (mode == corr::Mode::dw) {
    if (fz > fx) throw ShapeError("template features larger than search features");
    grid.rows = grid.cols = fx - fz + 1;
    // Centre of the search span covered by the template at this offset.
    grid.offset = 0.5 * (stride * static_cast<double>(fz - 1) + rf);
  } else {
    grid.rows = grid.cols = fx;
    grid.offset = 0.5 * rf;
  }
  return grid;
}

void ModelConfig::validate() const {
  if (template_size == 0) throw ConfigError("template_size", "must be positive");
  if (search_size < template_size) throw ConfigError("search_size", "must be >= template_size");
  if (channels.empty()) throw ConfigError("channels", "need at least one backbone layer");
  if (kernel == 0) throw ConfigError("kernel", "must be positive");
  if (layer_stride == 0) throw ConfigError("layer_stride", "must be positive");
  if (head_hidden == 0) throw ConfigError("head_hidden", "must be positive");
  if (in_channels == 0) throw ConfigError("in_channels", "must be positive");
  try {
    (void)head_grid();
  } catch (const ShapeError& e) {
    throw ConfigError("template_size", e.what());
  }
}

const std::vector<std::string>& ModelConfig::keys() {
  static const std::vector<std::string> k{"corr_mode", "template_size", "search_size", "in_channels",
                                          "channels",  "kernel",        "layer_stride", "head_hidden"};
  return k;
}

void ModelConfig::write(KeyValues& kv) const {
  kv.set("corr_mode", std::string(corr::to_string(mode)));
  kv.set("template_size", std::to_string(template_size));
  kv.set("search_size", std::to_string(search_size));
  kv.set("in_channels", std::to_string(in_channels));
  std::string ch;
  for (std::size_t i = 0; i < channels.size(); ++i) ch += (i ? "," : "") + std::to_string(channels[i]);
  kv.set("channels", ch);
  kv.set("kernel", std::to_string(kernel));
  kv.set("layer_stride", std::to_string(layer_stride));
  kv.set("head_hidden", std::to_string(head_hidden));
}

ModelConfig ModelConfig::read(const KeyValues& kv) {
  ModelConfig c;
  if (auto m = kv.raw("corr_mode")) {
    try {
      c.mode = corr::parse_mode(*m);
    } catch (const Error& e) {
      throw ConfigError("corr_mode", e.what());
    }
  }
  c.template_size = kv.get_uint("template_size", c.template_size);
  c.search_size = kv.get_uint("search_size", c.search_size);
  c.in_channels = kv.get_uint("in_channels", c.in_channels);
  if (auto ch = kv.raw("channels")) {
    c.channels.clear();
    std::stringstream ss(*ch);
    std::string part;
    while (std::getline(ss, part, ',')) {
      KeyValues one;
      one.set("channels", part);
      c.channels.push_back(one.get_uint("channels", 0));
      if (c.channels.back() == 0) throw ConfigError("channels", "extents must be positive");
    }
  }
  c.kernel = kv.get_uint("kernel", c.kernel);
  c.layer_stride = kv.get_uint("layer_stride", c.layer_stride);
  c.head_hidden = kv.get_uint("head_hidden", c.head_hidden);
  c.validate();
  return c;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams m;
  m.config = config;
  Rng rng(seed);
  auto add_conv = [&](const std::string& name, std::size_t out, std::size_t in, std::size_t k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
    Tensor w({out, in, k, k});
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    Tensor b({out});
    for (double& v : b.data()) v = rng.uniform(-bound, bound);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    m.params.push_back({name + ".weight", std::move(w)});
    m.params.push_back({name + ".bias", std::move(b)});
  };
  std::size_t in = config.in_channels;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    add_conv("backbone." + std::to_string(i), config.channels[i], in, config.kernel);
    in = config.channels[i];
  }
  const std::size_t hc = config.head_channels();
  add_conv("cls.0", config.head_hidden, hc, 1);
  add_conv("cls.1", 2, config.head_hidden, 1);
  add_conv("loc.0", config.head_hidden, hc, 1);
  add_conv("loc.1", 4, config.head_hidden, 1);
  return m;
}

Tensor& ModelParams::at(const std::string& name) {
  for (auto& p : params) {
    if (p.name == name) return p.value;
  }
  throw Error("no parameter named " + name);
}

const Tensor& ModelParams::at(const std::string& name) const {
  return const_cast<ModelParams*>(this)->at(name);
}

std::size_t ModelParams::num_weights() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& p : params) {
    if (p.value.requires_grad()) p.value.zero_grad();
  }
}

bool ModelParams::all_finite() const {
  for (const auto& p : params) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

BoundModel bind(Graph& g, ModelParams& model) {
  BoundModel b{&model.config, {}};
  for (auto& p : model.params) b.params.push_back(g.param(p.value));
  return b;
}

BoundModel bind_frozen(Graph& g, const ModelParams& model) {
  BoundModel b{&model.config, {}};
  for (const auto& p : model.params) b.params.push_back(g.constant(Tensor(p.value.shape(), p.value.values())));
  return b;
}

Var image_input(Graph& g, const Raster& raster) {
  Tensor t = raster.to_tensor();
  for (double& v : t.data()) v = (v - 0.5) * 4.0;
  return g.constant(std::move(t));
}

Var backbone(const BoundModel& m, Var image) {
  const ModelConfig& c = *m.config;
  if (image.shape()[0] != c.in_channels) throw ShapeError("backbone: input channel mismatch");
  Var x = image;
  for (std::size_t i = 0; i < c.channels.size(); ++i) {
    x = relu(conv2d(x, m.params[2 * i], m.params[2 * i + 1], c.layer_stride));
  }
  return x;
}

HeadOutput heads(const BoundModel& m, Var fz, Var fx) {
  const ModelConfig& c = *m.config;
  HeadOutput out;
  out.grid = c.head_grid();
  if (c.mode == corr::Mode::dw) {
    out.similarity = corr::dw_corr(fz, fx);
  } else {
    out.similarity = corr::pw_corr(fz, fx);
  }
  const std::size_t h = 2 * c.channels.size();
  const auto& p = m.params;
  const Var cls_hidden = relu(conv2d(out.similarity, p[h], p[h + 1], 1));
  out.cls = conv2d(cls_hidden, p[h + 2], p[h + 3], 1);
  const Var loc_hidden = relu(conv2d(out.similarity, p[h + 4], p[h + 5], 1));
  // exp(raw + log stride) = stride * exp(raw): offsets in pixels, always positive.
  out.loc = exp(shift(conv2d(loc_hidden, p[h + 6], p[h + 7], 1), std::log(out.grid.stride)));
  return out;
}

HeadOutput forward(Graph& g, const BoundModel& m, const Raster& templ, const Raster& search) {
  const ModelConfig& c = *m.config;
  if (templ.width != c.template_size || templ.height != c.template_size) {
    throw ShapeError("forward: template raster is " + std::to_string(templ.width) + "x" +
                     std::to_string(templ.height) + ", expected " + std::to_string(c.template_size));
  }
  if (search.width != c.search_size || search.height != c.search_size) {
    throw ShapeError("forward: search raster is " + std::to_string(search.width) + "x" +
                     std::to_string(search.height) + ", expected " + std::to_string(c.search_size));
  }
  const Var fz = backbone(m, image_input(g, templ));
  const Var fx = backbone(m, image_input(g, search));
  return heads(m, fz, fx);
}

}  // namespace rbo
