#include "rbo/correlation.hpp"

#include <cmath>
#include <string>

#include "rbo/error.hpp"
#include "rbo/ops.hpp"

namespace rbo::corr {

Mode parse_mode(std::string_view text) {
  if (text == "dw") return Mode::dw;
  if (text == "pw") return Mode::pw;
  throw Error("unknown correlation mode '" + std::string(text) + "' (expected dw or pw)");
}

std::string_view to_string(Mode mode) { return mode == Mode::dw ? "dw" : "pw"; }

namespace {
void check_features(const Var& fz, const Var& fx, const char* op) {
  if (fz.value().rank() != 3 || fx.value().rank() != 3) {
    throw ShapeError(std::string(op) + ": features must be [C,H,W]");
  }
  if (fz.shape()[0] != fx.shape()[0]) {
    throw ShapeError(std::string(op) + ": channel counts differ, " + shape_str(fz.shape()) +
                     " vs " + shape_str(fx.shape()));
  }
}
}  // namespace

Var dw_corr(Var fz, Var fx) {
  check_features(fz, fx, "dw_corr");
  const auto& sz = fz.shape();
  const auto& sx = fx.shape();
  if (sz[1] > sx[1] || sz[2] > sx[2]) {
    throw ShapeError("dw_corr: template " + shape_str(sz) + " larger than search " + shape_str(sx));
  }
  const std::size_t channels = sz[0];
  std::vector<Var> planes;
  planes.reserve(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const Var kernel = reshape(slice(fz, c, c + 1), {1, 1, sz[1], sz[2]});
    planes.push_back(conv2d(slice(fx, c, c + 1), kernel, 1));
  }
  return concat(planes);
}

PwCorr pw_corr_full(Var fz, Var fx) {
  check_features(fz, fx, "pw_corr");
  const auto& sz = fz.shape();
  const auto& sx = fx.shape();
  const std::size_t channels = sz[0];
  const std::size_t nz = sz[1] * sz[2];
  const std::size_t nx = sx[1] * sx[2];
  const Var z = reshape(fz, {channels, nz});
  const Var x = reshape(fx, {channels, nx});
  const Var logits = scale(matmul(transpose(z), x), 1.0 / std::sqrt(static_cast<double>(channels)));
  const Var w = softmax(logits, 0);
  const Var aggregated = reshape(matmul(z, w), {channels, sx[1], sx[2]});
  return {concat({fx, aggregated}), w};
}

Var pw_corr(Var fz, Var fx) { return pw_corr_full(fz, fx).similarity; }

}  // namespace rbo::corr
