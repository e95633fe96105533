#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "rbo/tensor.hpp"

namespace rbo {

// Planar (CHW) image with values in [0, 1].
struct Raster {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Raster() = default;
  Raster(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  double channel_mean(std::size_t c) const;
  Tensor to_tensor() const;

  friend bool operator==(const Raster&, const Raster&) = default;
};

// Binary PPM (3 channels) or PGM (1 channel), maxval 255.
void write_pnm(const Raster& raster, const std::filesystem::path& path);
Raster read_pnm(const std::filesystem::path& path);

}  // namespace rbo
