#include "rbo/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "rbo/error.hpp"

namespace rbo {

double Raster::channel_mean(std::size_t c) const {
  const std::size_t plane = height * width;
  double acc = 0.0;
  for (std::size_t i = 0; i < plane; ++i) acc += data[c * plane + i];
  return acc / static_cast<double>(plane);
}

Tensor Raster::to_tensor() const { return Tensor({channels, height, width}, data); }

void write_pnm(const Raster& raster, const std::filesystem::path& path) {
  if (raster.channels != 1 && raster.channels != 3) {
    throw IoError("write_pnm: only 1 or 3 channels are supported");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (raster.channels == 3 ? "P6" : "P5") << "\n"
      << raster.width << " " << raster.height << "\n255\n";
  std::vector<unsigned char> bytes(raster.data.size());
  const std::size_t plane = raster.height * raster.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < raster.channels; ++c) {
      const double v = std::clamp(raster.data[c * plane + i], 0.0, 1.0);
      bytes[i * raster.channels + c] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {
std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw IoError("truncated PNM header");
}
}  // namespace

Raster read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = next_token(in);
  std::size_t channels = 0;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw IoError(path.string() + ": unsupported PNM type " + magic);
  }
  const std::size_t width = std::stoul(next_token(in));
  const std::size_t height = std::stoul(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (maxval != 255) throw IoError(path.string() + ": only maxval 255 is supported");
  in.get();
  std::vector<unsigned char> bytes(width * height * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError(path.string() + ": truncated pixel data");
  Raster r(channels, height, width);
  const std::size_t plane = width * height;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      r.data[c * plane + i] = static_cast<double>(bytes[i * channels + c]) / 255.0;
    }
  }
  return r;
}

}  // namespace rbo
