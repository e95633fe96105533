#include "rbo/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rbo/error.hpp"

namespace rbo {

namespace {

constexpr char kMagic[8] = {'R', 'B', 'O', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw IoError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, std::size_t limit) {
  const auto n = get<std::uint32_t>(in);
  if (n > limit) throw IoError("checkpoint string too long");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IoError("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const ModelParams& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  KeyValues meta;
  model.config.write(meta);
  std::string text;
  for (const auto& [k, v] : meta.entries()) text += k + " = " + v + "\n";
  put_string(out, text);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& p : model.params) {
    put_string(out, p.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto extent : p.value.shape()) put<std::uint64_t>(out, extent);
    for (double v : p.value.data()) put<double>(out, v);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  ModelParams model;
  model.config = ModelConfig::read(KeyValues::parse(get_string(in, 1 << 16)));
  const ModelParams reference = ModelParams::init(model.config, 0);
  const auto count = get<std::uint32_t>(in);
  if (count != reference.params.size()) throw IoError("checkpoint tensor count does not match its config");
  for (std::uint32_t t = 0; t < count; ++t) {
    Param p;
    p.name = get_string(in, 256);
    const auto rank = get<std::uint32_t>(in);
    if (rank == 0 || rank > 8) throw IoError("checkpoint tensor rank out of range");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get<std::uint64_t>(in));
    const auto& ref = reference.params[t];
    if (p.name != ref.name || shape != ref.value.shape()) {
      throw IoError("checkpoint tensor " + p.name + " " + shape_str(shape) + " does not match " +
                    ref.name + " " + shape_str(ref.value.shape()));
    }
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = get<double>(in);
    p.value = Tensor(std::move(shape), std::move(data));
    if (!p.value.all_finite()) throw IoError("checkpoint tensor " + p.name + " holds non-finite values");
    p.value.set_requires_grad(true);
    model.params.push_back(std::move(p));
  }
  return model;
}

}  // namespace rbo
