#include "rbo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rbo/error.hpp"

namespace rbo {

namespace {

using Id = std::uint32_t;

struct Broadcast {
  Shape shape;
  bool a_scalar = false;
  bool b_scalar = false;
};

Broadcast broadcast(const char* op, const Var& a, const Var& b) {
  if (&a.graph() != &b.graph()) {
    throw Error(std::string(op) + ": operands on different graphs");
  }
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return {sa, false, false};
  if (a.size() == 1) return {sb, true, false};
  if (b.size() == 1) return {sa, false, true};
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(sa) + " and " +
                   shape_str(sb));
}

// Adds `contrib(i)` into input k's adjoint, summing over i when the input was
// broadcast from a scalar.
template <typename F>
void accumulate(Graph& g, Id self, std::size_t k, bool was_scalar, std::size_t n, F contrib) {
  const Id in = g.input(self, k);
  if (!g.needs_grad(in)) return;
  auto dst = g.adjoint_mut(in);
  if (was_scalar) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += contrib(i);
    dst[0] += acc;
  } else {
    for (std::size_t i = 0; i < n; ++i) dst[i] += contrib(i);
  }
}

template <typename F>
Var binary(const char* op, Var a, Var b, F f, Graph::BackwardFn bw) {
  const Broadcast bc = broadcast(op, a, b);
  const auto& va = a.value();
  const auto& vb = b.value();
  Tensor out(bc.shape);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(va[bc.a_scalar ? 0 : i], vb[bc.b_scalar ? 0 : i]);
  }
  return a.graph().record(op, std::move(out), {a, b}, std::move(bw));
}

// Index helpers shared by binary backward closures.
struct BinaryView {
  const Tensor& a;
  const Tensor& b;
  bool a_scalar;
  bool b_scalar;
  double av(std::size_t i) const { return a[a_scalar ? 0 : i]; }
  double bv(std::size_t i) const { return b[b_scalar ? 0 : i]; }
};

BinaryView view(Graph& g, Id self) {
  const Tensor& a = g.value_of(g.input(self, 0));
  const Tensor& b = g.value_of(g.input(self, 1));
  const std::size_t n = g.value_of(self).size();
  return {a, b, a.size() == 1 && n != 1, b.size() == 1 && n != 1};
}

template <typename F>
Var unary(const char* op, Var a, F f, Graph::BackwardFn bw) {
  const auto& va = a.value();
  Tensor out(va.shape());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = f(va[i]);
  return a.graph().record(op, std::move(out), {a}, std::move(bw));
}

}  // namespace

Var add(Var a, Var b) {
  return binary("add", a, b, [](double x, double y) { return x + y; },
                [](Graph& g, Id self) {
                  const auto v = view(g, self);
                  const auto up = g.adjoint(self);
                  const std::size_t n = up.size();
                  accumulate(g, self, 0, v.a_scalar, n, [&](std::size_t i) { return up[i]; });
                  accumulate(g, self, 1, v.b_scalar, n, [&](std::size_t i) { return up[i]; });
                });
}

Var sub(Var a, Var b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; },
                [](Graph& g, Id self) {
                  const auto v = view(g, self);
                  const auto up = g.adjoint(self);
                  const std::size_t n = up.size();
                  accumulate(g, self, 0, v.a_scalar, n, [&](std::size_t i) { return up[i]; });
                  accumulate(g, self, 1, v.b_scalar, n, [&](std::size_t i) { return -up[i]; });
                });
}

Var mul(Var a, Var b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; },
                [](Graph& g, Id self) {
                  const auto v = view(g, self);
                  const auto up = g.adjoint(self);
                  const std::size_t n = up.size();
                  accumulate(g, self, 0, v.a_scalar, n,
                             [&](std::size_t i) { return up[i] * v.bv(i); });
                  accumulate(g, self, 1, v.b_scalar, n,
                             [&](std::size_t i) { return up[i] * v.av(i); });
                });
}

Var div(Var a, Var b) {
  return binary("div", a, b, [](double x, double y) { return x / y; },
                [](Graph& g, Id self) {
                  const auto v = view(g, self);
                  const auto up = g.adjoint(self);
                  const std::size_t n = up.size();
                  accumulate(g, self, 0, v.a_scalar, n,
                             [&](std::size_t i) { return up[i] / v.bv(i); });
                  accumulate(g, self, 1, v.b_scalar, n, [&](std::size_t i) {
                    const double y = v.bv(i);
                    return -up[i] * v.av(i) / (y * y);
                  });
                });
}

Var maximum(Var a, Var b) {
  return binary("maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
                [](Graph& g, Id self) {
                  const auto v = view(g, self);
                  const auto up = g.adjoint(self);
                  const std::size_t n = up.size();
                  accumulate(g, self, 0, v.a_scalar, n, [&](std::size_t i) {
                    return v.av(i) >= v.bv(i) ? up[i] : 0.0;
                  });
                  accumulate(g, self, 1, v.b_scalar, n, [&](std::size_t i) {
                    return v.av(i) >= v.bv(i) ? 0.0 : up[i];
                  });
                });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](Graph& g, Id self) {
    const Id in = g.input(self, 0);
    const auto& x = g.value_of(in);
    const auto up = g.adjoint(self);
    auto dst = g.adjoint_mut(in);
    for (std::size_t i = 0; i < up.size(); ++i) {
      if (x[i] > 0.0) dst[i] += up[i];
    }
  });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a,
               [](double x) {
                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](Graph& g, Id self) {
                 const Id in = g.input(self, 0);
                 const auto& y = g.value_of(self);
                 const auto up = g.adjoint(self);
                 auto dst = g.adjoint_mut(in);
                 for (std::size_t i = 0; i < up.size(); ++i) dst[i] += up[i] * y[i] * (1.0 - y[i]);
               });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](Graph& g, Id self) {
    const Id in = g.input(self, 0);
    const auto& y = g.value_of(self);
    const auto up = g.adjoint(self);
    auto dst = g.adjoint_mut(in);
    for (std::size_t i = 0; i < up.size(); ++i) dst[i] += up[i] * y[i];
  });
}

Var log(Var a) {
  for (double x : a.value().data()) {
    if (!(x > 0.0)) throw NumericError("log of non-positive value " + std::to_string(x));
  }
  return unary("log", a, [](double x) { return std::log(x); }, [](Graph& g, Id self) {
    const Id in = g.input(self, 0);
    const auto& x = g.value_of(in);
    const auto up = g.adjoint(self);
    auto dst = g.adjoint_mut(in);
    for (std::size_t i = 0; i < up.size(); ++i) dst[i] += up[i] / x[i];
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double x : a.value().data()) acc += x;
  return a.graph().record("sum", Tensor::scalar(acc), {a}, [](Graph& g, Id self) {
    const Id in = g.input(self, 0);
    const double up = g.adjoint(self)[0];
    for (double& d : g.adjoint_mut(in)) d += up;
  });
}

Var mean(Var a) {
  double acc = 0.0;
  for (double x : a.value().data()) acc += x;
  const double n = static_cast<double>(a.size());
  return a.graph().record("mean", Tensor::scalar(acc / n), {a}, [](Graph& g, Id self) {
    const Id in = g.input(self, 0);
    auto dst = g.adjoint_mut(in);
    const double up = g.adjoint(self)[0] / static_cast<double>(dst.size());
    for (double& d : dst) d += up;
  });
}

Var max(Var a) {
  const auto data = a.value().data();
  const std::size_t arg =
      static_cast<std::size_t>(std::max_element(data.begin(), data.end()) - data.begin());
  return a.graph().record("max", Tensor::scalar(data[arg]), {a}, [arg](Graph& g, Id self) {
    g.adjoint_mut(g.input(self, 0))[arg] += g.adjoint(self)[0];
  });
}

namespace {

// Softmax over `count` elements spaced `step` apart starting at `first`.
void softmax_strided(std::span<const double> x, std::span<double> y, std::size_t first,
                     std::size_t count, std::size_t step) {
  double m = x[first];
  for (std::size_t k = 1; k < count; ++k) m = std::max(m, x[first + k * step]);
  double total = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    const double e = std::exp(x[first + k * step] - m);
    y[first + k * step] = e;
    total += e;
  }
  for (std::size_t k = 0; k < count; ++k) y[first + k * step] /= total;
}

void softmax_backward_strided(std::span<const double> y, std::span<const double> up,
                              std::span<double> dst, std::size_t first, std::size_t count,
                              std::size_t step) {
  double dot = 0.0;
  for (std::size_t k = 0; k < count; ++k) dot += up[first + k * step] * y[first + k * step];
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = first + k * step;
    dst[i] += y[i] * (up[i] - dot);
  }
}

}  // namespace

Var softmax(Var a) {
  const auto& x = a.value();
  if (x.empty()) throw ShapeError("softmax of empty input");
  Tensor out(x.shape());
  softmax_strided(x.data(), out.data(), 0, x.size(), 1);
  return a.graph().record("softmax", std::move(out), {a}, [](Graph& g, Id self) {
    const auto& y = g.value_of(self);
    softmax_backward_strided(y.data(), g.adjoint(self), g.adjoint_mut(g.input(self, 0)), 0,
                             y.size(), 1);
  });
}

Var softmax(Var a, std::size_t axis) {
  const auto& x = a.value();
  if (x.rank() != 2 || axis > 1) throw ShapeError("softmax(axis) expects a 2-d tensor and axis 0/1");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  Tensor out(x.shape());
  if (axis == 0) {
    for (std::size_t c = 0; c < cols; ++c) softmax_strided(x.data(), out.data(), c, rows, cols);
  } else {
    for (std::size_t r = 0; r < rows; ++r) softmax_strided(x.data(), out.data(), r * cols, cols, 1);
  }
  return a.graph().record("softmax", std::move(out), {a}, [axis, rows, cols](Graph& g, Id self) {
    const auto& y = g.value_of(self);
    const auto up = g.adjoint(self);
    auto dst = g.adjoint_mut(g.input(self, 0));
    if (axis == 0) {
      for (std::size_t c = 0; c < cols; ++c) softmax_backward_strided(y.data(), up, dst, c, rows, cols);
    } else {
      for (std::size_t r = 0; r < rows; ++r)
        softmax_backward_strided(y.data(), up, dst, r * cols, cols, 1);
    }
  });
}

Var matmul(Var a, Var b) {
  const auto& va = a.value();
  const auto& vb = b.value();
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(va.shape()) + " and " +
                     shape_str(vb.shape()));
  }
  const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = va[i * k + p];
      const double* brow = &vb.data()[p * n];
      double* orow = &out.data()[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return a.graph().record("matmul", std::move(out), {a, b}, [m, k, n](Graph& g, Id self) {
    const Id ia = g.input(self, 0), ib = g.input(self, 1);
    const auto& va = g.value_of(ia);
    const auto& vb = g.value_of(ib);
    const auto up = g.adjoint(self);
    if (g.needs_grad(ia)) {
      auto da = g.adjoint_mut(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += up[i * n + j] * vb[p * n + j];
          da[i * k + p] += acc;
        }
    }
    if (g.needs_grad(ib)) {
      auto db = g.adjoint_mut(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = va[i * k + p];
          for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * up[i * n + j];
        }
    }
  });
}

namespace {

struct ConvDims {
  std::size_t c, h, w, o, kh, kw, oh, ow, stride;
};

ConvDims conv_dims(const Tensor& in, const Tensor& ker, std::size_t stride) {
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (in.rank() != 3 || ker.rank() != 4) {
    throw ShapeError("conv2d: expected input [C,H,W] and kernels [O,C,K,K], got " +
                     shape_str(in.shape()) + " and " + shape_str(ker.shape()));
  }
  if (in.dim(0) != ker.dim(1)) {
    throw ShapeError("conv2d: channel mismatch " + shape_str(in.shape()) + " vs " +
                     shape_str(ker.shape()));
  }
  if (ker.dim(2) > in.dim(1) || ker.dim(3) > in.dim(2)) {
    throw ShapeError("conv2d: kernel " + shape_str(ker.shape()) + " larger than input " +
                     shape_str(in.shape()));
  }
  ConvDims d{in.dim(0), in.dim(1), in.dim(2), ker.dim(0), ker.dim(2), ker.dim(3), 0, 0, stride};
  d.oh = (d.h - d.kh) / stride + 1;
  d.ow = (d.w - d.kw) / stride + 1;
  return d;
}

// Patches laid out as rows r = (c, ky, kx) and columns p = (oy, ox), so both
// passes reduce to contiguous row-times-matrix loops.
std::vector<double> im2col(const double* x, const ConvDims& d) {
  const std::size_t plane = d.oh * d.ow;
  std::vector<double> cols(d.c * d.kh * d.kw * plane);
  double* out = cols.data();
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx)
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const double* xrow = x + c * d.h * d.w + (oy * d.stride + ky) * d.w + kx;
          for (std::size_t ox = 0; ox < d.ow; ++ox) *out++ = xrow[ox * d.stride];
        }
  return cols;
}

Tensor conv_forward(const Tensor& in, const Tensor& ker, const Tensor* bias, const ConvDims& d) {
  Tensor out({d.o, d.oh, d.ow});
  const std::size_t plane = d.oh * d.ow;
  const std::size_t rows = d.c * d.kh * d.kw;
  const std::vector<double> cols = im2col(in.data().data(), d);
  const double* k = ker.data().data();
  double* y = out.data().data();
  for (std::size_t o = 0; o < d.o; ++o) {
    double* yo = y + o * plane;
    if (bias != nullptr) std::fill(yo, yo + plane, (*bias)[o]);
    for (std::size_t r = 0; r < rows; ++r) {
      const double wv = k[o * rows + r];
      const double* cr = cols.data() + r * plane;
      for (std::size_t p = 0; p < plane; ++p) yo[p] += wv * cr[p];
    }
  }
  return out;
}

void conv_backward(Graph& g, Id self, const ConvDims& d, bool has_bias) {
  const Id iin = g.input(self, 0), iker = g.input(self, 1);
  const auto& x = g.value_of(iin);
  const auto& k = g.value_of(iker);
  const auto up = g.adjoint(self);
  const std::size_t plane = d.oh * d.ow;
  const std::size_t rows = d.c * d.kh * d.kw;
  if (g.needs_grad(iker)) {
    const std::vector<double> cols = im2col(x.data().data(), d);
    auto dk = g.adjoint_mut(iker);
    for (std::size_t o = 0; o < d.o; ++o) {
      const double* uo = up.data() + o * plane;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* cr = cols.data() + r * plane;
        double acc = 0.0;
        for (std::size_t p = 0; p < plane; ++p) acc += uo[p] * cr[p];
        dk[o * rows + r] += acc;
      }
    }
  }
  if (g.needs_grad(iin)) {
    std::vector<double> dcols(rows * plane, 0.0);
    for (std::size_t o = 0; o < d.o; ++o) {
      const double* uo = up.data() + o * plane;
      for (std::size_t r = 0; r < rows; ++r) {
        const double wv = k[o * rows + r];
        double* dr = dcols.data() + r * plane;
        for (std::size_t p = 0; p < plane; ++p) dr[p] += wv * uo[p];
      }
    }
    auto dx = g.adjoint_mut(iin);
    const double* src = dcols.data();
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t ky = 0; ky < d.kh; ++ky)
        for (std::size_t kx = 0; kx < d.kw; ++kx)
          for (std::size_t oy = 0; oy < d.oh; ++oy) {
            double* drow = dx.data() + c * d.h * d.w + (oy * d.stride + ky) * d.w + kx;
            for (std::size_t ox = 0; ox < d.ow; ++ox) drow[ox * d.stride] += *src++;
          }
  }
  if (has_bias) {
    const Id ib = g.input(self, 2);
    if (g.needs_grad(ib)) {
      auto db = g.adjoint_mut(ib);
      for (std::size_t o = 0; o < d.o; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += up[o * plane + i];
        db[o] += acc;
      }
    }
  }
}

}  // namespace

Var conv2d(Var input, Var kernels, std::size_t stride) {
  const ConvDims d = conv_dims(input.value(), kernels.value(), stride);
  Tensor out = conv_forward(input.value(), kernels.value(), nullptr, d);
  return input.graph().record("conv2d", std::move(out), {input, kernels},
                              [d](Graph& g, Id self) { conv_backward(g, self, d, false); });
}

Var conv2d(Var input, Var kernels, Var bias, std::size_t stride) {
  const ConvDims d = conv_dims(input.value(), kernels.value(), stride);
  if (bias.size() != d.o) {
    throw ShapeError("conv2d: bias has " + std::to_string(bias.size()) + " entries for " +
                     std::to_string(d.o) + " output channels");
  }
  Tensor out = conv_forward(input.value(), kernels.value(), &bias.value(), d);
  return input.graph().record("conv2d", std::move(out), {input, kernels, bias},
                              [d](Graph& g, Id self) { conv_backward(g, self, d, true); });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t lead = 0;
  std::vector<double> data;
  for (const Var& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != tail) {
      throw ShapeError("concat: trailing extents differ, " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    }
    lead += p.shape()[0];
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  }
  Shape shape{lead};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return parts[0].graph().record("concat", Tensor(std::move(shape), std::move(data)), parts,
                                 [](Graph& g, Id self) {
                                   const auto up = g.adjoint(self);
                                   std::size_t offset = 0;
                                   for (std::size_t k = 0; k < g.num_inputs(self); ++k) {
                                     const Id in = g.input(self, k);
                                     const std::size_t n = g.value_of(in).size();
                                     if (g.needs_grad(in)) {
                                       auto dst = g.adjoint_mut(in);
                                       for (std::size_t i = 0; i < n; ++i) dst[i] += up[offset + i];
                                     }
                                     offset += n;
                                   }
                                 });
}

Var reshape(Var a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return a.graph().record("reshape", Tensor(std::move(shape), a.value().values()), {a},
                          [](Graph& g, Id self) {
                            const auto up = g.adjoint(self);
                            auto dst = g.adjoint_mut(g.input(self, 0));
                            for (std::size_t i = 0; i < up.size(); ++i) dst[i] += up[i];
                          });
}

Var transpose(Var a) {
  const auto& x = a.value();
  if (x.rank() != 2) throw ShapeError("transpose expects a 2-d tensor");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return a.graph().record("transpose", std::move(out), {a}, [r, c](Graph& g, Id self) {
    const auto up = g.adjoint(self);
    auto dst = g.adjoint_mut(g.input(self, 0));
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dst[i * c + j] += up[j * r + i];
  });
}

Var slice(Var a, std::size_t begin, std::size_t end) {
  const auto& x = a.value();
  if (x.rank() == 0 || begin >= end || end > x.dim(0)) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                     shape_str(x.shape()));
  }
  const std::size_t row = x.size() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<double> data(x.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                           x.data().begin() + static_cast<std::ptrdiff_t>(end * row));
  const std::size_t offset = begin * row;
  return a.graph().record("slice", Tensor(std::move(shape), std::move(data)), {a},
                          [offset](Graph& g, Id self) {
                            const auto up = g.adjoint(self);
                            auto dst = g.adjoint_mut(g.input(self, 0));
                            for (std::size_t i = 0; i < up.size(); ++i) dst[offset + i] += up[i];
                          });
}

Var gather(Var a, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ShapeError("gather with no indices");
  const auto& x = a.value();
  std::vector<double> data(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.size()) throw ShapeError("gather index out of range");
    data[i] = x[indices[i]];
  }
  return a.graph().record("gather", Tensor::vector(std::move(data)), {a},
                          [indices](Graph& g, Id self) {
                            const auto up = g.adjoint(self);
                            auto dst = g.adjoint_mut(g.input(self, 0));
                            for (std::size_t i = 0; i < indices.size(); ++i) dst[indices[i]] += up[i];
                          });
}

Var detach(Var a) { return a.graph().constant(Tensor(a.shape(), a.value().values())); }

Var neg(Var a) { return scale(a, -1.0); }

Var abs(Var a) { return maximum(a, neg(a)); }

Var minimum(Var a, Var b) { return neg(maximum(neg(a), neg(b))); }

Var scale(Var a, double factor) { return mul(a, a.graph().constant(factor)); }

Var shift(Var a, double offset) { return add(a, a.graph().constant(offset)); }

Var softplus(Var t) {
  return unary("softplus", t,
               [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
               [](Graph& g, Id self) {
                 const Id in = g.input(self, 0);
                 const auto& x = g.value_of(in);
                 const auto up = g.adjoint(self);
                 auto dst = g.adjoint_mut(in);
                 for (std::size_t i = 0; i < up.size(); ++i) {
                   const double e = std::exp(-std::abs(x[i]));
                   const double sig = x[i] >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
                   dst[i] += up[i] * sig;
                 }
               });
}

Var log_sigmoid(Var z) { return neg(softplus(neg(z))); }

}  // namespace rbo
