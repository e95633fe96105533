#pragma once

#include <cstddef>
#include <vector>

#include "rbo/graph.hpp"

// Differentiable primitives. The arithmetic set is fixed: add, sub, mul, div,
// matmul, conv2d, relu, sigmoid, exp, log, maximum, concat, sum, mean, max,
// softmax. Structural ops (reshape, slice, gather, transpose, detach) move
// values without arithmetic. Everything else composes from these.
//
// Binary elementwise ops accept equal shapes, or one operand with a single
// element which is broadcast.
namespace rbo {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
// Elementwise max; ties route the gradient to `a`.
Var maximum(Var a, Var b);

Var relu(Var a);
Var sigmoid(Var a);
Var exp(Var a);
// Throws NumericError on non-positive input.
Var log(Var a);

Var sum(Var a);
Var mean(Var a);
// Maximum element as a scalar; the subgradient goes to the first maximal entry.
Var max(Var a);

// Softmax over all elements, with max-subtraction.
Var softmax(Var a);
// Softmax of a 2-d tensor along `axis` (0: over rows for each column).
Var softmax(Var a, std::size_t axis);

// [m,k] x [k,n] -> [m,n]
Var matmul(Var a, Var b);
// Valid (unpadded) cross-correlation. input [C,H,W], kernels [O,C,Kh,Kw],
// optional bias [O]. Output [O, (H-Kh)/s+1, (W-Kw)/s+1].
Var conv2d(Var input, Var kernels, std::size_t stride = 1);
Var conv2d(Var input, Var kernels, Var bias, std::size_t stride);

// Concatenation along the leading axis; trailing extents must agree.
Var concat(const std::vector<Var>& parts);

Var reshape(Var a, Shape shape);
Var transpose(Var a);
// Rows [begin, end) of the leading axis.
Var slice(Var a, std::size_t begin, std::size_t end);
// Flat element selection -> 1-d tensor of indices.size() elements.
Var gather(Var a, const std::vector<std::size_t>& indices);
// Same value, no gradient flow.
Var detach(Var a);

// Compositions (no backward of their own).
Var neg(Var a);
Var abs(Var a);
Var minimum(Var a, Var b);
Var scale(Var a, double factor);
Var shift(Var a, double offset);
// log(1 + exp(t)) as relu(t) + log(1 + exp(-|t|)).
Var softplus(Var t);
// log(sigmoid(z)) = -softplus(-z).
Var log_sigmoid(Var z);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }
inline Var operator+(double c, Var a) { return shift(a, c); }
inline Var operator-(Var a, double c) { return shift(a, -c); }
inline Var operator-(double c, Var a) { return shift(neg(a), c); }

}  // namespace rbo
