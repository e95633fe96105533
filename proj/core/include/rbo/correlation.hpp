#pragma once

#include <string_view>

#include "rbo/graph.hpp"

// Matching networks: compare template features Fz [C,Hz,Wz] against search
// features Fx [C,Hx,Wx] and produce a similarity map for the heads.
namespace rbo::corr {

enum class Mode { dw, pw };

Mode parse_mode(std::string_view text);
std::string_view to_string(Mode mode);

// Depth-wise cross-correlation: channel c of Fx correlated with channel c of
// Fz as kernel. Output [C, Hx-Hz+1, Wx-Wz+1].
Var dw_corr(Var fz, Var fx);

struct PwCorr {
  Var similarity;  // [2C, Hx, Wx] = concat(Fx, aggregated template features)
  Var weights;     // [Hz*Wz, Hx*Wx]; every column sums to 1
};

// Simplified pixel-wise correlation. For search pixel j the weight of
// template pixel i is softmax over i of <Fz_i, Fx_j> / sqrt(C). The template
// features aggregated with these weights are reshaped to [C, Hx, Wx] and
// appended to Fx along the channel axis.
PwCorr pw_corr_full(Var fz, Var fx);
Var pw_corr(Var fz, Var fx);

}  // namespace rbo::corr
