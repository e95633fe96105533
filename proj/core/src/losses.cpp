#include "rbo/losses.hpp"

#include <cmath>
#include <string>

#include "rbo/error.hpp"
#include "rbo/ops.hpp"

namespace rbo::loss {

Var fg_logits(Var cls_map) {
  const auto& s = cls_map.shape();
  if (s.size() != 3 || s[0] != 2) {
    throw ShapeError("class map must be [2,H,W], got " + shape_str(s));
  }
  const std::size_t n = s[1] * s[2];
  return reshape(slice(cls_map, 1, 2) - slice(cls_map, 0, 1), {n});
}

Var fg_scores(Var cls_map) { return sigmoid(fg_logits(cls_map)); }

namespace {

// -mean(log p) over the selected locations, p = sigmoid(sign * z).
Var mean_nll(Var z, const std::vector<std::size_t>& idx, double sign) {
  Var zs = gather(z, idx);
  if (sign < 0) zs = neg(zs);
  return neg(mean(log_sigmoid(zs)));
}

}  // namespace

Var cross_entropy(Var cls_map, const geom::LabelMap& labels) {
  if (labels.n_pos() == 0 && labels.n_neg() == 0) {
    throw Error("cross_entropy: no positive and no negative locations");
  }
  const Var z = fg_logits(cls_map);
  if (z.size() != labels.labels.size()) throw ShapeError("cross_entropy: label map size mismatch");
  if (labels.n_neg() == 0) return mean_nll(z, labels.positives, 1.0);
  if (labels.n_pos() == 0) return mean_nll(z, labels.negatives, -1.0);
  return mean_nll(z, labels.positives, 1.0) + mean_nll(z, labels.negatives, -1.0);
}

Var two_stage_ce(Var cls_map, const geom::LabelMap& labels, double tau_neg) {
  const Var first = cross_entropy(cls_map, labels);
  if (labels.n_neg() == 0) return first;
  const Var z = fg_logits(cls_map);
  std::vector<double> neg_scores;
  neg_scores.reserve(labels.n_neg());
  for (std::size_t i : labels.negatives) {
    neg_scores.push_back(1.0 / (1.0 + std::exp(-z[i])));
  }
  std::vector<std::size_t> hard;
  for (std::size_t k : hard_negative_indices(neg_scores, tau_neg)) hard.push_back(labels.negatives[k]);
  if (hard.empty()) return first;
  return first + mean_nll(z, hard, -1.0);
}

std::vector<std::size_t> hard_negative_indices(std::span<const double> neg_scores, double tau) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < neg_scores.size(); ++i) {
    if (neg_scores[i] > tau) out.push_back(i);
  }
  return out;
}

std::vector<double> hard_negative_set(std::span<const double> neg_scores, double tau) {
  std::vector<double> out;
  for (double s : neg_scores) {
    if (s > tau) out.push_back(s);
  }
  return out;
}

Expectations expectations(Var pos_scores, Var hard_negs) {
  return {mean(pos_scores), sum(softmax(hard_negs) * hard_negs)};
}

Var rank_cls_loss(Var p_minus, Var p_plus, double alpha, double beta) {
  if (alpha < 0.0) throw Error("rank_cls_loss: alpha must be >= 0");
  if (!(beta > 0.0)) throw Error("rank_cls_loss: beta must be > 0");
  return scale(softplus(scale(shift(p_minus - p_plus, alpha), beta)), 1.0 / beta);
}

Var rank_iou_loss(Var pos_scores, Var pos_ious, Var frozen_ious, double gamma) {
  if (!(gamma > 0.0)) throw Error("rank_iou_loss: gamma must be > 0");
  const std::size_t n = pos_scores.size();
  if (pos_ious.size() != n || frozen_ious.size() != n) {
    throw ShapeError("rank_iou_loss: scores and IoUs differ in length");
  }
  Graph& g = pos_scores.graph();
  if (n <= 1) return g.constant(0.0);

  const auto& p = pos_scores.value();
  const auto& v = pos_ious.value();
  std::vector<std::size_t> i_by_iou, j_by_iou, i_by_score, j_by_score;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (v[i] > v[j]) {
        i_by_iou.push_back(i);
        j_by_iou.push_back(j);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (p[i] > p[j]) {
        i_by_score.push_back(i);
        j_by_score.push_back(j);
      }
    }
  }

  Var score_term = g.constant(0.0);
  if (!i_by_iou.empty()) {
    const Var diff = gather(pos_scores, i_by_iou) - gather(pos_scores, j_by_iou);
    score_term = sum(exp(scale(diff, -gamma)));
  }
  Var iou_term = g.constant(0.0);
  if (!i_by_score.empty()) {
    const Var diff = gather(pos_ious, i_by_score) - gather(frozen_ious, j_by_score);
    iou_term = sum(exp(scale(diff, -gamma)));
  }
  return (score_term + iou_term) / g.constant(static_cast<double>(n));
}

Var rank_iou_loss(Var pos_scores, Var pos_ious, double gamma) {
  return rank_iou_loss(pos_scores, pos_ious, detach(pos_ious), gamma);
}

Var rank_iou_loss_ori(Var pos_scores, Var pos_ious, double alpha) {
  if (!(alpha > 0.0)) throw Error("rank_iou_loss_ori: alpha must be > 0");
  const std::size_t n = pos_scores.size();
  if (pos_ious.size() != n) throw ShapeError("rank_iou_loss_ori: scores and IoUs differ in length");
  if (n <= 1) return pos_scores.graph().constant(0.0);
  std::vector<std::size_t> is, js;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      is.push_back(i);
      js.push_back(j);
    }
  }
  const Var dp = gather(pos_scores, is) - gather(pos_scores, js);
  const Var dv = gather(pos_ious, is) - gather(pos_ious, js);
  return scale(mean(softplus(scale(dp * dv, -alpha))), 1.0 / alpha);
}

namespace {
void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw NumericError(std::string("combine: non-finite ") + name + " term");
}
}  // namespace

LossBreakdown combine(const LossBreakdown& parts, const LossWeights& w) {
  require_finite(parts.cls, "cls");
  require_finite(parts.loc, "loc");
  require_finite(parts.rank_cls, "rank_cls");
  require_finite(parts.rank_iou, "rank_iou");
  LossBreakdown out = parts;
  if (out.skipped_rank_cls) out.rank_cls = 0.0;
  out.total = (out.cls + out.loc) * w.rpn + out.rank_cls * w.rank_cls + out.rank_iou * w.rank_iou;
  return out;
}

Combined combine(const LossTerms& terms, const LossWeights& w) {
  LossBreakdown parts;
  parts.cls = terms.cls.item();
  parts.loc = terms.loc.item();
  parts.rank_cls = terms.rank_cls.item();
  parts.rank_iou = terms.rank_iou.item();
  parts.skipped_rank_cls = terms.skipped_rank_cls;
  if (terms.skipped_rank_cls && parts.rank_cls != 0.0) {
    throw Error("combine: skipped rank_cls term must be zero");
  }
  LossBreakdown values = combine(parts, w);
  const Var total = scale(terms.cls + terms.loc, w.rpn) + scale(terms.rank_cls, w.rank_cls) +
                    scale(terms.rank_iou, w.rank_iou);
  values.total = total.item();
  return {total, values};
}

}  // namespace rbo::loss
