#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rbo/geometry.hpp"
#include "rbo/graph.hpp"

namespace rbo::loss {

// Relative weights of (cls + loc), rank_cls and rank_iou in the total.
struct LossWeights {
  double rpn = 1.0;
  double rank_cls = 0.5;
  double rank_iou = 0.25;
};

struct LossBreakdown {
  double cls = 0.0;
  double loc = 0.0;
  double rank_cls = 0.0;
  double rank_iou = 0.0;
  double total = 0.0;
  bool skipped_rank_cls = false;
};

struct LossTerms {
  Var cls;
  Var loc;
  Var rank_cls;
  Var rank_iou;
  bool skipped_rank_cls = false;
};

struct Combined {
  Var total;
  LossBreakdown breakdown;
};

// Per-image score collections consumed by the ranking losses. Absent members
// mean the corresponding set is empty.
struct RankBatch {
  std::optional<Var> pos_scores;  // p_j+, post-softmax foreground confidence
  std::optional<Var> pos_ious;    // IoU of the decoded box at each positive
  std::optional<Var> neg_scores;  // every negative location's confidence

  std::size_t n_pos() const { return pos_scores ? pos_scores->size() : 0; }
};

// Foreground probability per location from a [2,H,W] class map (channel 0
// background, channel 1 foreground). A two-way softmax over the class channel
// equals sigmoid(a_fg - a_bg), which is what is computed.
Var fg_scores(Var cls_map);
// a_fg - a_bg per location, flattened.
Var fg_logits(Var cls_map);

// Binary cross-entropy averaged separately over positives and negatives and
// summed; ignore locations are excluded. Throws if both sets are empty.
Var cross_entropy(Var cls_map, const geom::LabelMap& labels);

// cross_entropy plus a second cross-entropy stage over negatives whose
// foreground score exceeds tau_neg.
Var two_stage_ce(Var cls_map, const geom::LabelMap& labels, double tau_neg);

// Entries strictly above tau, order preserved.
std::vector<std::size_t> hard_negative_indices(std::span<const double> neg_scores, double tau);
std::vector<double> hard_negative_set(std::span<const double> neg_scores, double tau);

struct Expectations {
  Var p_plus;   // mean positive score
  Var p_minus;  // softmax(hard)-weighted mean of hard negative scores
};

Expectations expectations(Var pos_scores, Var hard_negs);

// (1/beta) * log(1 + exp(beta * (p_minus - p_plus + alpha))), stable form.
Var rank_cls_loss(Var p_minus, Var p_plus, double alpha, double beta);

// Pairwise IoU-guided ranking loss over the positives:
//   (1/n) [ sum_{v_i > v_j} exp(-gamma (p_i - p_j))
//         + sum_{p_i > p_j} exp(-gamma (v_i - v_j)) ]
// In the second sum v_j is read from `frozen_ious` and receives no gradient.
// Ties enter neither sum; n <= 1 gives 0.
Var rank_iou_loss(Var pos_scores, Var pos_ious, Var frozen_ious, double gamma);
// Same, with frozen_ious = detach(pos_ious).
Var rank_iou_loss(Var pos_scores, Var pos_ious, double gamma);

// Coupled variant: mean over ordered pairs i != j of
// (1/alpha) log(1 + exp(-alpha (p_i - p_j)(v_i - v_j))). Ablation only.
Var rank_iou_loss_ori(Var pos_scores, Var pos_ious, double alpha);

// total = (cls + loc) * w.rpn + rank_cls * w.rank_cls + rank_iou * w.rank_iou.
// Throws NumericError on a non-finite part.
Combined combine(const LossTerms& terms, const LossWeights& weights = {});
LossBreakdown combine(const LossBreakdown& parts, const LossWeights& weights = {});

}  // namespace rbo::loss
