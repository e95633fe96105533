#pragma once

#include <cstddef>
#include <cstdint>

#include "rbo/geometry.hpp"
#include "rbo/losses.hpp"

namespace rbo::loss {

struct ObjectiveConfig {
  bool rank_cls = false;
  bool rank_iou = false;
  bool rank_iou_ori = false;
  bool two_stage_ce = false;
  double alpha = 0.5;
  double beta = 4.0;
  double gamma = 3.0;
  double tau_neg = 0.5;
  // Margin of the coupled IoU ranking ablation.
  double ori_alpha = 0.5;
  LossWeights weights;
  // Positives beyond this count are uniformly subsampled before pairing.
  std::size_t pair_cap = 256;
};

struct ImageObjective {
  Combined loss;
  RankBatch batch;
  std::size_t n_hard = 0;
  // P_plus - P_minus; P_minus over the hard set, or over every negative when
  // the hard set is empty. Only meaningful when has_margin.
  double margin = 0.0;
  bool has_margin = false;
};

// Full per-image objective from the head outputs.
//   cls_map [2,H,W] raw class logits, loc_map [4,H,W] positive ltrb offsets
//   in search pixels, labels from assign_labels, gt in search coordinates.
// `rank_terms` false drops both ranking terms (warmup). `sample_seed` drives
// positive subsampling above pair_cap.
ImageObjective image_objective(Var cls_map, Var loc_map, const geom::LabelMap& labels,
                               const geom::Box& gt, const ObjectiveConfig& config,
                               std::uint64_t sample_seed, bool rank_terms = true);

// Decoded boxes at the given locations of a [4,H,W] offset map.
geom::BoxVar decode_at(Var loc_map, const geom::HeadGrid& grid,
                       const std::vector<std::size_t>& locations);

}  // namespace rbo::loss
