#include "rbo/objective.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "rbo/error.hpp"
#include "rbo/ops.hpp"

namespace rbo::loss {

geom::BoxVar decode_at(Var loc_map, const geom::HeadGrid& grid,
                       const std::vector<std::size_t>& locations) {
  const auto& s = loc_map.shape();
  if (s.size() != 3 || s[0] != 4 || s[1] * s[2] != grid.size()) {
    throw ShapeError("offset map must be [4,H,W] matching the head grid, got " + shape_str(s));
  }
  const std::size_t plane = grid.size();
  std::vector<geom::Point> points;
  std::array<std::vector<std::size_t>, 4> idx;
  for (std::size_t loc : locations) {
    points.push_back(grid.point(loc));
    for (std::size_t k = 0; k < 4; ++k) idx[k].push_back(k * plane + loc);
  }
  return geom::decode(loc_map.graph(), points, gather(loc_map, idx[0]), gather(loc_map, idx[1]),
                      gather(loc_map, idx[2]), gather(loc_map, idx[3]));
}

namespace {

// Uniform subsample of `cap` positions out of n, returned sorted.
std::vector<std::size_t> subsample(std::size_t n, std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (n <= cap) return all;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates with an explicit modulo draw keeps this portable.
  for (std::size_t i = 0; i < cap; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(all[i], all[j]);
  }
  all.resize(cap);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

ImageObjective image_objective(Var cls_map, Var loc_map, const geom::LabelMap& labels,
                               const geom::Box& gt, const ObjectiveConfig& config,
                               std::uint64_t sample_seed, bool rank_terms) {
  Graph& g = cls_map.graph();
  ImageObjective out;
  const Var scores = fg_scores(cls_map);

  LossTerms terms;
  terms.cls = config.two_stage_ce ? two_stage_ce(cls_map, labels, config.tau_neg)
                                  : cross_entropy(cls_map, labels);
  terms.loc = g.constant(0.0);
  terms.rank_cls = g.constant(0.0);
  terms.rank_iou = g.constant(0.0);

  if (labels.n_pos() > 0) {
    const geom::BoxVar boxes = decode_at(loc_map, labels.grid, labels.positives);
    const Var ious = geom::iou(boxes, gt);
    terms.loc = 1.0 - mean(ious);
    out.batch.pos_scores = gather(scores, labels.positives);
    out.batch.pos_ious = ious;
  }
  if (labels.n_neg() > 0) out.batch.neg_scores = gather(scores, labels.negatives);

  std::vector<std::size_t> hard;
  if (out.batch.neg_scores) {
    hard = hard_negative_indices(out.batch.neg_scores->value().data(), config.tau_neg);
  }
  out.n_hard = hard.size();

  if (out.batch.pos_scores && out.batch.neg_scores) {
    // Margin from values only, so it is available whether or not rank_cls trains.
    Graph scratch;
    const auto& pos = out.batch.pos_scores->value();
    const auto& negs = out.batch.neg_scores->value();
    std::vector<double> hv;
    if (hard.empty()) {
      hv = negs.values();
    } else {
      for (std::size_t k : hard) hv.push_back(negs[k]);
    }
    const Expectations e = expectations(scratch.constant(Tensor(pos.shape(), pos.values())),
                                        scratch.constant(Tensor::vector(std::move(hv))));
    out.margin = e.p_plus.item() - e.p_minus.item();
    out.has_margin = true;
  }

  if (config.rank_cls) {
    if (!rank_terms || hard.empty() || !out.batch.pos_scores) {
      terms.skipped_rank_cls = true;
    } else {
      const Expectations e = expectations(*out.batch.pos_scores, gather(*out.batch.neg_scores, hard));
      terms.rank_cls = rank_cls_loss(e.p_minus, e.p_plus, config.alpha, config.beta);
    }
  }

  if (rank_terms && (config.rank_iou || config.rank_iou_ori) && out.batch.n_pos() > 1) {
    Var p = *out.batch.pos_scores;
    Var v = *out.batch.pos_ious;
    if (p.size() > config.pair_cap) {
      const auto keep = subsample(p.size(), config.pair_cap, sample_seed);
      p = gather(p, keep);
      v = gather(v, keep);
    }
    terms.rank_iou = config.rank_iou ? rank_iou_loss(p, v, config.gamma)
                                     : rank_iou_loss_ori(p, v, config.ori_alpha);
  }

  out.loss = combine(terms, config.weights);
  return out;
}

}  // namespace rbo::loss
