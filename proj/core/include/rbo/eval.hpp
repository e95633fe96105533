#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rbo/geometry.hpp"
#include "rbo/model.hpp"
#include "rbo/synth.hpp"
#include "rbo/train.hpp"

namespace rbo::eval {

struct CurvePoint {
  double x = 0.0;
  double rate = 0.0;
};

// Thresholds 0, 0.05, ..., 1. By default a frame succeeds when iou >= t, so
// a perfect tracker scores exactly 1; `strict` uses iou > t instead.
std::vector<CurvePoint> success_curve(const std::vector<geom::Box>& pred, const std::vector<geom::Box>& gt,
                                      bool strict = false);
double success_auc(const std::vector<geom::Box>& pred, const std::vector<geom::Box>& gt, bool strict = false);

// Fraction of frames with center distance <= radius, for radius 0..max_radius.
std::vector<CurvePoint> precision_curve(const std::vector<geom::Box>& pred, const std::vector<geom::Box>& gt,
                                        std::size_t max_radius = 50);
double dp_at(const std::vector<geom::Box>& pred, const std::vector<geom::Box>& gt, double radius);

// (concordant - discordant) / C(n,2); tied pairs count as neither.
double kendall_tau(const std::vector<double>& a, const std::vector<double>& b);

// Ranking diagnostics of one search crop.
struct FrameDiagnostics {
  bool rank_consistent = false;  // global argmax location lies inside gt
  bool has_margin = false;       // some grid location falls on a distractor
  double margin = 0.0;           // max target score - max distractor score
  std::vector<double> pos_scores;
  std::vector<double> pos_ious;
};

// `scores` are foreground probabilities over the grid; `boxes` the decoded
// box at every location. Distractor locations are grid points inside a
// distractor box and outside gt.
FrameDiagnostics diagnose(const std::vector<double>& scores, const std::vector<geom::Box>& boxes,
                          const geom::HeadGrid& grid, const geom::Box& gt,
                          const std::vector<geom::Box>& distractors);

FrameDiagnostics diagnose(const ModelParams& model, const synth::CropPair& pair,
                          const std::vector<geom::Box>& distractors_in_search);

struct SequenceMetrics {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::size_t frames = 0;
  double success_auc = 0.0;
  double dp20 = 0.0;
  double rank_consistency = 0.0;
  double distractor_margin = 0.0;
  double kendall_tau = 0.0;
  std::size_t margin_frames = 0;
  std::size_t tau_frames = 0;
};

struct MetricReport {
  std::vector<SequenceMetrics> sequences;
  // Tracking metrics average over sequences; ranking diagnostics pool every
  // diagnosed frame.
  SequenceMetrics aggregate;
  std::vector<CurvePoint> success;
  std::vector<CurvePoint> precision;
};

struct EvalOptions {
  bool cosine_window = false;
  // Diagnostic search crops are displaced uniformly within +-shift_max.
  double shift_max = 24.0;
  std::uint64_t seed = 9001;
};

// Held-out sequences; depend only on the eval and data sections, never on
// the training seed, so every arm sees the same set.
std::vector<synth::SequenceSpec> held_out_specs(const TrainConfig& config);
EvalOptions eval_options(const TrainConfig& config);

MetricReport evaluate(const ModelParams& model, const std::vector<synth::Sequence>& sequences,
                      const EvalOptions& options);

std::string metrics_csv(const MetricReport& report);
std::string curve_csv(const std::vector<CurvePoint>& curve, const std::string& x_name);
// metrics.csv, success.csv, precision.csv
void write_report(const MetricReport& report, const std::filesystem::path& dir);

// Loss-flag arms of the ablation, in table order.
const std::vector<std::string>& standard_arms();
// `base` with loss flags set for `arm`; throws ConfigError for unknown arms.
TrainConfig arm_config(const TrainConfig& base, const std::string& arm);

struct ArmRun {
  TrainConfig config;
  MetricReport report;
  // Mean training losses over the last 10% of iterations.
  double train_rank_cls = 0.0;
  double train_rank_iou = 0.0;
  double train_total = 0.0;
};

ArmRun summarize(const TrainConfig& config, const std::vector<LogRow>& log, MetricReport report);

// One row per arm, ordered as `arms`. Throws Error naming a missing arm.
std::string ablation_table_csv(const std::vector<ArmRun>& runs, const std::vector<std::string>& arms);

}  // namespace rbo::eval
