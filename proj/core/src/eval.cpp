#include "rbo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "rbo/error.hpp"
#include "rbo/losses.hpp"
#include "rbo/rng.hpp"
#include "rbo/track.hpp"

namespace rbo::eval {

namespace {

void check_lengths(const std::vector<geom::Box>& pred, const std::vector<geom::Box>& gt) {
  if (pred.size() != gt.size()) throw ShapeError("prediction and ground truth lengths differ");
  if (gt.empty()) throw ShapeError("no frames to score");
}

constexpr std::size_t kThresholds = 21;

bool contains(const geom::Box& b, geom::Point p) { return b.contains(p.x, p.y); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::vector<CurvePoint> success_curve(const std::vector<geom::Box>& pred, const std::vector<geom::Box>& gt,
                                      bool strict) {
  check_lengths(pred, gt);
  std::vector<double> ious(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) ious[i] = geom::iou(pred[i], gt[i]);
  std::vector<CurvePoint> curve;
  for (std::size_t k = 0; k < kThresholds; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(kThresholds - 1);
    std::size_t hits = 0;
    for (double v : ious) hits += strict ? (v > t) : (v >= t);
    curve.push_back({t, static_cast<double>(hits) / static_cast<double>(ious.size())});
  }
  return curve;
}

double success_auc(const std::vector<geom::Box>& pred, const std::vector<geom::Box>& gt, bool strict) {
  double total = 0.0;
  for (const auto& p : success_curve(pred, gt, strict)) total += p.rate;
  return total / static_cast<double>(kThresholds);
}

std::vector<CurvePoint> precision_curve(const std::vector<geom::Box>& pred, const std::vector<geom::Box>& gt,
                                        std::size_t max_radius) {
  check_lengths(pred, gt);
  std::vector<CurvePoint> curve;
  for (std::size_t r = 0; r <= max_radius; ++r) curve.push_back({static_cast<double>(r), dp_at(pred, gt, r)});
  return curve;
}

double dp_at(const std::vector<geom::Box>& pred, const std::vector<geom::Box>& gt, double radius) {
  check_lengths(pred, gt);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) hits += geom::center_distance(pred[i], gt[i]) <= radius;
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

double kendall_tau(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("kendall_tau: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw ShapeError("kendall_tau needs at least two items");
  long long score = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = (a[i] - a[j]) * (b[i] - b[j]);
      if (s > 0) ++score;
      else if (s < 0) --score;
    }
  }
  return static_cast<double>(score) / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

FrameDiagnostics diagnose(const std::vector<double>& scores, const std::vector<geom::Box>& boxes,
                          const geom::HeadGrid& grid, const geom::Box& gt,
                          const std::vector<geom::Box>& distractors) {
  if (scores.size() != grid.size() || boxes.size() != grid.size())
    throw ShapeError("diagnose: maps do not match head grid");
  FrameDiagnostics d;
  const std::size_t best =
      static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  d.rank_consistent = contains(gt, grid.point(best));

  const geom::LabelMap labels = geom::assign_labels(grid, gt);
  for (std::size_t i : labels.positives) {
    d.pos_scores.push_back(scores[i]);
    d.pos_ious.push_back(geom::iou(boxes[i], gt));
  }

  double target_max = -1.0;
  double distractor_max = -1.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const geom::Point p = grid.point(i);
    if (contains(gt, p)) {
      target_max = std::max(target_max, scores[i]);
      continue;
    }
    for (const auto& box : distractors) {
      if (contains(box, p)) {
        distractor_max = std::max(distractor_max, scores[i]);
        break;
      }
    }
  }
  if (target_max >= 0.0 && distractor_max >= 0.0) {
    d.has_margin = true;
    d.margin = target_max - distractor_max;
  }
  return d;
}

FrameDiagnostics diagnose(const ModelParams& model, const synth::CropPair& pair,
                          const std::vector<geom::Box>& distractors_in_search) {
  Graph g;
  const BoundModel m = bind_frozen(g, model);
  const HeadOutput head = forward(g, m, pair.templ, pair.search);
  const std::vector<double>& scores = loss::fg_scores(head.cls).value().values();
  const Tensor& lm = head.loc.value();
  const std::size_t hw = head.grid.size();
  std::vector<geom::Box> boxes(hw);
  for (std::size_t i = 0; i < hw; ++i)
    boxes[i] = geom::decode(head.grid.point(i), {lm[i], lm[hw + i], lm[2 * hw + i], lm[3 * hw + i]});
  return diagnose(scores, boxes, head.grid, pair.gt, distractors_in_search);
}

std::vector<synth::SequenceSpec> held_out_specs(const TrainConfig& config) {
  std::vector<synth::SequenceSpec> specs;
  for (std::size_t i = 0; i < config.eval.sequences; ++i)
    specs.push_back(config.data.sample_spec(derive_seed(config.eval.seed, i), config.eval.frames));
  return specs;
}

EvalOptions eval_options(const TrainConfig& config) {
  return {config.eval.cosine_window, config.data.shift_max, derive_seed(config.eval.seed, 0x5eed)};
}

MetricReport evaluate(const ModelParams& model, const std::vector<synth::Sequence>& sequences,
                      const EvalOptions& options) {
  if (sequences.empty()) throw Error("no sequences to evaluate");
  const ModelConfig& cfg = model.config;
  MetricReport report;
  std::vector<geom::Box> all_pred;
  std::vector<geom::Box> all_gt;
  std::size_t diag_frames = 0;
  std::size_t consistent = 0;
  double margin_sum = 0.0;
  double tau_sum = 0.0;
  auto& agg = report.aggregate;

  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const synth::Sequence& seq = sequences[s];
    SequenceMetrics m;
    m.index = s;
    m.seed = seq.spec.seed;
    m.frames = seq.frames.size();

    TrackOptions topts;
    topts.cosine_window = options.cosine_window;
    const auto pred = track(model, seq, topts);
    m.success_auc = success_auc(pred, seq.gt);
    m.dp20 = dp_at(pred, seq.gt, 20.0);
    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    all_gt.insert(all_gt.end(), seq.gt.begin(), seq.gt.end());

    std::size_t seq_consistent = 0;
    double seq_margin = 0.0;
    double seq_tau = 0.0;
    for (std::size_t f = 1; f < seq.frames.size(); ++f) {
      Rng rng(derive_seed(options.seed, (static_cast<std::uint64_t>(s) << 32) | f));
      const double k = options.shift_max;
      const geom::Point shift{rng.uniform(-k, k), rng.uniform(-k, k)};
      const synth::CropPair pair = synth::crop_pair(seq, f, cfg.template_size, cfg.search_size, shift);
      std::vector<geom::Box> dist;
      for (const auto& b : seq.distractors[f]) dist.push_back(pair.search_window.to_crop(b));
      const FrameDiagnostics d = diagnose(model, pair, dist);
      seq_consistent += d.rank_consistent;
      if (d.has_margin) {
        seq_margin += d.margin;
        ++m.margin_frames;
      }
      if (d.pos_scores.size() >= 2) {
        seq_tau += kendall_tau(d.pos_scores, d.pos_ious);
        ++m.tau_frames;
      }
    }
    const std::size_t n_diag = seq.frames.size() > 1 ? seq.frames.size() - 1 : 0;
    if (n_diag) m.rank_consistency = static_cast<double>(seq_consistent) / static_cast<double>(n_diag);
    if (m.margin_frames) m.distractor_margin = seq_margin / static_cast<double>(m.margin_frames);
    if (m.tau_frames) m.kendall_tau = seq_tau / static_cast<double>(m.tau_frames);

    diag_frames += n_diag;
    consistent += seq_consistent;
    margin_sum += seq_margin;
    tau_sum += seq_tau;
    agg.margin_frames += m.margin_frames;
    agg.tau_frames += m.tau_frames;
    agg.success_auc += m.success_auc;
    agg.dp20 += m.dp20;
    agg.frames += m.frames;
    report.sequences.push_back(m);
  }

  const double n = static_cast<double>(sequences.size());
  agg.index = sequences.size();
  agg.success_auc /= n;
  agg.dp20 /= n;
  if (diag_frames) agg.rank_consistency = static_cast<double>(consistent) / static_cast<double>(diag_frames);
  if (agg.margin_frames) agg.distractor_margin = margin_sum / static_cast<double>(agg.margin_frames);
  if (agg.tau_frames) agg.kendall_tau = tau_sum / static_cast<double>(agg.tau_frames);
  report.success = success_curve(all_pred, all_gt);
  report.precision = precision_curve(all_pred, all_gt);
  return report;
}

std::string metrics_csv(const MetricReport& report) {
  std::string out =
      "# rbo metrics v1\n"
      "sequence,seed,frames,success_auc,dp20,rank_consistency,distractor_margin,kendall_tau,"
      "margin_frames,tau_frames\n";
  auto row = [&out](const std::string& name, const SequenceMetrics& m) {
    out += name + "," + std::to_string(m.seed) + "," + std::to_string(m.frames) + "," + fmt(m.success_auc) +
           "," + fmt(m.dp20) + "," + fmt(m.rank_consistency) + "," + fmt(m.distractor_margin) + "," +
           fmt(m.kendall_tau) + "," + std::to_string(m.margin_frames) + "," + std::to_string(m.tau_frames) +
           "\n";
  };
  for (const auto& m : report.sequences) row(std::to_string(m.index), m);
  row("all", report.aggregate);
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& curve, const std::string& x_name) {
  std::string out = x_name + ",rate\n";
  for (const auto& p : curve) out += fmt(p.x) + "," + fmt(p.rate) + "\n";
  return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace

void write_report(const MetricReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "metrics.csv", metrics_csv(report));
  write_file(dir / "success.csv", curve_csv(report.success, "threshold"));
  write_file(dir / "precision.csv", curve_csv(report.precision, "radius"));
}

const std::vector<std::string>& standard_arms() {
  static const std::vector<std::string> arms{"baseline", "cr", "cr_igr_ori", "cr_igr"};
  return arms;
}

TrainConfig arm_config(const TrainConfig& base, const std::string& arm) {
  TrainConfig c = base;
  c.arm = arm;
  auto& o = c.objective;
  o.rank_cls = o.rank_iou = o.rank_iou_ori = o.two_stage_ce = false;
  if (arm == "baseline") {
  } else if (arm == "cr") {
    o.rank_cls = true;
  } else if (arm == "cr_igr_ori") {
    o.rank_cls = o.rank_iou_ori = true;
  } else if (arm == "cr_igr") {
    o.rank_cls = o.rank_iou = true;
  } else if (arm == "two_stage") {
    o.two_stage_ce = true;
  } else {
    throw ConfigError("arm", "unknown arm '" + arm + "'");
  }
  return c;
}

ArmRun summarize(const TrainConfig& config, const std::vector<LogRow>& log, MetricReport report) {
  ArmRun run{config, std::move(report)};
  if (log.empty()) return run;
  const std::size_t tail = std::max<std::size_t>(1, log.size() / 10);
  for (std::size_t i = log.size() - tail; i < log.size(); ++i) {
    run.train_rank_cls += log[i].loss.rank_cls;
    run.train_rank_iou += log[i].loss.rank_iou;
    run.train_total += log[i].loss.total;
  }
  run.train_rank_cls /= static_cast<double>(tail);
  run.train_rank_iou /= static_cast<double>(tail);
  run.train_total /= static_cast<double>(tail);
  return run;
}

std::string ablation_table_csv(const std::vector<ArmRun>& runs, const std::vector<std::string>& arms) {
  std::string out =
      "# rbo ablation v1\n"
      "arm,seed,eval_seed,config_digest,rank_cls,rank_iou,rank_iou_ori,two_stage_ce,success_auc,dp20,"
      "rank_consistency,distractor_margin,kendall_tau,train_total,train_rank_cls,train_rank_iou,"
      "rank_cls_status,rank_iou_status\n";
  auto flag = [](bool v) { return std::string(v ? "1" : "0"); };
  auto status = [](bool v) { return std::string(v ? "active" : "inactive"); };
  for (const auto& arm : arms) {
    const auto it = std::find_if(runs.begin(), runs.end(), [&](const ArmRun& r) { return r.config.arm == arm; });
    if (it == runs.end()) throw Error("ablation table is missing arm '" + arm + "'");
    const auto& o = it->config.objective;
    const auto& a = it->report.aggregate;
    out += arm + "," + std::to_string(it->config.seed) + "," + std::to_string(it->config.eval.seed) + "," +
           content_digest(it->config.echo()) + "," + flag(o.rank_cls) + "," + flag(o.rank_iou) + "," +
           flag(o.rank_iou_ori) + "," + flag(o.two_stage_ce) + "," + fmt(a.success_auc) + "," + fmt(a.dp20) +
           "," + fmt(a.rank_consistency) + "," + fmt(a.distractor_margin) + "," + fmt(a.kendall_tau) + "," +
           fmt(it->train_total) + "," + fmt(it->train_rank_cls) + "," + fmt(it->train_rank_iou) + "," +
           status(o.rank_cls) + "," + status(o.rank_iou || o.rank_iou_ori) + "\n";
  }
  return out;
}

}  // namespace rbo::eval
