#include "rbo/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "rbo/error.hpp"
#include "rbo/ops.hpp"
#include "rbo/rng.hpp"

namespace rbo {

synth::SequenceSpec DataConfig::sample_spec(std::uint64_t seed, std::size_t frames) const {
  Rng rng(seed);
  synth::SequenceSpec s;
  s.seed = rng.next();
  s.frames = frames;
  s.width = s.height = image_size;
  s.shape = static_cast<synth::ShapeKind>(rng.index(3));
  s.color = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
  s.target_width = rng.uniform(target_min, target_max);
  s.target_height = rng.uniform(target_min, target_max);
  s.distractors = distractors_min + rng.index(distractors_max - distractors_min + 1);
  s.similarity = rng.uniform(similarity_min, similarity_max);
  s.clutter = rng.uniform(0.0, clutter_max);
  s.motion_sigma = motion_sigma;
  s.distractor_spread = distractor_spread;
  return s;
}

namespace {

const std::set<std::string, std::less<>>& known_keys() {
  static const std::set<std::string, std::less<>> keys = [] {
    std::set<std::string, std::less<>> k{
        "arm", "seed", "lr", "momentum", "batch_size", "iterations", "rank_warmup", "grad_clip",
        "rank_cls", "rank_iou", "rank_iou_ori", "two_stage_ce", "alpha", "beta", "gamma",
        "tau_neg", "ori_alpha", "w_rpn", "w_rank_cls", "w_rank_iou", "pair_cap",
        "data_image_size", "data_target_min", "data_target_max", "data_distractors_min",
        "data_distractors_max", "data_similarity_min", "data_similarity_max", "data_clutter_max",
        "data_motion_sigma", "data_distractor_spread", "data_shift_max", "eval_sequences",
        "eval_frames", "eval_seed", "eval_cosine_window"};
    for (const auto& m : ModelConfig::keys()) k.insert(m);
    return k;
  }();
  return keys;
}

void require(bool ok, const char* field, const char* message) {
  if (!ok) throw ConfigError(field, message);
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  const auto& o = objective;
  require(o.alpha >= 0.0 && std::isfinite(o.alpha), "alpha", "must be >= 0");
  require(o.beta > 0.0 && std::isfinite(o.beta), "beta", "must be > 0");
  require(o.gamma > 0.0 && std::isfinite(o.gamma), "gamma", "must be > 0");
  require(o.ori_alpha > 0.0 && std::isfinite(o.ori_alpha), "ori_alpha", "must be > 0");
  require(o.tau_neg >= 0.0 && o.tau_neg < 1.0, "tau_neg", "must lie in [0,1)");
  require(!(o.rank_iou && o.rank_iou_ori), "rank_iou_ori", "cannot be combined with rank_iou");
  require(o.weights.rpn >= 0.0 && std::isfinite(o.weights.rpn), "w_rpn", "must be >= 0");
  require(o.weights.rank_cls >= 0.0 && std::isfinite(o.weights.rank_cls), "w_rank_cls", "must be >= 0");
  require(o.weights.rank_iou >= 0.0 && std::isfinite(o.weights.rank_iou), "w_rank_iou", "must be >= 0");
  require(o.pair_cap >= 2, "pair_cap", "must be >= 2");
  require(lr > 0.0 && std::isfinite(lr), "lr", "must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, "momentum", "must lie in [0,1)");
  require(grad_clip >= 0.0 && std::isfinite(grad_clip), "grad_clip", "must be >= 0");
  require(batch_size > 0, "batch_size", "must be positive");
  require(iterations > 0, "iterations", "must be positive");
  require(data.target_min >= 4.0, "data_target_min", "must be >= 4");
  require(data.target_max >= data.target_min, "data_target_max", "must be >= data_target_min");
  require(data.distractors_max >= data.distractors_min, "data_distractors_max",
          "must be >= data_distractors_min");
  require(data.similarity_min >= 0.0 && data.similarity_min <= 1.0, "data_similarity_min", "must lie in [0,1]");
  require(data.similarity_max >= data.similarity_min && data.similarity_max <= 1.0, "data_similarity_max",
          "must lie in [data_similarity_min,1]");
  require(data.clutter_max >= 0.0, "data_clutter_max", "must be >= 0");
  require(data.motion_sigma >= 0.0, "data_motion_sigma", "must be >= 0");
  require(data.distractor_spread >= 1.1, "data_distractor_spread", "must be >= 1.1");
  require(data.shift_max >= 0.0, "data_shift_max", "must be >= 0");
  require(static_cast<double>(data.image_size) >= 2.6 * data.target_max, "data_image_size",
          "too small for data_target_max");
  require(eval.sequences > 0, "eval_sequences", "must be positive");
  require(eval.frames >= 2, "eval_frames", "must be >= 2");
}

KeyValues TrainConfig::to_keyvalues() const {
  KeyValues kv;
  kv.set("arm", arm);
  kv.set("seed", std::to_string(seed));
  model.write(kv);
  const auto& o = objective;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv.set("rank_cls", b(o.rank_cls));
  kv.set("rank_iou", b(o.rank_iou));
  kv.set("rank_iou_ori", b(o.rank_iou_ori));
  kv.set("two_stage_ce", b(o.two_stage_ce));
  kv.set("alpha", format_double(o.alpha));
  kv.set("beta", format_double(o.beta));
  kv.set("gamma", format_double(o.gamma));
  kv.set("tau_neg", format_double(o.tau_neg));
  kv.set("ori_alpha", format_double(o.ori_alpha));
  kv.set("w_rpn", format_double(o.weights.rpn));
  kv.set("w_rank_cls", format_double(o.weights.rank_cls));
  kv.set("w_rank_iou", format_double(o.weights.rank_iou));
  kv.set("pair_cap", std::to_string(o.pair_cap));
  kv.set("lr", format_double(lr));
  kv.set("momentum", format_double(momentum));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("iterations", std::to_string(iterations));
  kv.set("rank_warmup", std::to_string(rank_warmup));
  kv.set("grad_clip", format_double(grad_clip));
  kv.set("data_image_size", std::to_string(data.image_size));
  kv.set("data_target_min", format_double(data.target_min));
  kv.set("data_target_max", format_double(data.target_max));
  kv.set("data_distractors_min", std::to_string(data.distractors_min));
  kv.set("data_distractors_max", std::to_string(data.distractors_max));
  kv.set("data_similarity_min", format_double(data.similarity_min));
  kv.set("data_similarity_max", format_double(data.similarity_max));
  kv.set("data_clutter_max", format_double(data.clutter_max));
  kv.set("data_motion_sigma", format_double(data.motion_sigma));
  kv.set("data_distractor_spread", format_double(data.distractor_spread));
  kv.set("data_shift_max", format_double(data.shift_max));
  kv.set("eval_sequences", std::to_string(eval.sequences));
  kv.set("eval_frames", std::to_string(eval.frames));
  kv.set("eval_seed", std::to_string(eval.seed));
  kv.set("eval_cosine_window", b(eval.cosine_window));
  return kv;
}

TrainConfig TrainConfig::from_keyvalues(const KeyValues& kv) {
  kv.reject_unknown(known_keys());
  TrainConfig c;
  c.arm = kv.get_string("arm", c.arm);
  c.seed = kv.get_uint("seed", c.seed);
  c.model = ModelConfig::read(kv);
  auto& o = c.objective;
  o.rank_cls = kv.get_bool("rank_cls", o.rank_cls);
  o.rank_iou = kv.get_bool("rank_iou", o.rank_iou);
  o.rank_iou_ori = kv.get_bool("rank_iou_ori", o.rank_iou_ori);
  o.two_stage_ce = kv.get_bool("two_stage_ce", o.two_stage_ce);
  o.alpha = kv.get_double("alpha", o.alpha);
  o.beta = kv.get_double("beta", o.beta);
  o.gamma = kv.get_double("gamma", o.gamma);
  o.tau_neg = kv.get_double("tau_neg", o.tau_neg);
  o.ori_alpha = kv.get_double("ori_alpha", o.ori_alpha);
  o.weights.rpn = kv.get_double("w_rpn", o.weights.rpn);
  o.weights.rank_cls = kv.get_double("w_rank_cls", o.weights.rank_cls);
  o.weights.rank_iou = kv.get_double("w_rank_iou", o.weights.rank_iou);
  o.pair_cap = kv.get_uint("pair_cap", o.pair_cap);
  c.lr = kv.get_double("lr", c.lr);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.batch_size = kv.get_uint("batch_size", c.batch_size);
  c.iterations = kv.get_uint("iterations", c.iterations);
  c.rank_warmup = kv.get_uint("rank_warmup", c.rank_warmup);
  c.grad_clip = kv.get_double("grad_clip", c.grad_clip);
  auto& d = c.data;
  d.image_size = kv.get_uint("data_image_size", d.image_size);
  d.target_min = kv.get_double("data_target_min", d.target_min);
  d.target_max = kv.get_double("data_target_max", d.target_max);
  d.distractors_min = kv.get_uint("data_distractors_min", d.distractors_min);
  d.distractors_max = kv.get_uint("data_distractors_max", d.distractors_max);
  d.similarity_min = kv.get_double("data_similarity_min", d.similarity_min);
  d.similarity_max = kv.get_double("data_similarity_max", d.similarity_max);
  d.clutter_max = kv.get_double("data_clutter_max", d.clutter_max);
  d.motion_sigma = kv.get_double("data_motion_sigma", d.motion_sigma);
  d.distractor_spread = kv.get_double("data_distractor_spread", d.distractor_spread);
  d.shift_max = kv.get_double("data_shift_max", d.shift_max);
  c.eval.sequences = kv.get_uint("eval_sequences", c.eval.sequences);
  c.eval.frames = kv.get_uint("eval_frames", c.eval.frames);
  c.eval.seed = kv.get_uint("eval_seed", c.eval.seed);
  c.eval.cosine_window = kv.get_bool("eval_cosine_window", c.eval.cosine_window);
  c.validate();
  return c;
}

std::string TrainConfig::echo() const {
  std::map<std::string, std::string> sorted;
  const KeyValues kv = to_keyvalues();
  for (const auto& [k, v] : kv.entries()) sorted[k] = v;
  std::string out;
  for (const auto& [k, v] : sorted) out += k + " = " + v + "\n";
  return out;
}

TrainingStream::TrainingStream(const TrainConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed) {}

synth::CropPair TrainingStream::next() {
  const std::uint64_t id = counter_++;
  const synth::SequenceSpec spec = config_.data.sample_spec(derive_seed(seed_, 2 * id), 2);
  const synth::Sequence seq = synth::gen_sequence(spec);
  Rng rng(derive_seed(seed_, 2 * id + 1));
  const double s = config_.data.shift_max;
  const geom::Point shift{rng.uniform(-s, s), rng.uniform(-s, s)};
  return synth::crop_pair(seq, 1, config_.model.template_size, config_.model.search_size, shift);
}

std::string log_csv_header() { return "iteration,cls,loc,rank_cls,rank_iou,total,margin,grad_norm\n"; }

std::string log_csv_row(const LogRow& r) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%zu,%.10f,%.10f,%.10f,%.10f,%.10f,%.10f,%.10f\n", r.iteration,
                r.loss.cls, r.loss.loc, r.loss.rank_cls, r.loss.rank_iou, r.loss.total, r.margin,
                r.grad_norm);
  return buf;
}

std::string log_csv(const std::vector<LogRow>& rows) {
  std::string out = log_csv_header();
  for (const auto& r : rows) out += log_csv_row(r);
  return out;
}

namespace {

struct BatchResult {
  Var loss;
  LogRow row;
};

BatchResult run_batch(Graph& g, const BoundModel& m, const std::vector<synth::CropPair>& pairs,
                      const loss::ObjectiveConfig& objective, std::uint64_t seed, bool rank_terms) {
  std::vector<Var> totals;
  BatchResult out;
  std::size_t with_margin = 0;
  for (std::size_t b = 0; b < pairs.size(); ++b) {
    const auto& pair = pairs[b];
    const HeadOutput head = forward(g, m, pair.templ, pair.search);
    const geom::LabelMap labels = geom::assign_labels(head.grid, pair.gt);
    const loss::ImageObjective obj = loss::image_objective(head.cls, head.loc, labels, pair.gt, objective,
                                                           derive_seed(seed, b), rank_terms);
    totals.push_back(obj.loss.total);
    const auto& lb = obj.loss.breakdown;
    out.row.loss.cls += lb.cls;
    out.row.loss.loc += lb.loc;
    out.row.loss.rank_cls += lb.rank_cls;
    out.row.loss.rank_iou += lb.rank_iou;
    out.row.loss.total += lb.total;
    if (lb.skipped_rank_cls) ++out.row.skipped_rank_cls;
    if (obj.has_margin) {
      out.row.margin += obj.margin;
      ++with_margin;
    }
  }
  const double n = static_cast<double>(pairs.size());
  out.row.loss.cls /= n;
  out.row.loss.loc /= n;
  out.row.loss.rank_cls /= n;
  out.row.loss.rank_iou /= n;
  out.row.loss.total /= n;
  if (with_margin) out.row.margin /= static_cast<double>(with_margin);
  out.loss = scale(sum(concat(totals)), 1.0 / n);
  return out;
}

}  // namespace

Var batch_objective(Graph& g, const BoundModel& m, const std::vector<synth::CropPair>& pairs,
                    const loss::ObjectiveConfig& objective, std::uint64_t seed) {
  return run_batch(g, m, pairs, objective, seed, true).loss;
}

TrainResult train(const TrainConfig& config, const std::function<void(const LogRow&)>& on_iteration) {
  config.validate();
  TrainResult result;
  result.model = ModelParams::init(config.model, derive_seed(config.seed, 1));
  TrainingStream stream(config, derive_seed(config.seed, 2));
  const std::uint64_t sample_seed = derive_seed(config.seed, 3);

  std::vector<std::vector<double>> velocity;
  for (const auto& p : result.model.params) velocity.emplace_back(p.value.size(), 0.0);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    std::vector<synth::CropPair> pairs;
    pairs.reserve(config.batch_size);
    for (std::size_t b = 0; b < config.batch_size; ++b) pairs.push_back(stream.next());

    result.model.zero_grad();
    LogRow row;
    try {
      Graph g;
      const BoundModel bound = bind(g, result.model);
      BatchResult batch = run_batch(g, bound, pairs, config.objective,
                                    derive_seed(sample_seed, it), it >= config.rank_warmup);
      row = batch.row;
      row.iteration = it;
      if (!std::isfinite(batch.loss.item())) throw NumericError("non-finite loss");
      g.backward(batch.loss);
    } catch (const NumericError& e) {
      throw Divergence(it, e.what(), result.log);
    }

    double sq = 0.0;
    for (const auto& p : result.model.params)
      for (double d : p.value.grad()) sq += d * d;
    row.grad_norm = std::sqrt(sq);
    // Global-norm clipping; 0 disables it.
    const double gscale =
        config.grad_clip > 0.0 && row.grad_norm > config.grad_clip ? config.grad_clip / row.grad_norm : 1.0;

    for (std::size_t k = 0; k < result.model.params.size(); ++k) {
      Tensor& w = result.model.params[k].value;
      auto grad = w.grad();
      auto& vel = velocity[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        vel[i] = config.momentum * vel[i] + gscale * grad[i];
        w[i] -= config.lr * vel[i];
      }
    }
    if (!result.model.all_finite()) throw Divergence(it, "non-finite parameters after update", result.log);

    result.log.push_back(row);
    if (on_iteration) on_iteration(row);
  }
  return result;
}

}  // namespace rbo
