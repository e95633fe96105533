#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rbo/error.hpp"
#include "rbo/keyvalue.hpp"
#include "rbo/losses.hpp"
#include "rbo/model.hpp"
#include "rbo/objective.hpp"
#include "rbo/synth.hpp"

namespace rbo {

// Distribution of synthetic scenes used for training and held-out evaluation.
struct DataConfig {
  std::size_t image_size = 192;
  double target_min = 20.0;
  double target_max = 36.0;
  std::size_t distractors_min = 1;
  std::size_t distractors_max = 3;
  double similarity_min = 0.6;
  double similarity_max = 0.95;
  double clutter_max = 0.5;
  double motion_sigma = 3.0;
  double distractor_spread = 2.0;
  // Search crops are displaced uniformly within +-shift_max search pixels.
  double shift_max = 24.0;

  synth::SequenceSpec sample_spec(std::uint64_t seed, std::size_t frames) const;
};

struct EvalConfig {
  std::size_t sequences = 20;
  std::size_t frames = 30;
  std::uint64_t seed = 9001;
  bool cosine_window = false;
};

struct TrainConfig {
  std::string arm = "custom";
  std::uint64_t seed = 1;
  ModelConfig model;
  loss::ObjectiveConfig objective;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 8;
  std::size_t iterations = 2000;
  // Ranking terms stay off for the first rank_warmup iterations.
  std::size_t rank_warmup = 0;
  // Rescale the batch gradient to at most this global L2 norm; 0 disables.
  double grad_clip = 0.0;
  DataConfig data;
  EvalConfig eval;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
  KeyValues to_keyvalues() const;
  static TrainConfig from_keyvalues(const KeyValues& kv);
  // Sorted `key = value` lines; recorded verbatim in every run.
  std::string echo() const;
};

// Deterministic stream of template/search pairs drawn from DataConfig.
class TrainingStream {
 public:
  TrainingStream(const TrainConfig& config, std::uint64_t seed);
  synth::CropPair next();

 private:
  const TrainConfig& config_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

struct LogRow {
  std::size_t iteration = 0;
  loss::LossBreakdown loss;  // batch means
  double margin = 0.0;       // mean P_plus - P_minus over images with a margin
  double grad_norm = 0.0;    // global L2 norm before clipping
  std::size_t skipped_rank_cls = 0;
};

std::string log_csv_header();
std::string log_csv_row(const LogRow& row);
std::string log_csv(const std::vector<LogRow>& rows);

struct TrainResult {
  ModelParams model;
  std::vector<LogRow> log;
};

// Raised when the loss or any parameter becomes non-finite.
class Divergence : public NumericError {
 public:
  Divergence(std::size_t iteration, std::string what, std::vector<LogRow> partial_log)
      : NumericError("diverged at iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration),
        partial_log_(std::move(partial_log)) {}
  std::size_t iteration() const noexcept { return iteration_; }
  const std::vector<LogRow>& partial_log() const noexcept { return partial_log_; }

 private:
  std::size_t iteration_;
  std::vector<LogRow> partial_log_;
};

// Plain SGD with momentum on the mean per-image combined objective.
// Identical config (including seed) gives bit-identical parameters and logs.
TrainResult train(const TrainConfig& config,
                  const std::function<void(const LogRow&)>& on_iteration = {});

// One SGD-free evaluation of the batch objective, for gradient checks.
Var batch_objective(Graph& g, const BoundModel& m, const std::vector<synth::CropPair>& pairs,
                    const loss::ObjectiveConfig& objective, std::uint64_t seed);

}  // namespace rbo
