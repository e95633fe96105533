#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>

#include "rbo/checkpoint.hpp"
#include "rbo/error.hpp"
#include "rbo/eval.hpp"
#include "rbo/gradsuite.hpp"
#include "rbo/keyvalue.hpp"
#include "rbo/synth.hpp"
#include "rbo/train.hpp"

namespace rbo::cli {

namespace fs = std::filesystem;

namespace {

// Missing inputs are a usage problem, not an I/O failure.
struct MissingArtifact : Error {
  using Error::Error;
};

struct VerificationFailure : Error {
  using Error::Error;
};

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// --seed beats RBO_SEED beats the config file.
std::optional<std::uint64_t> seed_override(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  if (const char* env = std::getenv("RBO_SEED"); env && *env) {
    const KeyValues kv = KeyValues::parse(std::string("RBO_SEED = ") + env);
    return kv.get_uint("RBO_SEED", 0);
  }
  return std::nullopt;
}

TrainConfig load_train_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  TrainConfig c = TrainConfig::from_keyvalues(KeyValues::parse(read_file(path)));
  if (seed) c.seed = *seed;
  return c;
}

std::string manifest_text(const std::string& config_path, const TrainConfig& c, const fs::path& dir,
                          const std::string& status) {
  std::string text = "config_path = " + config_path + "\n";
  text += "seed = " + std::to_string(c.seed) + "\n";
  text += "output_dir = " + dir.string() + "\n";
  const std::string config_bytes = config_path.empty() ? std::string() : read_file(config_path);
  text += "input_digest = " + content_digest(config_bytes + "\n" + c.echo()) + "\n";
  text += "status = " + status + "\n";
  std::istringstream echo(c.echo());
  for (std::string line; std::getline(echo, line);) text += "config." + line + "\n";
  return text;
}

struct RunResult {
  int code = kOk;
  std::optional<eval::ArmRun> arm;
};

std::vector<synth::Sequence> held_out(const TrainConfig& c) {
  std::vector<synth::Sequence> seqs;
  for (const auto& spec : eval::held_out_specs(c)) seqs.push_back(synth::gen_sequence(spec));
  return seqs;
}

// Train, checkpoint, log and evaluate one config into `dir`.
RunResult train_run(const TrainConfig& c, const std::string& config_path, const fs::path& dir,
                    std::ostream& out, std::ostream& err) {
  make_dirs(dir);
  const std::size_t every = std::max<std::size_t>(1, c.iterations / 10);
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  try {
    result = train(c, [&](const LogRow& row) {
      if ((row.iteration + 1) % every == 0)
        out << "[" << c.arm << "] iteration " << row.iteration + 1 << "/" << c.iterations
            << " total " << row.loss.total << " margin " << row.margin << "\n"
            << std::flush;
    });
  } catch (const Divergence& d) {
    write_file(dir / "log.csv", log_csv(d.partial_log()));
    write_file(dir / "divergence.txt", std::string(d.what()) + "\n");
    write_file(dir / "manifest.txt", manifest_text(config_path, c, dir, "diverged"));
    err << "rbo: " << d.what() << "\n";
    return {kDiverged, std::nullopt};
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char elapsed[32];
  std::snprintf(elapsed, sizeof(elapsed), "%.1f", seconds);
  out << "[" << c.arm << "] trained in " << elapsed << " s\n";

  save_checkpoint(result.model, dir / "checkpoint.rbo");
  write_file(dir / "log.csv", log_csv(result.log));
  eval::MetricReport report = eval::evaluate(result.model, held_out(c), eval::eval_options(c));
  eval::write_report(report, dir);
  write_file(dir / "manifest.txt", manifest_text(config_path, c, dir, "complete"));
  const auto& a = report.aggregate;
  out << "[" << c.arm << "] auc " << a.success_auc << " dp20 " << a.dp20 << " rank_consistency "
      << a.rank_consistency << " margin " << a.distractor_margin << " tau " << a.kendall_tau << "\n";
  return {kOk, eval::summarize(c, result.log, std::move(report))};
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::istringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) items.push_back(item);
  return items;
}

struct Options {
  std::vector<std::string> configs;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string arms;
  std::string checkpoint;
  std::vector<std::string> sequences;
  std::size_t points = 10;
};

int cmd_synth(const Options& o, std::ostream& out) {
  if (o.configs.size() != 1) throw ConfigError("config", "synth takes exactly one spec file");
  synth::SequenceSpec spec = synth::SequenceSpec::from_keyvalues(KeyValues::parse(read_file(o.configs[0])));
  if (auto s = seed_override(o.seed)) spec.seed = *s;
  spec.validate();
  const synth::Sequence seq = synth::gen_sequence(spec);
  synth::export_sequence(seq, o.out);
  out << "wrote " << seq.frames.size() << " frames to " << o.out << "\n";
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.configs.size() != 1) throw ConfigError("config", "train takes exactly one config file");
  const TrainConfig c = load_train_config(o.configs[0], seed_override(o.seed));
  return train_run(c, o.configs[0], o.out, out, err).code;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty() || !fs::exists(o.checkpoint))
    throw MissingArtifact("checkpoint not found: " + o.checkpoint);
  TrainConfig c;
  std::string config_path;
  if (!o.configs.empty()) {
    config_path = o.configs[0];
    c = load_train_config(config_path, seed_override(o.seed));
  }
  const ModelParams model = load_checkpoint(o.checkpoint);
  std::vector<synth::Sequence> seqs;
  if (o.sequences.empty()) {
    seqs = held_out(c);
  } else {
    for (const auto& dir : o.sequences) {
      if (!fs::exists(fs::path(dir) / "annotations.txt")) throw MissingArtifact("no sequence at " + dir);
      seqs.push_back(synth::import_sequence(dir));
    }
  }
  const eval::MetricReport report = eval::evaluate(model, seqs, eval::eval_options(c));
  eval::write_report(report, o.out);
  const auto& a = report.aggregate;
  out << "auc " << a.success_auc << " dp20 " << a.dp20 << " rank_consistency " << a.rank_consistency
      << " margin " << a.distractor_margin << " tau " << a.kendall_tau << "\n";
  return kOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const std::uint64_t seed = seed_override(o.seed).value_or(1);
  const auto results = run_gradient_suite(seed, o.points);
  std::string failed;
  for (const auto& r : results) {
    char line[160];
    std::snprintf(line, sizeof(line), "%s %-20s max_rel_error %.3e tol %.0e%s\n", r.passed() ? "ok  " : "FAIL",
                  r.op.c_str(), r.max_rel_error, r.tolerance,
                  r.skipped ? (" (" + std::to_string(r.skipped) + " kinked weights resampled)").c_str() : "");
    out << line;
    if (!r.passed() && failed.empty()) failed = r.op;
  }
  if (!failed.empty()) throw VerificationFailure("gradient check failed for " + failed);
  return kOk;
}

int cmd_ablation(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.configs.empty()) throw ConfigError("config", "ablation needs at least one config file");
  const auto seed = seed_override(o.seed);
  const std::vector<std::string> arms = o.arms.empty() ? eval::standard_arms() : split_list(o.arms);
  if (arms.empty()) throw ConfigError("arms", "no arms given");

  // One config: every arm derives from it. Several: each file is one arm,
  // tagged by its `arm` key, and every requested arm must be present.
  std::vector<std::pair<TrainConfig, std::string>> plan;
  if (o.configs.size() == 1) {
    const TrainConfig base = load_train_config(o.configs[0], seed);
    for (const auto& arm : arms) plan.emplace_back(eval::arm_config(base, arm), o.configs[0]);
  } else {
    std::vector<std::pair<TrainConfig, std::string>> given;
    for (const auto& path : o.configs) given.emplace_back(load_train_config(path, seed), path);
    for (const auto& arm : arms) {
      const auto it = std::find_if(given.begin(), given.end(), [&](const auto& g) { return g.first.arm == arm; });
      if (it == given.end()) throw ConfigError("arm", "no config for arm '" + arm + "'");
      plan.push_back(*it);
    }
  }

  make_dirs(o.out);
  std::vector<eval::ArmRun> runs;
  for (const auto& [config, path] : plan) {
    RunResult r = train_run(config, path, fs::path(o.out) / config.arm, out, err);
    if (r.code != kOk) return r.code;
    runs.push_back(std::move(*r.arm));
  }
  write_file(fs::path(o.out) / "ablation.csv", eval::ablation_table_csv(runs, arms));
  out << "wrote " << (fs::path(o.out) / "ablation.csv").string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ranking-based Siamese tracker toolkit", "rbo"};
  app.require_subcommand(1);
  Options o;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic sequence from a spec file");
  synth_cmd->add_option("--config", o.configs, "Sequence spec file")->required();
  synth_cmd->add_option("--out", o.out, "Output directory")->required();
  synth_cmd->add_option("--seed", o.seed, "Override the spec seed");

  auto* train_cmd = app.add_subcommand("train", "Train one arm and evaluate it");
  train_cmd->add_option("--config", o.configs, "Training config file")->required();
  train_cmd->add_option("--out", o.out, "Run directory")->required();
  train_cmd->add_option("--seed", o.seed, "Override the config seed");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--config", o.configs, "Config providing the eval section");
  eval_cmd->add_option("--sequences", o.sequences, "Exported sequence directories");
  eval_cmd->add_option("--out", o.out, "Report directory")->required();
  eval_cmd->add_option("--seed", o.seed, "Override the config seed");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  grad_cmd->add_option("--seed", o.seed, "Seed of the random check points");
  grad_cmd->add_option("--points", o.points, "Random points per op")->check(CLI::PositiveNumber);

  auto* abl_cmd = app.add_subcommand("ablation", "Train every arm and write the ablation table");
  abl_cmd->add_option("--config", o.configs, "Base config, or one config per arm")->required();
  abl_cmd->add_option("--out", o.out, "Output directory")->required();
  abl_cmd->add_option("--seed", o.seed, "Seed shared by every arm");
  abl_cmd->add_option("--arms", o.arms, "Comma-separated arm list");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(o, out);
    if (train_cmd->parsed()) return cmd_train(o, out, err);
    if (eval_cmd->parsed()) return cmd_eval(o, out);
    if (grad_cmd->parsed()) return cmd_gradcheck(o, out);
    if (abl_cmd->parsed()) return cmd_ablation(o, out, err);
  } catch (const ConfigError& e) {
    err << "rbo: config error: " << e.what() << "\n";
    return kUsage;
  } catch (const MissingArtifact& e) {
    err << "rbo: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "rbo: " << e.what() << "\n";
    return kIo;
  } catch (const VerificationFailure& e) {
    err << "rbo: " << e.what() << "\n";
    return kVerification;
  } catch (const NumericError& e) {
    err << "rbo: " << e.what() << "\n";
    return kDiverged;
  } catch (const Error& e) {
    err << "rbo: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace rbo::cli
