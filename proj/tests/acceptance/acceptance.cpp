// One PASS/FAIL line per acceptance criterion. Exit status is 0 iff every
// selected criterion passes.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "rbo/correlation.hpp"
#include "rbo/eval.hpp"
#include "rbo/gradsuite.hpp"
#include "rbo/losses.hpp"
#include "rbo/objective.hpp"
#include "rbo/ops.hpp"
#include "rbo/rng.hpp"

namespace fs = std::filesystem;
using namespace rbo;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-4;
constexpr double kGradTolEndToEnd = 1e-3;
constexpr double kGradSuiteSeconds = 300.0;
constexpr double kRankClsTol = 1e-12;
constexpr double kPwColumnTol = 1e-6;
constexpr double kRankConsistencyGain = 0.05;
constexpr double kTauGain = 0.10;
constexpr double kArmSeconds = 1800.0;
constexpr double kMetricTol = 1e-12;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Finite-difference gradient suite.
Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_gradient_suite(1, 10);
  const double secs = seconds_since(t0);
  const std::set<std::string> required{"softmax",       "conv2d",        "dw_corr",           "pw_corr",
                                       "cross_entropy", "iou_loss",      "expectations",      "rank_cls_loss",
                                       "rank_iou_loss", "rank_iou_loss_ori", "combine",       "end_to_end_total"};
  std::set<std::string> seen;
  bool ok = secs < kGradSuiteSeconds;
  double worst = 0.0, worst_e2e = 0.0;
  std::string failed;
  for (const auto& r : results) {
    seen.insert(r.op);
    const double tol = r.op == "end_to_end_total" ? kGradTolEndToEnd : kGradTol;
    const bool good = r.points >= 10 && r.max_rel_error < tol && r.tolerance <= tol;
    if (!good) failed += " " + r.op;
    ok = ok && good;
    double& slot = r.op == "end_to_end_total" ? worst_e2e : worst;
    slot = std::max(slot, r.max_rel_error);
  }
  for (const auto& op : required)
    if (!seen.count(op)) {
      ok = false;
      failed += " missing:" + op;
    }
  std::string d = std::to_string(results.size()) + " ops x10 points, worst op error " + fmt("%.2e", worst) +
                  " (tol 1e-4), end-to-end " + fmt("%.2e", worst_e2e) + " (tol 1e-3), " + fmt("%.1f", secs) +
                  " s (limit 300 s)";
  if (!failed.empty()) d += ", failing:" + failed;
  return {ok, d};
}

double brute_rank_iou(const std::vector<double>& p, const std::vector<double>& v, double gamma) {
  const std::size_t n = p.size();
  if (n <= 1) return 0.0;
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (v[i] > v[j]) s1 += std::exp((p[i] - p[j]) * -gamma);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (p[i] > p[j]) s2 += std::exp((v[i] - v[j]) * -gamma);
  return (s1 + s2) / static_cast<double>(n);
}

std::pair<double, double> brute_expectations(const std::vector<double>& pos, const std::vector<double>& hard) {
  double acc = 0.0;
  for (double x : pos) acc += x;
  const double p_plus = acc / static_cast<double>(pos.size());
  double m = hard[0];
  for (double x : hard) m = std::max(m, x);
  std::vector<double> w(hard.size());
  double total = 0.0;
  for (std::size_t i = 0; i < hard.size(); ++i) total += (w[i] = std::exp(hard[i] - m));
  for (double& x : w) x /= total;
  double p_minus = 0.0;
  for (std::size_t i = 0; i < hard.size(); ++i) p_minus += w[i] * hard[i];
  return {p_plus, p_minus};
}

// 2. Brute-force and scalar oracles.
Verdict oracles() {
  Rng rng(2024);
  std::size_t iou_mismatch = 0, exp_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.index(64);
    std::vector<double> p(n), v(n);
    const bool coarse = trial % 2 == 0;  // half the batches force ties
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = coarse ? std::round(rng.uniform() * 20) / 20 : rng.uniform();
      v[i] = coarse ? std::round(rng.uniform() * 20) / 20 : rng.uniform();
    }
    const double gamma = rng.uniform(0.5, 5.0);
    std::vector<double> hard(1 + rng.index(64));
    for (double& h : hard) h = rng.uniform(0.5, 1.0);

    Graph g;
    const Var pv = g.leaf(Tensor::vector(p));
    if (loss::rank_iou_loss(pv, g.leaf(Tensor::vector(v)), gamma).item() != brute_rank_iou(p, v, gamma))
      ++iou_mismatch;
    const loss::Expectations e = loss::expectations(pv, g.leaf(Tensor::vector(hard)));
    const auto [pp, pm] = brute_expectations(p, hard);
    if (e.p_plus.item() != pp || e.p_minus.item() != pm) ++exp_mismatch;
  }

  double worst_cls = 0.0, max_arg = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double target = trial < 2 ? (trial ? -50.0 : 50.0) : rng.uniform(-50.0, 50.0);
    double pm = 0, pp = 0, alpha = 0, gap = 0;
    do {
      pm = rng.uniform();
      pp = rng.uniform();
      alpha = rng.uniform(0.0, 1.0);
      gap = pm - pp + alpha;
    } while (std::abs(gap) < 0.05 || (gap > 0) != (target > 0));
    const double beta = std::abs(target / gap);
    const double z = (pm - pp + alpha) * beta;
    const double direct = (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) / beta;
    Graph g;
    const double got =
        loss::rank_cls_loss(g.leaf(Tensor::scalar(pm)), g.leaf(Tensor::scalar(pp)), alpha, beta).item();
    worst_cls = std::max(worst_cls, std::abs(got - direct));
    max_arg = std::max(max_arg, std::abs(z));
  }
  const bool ok = iou_mismatch == 0 && exp_mismatch == 0 && worst_cls <= kRankClsTol && max_arg >= 49.999;
  return {ok, "1000 batches (n+ <= 64): rank_iou mismatches " + std::to_string(iou_mismatch) +
                  ", expectation mismatches " + std::to_string(exp_mismatch) + "; rank_cls worst error " +
                  fmt("%.2e", worst_cls) + " (tol 1e-12) with |argument| up to " + fmt("%.1f", max_arg)};
}

// 3. Freeze rule on two-positive batches.
Verdict freeze_rule() {
  Rng rng(7);
  std::size_t bad = 0;
  double min_v1 = 1e300;
  for (int trial = 0; trial < 100; ++trial) {
    double p1 = rng.uniform(), p2 = rng.uniform();
    while (p1 == p2) p2 = rng.uniform();
    if (p1 < p2) std::swap(p1, p2);
    const double v1 = rng.uniform(), v2 = rng.uniform();
    Graph g;
    // Scores carry no gradient; the first sum depends on IoUs only through
    // its ordering indicator, so every IoU gradient comes from the second sum.
    const Var p = g.leaf(Tensor::vector({p1, p2}), false);
    const Var v = g.leaf(Tensor::vector({v1, v2}));
    g.backward(loss::rank_iou_loss(p, v, rng.uniform(0.5, 5.0)));
    const Tensor dv = g.grad(v);
    if (dv[1] != 0.0 || dv[0] == 0.0) ++bad;
    min_v1 = std::min(min_v1, std::abs(dv[0]));
  }
  return {bad == 0, "100 batches with p1 > p2: violations " + std::to_string(bad) + ", smallest |dL/dv1| " +
                        fmt("%.3e", min_v1)};
}

// 4. Pixel-wise correlation normalization and passthrough.
Verdict pw_normalization() {
  Rng rng(11);
  double worst = 0.0;
  std::size_t passthrough_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 1 + rng.index(8), hz = 1 + rng.index(5), wz = 1 + rng.index(5);
    const std::size_t hx = 1 + rng.index(9), wx = 1 + rng.index(9);
    Tensor z({c, hz, wz}), x({c, hx, wx});
    for (double& v : z.data()) v = rng.normal() * 3.0;
    for (double& v : x.data()) v = rng.normal() * 3.0;
    Graph g;
    const Var fx = g.leaf(x);
    const corr::PwCorr out = corr::pw_corr_full(g.leaf(z), fx);
    const Tensor& w = out.weights.value();
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    for (std::size_t j = 0; j < cols; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < rows; ++i) s += w[i * cols + j];
      worst = std::max(worst, std::abs(s - 1.0));
    }
    const Tensor& sim = out.similarity.value();
    for (std::size_t i = 0; i < x.size(); ++i)
      if (sim[i] != x[i]) {
        ++passthrough_bad;
        break;
      }
  }
  return {worst <= kPwColumnTol && passthrough_bad == 0,
          "100 random pairs: worst |column sum - 1| " + fmt("%.2e", worst) +
              " (tol 1e-6), pairs with inexact Fx passthrough " + std::to_string(passthrough_bad)};
}

// 6. Images without hard negatives skip the classification ranking term.
Verdict skip_rule() {
  const geom::HeadGrid grid{9, 9, 8.0, 32.0};
  Rng rng(5);
  std::size_t bad = 0, hard_bad = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const geom::Box gt = geom::Box::from_center(rng.uniform(40, 88), rng.uniform(40, 88), rng.uniform(24, 48),
                                                rng.uniform(24, 48));
    const geom::LabelMap labels = geom::assign_labels(grid, gt);
    loss::ObjectiveConfig cfg;
    cfg.rank_cls = cfg.rank_iou = true;
    Tensor cls({2, 9, 9}), loc({4, 9, 9});
    // Every negative well below tau_neg = 0.5.
    for (std::size_t i = 0; i < 81; ++i)
      cls[81 + i] = labels.labels[i] == geom::Label::positive ? rng.uniform(0, 3) : rng.uniform(-6, -1);
    for (double& v : loc.data()) v = rng.uniform(8, 30);
    {
      Graph g;
      const auto obj = loss::image_objective(g.leaf(cls), g.leaf(loc), labels, gt, cfg, trial);
      if (!obj.loss.breakdown.skipped_rank_cls || obj.loss.breakdown.rank_cls != 0.0 || obj.n_hard != 0) ++bad;
    }
    // One negative above the threshold turns the term back on.
    cls[81 + labels.negatives[rng.index(labels.negatives.size())]] = 2.0;
    Graph g;
    const auto obj = loss::image_objective(g.leaf(cls), g.leaf(loc), labels, gt, cfg, trial);
    if (obj.loss.breakdown.skipped_rank_cls || obj.n_hard != 1) ++hard_bad;
  }
  return {bad == 0 && hard_bad == 0, "50 images without hard negatives: unflagged or nonzero " +
                                         std::to_string(bad) + "; controls with one hard negative misflagged " +
                                         std::to_string(hard_bad)};
}

// 8. Metric oracles.
Verdict metric_oracles() {
  using geom::Box;
  const Box gt{0, 0, 10, 10};
  const std::vector<Box> gts(4, gt);
  std::vector<std::pair<double, double>> checks;  // (got, expected)
  checks.emplace_back(eval::success_auc(gts, gts), 1.0);
  checks.emplace_back(eval::success_auc(std::vector<Box>(4, Box{20, 20, 30, 30}), gts), 1.0 / 21.0);
  checks.emplace_back(eval::success_auc(std::vector<Box>(4, Box{0, 0, 10, 5}), gts), 11.0 / 21.0);
  checks.emplace_back(eval::dp_at(gts, gts, 20.0), 1.0);
  checks.emplace_back(eval::dp_at(std::vector<Box>(4, Box{30, 0, 40, 10}), gts, 20.0), 0.0);
  checks.emplace_back(eval::dp_at({gt, Box{30, 0, 40, 10}, gt, Box{0, 30, 10, 40}}, gts, 20.0), 0.5);
  double worst = 0.0;
  for (const auto& [got, want] : checks) worst = std::max(worst, std::abs(got - want));
  return {worst <= kMetricTol, "3 success_auc + 3 dp_at worked examples, worst error " + fmt("%.2e", worst) +
                                   " (tol 1e-12)"};
}

// Ablation runs shared by criteria 5 and 7.

struct AblationRun {
  int code = -1;
  std::string out;
  std::string err;
  std::map<std::string, double> train_seconds;
  std::map<std::string, std::map<std::string, std::string>> rows;  // arm -> column -> value
};

AblationRun run_ablation(const std::string& config, const fs::path& dir) {
  fs::remove_all(dir);
  std::ostringstream out, err;
  AblationRun r;
  r.code = cli::run({"ablation", "--config", config, "--out", dir.string()}, out, err);
  r.out = out.str();
  r.err = err.str();
  const std::regex timing(R"(\[(\w+)\] trained in ([0-9.]+) s)");
  for (std::sregex_iterator it(r.out.begin(), r.out.end(), timing), end; it != end; ++it)
    r.train_seconds[(*it)[1]] = std::stod((*it)[2]);
  std::ifstream table(dir / "ablation.csv");
  std::string line;
  std::vector<std::string> header;
  while (std::getline(table, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (header.empty()) {
      header = cells;
      continue;
    }
    auto& row = r.rows[cells[0]];
    for (std::size_t i = 0; i < cells.size() && i < header.size(); ++i) row[header[i]] = cells[i];
  }
  return r;
}

double cell(const AblationRun& r, const std::string& arm, const std::string& column) {
  return std::stod(r.rows.at(arm).at(column));
}

Verdict ablation_direction(const AblationRun& r) {
  if (r.code != 0) return {false, "ablation exited with " + std::to_string(r.code) + ": " + r.err};
  for (const char* arm : {"baseline", "cr", "cr_igr_ori", "cr_igr"})
    if (!r.rows.count(arm)) return {false, std::string("ablation table lacks arm ") + arm};
  const double rc_gain = cell(r, "cr", "rank_consistency") - cell(r, "baseline", "rank_consistency");
  const double margin_gain = cell(r, "cr", "distractor_margin") - cell(r, "baseline", "distractor_margin");
  const double tau_gain = cell(r, "cr_igr", "kendall_tau") - cell(r, "cr", "kendall_tau");
  std::set<std::string> seeds, eval_seeds;
  for (const auto& [arm, row] : r.rows) {
    seeds.insert(row.at("seed"));
    eval_seeds.insert(row.at("eval_seed"));
  }
  double slowest = 0.0;
  for (const auto& [arm, s] : r.train_seconds) slowest = std::max(slowest, s);
  const bool ok = rc_gain >= kRankConsistencyGain && margin_gain > 0.0 && tau_gain >= kTauGain &&
                  seeds.size() == 1 && eval_seeds.size() == 1 && r.train_seconds.size() == 4 &&
                  slowest < kArmSeconds;
  return {ok, "+CR rank consistency " + fmt("%+.3f", rc_gain) + " (need >= +0.050), margin " +
                  fmt("%+.4f", margin_gain) + " (need > 0); +CR+IGR tau " + fmt("%+.3f", tau_gain) +
                  " over +CR (need >= +0.100); shared seed " + (seeds.size() == 1 ? "yes" : "no") +
                  "; slowest arm " + fmt("%.0f", slowest) + " s (limit 1800 s)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Verdict determinism(const AblationRun& a, const fs::path& da, const AblationRun& b, const fs::path& db) {
  if (a.code != 0 || b.code != 0)
    return {false, "ablation exit codes " + std::to_string(a.code) + " and " + std::to_string(b.code)};
  std::size_t compared = 0, differing = 0;
  std::string first_diff;
  for (const auto& entry : fs::recursive_directory_iterator(da)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    const fs::path rel = fs::relative(entry.path(), da);
    ++compared;
    if (!fs::exists(db / rel) || slurp(entry.path()) != slurp(db / rel)) {
      ++differing;
      if (first_diff.empty()) first_diff = rel.string();
    }
  }
  std::string d = std::to_string(compared) + " CSV files compared, " + std::to_string(differing) + " differ";
  if (!first_diff.empty()) d += " (first: " + first_diff + ")";
  return {compared > 0 && differing == 0, d};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks", "rbo_acceptance"};
  std::string config = RBO_ABLATION_CONFIG;
  std::string work = "acceptance-work";
  std::vector<int> only;
  app.add_option("--config", config, "Ablation config for criteria 5 and 7");
  app.add_option("--work", work, "Scratch directory for ablation runs");
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  auto selected = [&](int k) { return only.empty() || std::count(only.begin(), only.end(), k); };
  const std::map<int, std::string> names{{1, "gradient suite"},     {2, "oracle equivalence"}, {3, "freeze rule"},
                                         {4, "pw normalization"},   {5, "ablation direction"}, {6, "skip rule"},
                                         {7, "determinism"},        {8, "metric oracles"}};
  std::map<int, Verdict> verdicts;
  auto check = [&](int k, const std::function<Verdict()>& fn) {
    if (!selected(k)) return;
    std::fprintf(stderr, "running criterion %d (%s)\n", k, names.at(k).c_str());
    verdicts[k] = fn();
  };

  check(1, gradient_suite);
  check(2, oracles);
  check(3, freeze_rule);
  check(4, pw_normalization);
  check(6, skip_rule);
  check(8, metric_oracles);
  if (selected(5) || selected(7)) {
    const fs::path first = fs::path(work) / "ablation-1";
    const fs::path second = fs::path(work) / "ablation-2";
    std::fprintf(stderr, "running ablation into %s\n", first.string().c_str());
    const AblationRun a = run_ablation(config, first);
    check(5, [&] { return ablation_direction(a); });
    check(7, [&] {
      std::fprintf(stderr, "running ablation into %s\n", second.string().c_str());
      return determinism(a, first, run_ablation(config, second), second);
    });
  }

  // Results in criterion order, one line each.
  int failures = 0;
  for (const auto& [k, v] : verdicts) {
    std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", k, names.at(k).c_str(), v.detail.c_str());
    failures += !v.pass;
  }
  return failures == 0 ? 0 : 1;
}
