// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.
// Every criterion also has to finish inside its runtime budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "client.hpp"
#include "sparseemg/classifiers.hpp"
#include "sparseemg/dataset.hpp"
#include "sparseemg/features.hpp"
#include "sparseemg/rng.hpp"
#include "sparseemg/selection.hpp"
#include "sparseemg/service.hpp"
#include "sparseemg/stencil.hpp"
#include "sparseemg/sweep.hpp"
#include "support.hpp"
#include "svg.hpp"

using namespace sparseemg;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

const std::vector<ClassifierKind> kAllClassifiers{ClassifierKind::RF, ClassifierKind::KNN, ClassifierKind::LR,
                                                  ClassifierKind::NB};

std::vector<TrialRecord> user0(const SyntheticSpec& spec) { return generate_synthetic(spec).trials_for("u0"); }

Verdict sparsity_exactness() {
  const SparsityConfig half{0.5, 0.5};
  const double exact = sparsity_score(9, 84.04, half);
  bool ok = std::abs(exact - 12.48) <= 1e-9;

  CounterRng rng(2024);
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const double w1 = rng.uniform();
    const SparsityConfig cfg{w1, 1.0 - w1};
    const int e = 2 + static_cast<int>(rng.below(30));
    const double acc = 100.0 * rng.uniform();
    const int more = e + 1 + static_cast<int>(rng.below(10));
    const double better = acc + (100.0 - acc) * rng.uniform();
    const double s = sparsity_score(e, acc, cfg);
    // more electrodes never help at equal accuracy; more accuracy never hurts
    if (sparsity_score(more, acc, cfg) < s) ++violations;
    if (sparsity_score(e, better, cfg) > s) ++violations;
    // strict when the corresponding weight is positive
    if (cfg.w2 > 0 && !(sparsity_score(more, acc, cfg) > s)) ++violations;
    if (cfg.w1 > 0 && better > acc && !(sparsity_score(e, better, cfg) < s)) ++violations;
    // exact partial derivatives
    if (std::abs(sparsity_score(e + 1, acc, cfg) - s - cfg.w2) > 1e-9) ++violations;
    if (std::abs(sparsity_score(e, acc + 1.0, cfg) - s + cfg.w1) > 1e-9) ++violations;
  }
  ok = ok && violations == 0;
  return {ok, fmt::format("score(9, 84.04) = {:.12f}; {} monotonicity violations over 1000 pairs", exact, violations)};
}

Verdict separation() {
  const std::set<int> informative{2, 5, 9, 12};
  const std::pair<SelectionScheme, const char*> schemes[] = {
      {SelectionScheme::MI, "MI"}, {SelectionScheme::PI, "PI(RF)"}, {SelectionScheme::RMSI, "RMSI"}};
  std::vector<int> hits(3, 0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto trials = user0(testing::synthetic(16, {2, 5, 9, 12}, 0.05, seed));
    const auto features = build_feature_matrix(trials, testing::iota_ids(16));
    for (std::size_t s = 0; s < 3; ++s) {
      const auto ranking = rank_electrodes(schemes[s].first, features,
                                           ClassifierSpec::with_defaults(ClassifierKind::RF, seed), seed);
      const auto top = ranking.top(4);
      if (std::set<int>(top.begin(), top.end()) == informative) ++hits[s];
    }
  }
  const bool ok = std::all_of(hits.begin(), hits.end(), [](int h) { return h >= 19; });
  return {ok, fmt::format("top-4 = informative in MI {}/20, PI(RF) {}/20, RMSI {}/20 (need >= 19)", hits[0],
                          hits[1], hits[2])};
}

Verdict brute_force() {
  const auto trials = user0(testing::synthetic(10, {1, 4, 7}, 0.0, 11));
  const auto candidates = testing::iota_ids(10);
  const auto spec = ClassifierSpec::with_defaults(ClassifierKind::RF, 11);
  const auto result = run_sweep(trials, candidates, {}, SelectionScheme::PI, spec, {}, 10, 11);
  const int e = result.chosen.electrode_count;
  if (e > 5) return {false, fmt::format("chosen E = {} is outside the oracle range E <= 5", e)};

  // exhaustive search over every subset of the chosen size, same folds
  const auto features = build_feature_matrix(trials, candidates);
  double best = -1.0;
  std::vector<int> best_subset;
  std::vector<bool> pick(10, false);
  std::fill(pick.begin(), pick.begin() + e, true);
  int subsets = 0;
  do {
    std::vector<int> subset;
    for (int i = 0; i < 10; ++i)
      if (pick[static_cast<std::size_t>(i)]) subset.push_back(i);
    const double acc = evaluate_cv(spec, features.project(subset), result.folds).accuracy;
    ++subsets;
    if (acc > best) best = acc, best_subset = subset;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  const bool ok = result.chosen.accuracy >= best - 2.0;
  return {ok, fmt::format("chosen E={} {} at {:.2f}%; best of {} subsets {} at {:.2f}%", e,
                          result.chosen.electrodes, result.chosen.accuracy, subsets, best_subset, best)};
}

Verdict fold_arithmetic() {
  std::vector<int> labels;
  for (int c = 0; c < 27; ++c)
    for (int t = 0; t < 20; ++t) labels.push_back(c);
  int bad = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto plan = make_stratified_folds(labels, 4, seed);
    for (int f = 0; f < 4; ++f) {
      const auto rows = plan.test_rows(f);
      if (rows.size() != 135) ++bad;
      std::vector<int> per_class(27, 0);
      for (auto r : rows) ++per_class[static_cast<std::size_t>(labels[r])];
      bad += static_cast<int>(std::count_if(per_class.begin(), per_class.end(), [](int n) { return n != 5; }));
    }
  }
  return {bad == 0, fmt::format("540 trials, k=4, 5 seeds: {} fold/class count mismatches", bad)};
}

Verdict chance_control() {
  std::vector<double> mean(kAllClassifiers.size(), 0.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto trials = user0(testing::synthetic(16, {2, 5, 9, 12}, 0.05, seed));
    auto features = build_feature_matrix(trials, testing::iota_ids(16));
    CounterRng rng(CounterRng::derive(seed, 0x5348554646ULL));
    rng.shuffle(std::span<int>(features.labels));
    const auto plan = make_stratified_folds(features.labels, 4, seed);
    for (std::size_t c = 0; c < kAllClassifiers.size(); ++c)
      mean[c] += evaluate_cv(ClassifierSpec::with_defaults(kAllClassifiers[c], seed), features, plan).accuracy / 20.0;
  }
  bool ok = true;
  std::string detail = "chance 25%:";
  for (std::size_t c = 0; c < kAllClassifiers.size(); ++c) {
    ok = ok && std::abs(mean[c] - 25.0) <= 10.0;
    detail += fmt::format(" {} {:.2f}%", to_string(kAllClassifiers[c]), mean[c]);
  }
  return {ok, detail};
}

Verdict determinism() {
  const auto trials = user0(testing::synthetic(16, {2, 5, 9, 12}, 0.05, 5));
  const auto candidates = testing::iota_ids(16);
  auto run = [&](unsigned workers) {
    SweepOptions options;
    options.workers = workers;
    return run_sweep(trials, candidates, {}, SelectionScheme::PI,
                     ClassifierSpec::with_defaults(ClassifierKind::RF, 5), {}, 20, 5, options);
  };
  const auto a = run(1), b = run(1), c = run(4);
  const bool csv = sweep_csv(a) == sweep_csv(b) && sweep_csv(a) == sweep_csv(c);
  const bool json = sweep_to_json(a).dump() == sweep_to_json(b).dump() &&
                    sweep_to_json(a).dump() == sweep_to_json(c).dump();
  return {csv && json, fmt::format("serial x2 and 4 workers: CSV {}, JSON {}", csv ? "identical" : "DIFFER",
                                   json ? "identical" : "DIFFER")};
}

Verdict band_vs_sparse() {
  // Signal sits on three adjacent ring sites that the equally spaced band skips.
  double worst = 1e9;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto ds = generate_synthetic(testing::synthetic(16, {5, 6, 7}, 0.05, seed));
    const auto cmp = compare_band_vs_sparse(ds.trials_for("u0"), ds.manifest.ring(), 4, SelectionScheme::PI,
                                            ClassifierSpec::with_defaults(ClassifierKind::RF, seed), seed);
    const double gap = cmp.sparse_accuracy - cmp.band_accuracy;
    worst = std::min(worst, gap);
    if (seed == 1)
      detail = fmt::format("seed 1: band {} {:.2f}% vs sparse {} {:.2f}%", cmp.band_electrodes, cmp.band_accuracy,
                           cmp.sparse_electrodes, cmp.sparse_accuracy);
  }
  return {worst >= 5.0, fmt::format("k=4, worst sparse-band gap over 5 seeds {:.2f} points; {}", worst, detail)};
}

Verdict cross_user() {
  double worst = 0.0, total = 0.0;
  const int seeds = 10;
  for (int seed = 1; seed <= seeds; ++seed) {
    auto spec = testing::synthetic(16, {2, 5, 9, 12}, 0.05, static_cast<std::uint64_t>(seed));
    spec.users = 2;
    const auto ds = generate_synthetic(spec);
    const std::vector<UserTrials> users{{"u0", ds.trials_for("u0")}, {"u1", ds.trials_for("u1")}};
    const auto r = cross_user_eval(users, "u0", SelectionScheme::PI,
                                   ClassifierSpec::with_defaults(ClassifierKind::RF, static_cast<std::uint64_t>(seed)),
                                   {}, static_cast<std::uint64_t>(seed));
    const double gap = std::abs(r.rows[0].accuracy - r.rows[1].accuracy);
    worst = std::max(worst, gap);
    total += gap;
  }
  return {worst <= 6.0,
          fmt::format("source vs target on the frozen layout, {} seeds: max gap {:.2f}, mean {:.2f} points", seeds,
                      worst, total / seeds)};
}

Verdict gradient_and_posteriors() {
  CounterRng rng(77);
  const std::size_t rows = 12, cols = 5, classes = 4;
  Matrix x(rows, cols), w(classes, cols);
  for (double& v : x.data()) v = rng.normal();
  for (double& v : w.data()) v = 0.5 * rng.normal();
  std::vector<double> b{0.2, -0.1, 0.05, 0.0};
  std::vector<int> y(rows);
  for (std::size_t i = 0; i < rows; ++i) y[i] = static_cast<int>(i % classes);
  const double lambda = 1e-3;
  Matrix gw;
  std::vector<double> gb;
  softmax_gradient(w, b, x, y, lambda, gw, gb);
  const double h = 1e-5;
  double num2 = 0.0, diff2 = 0.0;
  for (std::size_t k = 0; k < w.data().size(); ++k) {
    Matrix wp = w, wm = w;
    wp.data()[k] += h;
    wm.data()[k] -= h;
    const double fd = (softmax_loss(wp, b, x, y, lambda) - softmax_loss(wm, b, x, y, lambda)) / (2 * h);
    num2 += fd * fd;
    diff2 += (fd - gw.data()[k]) * (fd - gw.data()[k]);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    auto bp = b, bm = b;
    bp[c] += h;
    bm[c] -= h;
    const double fd = (softmax_loss(w, bp, x, y, lambda) - softmax_loss(w, bm, x, y, lambda)) / (2 * h);
    num2 += fd * fd;
    diff2 += (fd - gb[c]) * (fd - gb[c]);
  }
  const double rel = std::sqrt(diff2 / num2);

  const auto trials = user0(testing::synthetic(8, {1, 3, 6}, 0.3, 9));
  const auto features = build_feature_matrix(trials, testing::iota_ids(8));
  const auto nb = train(ClassifierSpec::with_defaults(ClassifierKind::NB), features);
  const auto post = naive_bayes_posteriors(nb, features);
  double worst_sum = 0.0;
  for (std::size_t r = 0; r < post.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < post.cols(); ++c) sum += post(r, c);
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
  }
  return {rel <= 1e-4 && worst_sum <= 1e-9,
          fmt::format("gradient relative error {:.2e}; max |sum(posterior) - 1| = {:.2e} over {} rows", rel,
                      worst_sum, post.rows())};
}

Verdict stencil() {
  auto m = generate_synthetic(testing::synthetic(8, {}, 0.05, 1)).manifest;
  m.electrode_diameter_mm = 10.0;
  const double circumference = 240.0;
  const ArmMeasurements arm{250.0, {{0.0, circumference}, {250.0, circumference}}};
  const std::vector<int> layout = testing::iota_ids(8);
  const auto doc = generate_stencil(layout, m, arm);
  const auto elements = testing::svg_elements(doc);
  const auto circles = testing::elements_named(elements, "circle");
  bool sizes = true;
  for (const auto& c : circles) sizes = sizes && std::abs(2.0 * c.number("r") - m.electrode_diameter_mm) <= 1e-12;
  const auto plan = plan_stencil(layout, m, arm);
  double worst = 0.0;
  for (std::size_t i = 1; i < plan.holes.size(); ++i)
    worst = std::max(worst, std::abs(plan.holes[i].y_mm - plan.holes[i - 1].y_mm - circumference / 8.0));
  const bool ok = circles.size() == layout.size() && sizes && worst <= 1e-6;
  return {ok, fmt::format("{} holes for {} electrodes, diameters {}, max spacing error {:.1e} mm", circles.size(),
                          layout.size(), sizes ? "match" : "WRONG", worst)};
}

Verdict service_round_trip() {
  testing::TempDir dir("acceptance-service");
  auto ds = generate_synthetic(testing::synthetic(16, {2, 5, 9, 12}, 0.05, 21));
  ds.manifest.name = "ring16";
  write_dataset(ds, dir.path() / "ring16");

  ServiceConfig config;
  config.port = 0;
  config.data_dir = dir.path();
  Server server(config);
  server.start();

  testing::WsClient ws(server.port());
  ws.send({{"v", 1},
           {"type", "sweep"},
           {"dataset", "ring16"},
           {"user", "u0"},
           {"gestures", {0, 1, 2, 3}},
           {"max_electrodes", 20},
           {"scheme", "PI"},
           {"classifier", "RF"},
           {"seed", 21}});
  const auto stream = ws.receive_stream();
  server.stop();

  const auto offline = run_sweep(ds.trials_for("u0"), testing::iota_ids(16), std::vector<int>{0, 1, 2, 3},
                                 SelectionScheme::PI, ClassifierSpec::with_defaults(ClassifierKind::RF, 21), {}, 20,
                                 21);
  int last = 0;
  bool ascending = true;
  std::size_t progress = 0;
  for (const auto& m : stream)
    if (m["type"] == "progress") {
      ascending = ascending && m["electrode_count"].get<int>() > last;
      last = m["electrode_count"].get<int>();
      ++progress;
    }
  const auto& terminal = stream.back();
  const bool is_result = terminal["type"] == "result";
  const bool matches = is_result && terminal["result"]["chosen"] == sweep_to_json(offline)["chosen"];
  return {ascending && progress == offline.points.size() && matches,
          fmt::format("{} ascending progress events, terminal '{}', chosen {} vs offline {}", progress,
                      terminal["type"].get<std::string>(),
                      is_result ? terminal["result"]["chosen"]["electrodes"].dump() : "-",
                      fmt::format("{}", offline.chosen.electrodes))};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Verdict()> run;
  };
  const Criterion criteria[] = {
      {"sparsity-score-exactness", 1, sparsity_exactness},
      {"separation", 120, separation},
      {"sweep-vs-brute-force", 300, brute_force},
      {"fold-arithmetic", 1, fold_arithmetic},
      {"chance-level-control", 180, chance_control},
      {"determinism", 120, determinism},
      {"band-vs-sparse", 120, band_vs_sparse},
      {"cross-user-stability", 120, cross_user},
      {"lr-gradient-nb-posteriors", 5, gradient_and_posteriors},
      {"stencil", 1, stencil},
      {"service-round-trip", 120, service_round_trip},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, fmt::format("threw: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = secs < c.budget_s;
    const bool pass = v.pass && in_budget;
    failures += !pass;
    fmt::print("{} {} ({:.2f}s, budget {}s){}: {}\n", pass ? "PASS" : "FAIL", c.name, secs, c.budget_s,
               in_budget ? "" : " OVER BUDGET", v.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", std::size(criteria) - static_cast<std::size_t>(failures),
             std::size(criteria));
  return failures == 0 ? 0 : 1;
}
