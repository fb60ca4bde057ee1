#include "sparseemg/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

#include <fmt/format.h>

#include "sparseemg/error.hpp"
#include "sparseemg/parallel.hpp"
#include "sparseemg/rng.hpp"

namespace sparseemg {

namespace {

constexpr std::uint64_t kRankingStream = 0x52414E4BULL;  // "RANK"

void check_cancel(const std::atomic<bool>* cancel) {
  if (cancel && cancel->load()) throw Cancelled();
}

struct Prepared {
  FeatureMatrix features;  // every candidate, candidate order
  FoldPlan folds;
  ElectrodeRanking ranking;
};

Prepared prepare(std::span<const TrialRecord> trials, std::span<const int> candidates,
                 std::span<const int> gestures, SelectionScheme scheme, const ClassifierSpec& spec,
                 std::uint64_t seed, const SweepOptions& options) {
  if (candidates.size() < static_cast<std::size_t>(kMinElectrodes))
    throw ValidationError("candidate_electrodes", "need at least 2 candidate electrodes");
  if (std::set<int>(candidates.begin(), candidates.end()).size() != candidates.size())
    throw ValidationError("candidate_electrodes", "duplicate electrode id");
  const auto selected = filter_gestures(trials, gestures);
  if (selected.empty()) throw ValidationError("gestures", "no trials for the selected gestures");
  Prepared p;
  p.features = build_feature_matrix(selected, candidates);
  p.folds = make_stratified_folds(p.features.labels, kSweepFolds, seed);
  check_cancel(options.cancel);
  p.ranking = rank_electrodes(scheme, p.features, spec, sweep_ranking_seed(seed),
                              {options.workers, options.mi_bins, options.pi_repeats, options.cancel});
  return p;
}

}  // namespace

std::uint64_t sweep_ranking_seed(std::uint64_t seed) { return CounterRng::derive(seed, kRankingStream); }

void SparsityConfig::validate() const {
  if (!(w1 >= 0.0) || !(w2 >= 0.0)) throw ValidationError("weights", "must be nonnegative");
  if (std::abs(w1 + w2 - 1.0) > 1e-12) throw ValidationError("weights", "w1 + w2 must equal 1");
}

double sparsity_score(int electrode_count, double accuracy, const SparsityConfig& cfg) {
  cfg.validate();
  return cfg.w1 * (100.0 - accuracy) + cfg.w2 * static_cast<double>(electrode_count);
}

SweepPoint select_optimal(std::span<const SweepPoint> points, const SparsityConfig& cfg) {
  if (points.empty()) throw ValidationError("points", "no sweep points");
  const SweepPoint* best = nullptr;
  double best_score = 0.0;
  for (const auto& p : points) {
    const double s = sparsity_score(p.electrode_count, p.accuracy, cfg);
    if (!best || s < best_score ||
        (s == best_score && p.electrode_count < best->electrode_count)) {
      best = &p;
      best_score = s;
    }
  }
  return *best;
}

const SweepPoint& SweepResult::point(int electrode_count) const {
  for (const auto& p : points)
    if (p.electrode_count == electrode_count) return p;
  throw NotFoundError(fmt::format("no sweep point for E={}", electrode_count));
}

std::vector<TrialRecord> filter_gestures(std::span<const TrialRecord> trials,
                                         std::span<const int> gestures) {
  const std::set<int> keep(gestures.begin(), gestures.end());
  std::vector<TrialRecord> out;
  for (const auto& t : trials)
    if (keep.empty() || keep.count(t.gesture_id)) out.push_back(t);
  return out;
}

SweepResult run_sweep(std::span<const TrialRecord> trials, std::span<const int> candidates,
                      std::span<const int> gestures, SelectionScheme scheme,
                      const ClassifierSpec& spec, const SparsityConfig& cfg, int max_electrodes,
                      std::uint64_t seed, const SweepOptions& options) {
  cfg.validate();
  if (max_electrodes < kMinElectrodes)
    throw ValidationError("max_electrodes", "must be at least 2");
  Prepared prep = prepare(trials, candidates, gestures, scheme, spec, seed, options);

  const int last = std::min<int>(max_electrodes, static_cast<int>(candidates.size()));
  const auto count = static_cast<std::size_t>(last - kMinElectrodes + 1);
  std::vector<SweepPoint> points(count);
  std::vector<bool> done(count, false);
  std::size_t next_to_emit = 0;
  std::mutex emit_mutex;

  parallel_for(count, options.workers, [&](std::size_t i) {
    check_cancel(options.cancel);
    SweepPoint& p = points[i];
    p.electrode_count = kMinElectrodes + static_cast<int>(i);
    p.electrodes = prep.ranking.top(static_cast<std::size_t>(p.electrode_count));
    // trees and folds stay serial here; the parallelism is across E
    const CvResult cv = evaluate_cv(spec, prep.features.project(p.electrodes), prep.folds, 1);
    p.accuracy = cv.accuracy;
    p.sparsity_score = sparsity_score(p.electrode_count, p.accuracy, cfg);
    p.confusion = cv.confusion;

    std::lock_guard lock(emit_mutex);
    done[i] = true;
    while (next_to_emit < count && done[next_to_emit]) {
      if (options.on_progress) options.on_progress(points[next_to_emit]);
      ++next_to_emit;
    }
  });

  SweepResult r;
  r.ranking = std::move(prep.ranking);
  r.folds = std::move(prep.folds);
  r.weights = cfg;
  const SweepPoint* most_accurate = &points.front();
  for (const auto& p : points)
    if (p.accuracy > most_accurate->accuracy) most_accurate = &p;
  r.best_by_accuracy = most_accurate->electrode_count;
  r.best_by_score = select_optimal(points, cfg).electrode_count;
  if (!options.keep_all_confusions)
    for (auto& p : points)
      if (p.electrode_count != r.best_by_accuracy && p.electrode_count != r.best_by_score)
        p.confusion.reset();
  r.points = std::move(points);
  r.chosen = r.point(r.best_by_score);
  return r;
}

std::string sweep_csv(const SweepResult& r) {
  std::string out = "E,accuracy,sparsity_score\n";
  for (const auto& p : r.points)
    out += fmt::format("{},{},{}\n", p.electrode_count, p.accuracy, p.sparsity_score);
  return out;
}

nlohmann::json sweep_to_json(const SweepResult& r) {
  using nlohmann::json;
  json points = json::array();
  for (const auto& p : r.points)
    points.push_back({{"electrode_count", p.electrode_count},
                      {"electrodes", p.electrodes},
                      {"accuracy", p.accuracy},
                      {"sparsity_score", p.sparsity_score}});
  json chosen = {{"electrode_count", r.chosen.electrode_count},
                 {"electrodes", r.chosen.electrodes},
                 {"accuracy", r.chosen.accuracy},
                 {"sparsity_score", r.chosen.sparsity_score}};
  chosen["confusion_matrix"] = r.chosen.confusion ? confusion_to_json(*r.chosen.confusion) : json(nullptr);
  return {{"ranking", ranking_to_json(r.ranking)},
          {"weights", {{"w1", r.weights.w1}, {"w2", r.weights.w2}}},
          {"points", std::move(points)},
          {"best_by_accuracy", r.best_by_accuracy},
          {"best_by_score", r.best_by_score},
          {"chosen", std::move(chosen)}};
}

CrossUserResult cross_user_eval(std::span<const UserTrials> users, std::string_view source_user,
                                SelectionScheme scheme, const ClassifierSpec& spec,
                                const SparsityConfig& cfg, std::uint64_t seed,
                                const CrossUserOptions& options) {
  if (users.size() < 2) throw ValidationError("users", "cross-user evaluation needs at least 2 users");
  auto source = std::find_if(users.begin(), users.end(),
                             [&](const UserTrials& u) { return u.user == source_user; });
  if (source == users.end())
    throw ValidationError("source_user", fmt::format("unknown user '{}'", source_user));

  std::vector<int> candidates = options.candidates;
  if (candidates.empty()) {
    if (source->trials.empty()) throw ValidationError("trials", "source user has no trials");
    for (std::size_t c = 0; c < source->trials.front().samples.cols(); ++c)
      candidates.push_back(static_cast<int>(c));
  }

  CrossUserResult out;
  out.source_user = std::string(source_user);
  out.source_sweep = run_sweep(source->trials, candidates, options.gestures, scheme, spec, cfg,
                               options.max_electrodes, seed, options.sweep);
  out.layout = out.source_sweep.chosen.electrodes;

  double target_sum = 0.0;
  std::size_t targets = 0;
  for (const auto& u : users) {
    check_cancel(options.sweep.cancel);
    const auto trials = filter_gestures(u.trials, options.gestures);
    const auto features = build_feature_matrix(trials, out.layout);
    const auto folds = make_stratified_folds(features.labels, kSweepFolds, seed);
    const double acc = evaluate_cv(spec, features, folds, options.sweep.workers).accuracy;
    const bool is_source = u.user == source_user;
    out.rows.push_back({u.user, acc, is_source});
    if (!is_source) {
      target_sum += acc;
      ++targets;
    }
  }
  out.mean_target_accuracy = target_sum / static_cast<double>(targets);
  return out;
}

CrossUserResult cross_user_eval(const DatasetManifest& manifest, std::string_view source_user,
                                SelectionScheme scheme, const ClassifierSpec& spec,
                                const SparsityConfig& cfg, std::uint64_t seed,
                                const CrossUserOptions& options) {
  if (manifest.users.size() < 2)
    throw ValidationError("users", "cross-user evaluation needs at least 2 users");
  std::vector<UserTrials> users;
  for (const auto& u : manifest.users)
    users.push_back({u, load_trials(manifest, u, all_sessions(manifest))});
  return cross_user_eval(users, source_user, scheme, spec, cfg, seed, options);
}

std::string cross_user_csv(const CrossUserResult& r) {
  std::string out = "user,accuracy,source\n";
  for (const auto& row : r.rows)
    out += fmt::format("{},{},{}\n", row.user, row.accuracy, row.source ? 1 : 0);
  return out;
}

std::vector<int> band_layout(std::span<const ElectrodeSite> electrodes, int k) {
  std::vector<ElectrodeSite> ring;
  for (const auto& e : electrodes)
    if (e.ring_index) ring.push_back(e);
  if (ring.empty()) throw ValidationError("electrodes", "no ring metadata (ring_index)");
  std::sort(ring.begin(), ring.end(),
            [](const auto& a, const auto& b) { return *a.ring_index < *b.ring_index; });
  const auto n = ring.size();
  if (k < 1 || static_cast<std::size_t>(k) > n)
    throw ValidationError("k", fmt::format("band size {} outside 1..{}", k, n));
  std::vector<int> ids;
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i)
    ids.push_back(ring[i * n / static_cast<std::size_t>(k)].id);
  return ids;
}

BandComparison compare_band_vs_sparse(std::span<const TrialRecord> trials,
                                      std::span<const ElectrodeSite> ring, int k,
                                      SelectionScheme scheme, const ClassifierSpec& spec,
                                      std::uint64_t seed, const SweepOptions& options) {
  BandComparison out;
  out.band_electrodes = band_layout(ring, k);
  std::vector<int> candidates;
  for (const auto& e : ring)
    if (e.ring_index) candidates.push_back(e.id);
  std::sort(candidates.begin(), candidates.end());
  const Prepared prep = prepare(trials, candidates, {}, scheme, spec, seed, options);
  out.sparse_electrodes = prep.ranking.top(static_cast<std::size_t>(k));
  out.band_accuracy =
      evaluate_cv(spec, prep.features.project(out.band_electrodes), prep.folds, options.workers).accuracy;
  out.sparse_accuracy =
      evaluate_cv(spec, prep.features.project(out.sparse_electrodes), prep.folds, options.workers).accuracy;
  return out;
}

}  // namespace sparseemg
