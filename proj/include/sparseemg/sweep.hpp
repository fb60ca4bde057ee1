#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparseemg/classifiers.hpp"
#include "sparseemg/dataset.hpp"
#include "sparseemg/selection.hpp"

namespace sparseemg {

inline constexpr int kDefaultMaxElectrodes = 20;
inline constexpr int kSweepFolds = 4;
inline constexpr int kMinElectrodes = 2;

/// score(E) = w1 * (100 - accuracy) + w2 * E, with w1 + w2 = 1.
struct SparsityConfig {
  double w1 = 0.5;
  double w2 = 0.5;
  void validate() const;
  friend bool operator==(const SparsityConfig&, const SparsityConfig&) = default;
};

/// Lower is better. `accuracy` is in percent.
double sparsity_score(int electrode_count, double accuracy, const SparsityConfig& cfg);

struct SweepPoint {
  int electrode_count = 0;
  std::vector<int> electrodes;  ///< ranking prefix of length electrode_count
  double accuracy = 0.0;        ///< percent
  double sparsity_score = 0.0;
  std::optional<ConfusionMatrix> confusion;
};

struct SweepResult {
  ElectrodeRanking ranking;
  FoldPlan folds;  ///< shared by every point
  SparsityConfig weights;
  std::vector<SweepPoint> points;  ///< ascending electrode_count
  int best_by_accuracy = 0;
  int best_by_score = 0;
  SweepPoint chosen;

  const SweepPoint& point(int electrode_count) const;
};

struct SweepOptions {
  unsigned workers = 1;
  /// Keep a confusion matrix on every point, not only the chosen and the
  /// most accurate ones.
  bool keep_all_confusions = false;
  int mi_bins = kMutualInformationBins;
  int pi_repeats = 5;
  /// Called once per completed point, in ascending electrode count, never
  /// concurrently.
  std::function<void(const SweepPoint&)> on_progress;
  const std::atomic<bool>* cancel = nullptr;
};

/// Seed run_sweep hands to the ranking step; `rank` uses it too so a
/// standalone ranking matches the one inside a sweep with the same seed.
std::uint64_t sweep_ranking_seed(std::uint64_t seed);

/// Argmin of the sparsity score; ties toward fewer electrodes.
SweepPoint select_optimal(std::span<const SweepPoint> points, const SparsityConfig& cfg);

/// Ranks the candidates once on their full feature matrix, then evaluates
/// the prefixes E = 2..min(max_electrodes, |candidates|) with one shared
/// 4-fold plan. `gestures` empty keeps every gesture present in `trials`.
SweepResult run_sweep(std::span<const TrialRecord> trials, std::span<const int> candidates,
                      std::span<const int> gestures, SelectionScheme scheme,
                      const ClassifierSpec& spec, const SparsityConfig& cfg, int max_electrodes,
                      std::uint64_t seed, const SweepOptions& options = {});

/// `E,accuracy,sparsity_score`
std::string sweep_csv(const SweepResult& r);
nlohmann::json sweep_to_json(const SweepResult& r);

/// Trials restricted to the given gestures (all when empty), order kept.
std::vector<TrialRecord> filter_gestures(std::span<const TrialRecord> trials,
                                         std::span<const int> gestures);

// ---- cross-user transfer ---------------------------------------------------

struct UserTrials {
  std::string user;
  std::vector<TrialRecord> trials;
};

struct CrossUserRow {
  std::string user;
  double accuracy = 0.0;
  bool source = false;
};

struct CrossUserResult {
  std::string source_user;
  SweepResult source_sweep;
  std::vector<int> layout;
  std::vector<CrossUserRow> rows;  ///< every user, in input order
  double mean_target_accuracy = 0.0;  ///< over non-source users
};

struct CrossUserOptions {
  std::vector<int> gestures;    ///< empty = all
  std::vector<int> candidates;  ///< empty = every electrode
  int max_electrodes = kDefaultMaxElectrodes;
  SweepOptions sweep;
};

/// Sweeps the source user, freezes the chosen layout, and cross-validates it
/// on every user's own trials with the same seed.
CrossUserResult cross_user_eval(std::span<const UserTrials> users, std::string_view source_user,
                                SelectionScheme scheme, const ClassifierSpec& spec,
                                const SparsityConfig& cfg, std::uint64_t seed,
                                const CrossUserOptions& options = {});

/// Loads every user's trials (all sessions) and delegates.
CrossUserResult cross_user_eval(const DatasetManifest& manifest, std::string_view source_user,
                                SelectionScheme scheme, const ClassifierSpec& spec,
                                const SparsityConfig& cfg, std::uint64_t seed,
                                const CrossUserOptions& options = {});

std::string cross_user_csv(const CrossUserResult& r);

// ---- band baseline ---------------------------------------------------------

/// Equally spaced picks around the ring: positions floor(i * n / k).
std::vector<int> band_layout(std::span<const ElectrodeSite> electrodes, int k);

struct BandComparison {
  std::vector<int> band_electrodes;
  std::vector<int> sparse_electrodes;
  double band_accuracy = 0.0;
  double sparse_accuracy = 0.0;
};

/// Both arms share the fold plan and classifier. Candidates for the sparse
/// arm are the ring electrodes.
BandComparison compare_band_vs_sparse(std::span<const TrialRecord> trials,
                                      std::span<const ElectrodeSite> ring, int k,
                                      SelectionScheme scheme, const ClassifierSpec& spec,
                                      std::uint64_t seed, const SweepOptions& options = {});

}  // namespace sparseemg
