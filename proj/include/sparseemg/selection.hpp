#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparseemg/classifiers.hpp"
#include "sparseemg/features.hpp"

namespace sparseemg {

enum class SelectionScheme { MI, PI, RMSI };

std::string_view to_string(SelectionScheme s);
SelectionScheme selection_scheme_from_string(std::string_view s);

struct RankedElectrode {
  int electrode = 0;
  double score = 0.0;
  /// Compared when scores are equal, before the electrode id. PI stores the
  /// mean drop in held-out true-class probability (percent points); the
  /// other schemes leave it at 0.
  double secondary = 0.0;
  friend bool operator==(const RankedElectrode&, const RankedElectrode&) = default;
};

struct ElectrodeRanking {
  SelectionScheme scheme = SelectionScheme::RMSI;
  /// Descending score, then descending secondary, then ascending id.
  std::vector<RankedElectrode> ordered;
  /// Classifier and seed behind a PI ranking.
  std::optional<ClassifierSpec> classifier;
  std::optional<std::uint64_t> seed;

  std::vector<int> electrodes() const;
  std::vector<int> top(std::size_t n) const;
  std::optional<double> score_of(int electrode) const;
};

/// Sorts by descending score, then descending secondary, then ascending id.
std::vector<RankedElectrode> order_scores(std::vector<RankedElectrode> scores);

/// Mean of an electrode's three window features over all rows.
ElectrodeRanking rank_rms_importance(const FeatureMatrix& features);

inline constexpr int kMutualInformationBins = 16;

/// Equal-frequency bin index per value. Tied values share a bin; with fewer
/// distinct values than `bins`, each distinct value gets its own bin.
std::vector<int> equal_frequency_bins(std::span<const double> values, int bins);

/// Plug-in mutual information (nats) between two discrete codings.
double discrete_mutual_information(std::span<const int> x, std::span<const int> y);

/// Electrode score is the mean over its 3 columns of the binned plug-in MI
/// with the label.
ElectrodeRanking rank_mutual_information(const FeatureMatrix& features,
                                         int bins = kMutualInformationBins);

struct PermutationOptions {
  int repeats = 5;
  unsigned workers = 1;
  const std::atomic<bool>* cancel = nullptr;
};

/// Stratified 75/25 split, model trained on the 75 %. Each electrode's three
/// held-out columns are permuted jointly; score is the mean accuracy drop in
/// percentage points. Redundant informative electrodes often tie at a zero
/// drop, so equal scores are ordered by the mean drop in the probability the
/// model assigns to the true class. Columns are processed in ascending
/// electrode id so the result does not depend on the input column order.
ElectrodeRanking rank_permutation_importance(const FeatureMatrix& features,
                                             const ClassifierSpec& spec, std::uint64_t seed,
                                             const PermutationOptions& options = {});

struct RankOptions {
  unsigned workers = 1;
  int mi_bins = kMutualInformationBins;
  int pi_repeats = 5;
  const std::atomic<bool>* cancel = nullptr;
};

ElectrodeRanking rank_electrodes(SelectionScheme scheme, const FeatureMatrix& features,
                                 const ClassifierSpec& spec, std::uint64_t seed,
                                 const RankOptions& options = {});

/// `rank,electrode_id,score,scheme`
std::string ranking_csv(const ElectrodeRanking& r);
nlohmann::json ranking_to_json(const ElectrodeRanking& r);

}  // namespace sparseemg
