#include "sparseemg/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "sparseemg/error.hpp"
#include "sparseemg/parallel.hpp"
#include "sparseemg/rng.hpp"

namespace sparseemg {

std::string_view to_string(SelectionScheme s) {
  switch (s) {
    case SelectionScheme::MI: return "MI";
    case SelectionScheme::PI: return "PI";
    case SelectionScheme::RMSI: return "RMSI";
  }
  return "RMSI";
}

SelectionScheme selection_scheme_from_string(std::string_view s) {
  if (s == "MI") return SelectionScheme::MI;
  if (s == "PI") return SelectionScheme::PI;
  if (s == "RMSI" || s == "RMS-I") return SelectionScheme::RMSI;
  throw ValidationError("scheme", fmt::format("unknown selection scheme '{}' (MI|PI|RMSI)", s));
}

std::vector<int> ElectrodeRanking::electrodes() const {
  std::vector<int> ids;
  ids.reserve(ordered.size());
  for (const auto& e : ordered) ids.push_back(e.electrode);
  return ids;
}

std::vector<int> ElectrodeRanking::top(std::size_t n) const {
  auto ids = electrodes();
  ids.resize(std::min(n, ids.size()));
  return ids;
}

std::optional<double> ElectrodeRanking::score_of(int electrode) const {
  for (const auto& e : ordered)
    if (e.electrode == electrode) return e.score;
  return std::nullopt;
}

std::vector<RankedElectrode> order_scores(std::vector<RankedElectrode> scores) {
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.secondary != b.secondary) return a.secondary > b.secondary;
    return a.electrode < b.electrode;
  });
  return scores;
}

namespace {

void require_rows(const FeatureMatrix& f) {
  if (f.rows() == 0 || f.electrode_order.empty())
    throw ValidationError("features", "must be non-empty");
}

}  // namespace

ElectrodeRanking rank_rms_importance(const FeatureMatrix& features) {
  require_rows(features);
  ElectrodeRanking r;
  r.scheme = SelectionScheme::RMSI;
  std::vector<RankedElectrode> scores;
  const double n = static_cast<double>(features.rows() * kWindows);
  for (std::size_t k = 0; k < features.electrode_order.size(); ++k) {
    double sum = 0.0;
    for (std::size_t row = 0; row < features.rows(); ++row)
      for (std::size_t w = 0; w < kWindows; ++w) sum += features.values(row, kWindows * k + w);
    scores.push_back({features.electrode_order[k], sum / n});
  }
  r.ordered = order_scores(std::move(scores));
  return r;
}

std::vector<int> equal_frequency_bins(std::span<const double> values, int bins) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (i == 0 || values[order[i]] != values[order[i - 1]]) ++distinct;

  std::vector<int> code(n);
  const bool one_per_value = distinct <= static_cast<std::size_t>(bins);
  int current = -1;
  std::size_t first_rank = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool new_value = i == 0 || values[order[i]] != values[order[i - 1]];
    if (new_value) {
      first_rank = i;
      current = one_per_value ? current + 1
                              : static_cast<int>(first_rank * static_cast<std::size_t>(bins) / n);
    }
    code[order[i]] = current;
  }
  return code;
}

double discrete_mutual_information(std::span<const int> x, std::span<const int> y) {
  const std::size_t n = x.size();
  if (n == 0) return 0.0;
  std::unordered_map<int, int> xi, yi;
  for (int v : x) xi.emplace(v, static_cast<int>(xi.size()));
  for (int v : y) yi.emplace(v, static_cast<int>(yi.size()));
  const std::size_t nx = xi.size(), ny = yi.size();
  std::vector<double> joint(nx * ny, 0.0), px(nx, 0.0), py(ny, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = static_cast<std::size_t>(xi[x[i]]);
    const auto b = static_cast<std::size_t>(yi[y[i]]);
    joint[a * ny + b] += 1.0;
    px[a] += 1.0;
    py[b] += 1.0;
  }
  const double N = static_cast<double>(n);
  double mi = 0.0;
  for (std::size_t a = 0; a < nx; ++a)
    for (std::size_t b = 0; b < ny; ++b) {
      const double c = joint[a * ny + b];
      if (c > 0.0) mi += (c / N) * std::log(c * N / (px[a] * py[b]));
    }
  return std::max(0.0, mi);
}

ElectrodeRanking rank_mutual_information(const FeatureMatrix& features, int bins) {
  require_rows(features);
  if (bins < 2) throw ValidationError("bins", "need at least two bins");
  if (features.classes().size() < 2)
    throw ValidationError("labels", "mutual information needs at least two classes");
  if (features.rows() < static_cast<std::size_t>(bins))
    throw ValidationError("features", fmt::format("binning needs at least {} rows", bins));
  ElectrodeRanking r;
  r.scheme = SelectionScheme::MI;
  std::vector<RankedElectrode> scores;
  std::vector<double> column(features.rows());
  for (std::size_t k = 0; k < features.electrode_order.size(); ++k) {
    double sum = 0.0;
    for (std::size_t w = 0; w < kWindows; ++w) {
      for (std::size_t row = 0; row < features.rows(); ++row)
        column[row] = features.values(row, kWindows * k + w);
      sum += discrete_mutual_information(equal_frequency_bins(column, bins), features.labels);
    }
    scores.push_back({features.electrode_order[k], sum / static_cast<double>(kWindows)});
  }
  r.ordered = order_scores(std::move(scores));
  return r;
}

namespace {

constexpr std::uint64_t kPermutationStreams = 0x5045524DULL << 32;  // "PERM"

/// Mean probability of the true class, in percent.
double true_class_probability(const TrainedModel& model, const FeatureMatrix& held) {
  const Matrix p = predict_proba(model, held);
  double sum = 0.0;
  for (std::size_t r = 0; r < held.rows(); ++r) {
    auto it = std::lower_bound(model.classes.begin(), model.classes.end(), held.labels[r]);
    if (it != model.classes.end() && *it == held.labels[r])
      sum += p(r, static_cast<std::size_t>(it - model.classes.begin()));
  }
  return 100.0 * sum / static_cast<double>(held.rows());
}

}  // namespace

ElectrodeRanking rank_permutation_importance(const FeatureMatrix& features,
                                             const ClassifierSpec& spec, std::uint64_t seed,
                                             const PermutationOptions& options) {
  require_rows(features);
  if (options.repeats <= 0) throw ValidationError("repeats", "must be positive");

  std::vector<int> ids = features.electrode_order;
  std::sort(ids.begin(), ids.end());
  const FeatureMatrix canonical = features.project(ids);

  const FoldPlan split = make_stratified_folds(canonical.labels, 4, seed);
  const FeatureMatrix fit = canonical.select_rows(split.train_rows(0));
  const FeatureMatrix held = canonical.select_rows(split.test_rows(0));
  const TrainedModel model = train(spec, fit);
  const double baseline = accuracy_percent(held.labels, predict(model, held));
  const double baseline_prob = true_class_probability(model, held);

  std::vector<double> score(ids.size(), 0.0);
  std::vector<double> prob_drop(ids.size(), 0.0);
  parallel_for(ids.size(), options.workers, [&](std::size_t k) {
    if (options.cancel && options.cancel->load()) throw Cancelled();
    const std::uint64_t electrode_seed =
        CounterRng::derive(seed, kPermutationStreams + static_cast<std::uint64_t>(ids[k]));
    double drop = 0.0;
    double pdrop = 0.0;
    FeatureMatrix shuffled = held;
    std::vector<std::size_t> perm(held.rows());
    for (int r = 0; r < options.repeats; ++r) {
      std::iota(perm.begin(), perm.end(), 0);
      CounterRng rng(CounterRng::derive(electrode_seed, static_cast<std::uint64_t>(r)));
      rng.shuffle(std::span<std::size_t>(perm));
      for (std::size_t row = 0; row < held.rows(); ++row)
        for (std::size_t w = 0; w < kWindows; ++w)
          shuffled.values(row, kWindows * k + w) = held.values(perm[row], kWindows * k + w);
      drop += baseline - accuracy_percent(held.labels, predict(model, shuffled));
      pdrop += baseline_prob - true_class_probability(model, shuffled);
    }
    score[k] = drop / static_cast<double>(options.repeats);
    prob_drop[k] = pdrop / static_cast<double>(options.repeats);
  });

  ElectrodeRanking r;
  r.scheme = SelectionScheme::PI;
  r.classifier = spec;
  r.seed = seed;
  std::vector<RankedElectrode> scores;
  for (std::size_t k = 0; k < ids.size(); ++k) scores.push_back({ids[k], score[k], prob_drop[k]});
  r.ordered = order_scores(std::move(scores));
  return r;
}

ElectrodeRanking rank_electrodes(SelectionScheme scheme, const FeatureMatrix& features,
                                 const ClassifierSpec& spec, std::uint64_t seed,
                                 const RankOptions& options) {
  switch (scheme) {
    case SelectionScheme::RMSI: return rank_rms_importance(features);
    case SelectionScheme::MI: return rank_mutual_information(features, options.mi_bins);
    case SelectionScheme::PI:
      return rank_permutation_importance(features, spec, seed,
                                         {options.pi_repeats, options.workers, options.cancel});
  }
  throw ValidationError("scheme", "unknown scheme");
}

std::string ranking_csv(const ElectrodeRanking& r) {
  std::string out = "rank,electrode_id,score,scheme\n";
  for (std::size_t i = 0; i < r.ordered.size(); ++i)
    out += fmt::format("{},{},{},{}\n", i + 1, r.ordered[i].electrode, r.ordered[i].score,
                       to_string(r.scheme));
  return out;
}

nlohmann::json ranking_to_json(const ElectrodeRanking& r) {
  nlohmann::json ordered = nlohmann::json::array();
  for (const auto& e : r.ordered) {
    nlohmann::json item = {{"electrode", e.electrode}, {"score", e.score}};
    if (r.scheme == SelectionScheme::PI) item["probability_drop"] = e.secondary;
    ordered.push_back(std::move(item));
  }
  nlohmann::json j = {{"scheme", to_string(r.scheme)}, {"ordered", std::move(ordered)}};
  if (r.classifier) j["classifier"] = spec_to_json(*r.classifier);
  if (r.seed) j["seed"] = *r.seed;
  return j;
}

}  // namespace sparseemg
