#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "sparseemg/error.hpp"
#include "sparseemg/rng.hpp"
#include "sparseemg/selection.hpp"
#include "support.hpp"

using namespace sparseemg;

namespace {

FeatureMatrix random_features(std::uint64_t seed, std::size_t rows, int electrodes, int classes) {
  CounterRng rng(seed);
  FeatureMatrix f;
  f.values = Matrix(rows, 3 * static_cast<std::size_t>(electrodes));
  for (double& v : f.values.data()) v = std::abs(rng.normal());
  for (std::size_t r = 0; r < rows; ++r) f.labels.push_back(static_cast<int>(r % static_cast<std::size_t>(classes)));
  f.electrode_order = testing::iota_ids(electrodes);
  return f;
}

FeatureMatrix synthetic_features(int channels, std::vector<int> informative, double sigma,
                                 std::uint64_t seed, int trials = 8) {
  const auto ds =
      generate_synthetic(testing::synthetic(channels, std::move(informative), sigma, seed, 4, trials));
  return build_feature_matrix(ds.trials, testing::iota_ids(channels));
}

bool informative_on_top(const ElectrodeRanking& r, std::vector<int> informative) {
  auto top = r.top(informative.size());
  std::sort(top.begin(), top.end());
  std::sort(informative.begin(), informative.end());
  return top == informative;
}

}  // namespace

TEST_CASE("scheme names") {
  CHECK(selection_scheme_from_string("RMS-I") == SelectionScheme::RMSI);
  CHECK(selection_scheme_from_string(to_string(SelectionScheme::PI)) == SelectionScheme::PI);
  CHECK_THROWS_AS(selection_scheme_from_string("SHAP"), ValidationError);
}

TEST_CASE("ordering: descending score, then secondary, then ascending id") {
  const auto o = order_scores({{4, 1.0}, {2, 3.0}, {9, 1.0}, {1, 1.0, 0.5}, {3, 1.0}});
  std::vector<int> ids;
  for (const auto& e : o) ids.push_back(e.electrode);
  CHECK(ids == std::vector<int>{2, 1, 3, 4, 9});
}

TEST_CASE("RMS importance equals a direct mean of the electrode's entries") {
  const auto f = random_features(3, 17, 5, 3);
  const auto r = rank_rms_importance(f);
  REQUIRE(r.ordered.size() == 5);
  for (int e = 0; e < 5; ++e) {
    double sum = 0.0;
    for (std::size_t row = 0; row < f.rows(); ++row)
      for (std::size_t w = 0; w < 3; ++w) sum += f.values(row, 3 * static_cast<std::size_t>(e) + w);
    CHECK(*r.score_of(e) == doctest::Approx(sum / (3.0 * 17.0)).epsilon(1e-14));
  }
  for (std::size_t i = 1; i < r.ordered.size(); ++i) CHECK(r.ordered[i - 1].score >= r.ordered[i].score);
}

TEST_CASE("RMS importance: silent channel last, doubling never demotes") {
  auto f = random_features(4, 20, 6, 2);
  for (std::size_t row = 0; row < f.rows(); ++row)
    for (std::size_t w = 0; w < 3; ++w) f.values(row, 6 + w) = 0.0;
  const auto r = rank_rms_importance(f);
  CHECK(r.ordered.back().electrode == 2);
  CHECK(r.ordered.back().score == 0.0);

  const auto position = [](const ElectrodeRanking& rk, int e) {
    const auto ids = rk.electrodes();
    return std::find(ids.begin(), ids.end(), e) - ids.begin();
  };
  for (int e = 0; e < 6; ++e) {
    FeatureMatrix g = f;
    for (std::size_t row = 0; row < g.rows(); ++row)
      for (std::size_t w = 0; w < 3; ++w) g.values(row, 3 * static_cast<std::size_t>(e) + w) *= 2.0;
    const auto r2 = rank_rms_importance(g);
    CHECK(*r2.score_of(e) == 2.0 * *r.score_of(e));
    CHECK(position(r2, e) <= position(r, e));
  }
}

TEST_CASE("RMS importance ignores labels") {
  auto f = random_features(5, 24, 6, 4);
  const auto before = rank_rms_importance(f);
  for (int& l : f.labels) l = (l * 7 + 3) % 11;
  CHECK(rank_rms_importance(f).ordered == before.ordered);
}

TEST_CASE("equal-frequency binning") {
  std::vector<double> v;
  for (int i = 0; i < 32; ++i) v.push_back(31 - i);
  const auto bins = equal_frequency_bins(v, 16);
  for (int i = 0; i < 32; ++i) CHECK(bins[static_cast<std::size_t>(i)] == (31 - i) / 2);
  // few distinct values: one bin per value
  const auto few = equal_frequency_bins(std::vector<double>{3, 1, 3, 2, 1}, 16);
  CHECK(few == std::vector<int>{2, 0, 2, 1, 0});
  // ties never straddle bins
  std::vector<double> tied(40, 1.0);
  for (int i = 0; i < 20; ++i) tied[static_cast<std::size_t>(i)] = i;
  const auto tb = equal_frequency_bins(tied, 16);
  for (std::size_t i = 20; i < 40; ++i) CHECK(tb[i] == tb[20]);
}

TEST_CASE("mutual information of a column equal to the label is ln k") {
  for (int k : {2, 4, 7}) {
    FeatureMatrix f;
    f.values = Matrix(static_cast<std::size_t>(10 * k), 3);
    for (std::size_t r = 0; r < f.values.rows(); ++r) {
      const int label = static_cast<int>(r) % k;
      f.labels.push_back(label * 10 + 1);
      for (std::size_t w = 0; w < 3; ++w) f.values(r, w) = 0.25 * label;
    }
    f.electrode_order = {0};
    CHECK(std::abs(*rank_mutual_information(f).score_of(0) - std::log(k)) < 1e-9);
  }
}

TEST_CASE("mutual information of a noise column matches the permutation null") {
  // plug-in MI is biased upward by about (B-1)(K-1)/(2N) nats, so a
  // label-independent column is compared with label-permuted copies of itself
  double observed = 0.0, null = 0.0;
  const int seeds = 20, permutations = 20;
  for (int s = 0; s < seeds; ++s) {
    CounterRng rng(CounterRng::derive(900, static_cast<std::uint64_t>(s)));
    std::vector<double> x(200);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
      x[i] = rng.normal();
      y[i] = static_cast<int>(i % 4);
    }
    const auto bins = equal_frequency_bins(x, 16);
    observed += discrete_mutual_information(bins, y);
    for (int p = 0; p < permutations; ++p) {
      rng.shuffle(std::span<int>(y));
      null += discrete_mutual_information(bins, y) / permutations;
    }
  }
  observed /= seeds;
  null /= seeds;
  const double bias = 15.0 * 3.0 / (2.0 * 200.0);
  MESSAGE("noise MI " << observed << ", permutation null " << null << ", analytic bias " << bias);
  CHECK(std::abs(observed - null) < 0.01);
  CHECK(observed - null < 0.05);
  CHECK(std::abs(observed - bias) < 0.02);
}

TEST_CASE("mutual information bounds and identical channels") {
  auto f = random_features(6, 64, 5, 3);
  for (std::size_t r = 0; r < f.rows(); ++r)
    for (std::size_t w = 0; w < 3; ++w) f.values(r, 12 + w) = f.values(r, 3 + w);
  const auto r = rank_mutual_information(f);
  const double bound = std::min(std::log(16.0), std::log(3.0));
  for (const auto& e : r.ordered) {
    CHECK(e.score >= 0.0);
    CHECK(e.score <= bound + 1e-12);
  }
  CHECK(*r.score_of(1) == *r.score_of(4));
  const auto ids = r.electrodes();
  CHECK(std::find(ids.begin(), ids.end(), 1) < std::find(ids.begin(), ids.end(), 4));

  CHECK_THROWS_AS(rank_mutual_information(random_features(6, 64, 2, 1)), ValidationError);
  CHECK_THROWS_AS(rank_mutual_information(random_features(6, 12, 2, 3)), ValidationError);
}

TEST_CASE("permutation importance: pure noise channels stay near zero") {
  const auto f = synthetic_features(8, {0, 3, 6}, 0.05, 12);
  const auto r = rank_permutation_importance(f, ClassifierSpec::with_defaults(ClassifierKind::RF, 1), 12);
  for (int e : {1, 2, 4, 5, 7}) CHECK(std::abs(*r.score_of(e)) <= 2.0);
  CHECK(r.scheme == SelectionScheme::PI);
  CHECK(r.classifier.has_value());
  CHECK(*r.seed == 12);
}

TEST_CASE("permutation importance of a lone informative channel, against leave-channel-out retraining") {
  const auto f = synthetic_features(8, {3}, 0.0, 13, 16);
  const auto spec = ClassifierSpec::with_defaults(ClassifierKind::RF, 2);
  const auto r = rank_permutation_importance(f, spec, 13);

  // oracle: retrain on the same split without each channel
  const auto split = make_stratified_folds(f.labels, 4, 13);
  const auto fit_rows = split.train_rows(0), held_rows = split.test_rows(0);
  const auto held_accuracy = [&](const std::vector<int>& channels) {
    const auto g = f.project(channels);
    const auto model = train(spec, g.select_rows(fit_rows));
    const auto held = g.select_rows(held_rows);
    return accuracy_percent(held.labels, predict(model, held));
  };
  const double baseline = held_accuracy(testing::iota_ids(8));
  CHECK(baseline == 100.0);
  const double chance = 25.0;
  std::vector<int> without3{0, 1, 2, 4, 5, 6, 7};
  CHECK(held_accuracy(without3) <= chance + 5.0);

  CHECK(r.ordered.front().electrode == 3);
  CHECK(*r.score_of(3) >= baseline - chance - 5.0);
  for (int e : {0, 1, 2, 4, 5, 6, 7}) CHECK(*r.score_of(e) == 0.0);
}

TEST_CASE("permutation importance is deterministic and independent of input order and workers") {
  const auto f = synthetic_features(10, {1, 4, 8}, 0.3, 14);
  const auto spec = ClassifierSpec::with_defaults(ClassifierKind::RF, 3);
  const auto a = rank_permutation_importance(f, spec, 14);
  CHECK(rank_permutation_importance(f, spec, 14).ordered == a.ordered);
  CHECK(rank_permutation_importance(f, spec, 14, {5, 4, nullptr}).ordered == a.ordered);
  const std::vector<int> shuffled{7, 2, 9, 0, 4, 1, 8, 3, 6, 5};
  CHECK(rank_permutation_importance(f.project(shuffled), spec, 14).ordered == a.ordered);
}

TEST_CASE("permutation importance honours cancellation") {
  const auto f = synthetic_features(6, {1}, 0.3, 15);
  std::atomic<bool> cancel{true};
  CHECK_THROWS_AS(rank_permutation_importance(f, ClassifierSpec::with_defaults(ClassifierKind::NB), 1,
                                              {5, 1, &cancel}),
                  Cancelled);
}

TEST_CASE("every scheme separates informative channels on small synthetic sets") {
  const std::vector<int> informative{2, 5, 9, 12};
  const auto spec = ClassifierSpec::with_defaults(ClassifierKind::RF, 0);
  for (std::uint64_t seed : {100, 101, 102}) {
    const auto f = synthetic_features(16, informative, 0.05, seed);
    CHECK(informative_on_top(rank_rms_importance(f), informative));
    CHECK(informative_on_top(rank_mutual_information(f), informative));
    CHECK(informative_on_top(rank_permutation_importance(f, spec, seed), informative));
  }
}

TEST_CASE("adding noise channels keeps the informative set on top") {
  const std::vector<int> informative{0, 1};
  const auto ds = generate_synthetic(testing::synthetic(12, informative, 0.0, 16));
  const auto small = build_feature_matrix(ds.trials, std::vector<int>{0, 1, 2, 3});
  const auto large = build_feature_matrix(ds.trials, testing::iota_ids(12));
  const auto spec = ClassifierSpec::with_defaults(ClassifierKind::RF, 4);
  for (auto scheme : {SelectionScheme::RMSI, SelectionScheme::MI, SelectionScheme::PI}) {
    CAPTURE(to_string(scheme));
    CHECK(informative_on_top(rank_electrodes(scheme, small, spec, 16), informative));
    CHECK(informative_on_top(rank_electrodes(scheme, large, spec, 16), informative));
  }
}

TEST_CASE("ranking export") {
  const auto f = random_features(7, 20, 3, 2);
  const auto r = rank_rms_importance(f);
  const auto csv = ranking_csv(r);
  CHECK(csv.substr(0, csv.find('\n')) == "rank,electrode_id,score,scheme");
  CHECK(csv.find(fmt::format("1,{},", r.ordered[0].electrode)) != std::string::npos);
  const auto j = ranking_to_json(r);
  CHECK(j["scheme"] == "RMSI");
  CHECK(j["ordered"].size() == 3);
  CHECK_FALSE(j.contains("classifier"));
}
