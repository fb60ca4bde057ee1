#include <doctest.h>

#include <cmath>

#include "sparseemg/error.hpp"
#include "sparseemg/features.hpp"
#include "sparseemg/rng.hpp"
#include "support.hpp"

using namespace sparseemg;

namespace {

TrialRecord trial_from(std::vector<std::vector<double>> rows, int gesture = 0) {
  TrialRecord t;
  t.gesture_id = gesture;
  t.samples = Matrix(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.samples(r, c) = rows[r][c];
  return t;
}

std::vector<TrialRecord> random_trials(std::uint64_t seed, int n, int channels, int length) {
  CounterRng rng(seed);
  std::vector<TrialRecord> out;
  for (int i = 0; i < n; ++i) {
    TrialRecord t;
    t.gesture_id = i % 3;
    t.trial_index = i;
    t.samples = Matrix(static_cast<std::size_t>(length), static_cast<std::size_t>(channels));
    for (double& v : t.samples.data()) v = rng.normal();
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TEST_CASE("rms window") {
  CHECK(rms_window(std::vector<double>{0, 0, 0}) == 0.0);
  CHECK(rms_window(std::vector<double>{-2.5, -2.5}) == 2.5);
  CHECK(rms_window(std::vector<double>{3, 4}) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  CHECK(rms_window(std::vector<double>{3, 4}) == doctest::Approx(3.5355339059327378));
  CHECK_THROWS_AS(rms_window(std::vector<double>{}), ValidationError);
}

TEST_CASE("trial features are three windows per electrode, channel-major") {
  const auto t = trial_from({{1, 0}, {1, 0}, {2, 0}, {2, 0}, {3, 0}, {3, 0}, {100, 100}});
  const auto f = extract_trial_features(t, std::vector<int>{0, 1});
  REQUIRE(f.size() == 6);
  // T = 7 keeps the first 6 samples
  CHECK(f == std::vector<double>{1, 2, 3, 0, 0, 0});
  const auto swapped = extract_trial_features(t, std::vector<int>{1, 0});
  CHECK(swapped == std::vector<double>{0, 0, 0, 1, 2, 3});
  CHECK_THROWS_AS(extract_trial_features(t, std::vector<int>{2}), ValidationError);
  CHECK_THROWS_AS(extract_trial_features(trial_from({{1}, {1}}), std::vector<int>{0}), ValidationError);
}

TEST_CASE("subset consistency: projecting equals building on the subset") {
  const auto trials = random_trials(5, 12, 6, 31);
  const auto all = testing::iota_ids(6);
  const auto full = build_feature_matrix(trials, all);
  CHECK(full.rows() == 12);
  CHECK(full.cols() == 18);
  for (const std::vector<int>& subset : {std::vector<int>{5}, {4, 1}, {0, 2, 3}}) {
    const auto direct = build_feature_matrix(trials, subset);
    CHECK(direct == full.project(subset));
    for (std::size_t k = 0; k < subset.size(); ++k)
      for (std::size_t r = 0; r < direct.rows(); ++r)
        for (std::size_t w = 0; w < 3; ++w)
          CHECK(direct.values(r, 3 * k + w) ==
                full.values(r, 3 * static_cast<std::size_t>(subset[k]) + w));
  }
  CHECK_THROWS_AS(full.project(std::vector<int>{9}), ValidationError);
}

TEST_CASE("permuting trials permutes rows and labels") {
  auto trials = random_trials(6, 9, 3, 12);
  const auto before = build_feature_matrix(trials, testing::iota_ids(3));
  std::vector<std::size_t> order{8, 0, 4, 2, 6, 1, 7, 3, 5};
  std::vector<TrialRecord> shuffled;
  for (auto i : order) shuffled.push_back(trials[i]);
  CHECK(build_feature_matrix(shuffled, testing::iota_ids(3)) == before.select_rows(order));
}

TEST_CASE("scale equivariance and RMS of a constant offset") {
  auto trials = random_trials(7, 4, 3, 30);
  const auto base = build_feature_matrix(trials, testing::iota_ids(3));
  for (auto& t : trials)
    for (std::size_t r = 0; r < t.samples.rows(); ++r) {
      t.samples(r, 1) *= 4.0;
      t.samples(r, 2) = -0.75;
    }
  const auto scaled = build_feature_matrix(trials, testing::iota_ids(3));
  for (std::size_t r = 0; r < base.rows(); ++r)
    for (std::size_t w = 0; w < 3; ++w) {
      CHECK(scaled.values(r, w) == base.values(r, w));
      CHECK(scaled.values(r, 3 + w) == doctest::Approx(4.0 * base.values(r, 3 + w)).epsilon(1e-14));
      CHECK(scaled.values(r, 6 + w) == 0.75);
    }
}

TEST_CASE("standardizer") {
  const auto f = build_feature_matrix(random_trials(8, 20, 3, 15), testing::iota_ids(3));
  FeatureMatrix with_constant = f;
  for (std::size_t r = 0; r < f.rows(); ++r) with_constant.values(r, 4) = 2.0;
  const auto s = Standardizer::fit(with_constant.values);
  const auto z = s.apply(with_constant);
  for (std::size_t c = 0; c < z.cols(); ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < z.rows(); ++r) mean += z.values(r, c);
    mean /= static_cast<double>(z.rows());
    for (std::size_t r = 0; r < z.rows(); ++r) sq += (z.values(r, c) - mean) * (z.values(r, c) - mean);
    CHECK(std::abs(mean) < 1e-9);
    if (c == 4) {
      CHECK(s.sd[c] == 1.0);
      for (std::size_t r = 0; r < z.rows(); ++r) CHECK(z.values(r, c) == 0.0);
    } else {
      CHECK(std::sqrt(sq / static_cast<double>(z.rows())) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(s.apply(f.project(std::vector<int>{0})), ValidationError);
}

TEST_CASE("feature matrix csv header") {
  const auto f = build_feature_matrix(random_trials(9, 2, 3, 6), std::vector<int>{2, 0});
  const auto csv = feature_matrix_csv(f);
  CHECK(csv.substr(0, csv.find('\n')) == "label,e2_w0,e2_w1,e2_w2,e0_w0,e0_w1,e0_w2");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}
