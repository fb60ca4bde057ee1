#include <algorithm>
#include <map>

#include <fmt/format.h>

#include "sparseemg/classifiers.hpp"
#include "sparseemg/error.hpp"
#include "sparseemg/parallel.hpp"
#include "sparseemg/rng.hpp"

namespace sparseemg {

std::vector<std::size_t> FoldPlan::test_rows(int f) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (fold[i] == f) rows.push_back(i);
  return rows;
}

std::vector<std::size_t> FoldPlan::train_rows(int f) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (fold[i] != f) rows.push_back(i);
  return rows;
}

FoldPlan make_stratified_folds(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("k", "need at least two folds");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [cls, rows] : by_class)
    if (rows.size() < static_cast<std::size_t>(k))
      throw ValidationError("labels", fmt::format("class {} has {} instances; {} folds need at least {}",
                                                  cls, rows.size(), k, k));

  FoldPlan plan;
  plan.k = k;
  plan.fold.assign(labels.size(), -1);
  std::size_t deal = 0;
  for (auto& [cls, rows] : by_class) {
    CounterRng rng(CounterRng::derive(seed, static_cast<std::uint64_t>(static_cast<std::int64_t>(cls))));
    rng.shuffle(std::span<std::size_t>(rows));
    for (auto r : rows) plan.fold[r] = static_cast<int>(deal++ % static_cast<std::size_t>(k));
  }
  return plan;
}

ConfusionMatrix::ConfusionMatrix(std::vector<int> cls)
    : classes(std::move(cls)), counts(classes.size() * classes.size(), 0) {}

void ConfusionMatrix::add(int truth, int predicted) {
  auto index = [&](int id) {
    auto it = std::lower_bound(classes.begin(), classes.end(), id);
    if (it == classes.end() || *it != id)
      throw ValidationError("class", fmt::format("class {} not in confusion matrix", id));
    return static_cast<std::size_t>(it - classes.begin());
  };
  ++at(index(truth), index(predicted));
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes != classes) throw ValidationError("classes", "confusion class lists differ");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (auto c : counts) t += c;
  return t;
}

long long ConfusionMatrix::trace() const {
  long long t = 0;
  for (std::size_t i = 0; i < classes.size(); ++i) t += at(i, i);
  return t;
}

long long ConfusionMatrix::row_sum(std::size_t truth) const {
  long long t = 0;
  for (std::size_t j = 0; j < classes.size(); ++j) t += at(truth, j);
  return t;
}

double ConfusionMatrix::accuracy() const {
  const auto t = total();
  return t == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(t);
}

nlohmann::json confusion_to_json(const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < cm.classes.size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < cm.classes.size(); ++j) row.push_back(cm.at(i, j));
    rows.push_back(std::move(row));
  }
  return {{"classes", cm.classes}, {"counts", std::move(rows)}};
}

double accuracy_percent(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(truth.size());
}

CvResult evaluate_cv(const ClassifierSpec& spec, const FeatureMatrix& features,
                     const FoldPlan& plan, unsigned workers) {
  if (plan.fold.size() != features.rows())
    throw ValidationError("plan", fmt::format("fold plan covers {} rows, features have {}",
                                              plan.fold.size(), features.rows()));
  const auto classes = features.classes();
  const auto k = static_cast<std::size_t>(plan.k);
  std::vector<double> acc(k);
  std::vector<ConfusionMatrix> confusion(k, ConfusionMatrix(classes));

  parallel_for(k, workers, [&](std::size_t f) {
    const auto test = plan.test_rows(static_cast<int>(f));
    const auto fit = plan.train_rows(static_cast<int>(f));
    ClassifierSpec fold_spec = spec;
    fold_spec.seed = CounterRng::derive(spec.seed, f);
    const auto model = train(fold_spec, features.select_rows(fit));
    const auto held = features.select_rows(test);
    const auto pred = predict(model, held);
    acc[f] = accuracy_percent(held.labels, pred);
    for (std::size_t i = 0; i < pred.size(); ++i) confusion[f].add(held.labels[i], pred[i]);
  });

  CvResult out;
  out.confusion = ConfusionMatrix(classes);
  double sum = 0.0;
  for (std::size_t f = 0; f < k; ++f) {
    sum += acc[f];
    out.confusion += confusion[f];
  }
  out.accuracy = sum / static_cast<double>(k);
  out.fold_accuracies = std::move(acc);
  return out;
}

}  // namespace sparseemg
