#pragma once

// Per-kind fitting and scoring. Inputs are already standardized where the
// kind requires it; labels are class indices 0..classes-1.

#include <cstdint>
#include <span>
#include <vector>

#include "sparseemg/classifiers.hpp"

namespace sparseemg::detail {

ForestModel fit_forest(const ForestParams& p, std::uint64_t seed, const Matrix& x,
                       std::span<const int> y, int classes);
std::vector<int> predict_forest(const ForestModel& m, const Matrix& x, int classes);
/// Share of trees voting for each class.
Matrix proba_forest(const ForestModel& m, const Matrix& x, int classes);

KnnModel fit_knn(const Matrix& x, std::span<const int> y);
std::vector<int> predict_knn(const KnnModel& m, const KnnParams& p, const Matrix& x, int classes);
/// Share of the k nearest neighbours in each class.
Matrix proba_knn(const KnnModel& m, const KnnParams& p, const Matrix& x, int classes);

LogisticModel fit_logistic(const LogisticParams& p, std::uint64_t seed, const Matrix& x,
                           std::span<const int> y, int classes);
std::vector<int> predict_logistic(const LogisticModel& m, const Matrix& x);
Matrix proba_logistic(const LogisticModel& m, const Matrix& x);

NaiveBayesModel fit_naive_bayes(const NaiveBayesParams& p, const Matrix& x, std::span<const int> y,
                                int classes);
/// rows x classes unnormalized log joint likelihood.
Matrix naive_bayes_joint_log_likelihood(const NaiveBayesModel& m, const Matrix& x);
std::vector<int> predict_naive_bayes(const NaiveBayesModel& m, const Matrix& x);
Matrix proba_naive_bayes(const NaiveBayesModel& m, const Matrix& x);

/// Index of the largest value; first wins on ties.
template <class T>
int argmax_first(std::span<const T> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

}  // namespace sparseemg::detail
