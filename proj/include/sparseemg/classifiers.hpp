#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparseemg/features.hpp"
#include "sparseemg/matrix.hpp"

namespace sparseemg {

enum class ClassifierKind { RF, KNN, LR, NB };

std::string_view to_string(ClassifierKind k);
ClassifierKind classifier_kind_from_string(std::string_view s);

// Defaults are documented in docs/defaults.md; keep both in sync.
struct ForestParams {
  int trees = 100;
  int max_depth = 30;
  int min_samples_split = 2;
  int features_per_split = 0;  ///< 0 selects floor(sqrt(columns)), at least 1
  bool bootstrap = true;

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct KnnParams {
  int k = 5;
  friend bool operator==(const KnnParams&, const KnnParams&) = default;
};

/// Multinomial softmax trained by per-sample SGD; the step in epoch t
/// (1-based) is learning_rate / t.
struct LogisticParams {
  double l2_lambda = 1e-4;
  int epochs = 500;
  double learning_rate = 0.1;
  friend bool operator==(const LogisticParams&, const LogisticParams&) = default;
};

/// Added variance is variance_smoothing times the largest column variance.
struct NaiveBayesParams {
  double variance_smoothing = 1e-9;
  friend bool operator==(const NaiveBayesParams&, const NaiveBayesParams&) = default;
};

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::RF;
  ForestParams rf;
  KnnParams knn;
  LogisticParams lr;
  NaiveBayesParams nb;
  std::uint64_t seed = 0;

  static ClassifierSpec with_defaults(ClassifierKind kind, std::uint64_t seed = 0) {
    ClassifierSpec s;
    s.kind = kind;
    s.seed = seed;
    return s;
  }

  /// Standardization is fitted for distance and gradient models only.
  bool standardizes() const noexcept {
    return kind == ClassifierKind::KNN || kind == ClassifierKind::LR;
  }

  void validate() const;
  friend bool operator==(const ClassifierSpec&, const ClassifierSpec&) = default;
};

nlohmann::json spec_to_json(const ClassifierSpec& s);
ClassifierSpec spec_from_json(const nlohmann::json& j);

/// Internal node when feature >= 0: rows with x[feature] <= threshold go left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;  ///< class index predicted at a leaf

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  int predict(std::span<const double> row) const;
  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  friend bool operator==(const ForestModel&, const ForestModel&) = default;
};

struct KnnModel {
  Matrix rows;                      ///< standardized training rows
  std::vector<int> label_index;     ///< class index per row
  friend bool operator==(const KnnModel&, const KnnModel&) = default;
};

struct LogisticModel {
  Matrix weights;  ///< classes x columns
  std::vector<double> bias;
  friend bool operator==(const LogisticModel&, const LogisticModel&) = default;
};

struct NaiveBayesModel {
  Matrix mean;      ///< classes x columns
  Matrix variance;  ///< smoothed, classes x columns
  std::vector<double> log_prior;
  friend bool operator==(const NaiveBayesModel&, const NaiveBayesModel&) = default;
};

struct TrainedModel {
  ClassifierSpec spec;
  std::vector<int> classes;  ///< ascending gesture ids seen in training
  std::optional<Standardizer> standardizer;
  std::vector<int> electrode_order;
  std::variant<ForestModel, KnnModel, LogisticModel, NaiveBayesModel> params;

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

TrainedModel train(const ClassifierSpec& spec, const FeatureMatrix& features);

/// One gesture id per row. Every tie resolves to the lowest class id.
std::vector<int> predict(const TrainedModel& model, const FeatureMatrix& features);

/// Class probabilities, rows x classes in model.classes order: tree vote
/// shares (RF), neighbour shares (KNN), softmax (LR), posteriors (NB).
Matrix predict_proba(const TrainedModel& model, const FeatureMatrix& features);

/// Gaussian naive Bayes posteriors, rows x classes.
Matrix naive_bayes_posteriors(const TrainedModel& model, const FeatureMatrix& features);

// Softmax regression objective: mean cross-entropy + lambda/2 * ||W||^2
// (bias unpenalized). Exposed for gradient checking.
double softmax_loss(const Matrix& weights, std::span<const double> bias, const Matrix& x,
                    std::span<const int> label_index, double lambda);
void softmax_gradient(const Matrix& weights, std::span<const double> bias, const Matrix& x,
                      std::span<const int> label_index, double lambda, Matrix& grad_weights,
                      std::vector<double>& grad_bias);

nlohmann::json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

struct FoldPlan {
  int k = 0;
  std::vector<int> fold;  ///< fold index per row

  std::vector<std::size_t> test_rows(int f) const;
  std::vector<std::size_t> train_rows(int f) const;
  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

/// Per class (ascending id): rows shuffled with a per-class stream, then dealt
/// round-robin. The deal position carries over between classes so fold sizes
/// stay balanced overall as well as per class.
FoldPlan make_stratified_folds(std::span<const int> labels, int k, std::uint64_t seed);

struct ConfusionMatrix {
  std::vector<int> classes;
  std::vector<long long> counts;  ///< row = true class, column = predicted

  explicit ConfusionMatrix(std::vector<int> cls = {});
  long long& at(std::size_t truth, std::size_t predicted) {
    return counts[truth * classes.size() + predicted];
  }
  long long at(std::size_t truth, std::size_t predicted) const {
    return counts[truth * classes.size() + predicted];
  }
  /// Records one prediction by gesture id.
  void add(int truth, int predicted);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  long long total() const;
  long long trace() const;
  long long row_sum(std::size_t truth) const;
  /// trace / total
  double accuracy() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

nlohmann::json confusion_to_json(const ConfusionMatrix& cm);

struct CvResult {
  double accuracy = 0.0;  ///< mean of per-fold accuracies, percent
  std::vector<double> fold_accuracies;
  ConfusionMatrix confusion;
};

/// Fold f trains with seed derive(spec.seed, f) on the out-of-fold rows and
/// predicts the fold. Results do not depend on `workers`.
CvResult evaluate_cv(const ClassifierSpec& spec, const FeatureMatrix& features,
                     const FoldPlan& plan, unsigned workers = 1);

/// Percentage of matching labels.
double accuracy_percent(std::span<const int> truth, std::span<const int> predicted);

}  // namespace sparseemg
