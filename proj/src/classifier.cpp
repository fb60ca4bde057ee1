#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "models.hpp"
#include "sparseemg/classifiers.hpp"
#include "sparseemg/error.hpp"

namespace sparseemg {

using nlohmann::json;

std::string_view to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::RF: return "RF";
    case ClassifierKind::KNN: return "KNN";
    case ClassifierKind::LR: return "LR";
    case ClassifierKind::NB: return "NB";
  }
  return "RF";
}

ClassifierKind classifier_kind_from_string(std::string_view s) {
  if (s == "RF") return ClassifierKind::RF;
  if (s == "KNN") return ClassifierKind::KNN;
  if (s == "LR") return ClassifierKind::LR;
  if (s == "NB") return ClassifierKind::NB;
  throw ValidationError("classifier", fmt::format("unknown classifier '{}' (RF|KNN|LR|NB)", s));
}

void ClassifierSpec::validate() const {
  switch (kind) {
    case ClassifierKind::RF:
      if (rf.trees <= 0) throw ValidationError("rf.trees", "must be positive");
      if (rf.max_depth <= 0) throw ValidationError("rf.max_depth", "must be positive");
      if (rf.min_samples_split < 2) throw ValidationError("rf.min_samples_split", "must be >= 2");
      if (rf.features_per_split < 0)
        throw ValidationError("rf.features_per_split", "must be nonnegative");
      break;
    case ClassifierKind::KNN:
      if (knn.k <= 0) throw ValidationError("knn.k", "must be positive");
      break;
    case ClassifierKind::LR:
      if (!(lr.l2_lambda >= 0.0)) throw ValidationError("lr.l2_lambda", "must be nonnegative");
      if (lr.epochs <= 0) throw ValidationError("lr.epochs", "must be positive");
      if (!(lr.learning_rate > 0.0)) throw ValidationError("lr.learning_rate", "must be positive");
      break;
    case ClassifierKind::NB:
      if (!(nb.variance_smoothing > 0.0))
        throw ValidationError("nb.variance_smoothing", "must be positive");
      break;
  }
}

json spec_to_json(const ClassifierSpec& s) {
  json h;
  switch (s.kind) {
    case ClassifierKind::RF:
      h = {{"trees", s.rf.trees},
           {"max_depth", s.rf.max_depth},
           {"min_samples_split", s.rf.min_samples_split},
           {"features_per_split", s.rf.features_per_split},
           {"bootstrap", s.rf.bootstrap}};
      break;
    case ClassifierKind::KNN: h = {{"k", s.knn.k}, {"metric", "euclidean"}}; break;
    case ClassifierKind::LR:
      h = {{"l2_lambda", s.lr.l2_lambda},
           {"epochs", s.lr.epochs},
           {"learning_rate", s.lr.learning_rate}};
      break;
    case ClassifierKind::NB: h = {{"variance_smoothing", s.nb.variance_smoothing}}; break;
  }
  return {{"kind", to_string(s.kind)}, {"hyperparameters", std::move(h)}, {"seed", s.seed}};
}

ClassifierSpec spec_from_json(const json& j) {
  ClassifierSpec s;
  s.kind = classifier_kind_from_string(j.at("kind").get<std::string>());
  s.seed = j.value("seed", std::uint64_t{0});
  const json h = j.value("hyperparameters", json::object());
  switch (s.kind) {
    case ClassifierKind::RF:
      s.rf.trees = h.value("trees", s.rf.trees);
      s.rf.max_depth = h.value("max_depth", s.rf.max_depth);
      s.rf.min_samples_split = h.value("min_samples_split", s.rf.min_samples_split);
      s.rf.features_per_split = h.value("features_per_split", s.rf.features_per_split);
      s.rf.bootstrap = h.value("bootstrap", s.rf.bootstrap);
      break;
    case ClassifierKind::KNN: s.knn.k = h.value("k", s.knn.k); break;
    case ClassifierKind::LR:
      s.lr.l2_lambda = h.value("l2_lambda", s.lr.l2_lambda);
      s.lr.epochs = h.value("epochs", s.lr.epochs);
      s.lr.learning_rate = h.value("learning_rate", s.lr.learning_rate);
      break;
    case ClassifierKind::NB:
      s.nb.variance_smoothing = h.value("variance_smoothing", s.nb.variance_smoothing);
      break;
  }
  s.validate();
  return s;
}

namespace {

std::vector<int> label_indices(const std::vector<int>& labels, const std::vector<int>& classes) {
  std::vector<int> idx(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    idx[i] = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), labels[i]) -
                              classes.begin());
  return idx;
}

Matrix prepared(const TrainedModel& model, const FeatureMatrix& features) {
  const std::size_t expected =
      model.standardizer ? model.standardizer->mean.size() : kWindows * model.electrode_order.size();
  if (features.cols() != expected)
    throw ValidationError("features", fmt::format("model expects {} columns, got {}", expected,
                                                  features.cols()));
  return model.standardizer ? model.standardizer->apply(features.values) : features.values;
}

}  // namespace

TrainedModel train(const ClassifierSpec& spec, const FeatureMatrix& features) {
  spec.validate();
  if (features.rows() == 0) throw ValidationError("features", "no training rows");
  if (features.labels.size() != features.rows())
    throw ValidationError("labels", "length differs from row count");
  for (double v : features.values.data())
    if (!std::isfinite(v)) throw ValidationError("features", "non-finite feature value");

  TrainedModel model;
  model.spec = spec;
  model.classes = features.classes();
  if (model.classes.size() < 2)
    throw ValidationError("labels", "training needs at least two classes");
  model.electrode_order = features.electrode_order;
  const auto y = label_indices(features.labels, model.classes);
  const int classes = static_cast<int>(model.classes.size());

  Matrix x = features.values;
  if (spec.standardizes()) {
    model.standardizer = Standardizer::fit(x);
    x = model.standardizer->apply(x);
  }
  switch (spec.kind) {
    case ClassifierKind::RF: model.params = detail::fit_forest(spec.rf, spec.seed, x, y, classes); break;
    case ClassifierKind::KNN: model.params = detail::fit_knn(x, y); break;
    case ClassifierKind::LR:
      model.params = detail::fit_logistic(spec.lr, spec.seed, x, y, classes);
      break;
    case ClassifierKind::NB: model.params = detail::fit_naive_bayes(spec.nb, x, y, classes); break;
  }
  return model;
}

std::vector<int> predict(const TrainedModel& model, const FeatureMatrix& features) {
  const Matrix x = prepared(model, features);
  const int classes = static_cast<int>(model.classes.size());
  std::vector<int> idx = std::visit(
      [&](const auto& p) -> std::vector<int> {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ForestModel>) return detail::predict_forest(p, x, classes);
        else if constexpr (std::is_same_v<T, KnnModel>)
          return detail::predict_knn(p, model.spec.knn, x, classes);
        else if constexpr (std::is_same_v<T, LogisticModel>) return detail::predict_logistic(p, x);
        else return detail::predict_naive_bayes(p, x);
      },
      model.params);
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out[i] = model.classes[static_cast<std::size_t>(idx[i])];
  return out;
}

Matrix predict_proba(const TrainedModel& model, const FeatureMatrix& features) {
  const Matrix x = prepared(model, features);
  const int classes = static_cast<int>(model.classes.size());
  return std::visit(
      [&](const auto& p) -> Matrix {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ForestModel>) return detail::proba_forest(p, x, classes);
        else if constexpr (std::is_same_v<T, KnnModel>)
          return detail::proba_knn(p, model.spec.knn, x, classes);
        else if constexpr (std::is_same_v<T, LogisticModel>) return detail::proba_logistic(p, x);
        else return detail::proba_naive_bayes(p, x);
      },
      model.params);
}

Matrix naive_bayes_posteriors(const TrainedModel& model, const FeatureMatrix& features) {
  const auto* nb = std::get_if<NaiveBayesModel>(&model.params);
  if (!nb) throw ValidationError("model", "not a naive Bayes model");
  return detail::proba_naive_bayes(*nb, prepared(model, features));
}

// ---- persistence -----------------------------------------------------------

namespace {

constexpr int kModelFormatVersion = 1;

json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

}  // namespace

json model_to_json(const TrainedModel& model) {
  json params;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ForestModel>) {
          json trees = json::array();
          for (const auto& t : p.trees) {
            json f = json::array(), th = json::array(), l = json::array(), r = json::array(),
                 lab = json::array();
            for (const auto& n : t.nodes) {
              f.push_back(n.feature);
              th.push_back(n.threshold);
              l.push_back(n.left);
              r.push_back(n.right);
              lab.push_back(n.label);
            }
            trees.push_back({{"feature", f}, {"threshold", th}, {"left", l}, {"right", r}, {"label", lab}});
          }
          params = {{"trees", std::move(trees)}};
        } else if constexpr (std::is_same_v<T, KnnModel>) {
          params = {{"rows", matrix_to_json(p.rows)}, {"label_index", p.label_index}};
        } else if constexpr (std::is_same_v<T, LogisticModel>) {
          params = {{"weights", matrix_to_json(p.weights)}, {"bias", p.bias}};
        } else {
          params = {{"mean", matrix_to_json(p.mean)},
                    {"variance", matrix_to_json(p.variance)},
                    {"log_prior", p.log_prior}};
        }
      },
      model.params);
  json j = {{"format", "sparseemg-model"},
            {"version", kModelFormatVersion},
            {"spec", spec_to_json(model.spec)},
            {"classes", model.classes},
            {"electrode_order", model.electrode_order},
            {"params", std::move(params)}};
  j["standardizer"] = model.standardizer
                          ? json{{"mean", model.standardizer->mean}, {"sd", model.standardizer->sd}}
                          : json(nullptr);
  return j;
}

TrainedModel model_from_json(const json& j) {
  if (j.value("format", std::string{}) != "sparseemg-model")
    throw Error("not a sparseemg model file");
  if (j.value("version", 0) != kModelFormatVersion)
    throw Error(fmt::format("unsupported model version {}", j.value("version", 0)));
  TrainedModel m;
  m.spec = spec_from_json(j.at("spec"));
  m.classes = j.at("classes").get<std::vector<int>>();
  m.electrode_order = j.at("electrode_order").get<std::vector<int>>();
  if (!j.at("standardizer").is_null())
    m.standardizer = Standardizer{j["standardizer"].at("mean").get<std::vector<double>>(),
                                  j["standardizer"].at("sd").get<std::vector<double>>()};
  const json& p = j.at("params");
  switch (m.spec.kind) {
    case ClassifierKind::RF: {
      ForestModel f;
      for (const auto& t : p.at("trees")) {
        DecisionTree tree;
        const auto feature = t.at("feature").get<std::vector<int>>();
        const auto threshold = t.at("threshold").get<std::vector<double>>();
        const auto left = t.at("left").get<std::vector<int>>();
        const auto right = t.at("right").get<std::vector<int>>();
        const auto label = t.at("label").get<std::vector<int>>();
        for (std::size_t i = 0; i < feature.size(); ++i)
          tree.nodes.push_back({feature[i], threshold[i], left[i], right[i], label[i]});
        f.trees.push_back(std::move(tree));
      }
      m.params = std::move(f);
      break;
    }
    case ClassifierKind::KNN:
      m.params = KnnModel{matrix_from_json(p.at("rows")), p.at("label_index").get<std::vector<int>>()};
      break;
    case ClassifierKind::LR:
      m.params = LogisticModel{matrix_from_json(p.at("weights")), p.at("bias").get<std::vector<double>>()};
      break;
    case ClassifierKind::NB:
      m.params = NaiveBayesModel{matrix_from_json(p.at("mean")), matrix_from_json(p.at("variance")),
                                 p.at("log_prior").get<std::vector<double>>()};
      break;
  }
  return m;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << model_to_json(model).dump();
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open model '{}'", path.string()));
  try {
    return model_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(fmt::format("malformed model '{}': {}", path.string(), e.what()));
  }
}

}  // namespace sparseemg
