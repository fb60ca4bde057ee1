// KNN, softmax regression and Gaussian naive Bayes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "models.hpp"
#include "sparseemg/rng.hpp"

namespace sparseemg {

namespace {

/// In-place softmax of logits; returns log-sum-exp.
double softmax_inplace(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return m + std::log(sum);
}

void logits(const Matrix& w, std::span<const double> b, std::span<const double> x,
            std::span<double> out) {
  for (std::size_t c = 0; c < w.rows(); ++c) {
    double z = b[c];
    auto wc = w.row(c);
    for (std::size_t j = 0; j < x.size(); ++j) z += wc[j] * x[j];
    out[c] = z;
  }
}

}  // namespace

double softmax_loss(const Matrix& weights, std::span<const double> bias, const Matrix& x,
                    std::span<const int> label_index, double lambda) {
  std::vector<double> z(weights.rows());
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    logits(weights, bias, x.row(i), z);
    const double true_logit = z[static_cast<std::size_t>(label_index[i])];
    loss += softmax_inplace(z) - true_logit;
  }
  loss /= static_cast<double>(x.rows());
  double sq = 0.0;
  for (double w : weights.data()) sq += w * w;
  return loss + 0.5 * lambda * sq;
}

void softmax_gradient(const Matrix& weights, std::span<const double> bias, const Matrix& x,
                      std::span<const int> label_index, double lambda, Matrix& grad_weights,
                      std::vector<double>& grad_bias) {
  const std::size_t classes = weights.rows();
  const std::size_t d = weights.cols();
  grad_weights = Matrix(classes, d);
  grad_bias.assign(classes, 0.0);
  std::vector<double> p(classes);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xi = x.row(i);
    logits(weights, bias, xi, p);
    softmax_inplace(p);
    for (std::size_t c = 0; c < classes; ++c) {
      const double err =
          (p[c] - (static_cast<std::size_t>(label_index[i]) == c ? 1.0 : 0.0)) * inv_n;
      grad_bias[c] += err;
      auto g = grad_weights.row(c);
      for (std::size_t j = 0; j < d; ++j) g[j] += err * xi[j];
    }
  }
  for (std::size_t k = 0; k < grad_weights.data().size(); ++k)
    grad_weights.data()[k] += lambda * weights.data()[k];
}

namespace detail {

KnnModel fit_knn(const Matrix& x, std::span<const int> y) {
  return {x, std::vector<int>(y.begin(), y.end())};
}

Matrix knn_votes(const KnnModel& m, const KnnParams& p, const Matrix& x, int classes) {
  const std::size_t n = m.rows.rows();
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(p.k), n);
  std::vector<std::pair<double, std::size_t>> dist(n);
  Matrix votes(x.rows(), static_cast<std::size_t>(classes));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto probe = x.row(r);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = m.rows.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < probe.size(); ++j) s += (row[j] - probe[j]) * (row[j] - probe[j]);
      dist[i] = {s, i};
    }
    // equal distances resolve toward the earlier training row
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t i = 0; i < k; ++i)
      votes(r, static_cast<std::size_t>(m.label_index[dist[i].second])) += 1.0;
  }
  return votes;
}

std::vector<int> predict_knn(const KnnModel& m, const KnnParams& p, const Matrix& x, int classes) {
  const Matrix votes = knn_votes(m, p, x, classes);
  std::vector<int> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = argmax_first(votes.row(r));
  return out;
}

Matrix proba_knn(const KnnModel& m, const KnnParams& p, const Matrix& x, int classes) {
  Matrix votes = knn_votes(m, p, x, classes);
  for (std::size_t r = 0; r < votes.rows(); ++r) {
    auto row = votes.row(r);
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& v : row) v /= total;
  }
  return votes;
}

LogisticModel fit_logistic(const LogisticParams& p, std::uint64_t seed, const Matrix& x,
                           std::span<const int> y, int classes) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const auto C = static_cast<std::size_t>(classes);
  CounterRng rng(seed);
  LogisticModel m;
  m.weights = Matrix(C, d);
  for (double& w : m.weights.data()) w = 0.01 * rng.normal();
  m.bias.assign(C, 0.0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> prob(C);
  for (int epoch = 1; epoch <= p.epochs; ++epoch) {
    const double step = p.learning_rate / static_cast<double>(epoch);
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      auto xi = x.row(i);
      logits(m.weights, m.bias, xi, prob);
      softmax_inplace(prob);
      for (std::size_t c = 0; c < C; ++c) {
        const double err = prob[c] - (static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0);
        auto wc = m.weights.row(c);
        for (std::size_t j = 0; j < d; ++j) wc[j] -= step * (err * xi[j] + p.l2_lambda * wc[j]);
        m.bias[c] -= step * err;
      }
    }
  }
  return m;
}

std::vector<int> predict_logistic(const LogisticModel& m, const Matrix& x) {
  std::vector<double> z(m.weights.rows());
  std::vector<int> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    logits(m.weights, m.bias, x.row(r), z);
    out[r] = argmax_first(std::span<const double>(z));
  }
  return out;
}

Matrix proba_logistic(const LogisticModel& m, const Matrix& x) {
  Matrix out(x.rows(), m.weights.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    logits(m.weights, m.bias, x.row(r), out.row(r));
    softmax_inplace(out.row(r));
  }
  return out;
}

NaiveBayesModel fit_naive_bayes(const NaiveBayesParams& p, const Matrix& x, std::span<const int> y,
                                int classes) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const auto C = static_cast<std::size_t>(classes);

  double max_var = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += x(i, j);
    mu /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += (x(i, j) - mu) * (x(i, j) - mu);
    max_var = std::max(max_var, v / static_cast<double>(n));
  }
  // all-constant input would otherwise give zero variances
  const double epsilon = max_var > 0.0 ? p.variance_smoothing * max_var : p.variance_smoothing;

  NaiveBayesModel m;
  m.mean = Matrix(C, d);
  m.variance = Matrix(C, d);
  m.log_prior.assign(C, 0.0);
  std::vector<double> count(C, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(y[i]);
    count[c] += 1.0;
    for (std::size_t j = 0; j < d; ++j) m.mean(c, j) += x(i, j);
  }
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t j = 0; j < d; ++j) m.mean(c, j) /= count[c];
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(y[i]);
    for (std::size_t j = 0; j < d; ++j) {
      const double e = x(i, j) - m.mean(c, j);
      m.variance(c, j) += e * e;
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t j = 0; j < d; ++j) m.variance(c, j) = m.variance(c, j) / count[c] + epsilon;
    m.log_prior[c] = std::log(count[c] / static_cast<double>(n));
  }
  return m;
}

Matrix naive_bayes_joint_log_likelihood(const NaiveBayesModel& m, const Matrix& x) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  const std::size_t C = m.mean.rows();
  Matrix out(x.rows(), C);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < C; ++c) {
      double ll = m.log_prior[c];
      for (std::size_t j = 0; j < row.size(); ++j) {
        const double v = m.variance(c, j);
        const double e = row[j] - m.mean(c, j);
        ll -= 0.5 * (std::log(kTwoPi * v) + e * e / v);
      }
      out(r, c) = ll;
    }
  }
  return out;
}

std::vector<int> predict_naive_bayes(const NaiveBayesModel& m, const Matrix& x) {
  const Matrix jll = naive_bayes_joint_log_likelihood(m, x);
  std::vector<int> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = argmax_first(jll.row(r));
  return out;
}

Matrix proba_naive_bayes(const NaiveBayesModel& m, const Matrix& x) {
  Matrix p = naive_bayes_joint_log_likelihood(m, x);
  for (std::size_t r = 0; r < p.rows(); ++r) softmax_inplace(p.row(r));
  return p;
}

}  // namespace detail
}  // namespace sparseemg
