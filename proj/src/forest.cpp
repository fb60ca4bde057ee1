// Random forest of Gini-impurity CART trees.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "models.hpp"
#include "sparseemg/rng.hpp"

namespace sparseemg::detail {

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = -1.0;  // sum over children of (sum_c count_c^2) / n_child; larger is purer
};

class TreeBuilder {
 public:
  TreeBuilder(const ForestParams& p, const Matrix& x, std::span<const int> y, int classes,
              std::size_t features_per_split, CounterRng& rng)
      : p_(p), x_(x), y_(y), mtry_(features_per_split), rng_(rng),
        order_(x.cols()), counts_(static_cast<std::size_t>(classes)),
        left_(static_cast<std::size_t>(classes)) {
    std::iota(order_.begin(), order_.end(), 0);
  }

  DecisionTree build(std::vector<std::size_t> samples) {
    DecisionTree tree;
    struct Pending {
      int node;
      int depth;
      std::vector<std::size_t> samples;
    };
    std::vector<Pending> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, 0, std::move(samples)});
    while (!stack.empty()) {
      Pending job = std::move(stack.back());
      stack.pop_back();

      std::fill(counts_.begin(), counts_.end(), 0);
      for (auto s : job.samples) ++counts_[static_cast<std::size_t>(y_[s])];
      const int majority = argmax_first(std::span<const std::size_t>(counts_));
      tree.nodes[static_cast<std::size_t>(job.node)].label = majority;

      const bool pure = counts_[static_cast<std::size_t>(majority)] == job.samples.size();
      if (pure || job.depth >= p_.max_depth ||
          job.samples.size() < static_cast<std::size_t>(std::max(2, p_.min_samples_split)))
        continue;

      const Split split = best_split(job.samples);
      if (split.feature < 0) continue;

      std::vector<std::size_t> left, right;
      for (auto s : job.samples)
        (x_(s, static_cast<std::size_t>(split.feature)) <= split.threshold ? left : right).push_back(s);

      const int l = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[static_cast<std::size_t>(job.node)];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = l;
      node.right = l + 1;
      stack.push_back({l + 1, job.depth + 1, std::move(right)});
      stack.push_back({l, job.depth + 1, std::move(left)});
    }
    return tree;
  }

 private:
  // Draws candidate columns without replacement. After mtry draws the search
  // stops if some candidate admitted a split; otherwise it keeps drawing so a
  // node is only made a leaf when every column is constant on it.
  Split best_split(const std::vector<std::size_t>& samples) {
    Split best;
    const std::size_t d = order_.size();
    std::size_t examined = 0;
    for (std::size_t i = 0; i < d; ++i) {
      if (examined >= mtry_ && best.feature >= 0) break;
      const auto j = i + static_cast<std::size_t>(rng_.below(d - i));
      std::swap(order_[i], order_[j]);
      ++examined;
      scan_feature(order_[i], samples, best);
    }
    return best;
  }

  void scan_feature(std::size_t f, const std::vector<std::size_t>& samples, Split& best) {
    values_.clear();
    for (auto s : samples) values_.emplace_back(x_(s, f), y_[s]);
    std::sort(values_.begin(), values_.end());
    if (values_.front().first == values_.back().first) return;

    const std::size_t n = values_.size();
    std::fill(left_.begin(), left_.end(), 0);
    double left_sq = 0.0;
    double right_sq = 0.0;
    for (auto c : counts_) right_sq += static_cast<double>(c) * static_cast<double>(c);
    std::vector<std::size_t>& right = right_scratch_;
    right.assign(counts_.begin(), counts_.end());

    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto c = static_cast<std::size_t>(values_[i].second);
      left_sq += 2.0 * static_cast<double>(left_[c]) + 1.0;
      ++left_[c];
      right_sq -= 2.0 * static_cast<double>(right[c]) - 1.0;
      --right[c];
      if (values_[i].first == values_[i + 1].first) continue;
      const double nl = static_cast<double>(i + 1);
      const double nr = static_cast<double>(n - i - 1);
      const double score = left_sq / nl + right_sq / nr;
      if (score > best.score) {
        double threshold = 0.5 * (values_[i].first + values_[i + 1].first);
        if (threshold >= values_[i + 1].first) threshold = values_[i].first;
        best = {static_cast<int>(f), threshold, score};
      }
    }
  }

  const ForestParams& p_;
  const Matrix& x_;
  std::span<const int> y_;
  std::size_t mtry_;
  CounterRng& rng_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> left_;
  std::vector<std::size_t> right_scratch_;
  std::vector<std::pair<double, int>> values_;
};

}  // namespace

ForestModel fit_forest(const ForestParams& p, std::uint64_t seed, const Matrix& x,
                       std::span<const int> y, int classes) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  std::size_t mtry = p.features_per_split > 0
                         ? static_cast<std::size_t>(p.features_per_split)
                         : static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d))));
  mtry = std::clamp<std::size_t>(mtry, 1, d);

  ForestModel model;
  model.trees.reserve(static_cast<std::size_t>(p.trees));
  for (int t = 0; t < p.trees; ++t) {
    CounterRng rng(CounterRng::derive(seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> samples(n);
    if (p.bootstrap) {
      for (auto& s : samples) s = static_cast<std::size_t>(rng.below(n));
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    TreeBuilder builder(p, x, y, classes, mtry, rng);
    model.trees.push_back(builder.build(std::move(samples)));
  }
  return model;
}

std::vector<int> predict_forest(const ForestModel& m, const Matrix& x, int classes) {
  std::vector<int> out(x.rows());
  std::vector<int> votes(static_cast<std::size_t>(classes));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& tree : m.trees) ++votes[static_cast<std::size_t>(tree.predict(x.row(r)))];
    out[r] = argmax_first(std::span<const int>(votes));
  }
  return out;
}

Matrix proba_forest(const ForestModel& m, const Matrix& x, int classes) {
  Matrix out(x.rows(), static_cast<std::size_t>(classes));
  const double share = 1.0 / static_cast<double>(m.trees.size());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (const auto& tree : m.trees) out(r, static_cast<std::size_t>(tree.predict(x.row(r)))) += share;
  return out;
}

}  // namespace sparseemg::detail

namespace sparseemg {

int DecisionTree::predict(std::span<const double> row) const {
  std::size_t i = 0;
  for (;;) {
    const auto& node = nodes[i];
    if (node.feature < 0) return node.label;
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(node.feature)] <= node.threshold
                                     ? node.left
                                     : node.right);
  }
}

}  // namespace sparseemg
