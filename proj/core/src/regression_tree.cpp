#include "grader/regression_tree.hpp"

#include <algorithm>

namespace grader::stats {

void RegressionTree::fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, std::span<const int> rows,
                         std::span<const int> features, const TreeOptions& options) {
  nodes_.clear();
  std::vector<int> r(rows.begin(), rows.end());
  build(X, Y, r, features, options, 0);
}

int RegressionTree::build(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, std::vector<int>& rows,
                          std::span<const int> features, const TreeOptions& options, int depth) {
  const int k = static_cast<int>(Y.cols());
  const int n = static_cast<int>(rows.size());
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{});

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(k);
  for (int r : rows) sum += Y.row(r).transpose();
  nodes_[id].value = n > 0 ? Eigen::VectorXd(sum / n) : sum;

  if (depth >= options.max_depth || n < 2 * options.min_leaf || features.empty()) return id;

  const double base = -sum.squaredNorm() / n;  // SSE up to the constant sum of y^2
  double best_gain = 1e-12;
  int best_feature = -1;
  double best_threshold = 0.0;

  std::vector<int> order(rows);
  Eigen::VectorXd left(k);
  for (int f : features) {
    std::sort(order.begin(), order.end(), [&](int a, int b) { return X(a, f) < X(b, f); });
    if (X(order.front(), f) == X(order.back(), f)) continue;
    left.setZero();
    for (int i = 0; i < n - options.min_leaf; ++i) {
      left += Y.row(order[i]).transpose();
      const int nl = i + 1;
      if (nl < options.min_leaf) continue;
      const double xa = X(order[i], f);
      const double xb = X(order[i + 1], f);
      if (xa == xb) continue;
      const int nr = n - nl;
      const double sse = -left.squaredNorm() / nl - (sum - left).squaredNorm() / nr;
      const double gain = base - sse;
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = f;
        best_threshold = 0.5 * (xa + xb);
      }
    }
  }
  if (best_feature < 0) return id;

  std::vector<int> lrows, rrows;
  lrows.reserve(n);
  rrows.reserve(n);
  for (int r : rows) (X(r, best_feature) <= best_threshold ? lrows : rrows).push_back(r);
  rows.clear();
  rows.shrink_to_fit();

  nodes_[id].feature = best_feature;
  nodes_[id].threshold = best_threshold;
  const int l = build(X, Y, lrows, features, options, depth + 1);
  nodes_[id].left = l;
  const int rr = build(X, Y, rrows, features, options, depth + 1);
  nodes_[id].right = rr;
  return id;
}

Eigen::VectorXd RegressionTree::predict(const Eigen::MatrixXd& X, int row) const {
  int id = 0;
  while (nodes_[id].feature >= 0) {
    id = X(row, nodes_[id].feature) <= nodes_[id].threshold ? nodes_[id].left : nodes_[id].right;
  }
  return nodes_[id].value;
}

}  // namespace grader::stats
