#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace grader::stats {

struct TreeOptions {
  int max_depth = 8;
  int min_leaf = 8;
};

// Multi-output CART regressor: axis-aligned splits chosen to minimize the
// summed squared error over all outputs; leaves predict the output mean.
class RegressionTree {
 public:
  // Fits on the given rows of X (n x d) and Y (n x k), splitting only on the
  // listed feature columns. An empty feature list yields a single leaf.
  void fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, std::span<const int> rows,
           std::span<const int> features, const TreeOptions& options = {});

  // Prediction for row `row` of X.
  Eigen::VectorXd predict(const Eigen::MatrixXd& X, int row) const;
  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    Eigen::VectorXd value;
  };

  int build(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, std::vector<int>& rows, std::span<const int> features,
            const TreeOptions& options, int depth);

  std::vector<Node> nodes_;
};

}  // namespace grader::stats
