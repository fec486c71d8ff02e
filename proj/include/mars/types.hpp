#pragma once

#include <Eigen/Dense>

#include <vector>

namespace mars {

// Row-per-sample convention: an n x d matrix holds n points in R^d.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct LabeledDataset {
  Matrix points;
  std::vector<int> labels;
  // Generating class proportions, when known.
  Vector true_proportions;

  int size() const { return static_cast<int>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
};

}  // namespace mars
