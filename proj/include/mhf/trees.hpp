#pragma once

#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mhf/checkpoint.hpp"
#include "mhf/kernels.hpp"

namespace mhf::trees {

// Internal nodes send x[feature] <= threshold to `left`.
struct Node {
  int feature = -1;
  double threshold = 0;
  int left = -1;
  int right = -1;
  std::vector<double> value;  // leaf payload: class distribution or a single weight
  bool is_leaf() const { return feature < 0; }
};

class Tree {
 public:
  const std::vector<double>& leaf_value(const double* x, Eigen::Index stride = 1) const;
  template <typename Row>
  const std::vector<double>& leaf_value_row(const Row& row) const {
    int n = 0;
    while (!nodes_[n].is_leaf()) n = row(nodes_[n].feature) <= nodes_[n].threshold ? nodes_[n].left : nodes_[n].right;
    return nodes_[n].value;
  }
  int depth() const;
  std::size_t num_leaves() const;
  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& mutable_nodes() { return nodes_; }

  void save(BinaryWriter& w) const;
  static Tree load(BinaryReader& r);

 private:
  std::vector<Node> nodes_;
};

struct ClassificationTreeParams {
  int max_depth = 8;
  int min_samples_leaf = 1;
  int max_features = 0;  // features tried per node; 0 means all
};

// CART with weighted Gini impurity. Leaves hold the weighted class
// distribution over `num_classes`.
Tree fit_classification_tree(const Eigen::MatrixXd& X, std::span<const int> y, std::span<const double> weight,
                             std::span<const int> rows, int num_classes, const ClassificationTreeParams& params,
                             std::mt19937_64& rng);

enum class SplitMethod { kExact, kHistogram };
enum class Growth { kDepthwise, kLeafwise };

struct GradientTreeParams {
  int max_depth = 4;    // <= 0 means unlimited (leaf-wise only)
  int max_leaves = 0;   // leaf-wise budget; 0 means unlimited
  kernels::SplitParams split;
  SplitMethod method = SplitMethod::kExact;
  Growth growth = Growth::kDepthwise;
};

// Regression tree on per-sample gradient/hessian. Leaves hold -G/(H+lambda).
// `binned` is required for the histogram method. Split gains are added to
// `gain_importance` (sized to X.cols()) when given.
Tree fit_gradient_tree(const Eigen::MatrixXd& X, const kernels::BinnedMatrix* binned, std::span<const double> grad,
                       std::span<const double> hess, const GradientTreeParams& params,
                       std::vector<double>* gain_importance);

}  // namespace mhf::trees
