#include "mhf/trees.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

namespace mhf::trees {

const std::vector<double>& Tree::leaf_value(const double* x, Eigen::Index stride) const {
  int n = 0;
  while (!nodes_[n].is_leaf()) {
    n = x[nodes_[n].feature * stride] <= nodes_[n].threshold ? nodes_[n].left : nodes_[n].right;
  }
  return nodes_[n].value;
}

int Tree::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf()) continue;
    d[nodes_[i].left] = d[i] + 1;
    d[nodes_[i].right] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

std::size_t Tree::num_leaves() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
}

void Tree::save(BinaryWriter& w) const {
  w.put<std::uint64_t>(nodes_.size());
  for (const auto& n : nodes_) {
    w.put(n.feature);
    w.put(n.threshold);
    w.put(n.left);
    w.put(n.right);
    w.put_vector(n.value);
  }
}

Tree Tree::load(BinaryReader& r) {
  Tree t;
  auto n = r.get<std::uint64_t>();
  t.nodes_.resize(n);
  for (auto& node : t.nodes_) {
    node.feature = r.get<int>();
    node.threshold = r.get<double>();
    node.left = r.get<int>();
    node.right = r.get<int>();
    node.value = r.get_vector<double>();
  }
  return t;
}

namespace {

struct ClassificationBuilder {
  const Eigen::MatrixXd& X;
  std::span<const int> y;
  std::span<const double> w;
  int num_classes;
  const ClassificationTreeParams& params;
  std::mt19937_64& rng;
  std::vector<Node>& nodes;

  std::vector<double> distribution(const std::vector<int>& rows) const {
    std::vector<double> c(num_classes, 0.0);
    for (int r : rows) c[y[r]] += w[r];
    return c;
  }

  int build(std::vector<int> rows, int depth) {
    int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    auto counts = distribution(rows);
    double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    int nonzero = static_cast<int>(std::count_if(counts.begin(), counts.end(), [](double v) { return v > 0; }));

    auto make_leaf = [&] {
      std::vector<double> p(num_classes, 0.0);
      if (total > 0) {
        for (int k = 0; k < num_classes; ++k) p[k] = counts[k] / total;
      }
      nodes[id].value = std::move(p);
      return id;
    };
    if ((params.max_depth > 0 && depth >= params.max_depth) || nonzero <= 1 ||
        static_cast<int>(rows.size()) < 2 * params.min_samples_leaf) {
      return make_leaf();
    }

    const int cols = static_cast<int>(X.cols());
    std::vector<int> features(cols);
    std::iota(features.begin(), features.end(), 0);
    int tried = cols;
    if (params.max_features > 0 && params.max_features < cols) {
      for (int i = 0; i < params.max_features; ++i) {
        std::uniform_int_distribution<int> pick(i, cols - 1);
        std::swap(features[i], features[pick(rng)]);
      }
      tried = params.max_features;
      std::sort(features.begin(), features.begin() + tried);
    }

    double parent_impurity = total - [&] {
      double s = 0;
      for (double c : counts) s += c * c;
      return total > 0 ? s / total : 0.0;
    }();
    double best_impurity = parent_impurity - 1e-12 * std::max(1.0, parent_impurity);
    int best_feature = -1;
    double best_threshold = 0;
    std::vector<int> order;
    std::vector<double> left(num_classes);
    for (int fi = 0; fi < tried; ++fi) {
      int f = features[fi];
      order = rows;
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return X(a, f) < X(b, f) || (X(a, f) == X(b, f) && a < b);
      });
      std::fill(left.begin(), left.end(), 0.0);
      double wl = 0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        int r = order[i];
        left[y[r]] += w[r];
        wl += w[r];
        double v = X(r, f), next = X(order[i + 1], f);
        if (v == next) continue;
        int nl = static_cast<int>(i + 1), nr = static_cast<int>(order.size()) - nl;
        if (nl < params.min_samples_leaf || nr < params.min_samples_leaf) continue;
        double wr = total - wl;
        double sl = 0, sr = 0;
        for (int k = 0; k < num_classes; ++k) {
          sl += left[k] * left[k];
          double rk = counts[k] - left[k];
          sr += rk * rk;
        }
        double impurity = (wl > 0 ? wl - sl / wl : 0.0) + (wr > 0 ? wr - sr / wr : 0.0);
        if (impurity < best_impurity) {
          best_impurity = impurity;
          best_feature = f;
          best_threshold = 0.5 * (v + next);
        }
      }
    }
    if (best_feature < 0) return make_leaf();

    std::vector<int> lrows, rrows;
    for (int r : rows) (X(r, best_feature) <= best_threshold ? lrows : rrows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes[id].feature = best_feature;
    nodes[id].threshold = best_threshold;
    int l = build(std::move(lrows), depth + 1);
    int rr = build(std::move(rrows), depth + 1);
    nodes[id].left = l;
    nodes[id].right = rr;
    return id;
  }
};

struct GradientBuilder {
  const Eigen::MatrixXd& X;
  const kernels::BinnedMatrix* binned;
  std::span<const double> g;
  std::span<const double> h;
  const GradientTreeParams& params;
  std::vector<double>* importance;
  std::vector<Node>& nodes;

  double leaf_weight(const std::vector<int>& rows) const {
    double G = 0, H = 0;
    for (int r : rows) {
      G += g[r];
      H += h[r];
    }
    return -G / (H + params.split.lambda);
  }

  kernels::SplitCandidate find_split(const std::vector<int>& rows) const {
    if (params.method == SplitMethod::kHistogram) {
      auto hist = kernels::parallel::build_histogram(*binned, rows, g, h);
      return kernels::parallel::best_histogram_split(*binned, hist, params.split);
    }
    return kernels::parallel::best_exact_split(X, rows, g, h, params.split);
  }

  void partition(const std::vector<int>& rows, const kernels::SplitCandidate& s, std::vector<int>& l,
                 std::vector<int>& r) const {
    for (int row : rows) (X(row, s.feature) <= s.threshold ? l : r).push_back(row);
  }

  void apply_split(int id, const kernels::SplitCandidate& s) {
    nodes[id].feature = s.feature;
    nodes[id].threshold = s.threshold;
    nodes[id].value.clear();
    if (importance) (*importance)[s.feature] += s.gain;
  }

  int build_depthwise(const std::vector<int>& rows, int depth) {
    int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes[id].value = {leaf_weight(rows)};
    if (params.max_depth > 0 && depth >= params.max_depth) return id;
    auto s = find_split(rows);
    if (!s.valid() || s.gain <= 0) return id;
    std::vector<int> l, r;
    partition(rows, s, l, r);
    apply_split(id, s);
    int li = build_depthwise(l, depth + 1);
    int ri = build_depthwise(r, depth + 1);
    nodes[id].left = li;
    nodes[id].right = ri;
    return id;
  }

  void build_leafwise(std::vector<int> rows) {
    struct Open {
      int id;
      int depth;
      std::vector<int> rows;
      kernels::SplitCandidate split;
    };
    auto open_leaf = [&](std::vector<int> r, int depth) {
      int id = static_cast<int>(nodes.size());
      nodes.emplace_back();
      nodes[id].value = {leaf_weight(r)};
      kernels::SplitCandidate s;
      if (params.max_depth <= 0 || depth < params.max_depth) s = find_split(r);
      return Open{id, depth, std::move(r), s};
    };
    std::vector<Open> open;
    open.push_back(open_leaf(std::move(rows), 0));
    std::size_t leaves = 1;
    while (params.max_leaves <= 0 || leaves < static_cast<std::size_t>(params.max_leaves)) {
      int best = -1;
      for (std::size_t i = 0; i < open.size(); ++i) {
        const auto& s = open[i].split;
        if (!s.valid() || s.gain <= 0) continue;
        if (best < 0 || s.gain > open[best].split.gain) best = static_cast<int>(i);
      }
      if (best < 0) break;
      Open leaf = std::move(open[best]);
      open.erase(open.begin() + best);
      std::vector<int> l, r;
      partition(leaf.rows, leaf.split, l, r);
      apply_split(leaf.id, leaf.split);
      auto lo = open_leaf(std::move(l), leaf.depth + 1);
      nodes[leaf.id].left = lo.id;
      auto ro = open_leaf(std::move(r), leaf.depth + 1);
      nodes[leaf.id].right = ro.id;
      open.push_back(std::move(lo));
      open.push_back(std::move(ro));
      ++leaves;
    }
  }
};

}  // namespace

Tree fit_classification_tree(const Eigen::MatrixXd& X, std::span<const int> y, std::span<const double> weight,
                             std::span<const int> rows, int num_classes, const ClassificationTreeParams& params,
                             std::mt19937_64& rng) {
  Tree tree;
  ClassificationBuilder b{X, y, weight, num_classes, params, rng, tree.mutable_nodes()};
  b.build(std::vector<int>(rows.begin(), rows.end()), 0);
  return tree;
}

Tree fit_gradient_tree(const Eigen::MatrixXd& X, const kernels::BinnedMatrix* binned, std::span<const double> grad,
                       std::span<const double> hess, const GradientTreeParams& params,
                       std::vector<double>* gain_importance) {
  if (params.method == SplitMethod::kHistogram && binned == nullptr) {
    throw std::invalid_argument("histogram split method needs a binned matrix");
  }
  Tree tree;
  GradientBuilder b{X, binned, grad, hess, params, gain_importance, tree.mutable_nodes()};
  std::vector<int> rows(X.rows());
  std::iota(rows.begin(), rows.end(), 0);
  if (params.growth == Growth::kDepthwise) {
    b.build_depthwise(rows, 0);
  } else {
    b.build_leafwise(std::move(rows));
  }
  return tree;
}

}  // namespace mhf::trees
