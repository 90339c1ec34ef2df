#include "mhf/classical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mhf/eval.hpp"
#include "mhf/trees.hpp"

namespace mhf {

namespace {

constexpr std::array<std::string_view, 6> kKindNames = {"logistic_regression", "svm",
                                                        "decision_tree",       "random_forest",
                                                        "xgboost_style_gbdt",  "lightgbm_style_gbdt"};

// Hyperparameter defaults per kind. Anything not listed is rejected.
nlohmann::json defaults(ClassicalKind k) {
  switch (k) {
    case ClassicalKind::kLogisticRegression:
    case ClassicalKind::kSvm:
      return {{"C", 1.0}, {"max_iter", 300}, {"learning_rate", 0.05}};
    case ClassicalKind::kDecisionTree:
      return {{"max_depth", 6}, {"min_samples_leaf", 1}};
    case ClassicalKind::kRandomForest:
      return {{"n_estimators", 100}, {"max_depth", 12}, {"min_samples_leaf", 1}, {"max_features", 0}};
    case ClassicalKind::kXgboostStyleGbdt:
      return {{"n_estimators", 100}, {"learning_rate", 0.1}, {"max_depth", 4},
              {"lambda", 1.0},       {"gamma", 0.0},         {"min_child_weight", 1.0}};
    case ClassicalKind::kLightgbmStyleGbdt:
      return {{"n_estimators", 100}, {"learning_rate", 0.1}, {"num_leaves", 31}, {"max_depth", -1},
              {"max_bins", 64},      {"min_data_in_leaf", 20}, {"lambda", 1.0}};
  }
  return {};
}

nlohmann::json resolved(const ClassicalSpec& spec) {
  auto hp = defaults(spec.kind);
  for (const auto& [key, value] : spec.hyperparameters.items()) hp[key] = value;
  return hp;
}

double num(const nlohmann::json& hp, const char* key) { return hp.at(key).get<double>(); }
int integer(const nlohmann::json& hp, const char* key) { return hp.at(key).get<int>(); }

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

std::vector<double> sample_weights(const ClassicalSpec& spec, std::span<const Severity> y) {
  std::vector<double> w(y.size(), 1.0);
  if (spec.class_weighting == ClassWeighting::kInverseFrequency) {
    auto cw = inverse_frequency_weights(y);
    for (std::size_t i = 0; i < y.size(); ++i) w[i] = cw[rank(y[i])];
  }
  return w;
}

void softmax_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp().matrix();
    m.row(i) /= m.row(i).sum();
  }
}

// Column standardization stored with linear models.
struct Scaler {
  Eigen::RowVectorXd mean, scale;
  static Scaler fit(const Eigen::MatrixXd& X) {
    Scaler s;
    s.mean = X.colwise().mean();
    Eigen::MatrixXd c = X.rowwise() - s.mean;
    s.scale = (c.array().square().colwise().sum() / static_cast<double>(X.rows())).sqrt().matrix();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
      if (!(s.scale(j) > 1e-12)) s.scale(j) = 1.0;
    }
    return s;
  }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
    return (X.rowwise() - mean).array().rowwise() / scale.array();
  }
};

// Shared by logistic regression and the linear SVM: W is (d+1) x K with the
// bias in the last row, trained full-batch with Adam.
class LinearModel : public ClassicalModel {
 public:
  LinearModel(ClassicalKind kind) : kind_(kind) {}

  ClassicalKind kind() const override { return kind_; }
  bool native_probabilities() const override { return kind_ == ClassicalKind::kLogisticRegression; }

  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& X) const override {
    check_input(X);
    Eigen::MatrixXd m = margins(scaler_.apply(X));
    softmax_rows(m);
    return m;
  }

  void fit(const Eigen::MatrixXd& X, std::span<const Severity> y, std::span<const double> w, const nlohmann::json& hp) {
    input_dim_ = static_cast<int>(X.cols());
    scaler_ = Scaler::fit(X);
    Eigen::MatrixXd Z = scaler_.apply(X);
    const auto n = Z.rows();
    const auto d = Z.cols();
    const double C = num(hp, "C");
    const int iters = integer(hp, "max_iter");
    const double lr = num(hp, "learning_rate");
    const double l2 = 1.0 / (C * static_cast<double>(n));
    double wsum = std::accumulate(w.begin(), w.end(), 0.0);

    W_ = Eigen::MatrixXd::Zero(d + 1, kNumClasses);
    Eigen::MatrixXd m1 = Eigen::MatrixXd::Zero(d + 1, kNumClasses), m2 = m1;
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, kNumClasses);
    for (Eigen::Index i = 0; i < n; ++i) Y(i, rank(y[i])) = 1.0;
    Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())) / wsum;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

    for (int t = 1; t <= iters; ++t) {
      Eigen::MatrixXd m = margins(Z);
      Eigen::MatrixXd dm;  // d loss / d margins, already weighted
      if (kind_ == ClassicalKind::kLogisticRegression) {
        softmax_rows(m);
        dm = (m - Y).array().colwise() * wv.array();
      } else {
        // One-vs-rest squared hinge: sum_k max(0, 1 - s_ik m_ik)^2.
        Eigen::MatrixXd S = 2.0 * Y.array() - 1.0;
        Eigen::MatrixXd slack = (1.0 - (S.array() * m.array())).cwiseMax(0.0);
        dm = (-2.0 * S.array() * slack.array()).colwise() * wv.array();
      }
      Eigen::MatrixXd grad(d + 1, kNumClasses);
      grad.topRows(d) = Z.transpose() * dm + l2 * W_.topRows(d);
      grad.row(d) = dm.colwise().sum();
      m1 = b1 * m1 + (1 - b1) * grad;
      m2 = b2 * m2 + (1 - b2) * grad.cwiseProduct(grad);
      double c1 = 1 - std::pow(b1, t), c2 = 1 - std::pow(b2, t);
      W_.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
    }
  }

  void save_payload(BinaryWriter& w) const override {
    w.put<int>(input_dim_);
    w.put_matrix(scaler_.mean);
    w.put_matrix(scaler_.scale);
    w.put_matrix(W_);
  }
  void load_payload(BinaryReader& r) {
    input_dim_ = r.get<int>();
    scaler_.mean = r.get_matrix();
    scaler_.scale = r.get_matrix();
    W_ = r.get_matrix();
  }

 private:
  Eigen::MatrixXd margins(const Eigen::MatrixXd& Z) const {
    const auto d = Z.cols();
    return (Z * W_.topRows(d)).rowwise() + W_.row(d);
  }

  ClassicalKind kind_;
  Scaler scaler_;
  Eigen::MatrixXd W_;
};

std::vector<int> int_labels(std::span<const Severity> y) {
  std::vector<int> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = rank(y[i]);
  return out;
}

// A single CART tree or a bagged forest of them; leaves hold class
// distributions.
class TreeEnsemble : public ClassicalModel {
 public:
  explicit TreeEnsemble(ClassicalKind kind) : kind_(kind) {}

  ClassicalKind kind() const override { return kind_; }
  bool native_probabilities() const override { return true; }

  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& X) const override {
    check_input(X);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(X.rows(), kNumClasses);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (const auto& t : trees_) {
        const auto& v = t.leaf_value_row(X.row(i));
        for (int k = 0; k < kNumClasses; ++k) P(i, k) += v[k];
      }
      double s = P.row(i).sum();
      if (s > 0) P.row(i) /= s;
      else P.row(i).setConstant(1.0 / kNumClasses);
    }
    return P;
  }

  void fit(const Eigen::MatrixXd& X, std::span<const Severity> y, std::span<const double> w, const nlohmann::json& hp,
           std::uint64_t seed) {
    input_dim_ = static_cast<int>(X.cols());
    auto labels = int_labels(y);
    trees::ClassificationTreeParams p;
    p.max_depth = integer(hp, "max_depth");
    p.min_samples_leaf = integer(hp, "min_samples_leaf");
    const int n = static_cast<int>(X.rows());
    if (kind_ == ClassicalKind::kDecisionTree) {
      std::vector<int> rows(n);
      std::iota(rows.begin(), rows.end(), 0);
      auto rng = derived_rng(seed, 1);
      trees_ = {trees::fit_classification_tree(X, labels, w, rows, kNumClasses, p, rng)};
      return;
    }
    int mf = integer(hp, "max_features");
    p.max_features = mf > 0 ? mf : std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(X.cols())))));
    const int count = integer(hp, "n_estimators");
    trees_.assign(count, {});
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < count; ++t) {
      auto rng = derived_rng(seed, 2, static_cast<std::uint64_t>(t));
      std::uniform_int_distribution<int> pick(0, n - 1);
      std::vector<int> rows(n);
      for (auto& r : rows) r = pick(rng);
      std::sort(rows.begin(), rows.end());
      trees_[t] = trees::fit_classification_tree(X, labels, w, rows, kNumClasses, p, rng);
    }
  }

  const std::vector<trees::Tree>& trees() const { return trees_; }

  void save_payload(BinaryWriter& w) const override {
    w.put<int>(input_dim_);
    w.put<std::uint64_t>(trees_.size());
    for (const auto& t : trees_) t.save(w);
  }
  void load_payload(BinaryReader& r) {
    input_dim_ = r.get<int>();
    trees_.resize(r.get<std::uint64_t>());
    for (auto& t : trees_) t = trees::Tree::load(r);
  }

 private:
  ClassicalKind kind_;
  std::vector<trees::Tree> trees_;
};

// Multi-class softmax boosting: one regression tree per class per round.
class BoostedModel : public ClassicalModel {
 public:
  explicit BoostedModel(ClassicalKind kind) : kind_(kind) {}

  ClassicalKind kind() const override { return kind_; }
  bool native_probabilities() const override { return true; }
  std::vector<double> feature_importance() const override { return importance_; }

  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& X) const override {
    check_input(X);
    Eigen::MatrixXd F(X.rows(), kNumClasses);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (int k = 0; k < kNumClasses; ++k) {
        double s = base_[k];
        for (std::size_t r = k; r < trees_.size(); r += kNumClasses) s += rate_ * trees_[r].leaf_value_row(X.row(i))[0];
        F(i, k) = s;
      }
    }
    softmax_rows(F);
    return F;
  }

  void fit(const Eigen::MatrixXd& X, std::span<const Severity> y, std::span<const double> w, const nlohmann::json& hp) {
    input_dim_ = static_cast<int>(X.cols());
    const auto n = X.rows();
    rate_ = num(hp, "learning_rate");
    const int rounds = integer(hp, "n_estimators");

    trees::GradientTreeParams p;
    p.split.lambda = num(hp, "lambda");
    std::optional<kernels::BinnedMatrix> binned;
    if (kind_ == ClassicalKind::kXgboostStyleGbdt) {
      p.max_depth = integer(hp, "max_depth");
      p.split.gamma = num(hp, "gamma");
      p.split.min_child_weight = num(hp, "min_child_weight");
      p.method = trees::SplitMethod::kExact;
      p.growth = trees::Growth::kDepthwise;
    } else {
      p.max_depth = integer(hp, "max_depth");
      p.max_leaves = integer(hp, "num_leaves");
      p.split.min_child_count = integer(hp, "min_data_in_leaf");
      p.method = trees::SplitMethod::kHistogram;
      p.growth = trees::Growth::kLeafwise;
      binned = kernels::bin_matrix(X, integer(hp, "max_bins"));
    }

    // Start from the weighted class log-prior.
    std::array<double, kNumClasses> prior{};
    double wsum = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      prior[rank(y[i])] += w[i];
      wsum += w[i];
    }
    for (int k = 0; k < kNumClasses; ++k) base_[k] = std::log(std::max(prior[k] / wsum, 1e-6));

    Eigen::MatrixXd F = Eigen::RowVectorXd::Map(base_.data(), kNumClasses).replicate(n, 1);
    importance_.assign(X.cols(), 0.0);
    trees_.clear();
    std::vector<double> g(n), h(n);
    for (int round = 0; round < rounds; ++round) {
      Eigen::MatrixXd P = F;
      softmax_rows(P);
      for (int k = 0; k < kNumClasses; ++k) {
        for (Eigen::Index i = 0; i < n; ++i) {
          double pk = P(i, k);
          g[i] = w[i] * (pk - (rank(y[i]) == k ? 1.0 : 0.0));
          h[i] = std::max(w[i] * pk * (1.0 - pk), 1e-6);
        }
        auto tree = trees::fit_gradient_tree(X, binned ? &*binned : nullptr, g, h, p, &importance_);
        for (Eigen::Index i = 0; i < n; ++i) F(i, k) += rate_ * tree.leaf_value_row(X.row(i))[0];
        trees_.push_back(std::move(tree));
      }
    }
  }

  void save_payload(BinaryWriter& w) const override {
    w.put<int>(input_dim_);
    w.put(rate_);
    w.put(base_);
    w.put_vector(importance_);
    w.put<std::uint64_t>(trees_.size());
    for (const auto& t : trees_) t.save(w);
  }
  void load_payload(BinaryReader& r) {
    input_dim_ = r.get<int>();
    rate_ = r.get<double>();
    base_ = r.get<std::array<double, kNumClasses>>();
    importance_ = r.get_vector<double>();
    trees_.resize(r.get<std::uint64_t>());
    for (auto& t : trees_) t = trees::Tree::load(r);
  }

 private:
  ClassicalKind kind_;
  double rate_ = 0.1;
  std::array<double, kNumClasses> base_{};
  std::vector<double> importance_;
  std::vector<trees::Tree> trees_;  // round-major, class-minor
};

}  // namespace

std::string_view classical_kind_name(ClassicalKind k) { return kKindNames[static_cast<int>(k)]; }

ClassicalKind classical_kind_from_name(std::string_view name) {
  for (auto k : kAllClassicalKinds) {
    if (classical_kind_name(k) == name) return k;
  }
  throw ConfigError(fmt::format("unknown classical model kind '{}'", name));
}

std::string_view personalization_name(Personalization p) {
  return p == Personalization::kAgnostic ? "agnostic" : "one_hot_id";
}

Personalization personalization_from_name(std::string_view name) {
  if (name == "agnostic") return Personalization::kAgnostic;
  if (name == "one_hot_id") return Personalization::kUserAware;
  throw ConfigError(fmt::format("unknown personalization '{}' (expected agnostic or one_hot_id)", name));
}

void ClassicalSpec::validate() const {
  if (!hyperparameters.is_object()) throw ConfigError("hyperparameters must be an object");
  auto base = defaults(kind);
  for (const auto& [key, value] : hyperparameters.items()) {
    if (!base.contains(key)) {
      throw ConfigError(fmt::format("{}: unknown hyperparameter '{}'", classical_kind_name(kind), key));
    }
    if (!value.is_number()) {
      throw ConfigError(fmt::format("{}: hyperparameter '{}' must be a number", classical_kind_name(kind), key));
    }
  }
  auto hp = resolved(*this);
  auto require = [&](const char* key, bool ok, const char* what) {
    if (!ok) {
      throw ConfigError(
          fmt::format("{}: hyperparameter '{}' = {} {}", classical_kind_name(kind), key, hp.at(key).dump(), what));
    }
  };
  auto positive = [&](const char* key) { require(key, num(hp, key) > 0, "must be > 0"); };
  auto at_least = [&](const char* key, double lo) {
    require(key, num(hp, key) >= lo, fmt::format("must be >= {}", lo).c_str());
  };
  switch (kind) {
    case ClassicalKind::kLogisticRegression:
    case ClassicalKind::kSvm:
      positive("C");
      positive("learning_rate");
      at_least("max_iter", 1);
      break;
    case ClassicalKind::kDecisionTree:
      at_least("max_depth", 1);
      at_least("min_samples_leaf", 1);
      break;
    case ClassicalKind::kRandomForest:
      at_least("n_estimators", 1);
      at_least("max_depth", 1);
      at_least("min_samples_leaf", 1);
      at_least("max_features", 0);
      break;
    case ClassicalKind::kXgboostStyleGbdt:
      at_least("n_estimators", 1);
      positive("learning_rate");
      at_least("max_depth", 1);
      at_least("lambda", 0);
      at_least("gamma", 0);
      at_least("min_child_weight", 0);
      break;
    case ClassicalKind::kLightgbmStyleGbdt:
      at_least("n_estimators", 1);
      positive("learning_rate");
      at_least("num_leaves", 2);
      require("max_bins", num(hp, "max_bins") >= 2 && num(hp, "max_bins") <= 256, "must be in [2, 256]");
      at_least("min_data_in_leaf", 1);
      at_least("lambda", 0);
      break;
  }
}

nlohmann::json ClassicalSpec::to_json() const {
  return {{"kind", classical_kind_name(kind)},
          {"hyperparameters", hyperparameters},
          {"personalization", personalization_name(personalization)},
          {"class_weighting", class_weighting == ClassWeighting::kNone ? "none" : "inverse_frequency"},
          {"seed", seed}};
}

ClassicalSpec ClassicalSpec::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"kind", "hyperparameters", "personalization", "class_weighting", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError(fmt::format("classical spec: unknown key '{}'", key));
  }
  ClassicalSpec s;
  s.kind = classical_kind_from_name(j.at("kind").get<std::string>());
  s.hyperparameters = j.value("hyperparameters", nlohmann::json::object());
  s.personalization = personalization_from_name(j.value("personalization", std::string("agnostic")));
  auto cw = j.value("class_weighting", std::string("none"));
  if (cw == "none") s.class_weighting = ClassWeighting::kNone;
  else if (cw == "inverse_frequency") s.class_weighting = ClassWeighting::kInverseFrequency;
  else throw ConfigError(fmt::format("unknown class_weighting '{}'", cw));
  s.seed = j.value("seed", std::uint64_t{0});
  s.validate();
  return s;
}

std::vector<nlohmann::json> default_grid(ClassicalKind kind) {
  std::vector<nlohmann::json> grid;
  switch (kind) {
    case ClassicalKind::kLogisticRegression:
    case ClassicalKind::kSvm:
      for (double c : {0.1, 1.0, 10.0}) grid.push_back({{"C", c}});
      break;
    case ClassicalKind::kDecisionTree:
      for (int d : {3, 6, 10}) grid.push_back({{"max_depth", d}});
      break;
    case ClassicalKind::kRandomForest:
      for (int d : {6, 12}) grid.push_back({{"max_depth", d}});
      break;
    case ClassicalKind::kXgboostStyleGbdt:
      for (int d : {3, 5}) grid.push_back({{"max_depth", d}});
      break;
    case ClassicalKind::kLightgbmStyleGbdt:
      for (int l : {7, 15, 31}) grid.push_back({{"num_leaves", l}});
      break;
  }
  return grid;
}

std::array<double, kNumClasses> inverse_frequency_weights(std::span<const Severity> labels) {
  std::array<std::size_t, kNumClasses> counts{};
  for (auto s : labels) ++counts[rank(s)];
  std::array<double, kNumClasses> w{};
  const double n = static_cast<double>(labels.size());
  for (int k = 0; k < kNumClasses; ++k) {
    if (counts[k] > 0) w[k] = n / (kNumClasses * static_cast<double>(counts[k]));
  }
  return w;
}

std::vector<Severity> ClassicalModel::predict(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd P = predict_proba(X);
  std::vector<Severity> out(P.rows());
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    Eigen::Index k;
    P.row(i).maxCoeff(&k);
    out[i] = severity_from_rank(static_cast<int>(k));
  }
  return out;
}

void ClassicalModel::check_input(const Eigen::MatrixXd& X) const {
  if (X.cols() != input_dim_) {
    throw ValidationError(fmt::format("{}: input has {} columns, model expects {}",
                                      classical_kind_name(kind()), X.cols(), input_dim_));
  }
}

std::unique_ptr<ClassicalModel> fit_classical(const ClassicalSpec& spec, const Eigen::MatrixXd& X,
                                              std::span<const Severity> y) {
  spec.validate();
  if (static_cast<std::size_t>(X.rows()) != y.size()) {
    throw ValidationError(fmt::format("fit: {} input rows for {} labels", X.rows(), y.size()));
  }
  if (X.rows() == 0 || X.cols() == 0) throw ValidationError("fit: empty training inputs");
  if (!X.allFinite()) throw ValidationError("fit: training inputs contain non-finite values");
  std::set<Severity> present(y.begin(), y.end());
  if (present.size() < 2) {
    throw ValidationError(fmt::format("fit: training labels cover {} class(es); need at least 2", present.size()));
  }
  auto hp = resolved(spec);
  auto w = sample_weights(spec, y);
  switch (spec.kind) {
    case ClassicalKind::kLogisticRegression:
    case ClassicalKind::kSvm: {
      auto m = std::make_unique<LinearModel>(spec.kind);
      m->fit(X, y, w, hp);
      return m;
    }
    case ClassicalKind::kDecisionTree:
    case ClassicalKind::kRandomForest: {
      auto m = std::make_unique<TreeEnsemble>(spec.kind);
      m->fit(X, y, w, hp, spec.seed);
      return m;
    }
    case ClassicalKind::kXgboostStyleGbdt:
    case ClassicalKind::kLightgbmStyleGbdt: {
      auto m = std::make_unique<BoostedModel>(spec.kind);
      m->fit(X, y, w, hp);
      return m;
    }
  }
  throw ConfigError("unreachable classical kind");
}

TunedClassical tune_classical(const ClassicalSpec& base, const std::vector<nlohmann::json>& grid,
                              const Eigen::MatrixXd& X_train, std::span<const Severity> y_train,
                              const Eigen::MatrixXd& X_val, std::span<const Severity> y_val) {
  TunedClassical best;
  std::vector<nlohmann::json> candidates = grid.empty() ? std::vector<nlohmann::json>{nlohmann::json::object()} : grid;
  bool have = false;
  for (const auto& entry : candidates) {
    ClassicalSpec spec = base;
    for (const auto& [key, value] : entry.items()) spec.hyperparameters[key] = value;
    auto model = fit_classical(spec, X_train, y_train);
    double f1 = X_val.rows() > 0 ? score(model->predict(X_val), y_val).macro_f1 : 0.0;
    spdlog::debug("{} {} -> val macro-F1 {:.4f}", classical_kind_name(spec.kind), entry.dump(), f1);
    if (!have || f1 > best.val_macro_f1) {
      best = {std::move(model), spec, f1};
      have = true;
    }
  }
  return best;
}

void save_classical(const std::filesystem::path& path, const ClassicalModel& model, const ClassicalSpec& spec,
                    const std::string& train_fingerprint) {
  Checkpoint ckpt;
  ckpt.header = {{"format", "mhf-classical"},
                 {"spec", spec.to_json()},
                 {"train_fingerprint", train_fingerprint},
                 {"input_dim", model.input_dim()}};
  BinaryWriter w;
  model.save_payload(w);
  ckpt.payload = w.bytes();
  write_checkpoint(path, ckpt);
}

LoadedClassical load_classical(const std::filesystem::path& path) {
  auto ckpt = read_checkpoint(path);
  if (ckpt.header.value("format", "") != "mhf-classical") {
    throw Error(fmt::format("{}: not a classical model checkpoint", path.string()));
  }
  LoadedClassical out;
  out.spec = ClassicalSpec::from_json(ckpt.header.at("spec"));
  out.train_fingerprint = ckpt.header.at("train_fingerprint").get<std::string>();
  BinaryReader r(ckpt.payload);
  switch (out.spec.kind) {
    case ClassicalKind::kLogisticRegression:
    case ClassicalKind::kSvm: {
      auto m = std::make_unique<LinearModel>(out.spec.kind);
      m->load_payload(r);
      out.model = std::move(m);
      break;
    }
    case ClassicalKind::kDecisionTree:
    case ClassicalKind::kRandomForest: {
      auto m = std::make_unique<TreeEnsemble>(out.spec.kind);
      m->load_payload(r);
      out.model = std::move(m);
      break;
    }
    case ClassicalKind::kXgboostStyleGbdt:
    case ClassicalKind::kLightgbmStyleGbdt: {
      auto m = std::make_unique<BoostedModel>(out.spec.kind);
      m->load_payload(r);
      out.model = std::move(m);
      break;
    }
  }
  if (!r.done()) throw Error(fmt::format("{}: trailing bytes in checkpoint payload", path.string()));
  return out;
}

Eigen::MatrixXd attach_user_onehot(const Eigen::MatrixXd& inputs, std::span<const std::string> participant_ids,
                                   const UserIndex& index) {
  if (static_cast<std::size_t>(inputs.rows()) != participant_ids.size()) {
    throw ValidationError(
        fmt::format("attach_user_onehot: {} rows for {} participant ids", inputs.rows(), participant_ids.size()));
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(inputs.rows(), inputs.cols() + index.size());
  out.leftCols(inputs.cols()) = inputs;
  std::set<std::string> warned;
  for (std::size_t i = 0; i < participant_ids.size(); ++i) {
    int k = index.lookup(participant_ids[i]);
    if (k >= 0) {
      out(static_cast<Eigen::Index>(i), inputs.cols() + k) = 1.0;
    } else if (warned.insert(participant_ids[i]).second) {
      spdlog::warn("participant '{}' not seen in training; user block left at zero", participant_ids[i]);
    }
  }
  return out;
}

}  // namespace mhf
