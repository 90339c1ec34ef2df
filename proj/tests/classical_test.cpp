#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "mhf/classical.hpp"
#include "mhf/eval.hpp"
#include "mhf/features.hpp"
#include "mhf/syngen.hpp"
#include "mhf/trees.hpp"
#include "test_util.hpp"

namespace mhf {
namespace {

struct Data {
  Dataset ds;
  SplitAssignment split;
  Eigen::MatrixXd X_train, X_val, X_test;
  std::vector<Severity> y_train, y_val, y_test;
};

Data make_data(const GeneratorConfig& cfg) {
  Data d;
  d.ds = generate(cfg);
  d.split = split_user_temporal(d.ds);
  FeatureConfig fc;
  fc.layout = Layout::kAggregated;
  auto pipe = FeaturePipeline::fit(fc, d.ds, d.split.train());
  d.X_train = pipe.design_matrix(d.ds, d.split.train());
  d.X_val = pipe.design_matrix(d.ds, d.split.val());
  d.X_test = pipe.design_matrix(d.ds, d.split.test());
  d.y_train = gold_labels(d.ds, d.split.train());
  d.y_val = gold_labels(d.ds, d.split.val());
  d.y_test = gold_labels(d.ds, d.split.test());
  return d;
}

const Data& contract_data() {
  static const Data d = [] {
    auto cfg = testing::small_config(3);
    cfg.class_proportions = {0.25, 0.25, 0.25, 0.25};
    cfg.separability = 2.0;
    return make_data(cfg);
  }();
  return d;
}

// Small settings keep the contract suite fast.
nlohmann::json quick(ClassicalKind k) {
  switch (k) {
    case ClassicalKind::kRandomForest:
      return {{"n_estimators", 15}};
    case ClassicalKind::kXgboostStyleGbdt:
    case ClassicalKind::kLightgbmStyleGbdt:
      return {{"n_estimators", 15}};
    default:
      return nlohmann::json::object();
  }
}

class Contract : public ::testing::TestWithParam<ClassicalKind> {};

TEST_P(Contract, ShapesProbabilitiesAndDeterminism) {
  const auto& d = contract_data();
  ClassicalSpec spec{GetParam(), quick(GetParam())};
  spec.seed = 5;
  auto m = fit_classical(spec, d.X_train, d.y_train);
  EXPECT_EQ(m->kind(), GetParam());
  EXPECT_EQ(m->input_dim(), d.X_train.cols());
  auto P = m->predict_proba(d.X_test);
  ASSERT_EQ(P.rows(), d.X_test.rows());
  ASSERT_EQ(P.cols(), kNumClasses);
  EXPECT_TRUE((P.array() >= 0).all());
  for (Eigen::Index i = 0; i < P.rows(); ++i) EXPECT_NEAR(P.row(i).sum(), 1.0, 1e-6);
  auto pred = m->predict(d.X_test);
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    Eigen::Index k;
    P.row(i).maxCoeff(&k);
    EXPECT_EQ(rank(pred[i]), k);
  }
  auto again = fit_classical(spec, d.X_train, d.y_train);
  EXPECT_EQ(again->predict_proba(d.X_test), P);
  // Better than chance on an easy balanced fixture.
  EXPECT_GT(score(pred, d.y_test).macro_f1, 0.4);
}

TEST_P(Contract, RejectsWrongWidth) {
  const auto& d = contract_data();
  auto m = fit_classical({GetParam(), quick(GetParam())}, d.X_train, d.y_train);
  Eigen::MatrixXd wrong = Eigen::MatrixXd::Zero(3, d.X_train.cols() + 1);
  EXPECT_THROW(m->predict_proba(wrong), ValidationError);
}

TEST_P(Contract, CheckpointRoundTrip) {
  const auto& d = contract_data();
  ClassicalSpec spec{GetParam(), quick(GetParam())};
  spec.class_weighting = ClassWeighting::kInverseFrequency;
  auto m = fit_classical(spec, d.X_train, d.y_train);
  auto path = std::filesystem::temp_directory_path() /
              ("mhf_ckpt_" + std::string(classical_kind_name(GetParam())) + ".bin");
  save_classical(path, *m, spec, "abc123");
  auto loaded = load_classical(path);
  EXPECT_EQ(loaded.train_fingerprint, "abc123");
  EXPECT_EQ(loaded.spec.to_json(), spec.to_json());
  EXPECT_EQ(loaded.model->predict_proba(d.X_test), m->predict_proba(d.X_test));
  EXPECT_EQ(loaded.model->feature_importance(), m->feature_importance());
  std::filesystem::remove(path);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, Contract, ::testing::ValuesIn(kAllClassicalKinds),
                         [](const auto& info) { return std::string(classical_kind_name(info.param)); });

TEST(Classical, NativeProbabilityFlags) {
  const auto& d = contract_data();
  for (auto k : kAllClassicalKinds) {
    auto m = fit_classical({k, quick(k)}, d.X_train, d.y_train);
    EXPECT_EQ(m->native_probabilities(), k != ClassicalKind::kSvm) << classical_kind_name(k);
  }
}

TEST(Classical, DecisionTreeShattersSeparableToy) {
  Eigen::MatrixXd X(8, 2);
  X << 0, 0, 1, 0, 0, 1, 1, 1, 5, 5, 6, 5, 5, 6, 6, 6;
  std::vector<Severity> y = {Severity::kNormal, Severity::kNormal, Severity::kNormal, Severity::kNormal,
                             Severity::kSevere, Severity::kSevere, Severity::kSevere, Severity::kSevere};
  auto m = fit_classical({ClassicalKind::kDecisionTree}, X, y);
  EXPECT_EQ(m->predict(X), y);
}

TEST(Classical, FitErrors) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(4, 3);
  std::vector<Severity> one(4, Severity::kMild);
  EXPECT_THROW(fit_classical({ClassicalKind::kLogisticRegression}, X, one), ValidationError);
  std::vector<Severity> short_y = {Severity::kMild, Severity::kNormal};
  EXPECT_THROW(fit_classical({ClassicalKind::kLogisticRegression}, X, short_y), ValidationError);
}

TEST(Classical, BoostedImportances) {
  const auto& d = contract_data();
  for (auto k : {ClassicalKind::kXgboostStyleGbdt, ClassicalKind::kLightgbmStyleGbdt}) {
    auto m = fit_classical({k, quick(k)}, d.X_train, d.y_train);
    auto imp = m->feature_importance();
    ASSERT_EQ(imp.size(), static_cast<std::size_t>(d.X_train.cols()));
    EXPECT_TRUE(std::all_of(imp.begin(), imp.end(), [](double v) { return v >= 0; }));
    EXPECT_GT(*std::max_element(imp.begin(), imp.end()), 0.0);
  }
  auto lr = fit_classical({ClassicalKind::kLogisticRegression}, d.X_train, d.y_train);
  EXPECT_TRUE(lr->feature_importance().empty());
}

TEST(Classical, LeafwiseRespectsLeafBudget) {
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(400, 5);
  std::vector<double> g(400), h(400, 1.0);
  for (int i = 0; i < 400; ++i) g[i] = X(i, 0) + 0.5 * X(i, 1) * X(i, 2);
  trees::GradientTreeParams p;
  p.growth = trees::Growth::kLeafwise;
  p.method = trees::SplitMethod::kHistogram;
  p.max_depth = 0;
  p.max_leaves = 7;
  auto binned = kernels::bin_matrix(X, 32);
  auto t = trees::fit_gradient_tree(X, &binned, g, h, p, nullptr);
  EXPECT_EQ(t.num_leaves(), 7u);
  p.growth = trees::Growth::kDepthwise;
  p.max_depth = 2;
  auto t2 = trees::fit_gradient_tree(X, &binned, g, h, p, nullptr);
  EXPECT_LE(t2.depth(), 2);
}

TEST(Spec, Validation) {
  ClassicalSpec s{ClassicalKind::kSvm, {{"C", -1.0}}};
  EXPECT_THROW(s.validate(), ConfigError);
  s.hyperparameters = {{"depth", 3}};
  EXPECT_THROW(s.validate(), ConfigError);
  s.hyperparameters = {{"C", "big"}};
  EXPECT_THROW(s.validate(), ConfigError);
  s.hyperparameters = {{"C", 10.0}};
  EXPECT_NO_THROW(s.validate());
  ClassicalSpec lg{ClassicalKind::kLightgbmStyleGbdt, {{"max_bins", 1000}}};
  EXPECT_THROW(lg.validate(), ConfigError);
  EXPECT_THROW(classical_kind_from_name("catboost"), ConfigError);
}

TEST(Spec, JsonRoundTrip) {
  ClassicalSpec s{ClassicalKind::kRandomForest, {{"max_depth", 6}}, Personalization::kUserAware,
                  ClassWeighting::kInverseFrequency, 17};
  auto j = s.to_json();
  EXPECT_EQ(j["personalization"], "one_hot_id");
  EXPECT_EQ(ClassicalSpec::from_json(j).to_json(), j);
  j["extra"] = 1;
  EXPECT_THROW(ClassicalSpec::from_json(j), ConfigError);
}

TEST(Spec, GridsAreValid) {
  for (auto k : kAllClassicalKinds) {
    auto grid = default_grid(k);
    EXPECT_GE(grid.size(), 2u);
    for (const auto& entry : grid) EXPECT_NO_THROW((ClassicalSpec{k, entry}.validate()));
  }
}

TEST(Tuning, PicksBestValidationEntry) {
  const auto& d = contract_data();
  ClassicalSpec base{ClassicalKind::kDecisionTree};
  auto grid = default_grid(base.kind);
  auto tuned = tune_classical(base, grid, d.X_train, d.y_train, d.X_val, d.y_val);
  double best = -1;
  for (const auto& entry : grid) {
    ClassicalSpec s = base;
    s.hyperparameters = entry;
    best = std::max(best, score(fit_classical(s, d.X_train, d.y_train)->predict(d.X_val), d.y_val).macro_f1);
  }
  EXPECT_DOUBLE_EQ(tuned.val_macro_f1, best);
  EXPECT_TRUE(std::find(grid.begin(), grid.end(), tuned.spec.hyperparameters) != grid.end());
}

TEST(Weights, ReferenceCounts) {
  std::vector<Severity> labels;
  for (int k = 0; k < kNumClasses; ++k) {
    labels.insert(labels.end(), static_cast<std::size_t>(kReferenceClassCounts[k]), severity_from_rank(k));
  }
  auto w = inverse_frequency_weights(labels);
  // N / (K n_c) computed directly from the counts.
  const double n = 24778.0;
  for (int k = 0; k < kNumClasses; ++k) EXPECT_NEAR(w[k], n / (4.0 * kReferenceClassCounts[k]), 1e-12);
  EXPECT_NEAR(w[0], 0.4003, 1e-3);
  EXPECT_NEAR(w[1], 0.9496, 1e-3);
  EXPECT_NEAR(w[2], 3.4510, 1e-3);
  EXPECT_NEAR(w[3], 6.3080, 1e-3);
}

TEST(Weights, AbsentClassGetsZero) {
  std::vector<Severity> labels = {Severity::kNormal, Severity::kNormal, Severity::kMild};
  auto w = inverse_frequency_weights(labels);
  EXPECT_NEAR(w[0], 3.0 / 8.0, 1e-12);
  EXPECT_NEAR(w[1], 3.0 / 4.0, 1e-12);
  EXPECT_EQ(w[2], 0.0);
  EXPECT_EQ(w[3], 0.0);
}

TEST(Weights, InverseFrequencyRaisesMinorityRecall) {
  std::vector<double> weighted, plain;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GeneratorConfig cfg;
    cfg.num_users = 30;
    cfg.samples_per_user = {40, 60};
    cfg.seed = seed;
    auto d = make_data(cfg);
    for (auto cw : {ClassWeighting::kNone, ClassWeighting::kInverseFrequency}) {
      ClassicalSpec s{ClassicalKind::kLogisticRegression};
      s.class_weighting = cw;
      auto m = fit_classical(s, d.X_train, d.y_train);
      double recall = score(m->predict(d.X_test), d.y_test).per_class[rank(Severity::kSevere)].recall;
      (cw == ClassWeighting::kNone ? plain : weighted).push_back(recall);
    }
  }
  std::sort(plain.begin(), plain.end());
  std::sort(weighted.begin(), weighted.end());
  EXPECT_GT(weighted[2], plain[2]);
}

TEST(UserOnehot, WidthAndBlocks) {
  UserIndex idx({"u2", "u0", "u1", "u0"});
  EXPECT_EQ(idx.size(), 3);
  EXPECT_EQ(idx.lookup("u1"), 1);
  EXPECT_EQ(idx.lookup("zz"), -1);
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 2);
  std::vector<std::string> ids = {"u1", "u1", "u2", "stranger"};
  auto out = attach_user_onehot(X, ids, idx);
  ASSERT_EQ(out.cols(), 5);
  EXPECT_EQ(out.leftCols(2), X);
  Eigen::RowVector3d e1(0, 1, 0), e2(0, 0, 1);
  EXPECT_EQ(out.row(0).tail(3), e1);
  EXPECT_EQ(out.row(1).tail(3), out.row(0).tail(3));
  EXPECT_EQ(out.row(2).tail(3), e2);
  EXPECT_EQ(out.row(3).tail(3).squaredNorm(), 0.0);
}

TEST(UserOnehot, FromTrainingSamples) {
  const auto& d = contract_data();
  auto idx = UserIndex::from_samples(d.ds, d.split.train());
  EXPECT_EQ(idx.users(), d.ds.users());
  std::vector<std::string> ids;
  for (auto i : d.split.train()) ids.push_back(d.ds[i].participant_id());
  auto out = attach_user_onehot(d.X_train, ids, idx);
  EXPECT_EQ(out.cols(), d.X_train.cols() + static_cast<Eigen::Index>(d.ds.users().size()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) EXPECT_EQ(out.row(i).tail(idx.size()).sum(), 1.0);
}

}  // namespace
}  // namespace mhf
