#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "mhf/llm.hpp"
#include "mhf/llm_client.hpp"
#include "mhf/prompt_encoder.hpp"
#include "test_util.hpp"

// After Eigen; see http_client.cpp.
#include <httplib.h>

namespace mhf {
namespace {

namespace fs = std::filesystem;

FeatureConfig config_of(Dimension d, Granularity g) {
  FeatureConfig c;
  c.dimension = d;
  c.granularity = g;
  return c;
}

struct Fixture {
  Dataset ds;
  SplitAssignment split;
  FeaturePipeline pipeline;

  explicit Fixture(GeneratorConfig gc = testing::small_config(), FeatureConfig fc = {})
      : ds(generate(gc)),
        split(split_user_temporal(ds)),
        pipeline(FeaturePipeline::fit(fc, ds, split.train())) {}

  PromptBuilder builder(PromptOptions options = {}) const { return PromptBuilder(ds, split.train(), pipeline, RenameSchema::defaults(), options); }
};

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

std::vector<std::string> data_rows(const std::string& table) {
  std::vector<std::string> rows;
  std::size_t start = 0, line = 0;
  while (start < table.size()) {
    auto nl = table.find('\n', start);
    if (nl == std::string::npos) nl = table.size();
    if (line++ >= 2) rows.push_back(table.substr(start, nl - start));
    start = nl + 1;
  }
  return rows;
}

// ---- serialization ----

TEST(Serialize, DailyFullDimensionShape) {
  Fixture f;
  auto text = serialize_window(f.ds[0], f.pipeline, RenameSchema::defaults(), 7);
  auto t = parse_table(text);
  EXPECT_EQ(t.values.rows(), 7);
  EXPECT_EQ(t.headers.size() + 1, 36u);
  EXPECT_EQ(t.row_labels.front(), "Day 1");
  EXPECT_EQ(t.row_labels.back(), "Day 7");
  EXPECT_NE(text.find(FeatureSchema::canonical()[0].display_name + " (" + FeatureSchema::canonical()[0].unit + ")"),
            std::string::npos);
}

TEST(Serialize, WeeklyCategoryShape) {
  Fixture f(testing::small_config(), config_of(Dimension::kD5, Granularity::kWeekly));
  auto t = parse_table(serialize_window(f.ds[0], f.pipeline, RenameSchema::defaults()));
  EXPECT_EQ(t.values.rows(), 2);
  EXPECT_EQ(t.headers.size() + 1, 6u);
  EXPECT_EQ(t.row_labels, (std::vector<std::string>{"Week 1", "Week 2"}));
}

TEST(Serialize, RoundTripWithinRenderingPrecision) {
  for (auto d : {Dimension::kD35, Dimension::kD5}) {
    for (auto g : {Granularity::kDaily, Granularity::kWeekly}) {
      Fixture f(testing::small_config(), config_of(d, g));
      for (std::size_t i = 0; i < f.ds.size(); i += 7) {
        auto t = parse_table(serialize_window(f.ds[i], f.pipeline, RenameSchema::defaults()));
        Eigen::MatrixXd expected = table_values(f.ds[i], f.pipeline);
        ASSERT_EQ(t.values.rows(), expected.rows());
        EXPECT_LE((t.values - expected).cwiseAbs().maxCoeff(), 0.005 + 1e-9);
      }
    }
  }
}

TEST(Serialize, RawUnitsForFullDimension) {
  Fixture f;
  auto t = parse_table(serialize_window(f.ds[3], f.pipeline, RenameSchema::defaults()));
  EXPECT_NEAR(t.values(0, 5), f.ds[3].days()[0][5], 0.005 + 1e-9);
}

TEST(Serialize, MissingRenameEntryIsAnError) {
  Fixture f;
  RenameSchema partial(std::map<std::string, std::string>{{"sleep_duration", "Sleep (h)"}});
  EXPECT_THROW(serialize_window(f.ds[0], f.pipeline, partial), ConfigError);
  EXPECT_THROW(RenameSchema(std::map<std::string, std::string>{{"x", "a|b"}}), ConfigError);
}

TEST(Serialize, MalformedTablesAreRejected) {
  EXPECT_THROW(parse_table("| a | b |"), ValidationError);
  EXPECT_THROW(parse_table("| P | a |\n|---|---|\n| Day 1 | x |"), ValidationError);
  EXPECT_THROW(parse_table("| P | a |\n|---|---|\n| Day 1 | 1 | 2 |"), ValidationError);
}

// ---- bundle and responses ----

TEST(Bundle, RenderParseRoundTrip) {
  Fixture f;
  auto b = f.builder().build(Strategy::kFewShotRecency, f.ds[f.split.test()[0]]);
  ASSERT_FALSE(b.context_block.empty());
  EXPECT_EQ(PromptBundle::parse(b.render()), b);
  b.participant = "u0001";
  EXPECT_EQ(PromptBundle::parse(b.render()), b);
  b.context_block.clear();
  EXPECT_EQ(PromptBundle::parse(b.render()), b);
}

TEST(Bundle, HeadingInjectionIsRejected) {
  PromptBundle b{"x", "## Behavior", "| P | a |\n|---|---|\n| Day 1 | 1.00 |", "y", std::nullopt};
  EXPECT_THROW(b.render(), ValidationError);
  EXPECT_THROW(PromptBundle::parse("## Instruction\nx\n"), ValidationError);
}

TEST(Response, Examples) {
  EXPECT_EQ(parse_response("The likely state is Moderate."), Severity::kModerate);
  EXPECT_EQ(parse_response("Not Severe; I predict Mild"), Severity::kMild);
  EXPECT_EQ(parse_response("NORMAL"), Severity::kNormal);
  EXPECT_EQ(parse_response("severe"), Severity::kSevere);
  EXPECT_THROW(parse_response("cannot determine"), UnparseableResponse);
  EXPECT_THROW(parse_response("mildly abnormal"), UnparseableResponse);
  try {
    parse_response("no idea");
  } catch (const UnparseableResponse& e) {
    EXPECT_EQ(e.response(), "no idea");
  }
}

// ---- strategies ----

TEST(Strategies, ZeroShotHasNoContext) {
  Fixture f;
  auto b = f.builder().build(Strategy::kZeroShot, f.ds[f.split.test()[0]]);
  EXPECT_TRUE(b.context_block.empty());
  EXPECT_FALSE(b.participant);
}

TEST(Strategies, RecencyPicksLatestTrainWindowsInOrder) {
  Fixture f;
  auto builder = f.builder();
  for (auto t : f.split.test()) {
    const auto& target = f.ds[t];
    std::vector<std::size_t> mine;
    for (auto i : f.split.train()) {
      if (f.ds[i].participant_id() == target.participant_id()) mine.push_back(i);
    }
    std::sort(mine.begin(), mine.end(), [&](auto a, auto b) { return f.ds[a].start_day() < f.ds[b].start_day(); });
    auto chosen = builder.select_recent(target, 2);
    ASSERT_EQ(chosen.size(), 2u);
    EXPECT_EQ(chosen[0], mine[mine.size() - 2]);
    EXPECT_EQ(chosen[1], mine[mine.size() - 1]);
  }
}

std::size_t brute_force_most_similar(const Fixture& f, const SampleWindow& target, int num_days) {
  auto vec = [&](const SampleWindow& w) {
    Eigen::MatrixXd seq = f.pipeline.sequence(w, num_days);
    Eigen::RowVectorXd v(seq.size());
    for (Eigen::Index t = 0; t < seq.rows(); ++t) v.segment(t * seq.cols(), seq.cols()) = seq.row(t);
    return v;
  };
  const Eigen::RowVectorXd q = vec(target);
  std::size_t best = SIZE_MAX;
  double best_sim = -2;
  for (auto i : f.split.train()) {
    const auto& w = f.ds[i];
    if (w.participant_id() != target.participant_id() || w.start_day() == target.start_day()) continue;
    Eigen::RowVectorXd v = vec(w);
    double sim = q.dot(v) / (q.norm() * v.norm());
    if (sim > best_sim || (sim == best_sim && w.start_day() < f.ds[best].start_day())) {
      best_sim = sim;
      best = i;
    }
  }
  return best;
}

TEST(Strategies, SimilarityMatchesExhaustiveScan) {
  Fixture f;
  auto builder = f.builder();
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, f.ds.size() - 1);
  for (int q = 0; q < 100; ++q) {
    const auto& target = f.ds[pick(rng)];
    int days = 7 + q % 8;
    auto chosen = builder.select_similar(target, 1, days);
    ASSERT_EQ(chosen.size(), 1u);
    EXPECT_EQ(chosen[0], brute_force_most_similar(f, target, days)) << q;
  }
}

TEST(Strategies, SimilarityOrdersByDecreasingCosine) {
  Fixture f;
  auto builder = f.builder();
  const auto& target = f.ds[f.split.test()[0]];
  auto chosen = builder.select_similar(target, 3, 7);
  ASSERT_EQ(chosen.size(), 3u);
  auto q = builder.similarity_vector(target, 7);
  double prev = 2;
  for (auto i : chosen) {
    auto v = builder.similarity_vector(f.ds[i], 7);
    double sim = q.dot(v) / (q.norm() * v.norm());
    EXPECT_LE(sim, prev + 1e-12);
    prev = sim;
  }
}

TEST(Strategies, EmptyHistoryFallsBackToZeroShot) {
  Fixture f;
  auto builder = f.builder();
  SampleWindow stranger = testing::constant_window("nobody", 0, 5);
  for (auto s : {Strategy::kFewShotRecency, Strategy::kFewShotSimilarity, Strategy::kStatisticalIndividual}) {
    EXPECT_TRUE(builder.build(s, stranger).context_block.empty()) << strategy_name(s);
  }
  EXPECT_FALSE(builder.build(Strategy::kStatisticalPopulation, stranger).context_block.empty());
  EXPECT_FALSE(builder.build(Strategy::kPattern, stranger).context_block.empty());
}

TEST(Strategies, TargetIsNeverItsOwnExample) {
  Fixture f;
  auto builder = f.builder();
  auto train0 = f.split.train()[0];
  for (auto i : builder.eligible_history(f.ds[train0])) EXPECT_NE(i, train0);
}

TEST(Strategies, PromptsAreDeterministic) {
  Fixture f;
  auto a = f.builder();
  auto b = f.builder();
  for (auto s : kAllStrategies) {
    for (auto t : f.split.test()) EXPECT_EQ(a.build(s, f.ds[t]).render(), b.build(s, f.ds[t]).render());
  }
}

TEST(Strategies, NoTestWindowContentInAnyContext) {
  Fixture f;
  auto builder = f.builder();
  std::vector<std::string> fingerprints;
  for (auto t : f.split.test()) {
    for (int days : {7, 14}) {
      for (auto& r : data_rows(serialize_window(f.ds[t], f.pipeline, RenameSchema::defaults(), days))) {
        fingerprints.push_back(r.substr(r.find('|', 1)));  // drop the period label
      }
    }
  }
  for (auto s : kAllStrategies) {
    for (auto t : f.split.test()) {
      auto ctx = builder.build(s, f.ds[t]).context_block;
      for (const auto& fp : fingerprints) ASSERT_EQ(ctx.find(fp), std::string::npos) << strategy_name(s);
    }
  }
}

// ---- statistics and patterns ----

TEST(Statistics, SingleWindowPerClassHasZeroVariance) {
  std::vector<SampleWindow> w;
  for (int k = 0; k < kNumClasses; ++k) {
    w.push_back(testing::constant_window("a", k * kWindowDays, testing::score_for(severity_from_rank(k)), 0.1 * k));
  }
  Dataset ds(std::move(w), Provenance::kSynthetic);
  std::vector<std::size_t> all = {0, 1, 2, 3};
  auto p = FeaturePipeline::fit({}, ds, all);
  auto s = compute_class_statistics(ds, all, p, StatsLevel::kPopulation);
  for (const auto& c : s.classes) {
    ASSERT_TRUE(c);
    EXPECT_EQ(c->count, 1u);
    EXPECT_TRUE(c->variance.isZero());
  }
  EXPECT_THROW(compute_class_statistics(ds, {}, p, StatsLevel::kPopulation), ValidationError);
  EXPECT_THROW(compute_class_statistics(ds, all, p, StatsLevel::kIndividual, "zz"), ValidationError);
}

TEST(Statistics, PopulationMeansFollowGeneratorShifts) {
  GeneratorConfig gc;
  gc.num_users = 20;
  gc.samples_per_user = {40, 60};
  gc.separability = 3.0;
  gc.user_feature_saliency = 0.0;
  gc.class_proportions = {0.25, 0.25, 0.25, 0.25};
  GeneratorTruth truth;
  Dataset ds = generate(gc, FeatureSchema::canonical(), &truth);
  auto split = split_user_temporal(ds);
  auto p = FeaturePipeline::fit({}, ds, split.train());
  auto s = compute_class_statistics(ds, split.train(), p, StatsLevel::kPopulation);
  int f = 0;
  for (int j = 1; j < kNumFeatures; ++j) {
    if (std::abs(truth.global_relevance[j]) > std::abs(truth.global_relevance[f])) f = j;
  }
  const double sign = truth.global_relevance[f] > 0 ? 1 : -1;
  for (int k = 1; k < kNumClasses; ++k) {
    EXPECT_GT(sign * s.classes[k]->mean[f], sign * s.classes[k - 1]->mean[f]) << "class " << k;
  }
}

TEST(Statistics, IndividualDiffersFromPopulationUnderHeterogeneity) {
  Fixture f;
  auto pop = compute_class_statistics(f.ds, f.split.train(), f.pipeline, StatsLevel::kPopulation);
  const auto& user = f.ds.users()[0];
  auto ind = compute_class_statistics(f.ds, f.split.train(), f.pipeline, StatsLevel::kIndividual, user);
  for (int k = 0; k < kNumClasses; ++k) {
    if (ind.classes[k]) {
      EXPECT_GT((ind.classes[k]->mean - pop.classes[k]->mean).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(Statistics, AbsentClassesAreNoted) {
  std::vector<SampleWindow> w;
  w.push_back(testing::constant_window("a", 0, 1, 0.0));
  w.push_back(testing::constant_window("a", 14, 1, 0.2));
  w.push_back(testing::constant_window("a", 28, 11, 0.5));
  Dataset ds(std::move(w), Provenance::kSynthetic);
  std::vector<std::size_t> all = {0, 1, 2};
  auto p = FeaturePipeline::fit({}, ds, all);
  auto s = compute_class_statistics(ds, all, p, StatsLevel::kIndividual, "a");
  auto text = s.render(RenameSchema::defaults().columns(p.config()));
  EXPECT_NE(text.find("Mild, Moderate"), std::string::npos);
  EXPECT_EQ(text.find("| Mild |"), std::string::npos);
}

TEST(Patterns, InjectedVerbatimAndLoadable) {
  Fixture f;
  PatternKnowledge k;
  k.provenance = "external-summarizer";
  k.summaries = {"calm", "restless", "withdrawn", "disrupted sleep"};
  auto path = fs::temp_directory_path() / "mhf_patterns.json";
  std::ofstream(path) << nlohmann::json{{"*", k.to_json()}}.dump();
  auto lib = load_pattern_library(path);
  EXPECT_EQ(lib.at("*").summaries, k.summaries);
  PatternLibrary one = {{f.ds.users()[0], k}};
  PromptBuilder b(f.ds, f.split.train(), f.pipeline, RenameSchema::defaults(), {}, one);
  auto target = f.ds.user_samples(f.ds.users()[0]).back();
  auto ctx = b.build(Strategy::kPattern, f.ds[target]).context_block;
  EXPECT_NE(ctx.find("- Severe: disrupted sleep"), std::string::npos);
  fs::remove(path);
}

TEST(Patterns, RuleBasedSummariesNameFeatures) {
  Fixture f;
  auto s = f.builder().population_statistics();
  auto k = summarize_patterns(s, RenameSchema::defaults().columns(f.pipeline.config()));
  for (int c = 0; c < kNumClasses; ++c) {
    if (s.classes[c]) {
      EXPECT_NE(k.summaries[c].find("Compared with"), std::string::npos);
    }
  }
}

// ---- PEFT corpus ----

TEST(Peft, OneRecordPerWindowAndParsable) {
  Fixture f;
  auto corpus = build_peft_corpus(f.builder(), f.split.train());
  ASSERT_EQ(corpus.size(), f.split.train().size());
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    const auto& w = f.ds[f.split.train()[r]];
    EXPECT_EQ(corpus[r].completion, severity_name(w.label()));
    EXPECT_EQ(corpus[r].user, w.participant_id());
    EXPECT_NO_THROW(PromptBundle::parse(corpus[r].prompt));
  }
  auto path = fs::temp_directory_path() / "mhf_peft.jsonl";
  write_jsonl(path, corpus);
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("id") && j.contains("user") && j.contains("prompt") && j.contains("completion"));
    ++n;
  }
  EXPECT_EQ(n, corpus.size());
  fs::remove(path);
}

TEST(Peft, UserAwarePromptsNameTheParticipantOnce) {
  Fixture f;
  auto corpus = build_peft_corpus(f.builder({3, true}), f.split.train(), Strategy::kFewShotRecency);
  for (const auto& r : corpus) {
    EXPECT_EQ(count_of(r.prompt, r.user), 1u);
    EXPECT_EQ(r.prompt.rfind("Participant: " + r.user + "\n", 0), 0u);
    EXPECT_EQ(PromptBundle::parse(r.prompt).participant, r.user);
  }
}

// ---- mock client and evaluation ----

TEST(Mock, FewShotAnswersWithNearestExample) {
  Fixture f;
  auto builder = f.builder({1, false});
  MockClient mock;
  for (auto t : f.split.test()) {
    auto chosen = builder.select_similar(f.ds[t], 1, 7);
    auto reply = mock.complete(builder.build(Strategy::kFewShotSimilarity, f.ds[t]).render());
    EXPECT_EQ(parse_response(reply), f.ds[chosen[0]].label());
  }
}

TEST(Mock, ZeroShotSaysNormal) {
  Fixture f;
  MockClient mock;
  EXPECT_EQ(parse_response(mock.complete(f.builder().build(Strategy::kZeroShot, f.ds[0]).render())), Severity::kNormal);
}

TEST(Mock, EvaluationIsByteReproducible) {
  Fixture f;
  for (auto s : kAllStrategies) {
    MockClient m1, m2;
    auto a = evaluate_llm(f.builder(), m1, s, f.ds, f.split.test());
    auto b = evaluate_llm(f.builder(), m2, s, f.ds, f.split.test());
    EXPECT_EQ(a.traces_jsonl(), b.traces_jsonl());
    EXPECT_EQ(a.report.to_json().dump(), b.report.to_json().dump());
    EXPECT_EQ(a.report.total, f.split.test().size());
  }
}

class GarbageClient : public LLMClient {
 public:
  std::string name() const override { return "garbage"; }
  std::string complete(const std::string&) override { return "I cannot tell."; }
};

TEST(Mock, UnparseableResponsesAreScoredWrong) {
  Fixture f;
  GarbageClient g;
  auto ev = evaluate_llm(f.builder(), g, Strategy::kZeroShot, f.ds, f.split.test());
  EXPECT_EQ(ev.report.unparseable, f.split.test().size());
  EXPECT_EQ(ev.report.accuracy, 0.0);
  EXPECT_EQ(ev.traces[0].error, "unparseable");
  EXPECT_EQ(ev.traces[0].response, "I cannot tell.");
}

TEST(Mock, ForecasterFeedsEarlyCurve) {
  Fixture f;
  auto builder = f.builder();
  MockClient mock;
  LlmForecaster model(builder, mock, Strategy::kFewShotSimilarity);
  auto curve = early_curve(model, f.ds, f.split.test());
  EXPECT_EQ(curve.points.size(), 8u);
}

// ---- HTTP client ----

struct FakeServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> in_flight{0}, max_in_flight{0}, calls{0};
  std::mutex m;
  std::map<std::string, int> attempts;  // by prompt
  std::string last_auth;

  FakeServer() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      int now = ++in_flight;
      int prev = max_in_flight.load();
      while (now > prev && !max_in_flight.compare_exchange_weak(prev, now)) {
      }
      ++calls;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      auto body = nlohmann::json::parse(req.body);
      std::string prompt = body["messages"][0]["content"];
      int n;
      {
        std::lock_guard lock(m);
        n = ++attempts[prompt];
        last_auth = req.get_header_value("Authorization");
      }
      --in_flight;
      if (prompt.find("flaky") != std::string::npos && n < 3) {
        res.status = 503;
        return;
      }
      if (prompt.find("bad") != std::string::npos) {
        res.status = 400;
        return;
      }
      nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "Echo: " + prompt}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeServer() {
    server.stop();
    thread.join();
  }
};

HttpClientConfig client_config(int port, const fs::path& transcript) {
  HttpClientConfig c;
  c.endpoint = fmt::format("http://127.0.0.1:{}/v1/chat/completions", port);
  c.model = "test-model";
  c.api_key_env = "MHF_TEST_LLM_KEY";
  c.max_in_flight = 3;
  c.backoff_ms = 1;
  c.max_retries = 3;
  c.transcript = transcript.string();
  return c;
}

TEST(Http, BoundedConcurrencyRetriesAndIdMatching) {
  FakeServer srv;
  auto transcript = fs::temp_directory_path() / "mhf_transcript.jsonl";
  fs::remove(transcript);
  setenv("MHF_TEST_LLM_KEY", "secret", 1);
  HttpClient client(client_config(srv.port, transcript));
  std::vector<LlmRequest> reqs;
  for (int i = 0; i < 12; ++i) reqs.push_back({fmt::format("r{}", i), fmt::format("prompt {}{}", i, i == 4 ? " flaky" : "")});
  reqs.push_back({"r-bad", "bad request"});
  auto out = client.complete_all(reqs);
  ASSERT_EQ(out.size(), reqs.size());
  for (std::size_t i = 0; i + 1 < reqs.size(); ++i) {
    EXPECT_EQ(out[i].id, reqs[i].id);
    EXPECT_TRUE(out[i].ok()) << out[i].error;
    EXPECT_EQ(out[i].text, "Echo: " + reqs[i].prompt);
  }
  EXPECT_EQ(out[4].attempts, 3);
  EXPECT_FALSE(out.back().ok());
  EXPECT_EQ(out.back().attempts, 1);
  EXPECT_LE(srv.max_in_flight.load(), 3);
  EXPECT_EQ(srv.last_auth, "Bearer secret");
  unsetenv("MHF_TEST_LLM_KEY");

  ReplayClient replay(transcript);
  auto again = replay.complete_all(reqs);
  for (std::size_t i = 0; i + 1 < reqs.size(); ++i) EXPECT_EQ(again[i].text, out[i].text);
  EXPECT_FALSE(again.back().ok());
  std::vector<LlmRequest> changed = {{"r0", "something else"}, {"missing", "prompt 0"}};
  auto mismatched = replay.complete_all(changed);
  EXPECT_FALSE(mismatched[0].ok());
  EXPECT_FALSE(mismatched[1].ok());
  fs::remove(transcript);
}

TEST(Http, ConfigValidation) {
  EXPECT_THROW(HttpClientConfig::from_json({{"endpoint", "ftp://x"}, {"model", "m"}}), ConfigError);
  EXPECT_THROW(HttpClientConfig::from_json({{"endpoint", "http://x/v1"}, {"model", "m"}, {"colour", 1}}), ConfigError);
  EXPECT_THROW(HttpClientConfig::from_json({{"endpoint", "http://x/v1"}}), ConfigError);
  auto c = HttpClientConfig::from_json({{"endpoint", "https://api.example.com/v1/chat/completions"}, {"model", "m"}});
  EXPECT_EQ(c.max_in_flight, 4);
  EXPECT_EQ(c.temperature, 0.0);
}

TEST(Http, UnreachableServerFailsAfterRetries) {
  HttpClientConfig c = client_config(1, {});
  c.max_retries = 1;
  c.timeout_seconds = 1;
  c.transcript.clear();
  HttpClient client(c);
  std::vector<LlmRequest> reqs = {{"a", "x"}};
  auto out = client.complete_all(reqs);
  EXPECT_FALSE(out[0].ok());
  EXPECT_EQ(out[0].attempts, 2);
  EXPECT_THROW(client.complete("x"), Error);
}

// ---- prompt encoder ----

TEST(PromptEncoder, RejectsZeroMaskFraction) {
  PromptEncoderConfig c;
  c.mask_fraction = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c.mask_fraction = 1;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(PromptEncoder, LearnsToReconstructMaskedCells) {
  Fixture f(testing::small_config(3), config_of(Dimension::kD5, Granularity::kDaily));
  PromptEncoderConfig c;
  c.epochs = 15;
  c.width = 16;
  c.depth = 1;
  c.seed = 1;
  auto r = pretrain_prompt_encoder(f.pipeline, f.ds, f.split.train(), c);
  ASSERT_EQ(r.epoch_loss.size(), 15u);
  EXPECT_LT(r.epoch_loss[4], r.epoch_loss[0]);
  auto s = score_reconstruction(*r.encoder, f.pipeline, f.ds, f.split.train(), f.split.test(), 0.15, 99);
  EXPECT_GT(s.masked_cells, 0u);
  EXPECT_LT(s.encoder_mse, s.baseline_mse);
  auto soft = r.encoder->soft_prompt(f.pipeline.sequence(f.ds[0]));
  EXPECT_EQ(soft.rows(), 14);
  EXPECT_EQ(soft.cols(), c.projector_dim);
}

}  // namespace
}  // namespace mhf
