#include "mhf/experiment.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mhf/dataset_io.hpp"
#include "mhf/hash.hpp"
#include "mhf/llm.hpp"
#include "mhf/llm_client.hpp"
#include "mhf/neural.hpp"

extern char** environ;

namespace mhf {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- classical adapter ----------------------------------------------------

ClassicalForecaster::ClassicalForecaster(const ClassicalModel& model, FeaturePipeline pipeline,
                                         std::optional<UserIndex> users, int trained_days)
    : model_(model), pipeline_(std::move(pipeline)), users_(std::move(users)), trained_days_(trained_days) {
  if (pipeline_.config().layout == Layout::kSequence) {
    throw LayoutMismatchError("classical models take aggregated or flattened inputs, not sequences");
  }
}

std::vector<Prediction> ClassicalForecaster::predict(const Dataset& dataset, std::span<const std::size_t> indices,
                                                     int num_days) const {
  const auto& cfg = pipeline_.config();
  if (cfg.layout == Layout::kFlattened && cfg.time_steps(num_days) != cfg.time_steps(trained_days_)) {
    throw LayoutMismatchError(fmt::format("flattened model trained on {} days cannot read {} days", trained_days_,
                                          num_days));
  }
  Eigen::MatrixXd X = pipeline_.design_matrix(dataset, indices, num_days);
  if (users_) {
    std::vector<std::string> ids;
    for (auto i : indices) ids.push_back(dataset[i].participant_id());
    X = attach_user_onehot(X, ids, *users_);
  }
  auto labels = model_.predict(X);
  return {labels.begin(), labels.end()};
}

// ---- names ----------------------------------------------------------------

std::string_view protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kForecast: return "forecast";
    case Protocol::kEarlyCurve: return "early_curve";
    case Protocol::kFullWindow: return "full_window";
  }
  return "?";
}

Protocol protocol_from_name(std::string_view name) {
  if (name == "forecast") return Protocol::kForecast;
  if (name == "early_curve") return Protocol::kEarlyCurve;
  if (name == "full_window") return Protocol::kFullWindow;
  throw ConfigError(fmt::format("unknown protocol '{}' (expected forecast, early_curve or full_window)", name));
}

std::string_view family_name(ModelFamily f) {
  switch (f) {
    case ModelFamily::kClassical: return "classical";
    case ModelFamily::kNeural: return "neural";
    case ModelFamily::kLlm: return "llm";
  }
  return "?";
}

namespace {

ModelFamily family_from_name(std::string_view name) {
  if (name == "classical") return ModelFamily::kClassical;
  if (name == "neural") return ModelFamily::kNeural;
  if (name == "llm") return ModelFamily::kLlm;
  throw ConfigError(fmt::format("unknown model family '{}' (expected classical, neural or llm)", name));
}

std::string now_utc() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                  std::chrono::system_clock::now())));
}

json without(json j, std::initializer_list<const char*> keys) {
  for (const char* k : keys) j.erase(k);
  return j;
}

}  // namespace

// ---- config ---------------------------------------------------------------

json DatasetSource::to_json() const {
  if (generate) return {{"generate", generate->to_json()}};
  return {{"import", import_path.string()}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  static const std::set<std::string> known = {"name",   "dataset",  "features", "models", "personalization",
                                              "losses", "protocols", "seeds",    "output", "category_map"};
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError(fmt::format("unknown experiment key '{}'", key));
  }
  ExperimentConfig c;
  try {
    c.name = j.value("name", c.name);
    const auto& ds = j.at("dataset");
    if (ds.contains("generate") == ds.contains("import")) {
      throw ConfigError("dataset needs exactly one of \"generate\" or \"import\"");
    }
    if (ds.contains("generate")) {
      c.dataset.generate = GeneratorConfig::from_json(ds["generate"]);
    } else {
      c.dataset.import_path = ds["import"].get<std::string>();
    }
    c.features = j.at("features").get<std::vector<json>>();
    c.models = j.at("models").get<std::vector<json>>();
    if (j.contains("personalization")) c.personalization = j["personalization"].get<std::vector<std::string>>();
    if (j.contains("losses")) {
      c.losses.clear();
      for (const auto& l : j["losses"]) c.losses.push_back(LossSpec::from_json(l));
    }
    if (j.contains("protocols")) {
      c.protocols.clear();
      for (const auto& p : j["protocols"]) c.protocols.push_back(protocol_from_name(p.get<std::string>()));
    }
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.output = j.value("output", c.output.string());
    c.category_map = j.value("category_map", std::string());
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("malformed experiment config: {}", e.what()));
  }
  if (c.features.empty()) throw ConfigError("features list is empty");
  if (c.models.empty()) throw ConfigError("models list is empty");
  if (c.seeds.empty()) throw ConfigError("seeds list is empty");
  if (c.protocols.empty()) throw ConfigError("protocols list is empty");
  if (c.losses.empty()) throw ConfigError("losses list is empty");
  for (const auto& p : c.personalization) {
    if (p != "agnostic" && p != "user_aware") {
      throw ConfigError(fmt::format("unknown personalization '{}' (expected agnostic or user_aware)", p));
    }
  }
  if (c.personalization.empty()) throw ConfigError("personalization list is empty");
  expand_grid(c);  // pairing checks
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json losses_j = json::array(), protocols_j = json::array();
  for (const auto& l : losses) losses_j.push_back(l.to_json());
  for (auto p : protocols) protocols_j.push_back(protocol_name(p));
  return {{"name", name},
          {"dataset", dataset.to_json()},
          {"features", features},
          {"models", models},
          {"personalization", personalization},
          {"losses", losses_j},
          {"protocols", protocols_j},
          {"seeds", seeds},
          {"output", output.string()},
          {"category_map", category_map.string()}};
}

std::string ExperimentConfig::hash() const { return sha256_hex(to_json().dump()); }

// ---- grid -----------------------------------------------------------------

json Cell::to_json() const {
  json protocols_j = json::array();
  for (auto p : protocols) protocols_j.push_back(protocol_name(p));
  json j = {{"family", family_name(family)}, {"model", model},         {"features", features.to_json()},
            {"protocols", protocols_j},      {"seed", seed},           {"model_label", model_label}};
  if (!categories.is_null()) j["categories"] = categories;
  return j;
}

Cell Cell::from_json(const json& j) {
  Cell c;
  c.family = family_from_name(j.at("family").get<std::string>());
  c.model = j.at("model");
  c.features = FeatureConfig::from_json(j.at("features"));
  for (const auto& p : j.at("protocols")) c.protocols.push_back(protocol_from_name(p.get<std::string>()));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.model_label = j.at("model_label").get<std::string>();
  c.categories = j.value("categories", json());
  return c;
}

std::string Cell::key(const std::string& dataset_fingerprint) const {
  json j = {{"cell", to_json()}, {"dataset", dataset_fingerprint}, {"code", code_version()}};
  return sha256_hex(j.dump()).substr(0, 24);
}

std::string code_version() { return MHF_CODE_VERSION; }

namespace {

void validate_llm_client(const json& client) {
  if (client.is_string() && client == "mock") return;
  if (client.is_object() && client.size() == 1 && client.contains("http")) {
    HttpClientConfig::from_json(client["http"]);
    return;
  }
  if (client.is_object() && client.size() == 1 && client.contains("replay") && client["replay"].is_string()) return;
  throw ConfigError(fmt::format("llm client must be \"mock\", {{\"http\": {{...}}}} or {{\"replay\": path}}, got {}",
                                client.dump()));
}

Cell resolve_cell(const json& entry, const json& feature_entry, const std::string& personalization,
                  const LossSpec& loss, std::uint64_t seed, const std::vector<Protocol>& protocols) {
  if (!entry.is_object() || !entry.contains("family")) throw ConfigError("every model entry needs a \"family\"");
  Cell cell;
  cell.family = family_from_name(entry["family"].get<std::string>());
  cell.protocols = protocols;
  cell.seed = seed;
  const bool user_aware = personalization == "user_aware";
  json body = without(entry, {"family"});
  Layout natural = Layout::kSequence;

  switch (cell.family) {
    case ModelFamily::kClassical: {
      const bool tune = body.value("tune", !body.contains("hyperparameters"));
      body = without(body, {"tune"});
      if (!body.contains("personalization")) body["personalization"] = user_aware ? "one_hot_id" : "agnostic";
      body["seed"] = seed;
      auto spec = ClassicalSpec::from_json(body);
      cell.model = spec.to_json();
      cell.model["tune"] = tune;
      cell.model_label = std::string(classical_kind_name(spec.kind));
      if (spec.personalization == Personalization::kUserAware) cell.model_label += "+onehot";
      if (spec.class_weighting == ClassWeighting::kInverseFrequency) cell.model_label += "+weighted";
      natural = Layout::kAggregated;
      break;
    }
    case ModelFamily::kNeural: {
      if (!body.contains("personalization")) {
        body["personalization"] = user_aware ? json{{"user_embedding", 8}} : json("agnostic");
      }
      if (!body.contains("loss")) body["loss"] = loss.to_json();
      body["seed"] = seed;
      auto spec = NeuralSpec::from_json(body);
      cell.model = spec.to_json();
      cell.model_label = std::string(neural_kind_name(spec.kind));
      if (spec.user_embedding) cell.model_label += "+emb";
      cell.model_label += fmt::format("+{}", loss_kind_name(spec.loss.kind));
      natural = spec.kind == NeuralKind::kMlp ? Layout::kAggregated : Layout::kSequence;
      break;
    }
    case ModelFamily::kLlm: {
      static const std::set<std::string> known = {"strategy", "k", "user_aware", "client", "patterns"};
      for (const auto& [key, _] : body.items()) {
        if (!known.contains(key)) throw ConfigError(fmt::format("llm model: unknown key '{}'", key));
      }
      auto strategy = strategy_from_name(body.at("strategy").get<std::string>());
      json client = body.value("client", json("mock"));
      validate_llm_client(client);
      const int k = body.value("k", 3);
      if (k < 1) throw ConfigError("llm k must be >= 1");
      const bool aware = body.value("user_aware", user_aware);
      cell.model = {{"strategy", strategy_name(strategy)},
                    {"k", k},
                    {"user_aware", aware},
                    {"client", client},
                    {"patterns", body.value("patterns", std::string())}};
      cell.model_label = fmt::format("llm-{}", strategy_name(strategy));
      if (aware) cell.model_label += "+user";
      break;
    }
  }

  json fe = feature_entry;
  if (!fe.contains("layout")) fe["layout"] = std::string(layout_name(natural));
  cell.features = FeatureConfig::from_json(fe);
  const Layout layout = cell.features.layout;
  const std::string what = fmt::format("{} with {}", cell.model_label, cell.features.label());
  switch (cell.family) {
    case ModelFamily::kClassical:
      if (layout == Layout::kSequence) throw ConfigError(fmt::format("{}: classical models need aggregated or flattened inputs", what));
      if (layout == Layout::kFlattened) {
        for (auto p : protocols) {
          if (p != Protocol::kFullWindow) {
            throw ConfigError(fmt::format("{}: flattened inputs have a fixed width and only support full_window", what));
          }
        }
      }
      break;
    case ModelFamily::kNeural:
      if (layout != natural) {
        throw ConfigError(fmt::format("{}: this model needs {} inputs", what, layout_name(natural)));
      }
      break;
    case ModelFamily::kLlm:
      if (layout != Layout::kSequence) throw ConfigError(fmt::format("{}: prompts serialize sequences", what));
      break;
  }
  return cell;
}

}  // namespace

std::vector<Cell> expand_grid(const ExperimentConfig& config) {
  json categories;
  if (!config.category_map.empty()) {
    try {
      categories = CategoryMap::load(FeatureSchema::canonical(), config.category_map.string())
                       .to_json(FeatureSchema::canonical());
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("category map {}: {}", config.category_map.string(), e.what()));
    }
  }
  std::vector<Cell> cells;
  std::set<std::string> seen;
  for (const auto& m : config.models) {
    for (const auto& f : config.features) {
      for (const auto& p : config.personalization) {
        for (const auto& l : config.losses) {
          for (auto seed : config.seeds) {
            auto cell = resolve_cell(m, f, p, l, seed, config.protocols);
            cell.categories = categories;
            // Axes a model ignores (losses for classical models, say) yield duplicates.
            if (seen.insert(cell.to_json().dump()).second) cells.push_back(std::move(cell));
          }
        }
      }
    }
  }
  return cells;
}

// ---- dataset --------------------------------------------------------------

Dataset materialize_dataset(const ExperimentConfig& config, const fs::path& out) {
  Dataset ds;
  if (config.dataset.generate) {
    ds = generate(*config.dataset.generate);
  } else {
    auto imported = import_ces_csv(config.dataset.import_path);
    for (const auto& s : imported.skipped) {
      spdlog::warn("skipped window {}@{}: {}", s.participant_id, s.start_day, s.reason);
    }
    ds = std::move(imported.dataset);
  }
  if (ds.size() == 0) throw ConfigError("dataset has no windows");
  fs::create_directories(out);
  write_dataset(ds, out / "dataset.csv");
  return ds;
}

// ---- one cell -------------------------------------------------------------

namespace {

std::unique_ptr<LLMClient> make_client(const json& client, const fs::path& artifact_dir) {
  if (client.is_string()) return std::make_unique<MockClient>();
  if (client.contains("http")) {
    auto cfg = HttpClientConfig::from_json(client["http"]);
    if (cfg.transcript.empty()) cfg.transcript = (artifact_dir / "transcript.jsonl").string();
    return std::make_unique<HttpClient>(cfg);
  }
  return std::make_unique<ReplayClient>(client["replay"].get<std::string>());
}

// Runs every protocol through `eval(days)`, evaluating each day count once.
json evaluate_protocols(const Cell& cell, const std::function<EvalReport(int)>& eval, const fs::path& artifact_dir) {
  std::map<int, EvalReport> cache;
  auto at = [&](int days) -> const EvalReport& {
    auto it = cache.find(days);
    if (it == cache.end()) it = cache.emplace(days, eval(days)).first;
    return it->second;
  };
  json reports = json::object();
  for (auto p : cell.protocols) {
    switch (p) {
      case Protocol::kForecast:
        reports["forecast"] = at(kForecastObservedDays).to_json();
        break;
      case Protocol::kFullWindow:
        reports["full_window"] = at(kWindowDays).to_json();
        break;
      case Protocol::kEarlyCurve: {
        EarlyCurve curve;
        for (int t = kForecastObservedDays; t <= kWindowDays; ++t) curve.points.emplace_back(t, at(t));
        write_text_file_atomic(artifact_dir / "early_curve.csv", curve.to_csv());
        reports["early_curve"] = curve.to_json();
        break;
      }
    }
  }
  return reports;
}

std::vector<std::string> participants(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(ds[i].participant_id());
  return out;
}

}  // namespace

json run_cell(const Cell& cell, const CellContext& ctx) {
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(ctx.artifact_dir);
  const Dataset& ds = ctx.dataset;
  const auto train = ctx.split.train(), val = ctx.split.val(), test = ctx.split.test();
  const std::string train_fp = dataset_fingerprint(ds, train);
  const auto categories = cell.categories.is_null()
                              ? CategoryMap::default_map()
                              : CategoryMap::from_json(FeatureSchema::canonical(), cell.categories);
  auto pipeline = FeaturePipeline::fit(cell.features, ds, train, categories);
  json training = json::object(), artifacts = json::object(), reports;

  switch (cell.family) {
    case ModelFamily::kClassical: {
      auto spec = ClassicalSpec::from_json(without(cell.model, {"tune"}));
      Eigen::MatrixXd Xtr = pipeline.design_matrix(ds, train), Xva = pipeline.design_matrix(ds, val);
      std::optional<UserIndex> users;
      if (spec.personalization == Personalization::kUserAware) {
        users = UserIndex::from_samples(ds, train);
        Xtr = attach_user_onehot(Xtr, participants(ds, train), *users);
        Xva = attach_user_onehot(Xva, participants(ds, val), *users);
      }
      const auto ytr = gold_labels(ds, train), yva = gold_labels(ds, val);
      std::unique_ptr<ClassicalModel> model;
      if (cell.model.value("tune", false)) {
        auto tuned = tune_classical(spec, default_grid(spec.kind), Xtr, ytr, Xva, yva);
        model = std::move(tuned.model);
        spec = tuned.spec;
        training["val_macro_f1"] = tuned.val_macro_f1;
      } else {
        model = fit_classical(spec, Xtr, ytr);
      }
      training["hyperparameters"] = spec.hyperparameters;
      save_classical(ctx.artifact_dir / "model.ckpt", *model, spec, train_fp);
      artifacts["checkpoint"] = "model.ckpt";
      ClassicalForecaster f(*model, pipeline, users);
      reports = evaluate_protocols(
          cell, [&](int days) { return forecast_eval(f, ds, test, days); }, ctx.artifact_dir);
      break;
    }
    case ModelFamily::kNeural: {
      auto spec = NeuralSpec::from_json(cell.model);
      auto users = UserIndex::from_samples(ds, train);
      auto tr = make_training_data(pipeline, ds, train, users);
      auto va = make_training_data(pipeline, ds, val, users);
      auto model = build_model(spec, cell.features.dim(), users.size());
      auto history = mhf::train(*model, tr, va);
      training["best_epoch"] = history.best_epoch;
      training["val_macro_f1"] = history.best_val_macro_f1;
      training["epochs"] = history.epochs.size();
      write_text_file_atomic(ctx.artifact_dir / "history.csv", history.to_csv());
      save_neural(ctx.artifact_dir / "model.ckpt", *model, users, train_fp);
      artifacts["checkpoint"] = "model.ckpt";
      artifacts["history"] = "history.csv";
      NeuralForecaster f(*model, pipeline, users);
      reports = evaluate_protocols(
          cell, [&](int days) { return forecast_eval(f, ds, test, days); }, ctx.artifact_dir);
      break;
    }
    case ModelFamily::kLlm: {
      const auto strategy = strategy_from_name(cell.model.at("strategy").get<std::string>());
      PromptOptions options;
      options.k = cell.model.at("k").get<int>();
      options.user_aware = cell.model.at("user_aware").get<bool>();
      const auto patterns_path = cell.model.value("patterns", std::string());
      PatternLibrary patterns = patterns_path.empty() ? PatternLibrary{} : load_pattern_library(patterns_path);
      PromptBuilder builder(ds, {train.begin(), train.end()}, pipeline, RenameSchema::defaults(), options, patterns);
      auto client = make_client(cell.model.at("client"), ctx.artifact_dir);
      training["client"] = client->name();
      reports = evaluate_protocols(
          cell,
          [&](int days) {
            auto ev = evaluate_llm(builder, *client, strategy, ds, test, days);
            const auto name = fmt::format("traces_T{:02d}.jsonl", days);
            write_text_file_atomic(ctx.artifact_dir / name, ev.traces_jsonl());
            artifacts["traces"].push_back(name);
            return ev.report;
          },
          ctx.artifact_dir);
      break;
    }
  }
  if (fs::exists(ctx.artifact_dir / "early_curve.csv")) artifacts["early_curve"] = "early_curve.csv";

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {{"key", cell.key(ctx.dataset_fingerprint)},
          {"status", "ok"},
          {"model_label", cell.model_label},
          {"config_label", cell.features.label()},
          {"seed", cell.seed},
          {"cell", cell.to_json()},
          {"reports", reports},
          {"training", training},
          {"artifacts", artifacts},
          {"seconds", seconds},
          {"provenance",
           {{"config_hash", ctx.config_hash},
            {"dataset_fingerprint", ctx.dataset_fingerprint},
            {"train_fingerprint", train_fp},
            {"dataset_provenance", provenance_name(ds.provenance())},
            {"seed", cell.seed},
            {"code_version", code_version()},
            {"finished_at", now_utc()}}}};
}

// ---- the store ------------------------------------------------------------

namespace {

json failure_record(const Cell& cell, const std::string& key, const std::string& error,
                    const std::string& dataset_fp, const std::string& config_hash) {
  return {{"key", key},
          {"status", "failed"},
          {"error", error},
          {"model_label", cell.model_label},
          {"config_label", cell.features.label()},
          {"seed", cell.seed},
          {"cell", cell.to_json()},
          {"provenance",
           {{"config_hash", config_hash},
            {"dataset_fingerprint", dataset_fp},
            {"seed", cell.seed},
            {"code_version", code_version()},
            {"finished_at", now_utc()}}}};
}

fs::path record_path(const fs::path& out, const std::string& key) { return out / "records" / (key + ".json"); }

std::map<std::string, std::string> manifest_status(const fs::path& out) {
  std::map<std::string, std::string> status;
  std::ifstream in(out / "manifest.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      status[j.at("key").get<std::string>()] = j.at("status").get<std::string>();
    } catch (const json::exception&) {
      spdlog::warn("ignoring malformed manifest line: {}", line);
    }
  }
  return status;
}

void append_manifest(const fs::path& out, const json& record) {
  json line = {{"key", record.at("key")},
               {"status", record.at("status")},
               {"model", record.at("model_label")},
               {"config", record.at("config_label")},
               {"seed", record.at("seed")},
               {"record", fs::path("records") / (record.at("key").get<std::string>() + ".json")},
               {"finished_at", record.at("provenance").at("finished_at")}};
  std::ofstream f(out / "manifest.jsonl", std::ios::app);
  f << line.dump() << "\n";
  f.flush();
  if (!f) throw Error(fmt::format("cannot append to {}", (out / "manifest.jsonl").string()));
}

json read_record(const fs::path& path) { return json::parse(read_text_file(path)); }

pid_t spawn_worker(const fs::path& exe, const fs::path& cell_file) {
  std::string a0 = exe.string(), a1 = "run-cell", a2 = cell_file.string();
  char* argv[] = {a0.data(), a1.data(), a2.data(), nullptr};
  pid_t pid = 0;
  if (int rc = posix_spawn(&pid, a0.c_str(), nullptr, nullptr, argv, environ); rc != 0) {
    throw Error(fmt::format("cannot start worker {}: {}", a0, std::strerror(rc)));
  }
  return pid;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& input, const RunOptions& options) {
  ExperimentConfig config = input;
  if (options.protocols_override) config.protocols = *options.protocols_override;
  const auto cells = expand_grid(config);
  const fs::path out = config.output;
  fs::create_directories(out / "records");
  fs::create_directories(out / "artifacts");
  write_text_file_atomic(out / "config.json", config.to_json().dump(2) + "\n");

  const Dataset ds = materialize_dataset(config, out);
  const std::string fp = dataset_fingerprint(ds);
  const std::string config_hash = config.hash();
  const auto split = split_user_temporal(ds);
  spdlog::info("dataset: {} windows, {} users, fingerprint {}", ds.size(), ds.users().size(), fp.substr(0, 12));

  auto status = manifest_status(out);
  RunSummary summary;
  summary.total = cells.size();
  std::vector<std::pair<Cell, std::string>> pending;
  for (const auto& c : cells) {
    auto key = c.key(fp);
    if (status[key] == "ok" && fs::exists(record_path(out, key))) {
      ++summary.skipped;
    } else {
      pending.emplace_back(c, key);
    }
  }
  spdlog::info("{} cells: {} cached, {} to run", summary.total, summary.skipped, pending.size());

  auto finish = [&](const json& record) {
    write_text_file_atomic(record_path(out, record.at("key").get<std::string>()), record.dump(2) + "\n");
    append_manifest(out, record);
    ++summary.executed;
    if (record.at("status") != "ok") {
      ++summary.failed;
      spdlog::error("cell {} ({} / {} / seed {}) failed: {}", record.at("key").get<std::string>(),
                    record.at("model_label").get<std::string>(), record.at("config_label").get<std::string>(),
                    record.at("seed").get<std::uint64_t>(), record.value("error", std::string()));
    } else {
      spdlog::info("cell {} {} / {} / seed {} done", record.at("key").get<std::string>(),
                   record.at("model_label").get<std::string>(), record.at("config_label").get<std::string>(),
                   record.at("seed").get<std::uint64_t>());
    }
  };

  if (options.workers <= 1 || options.executable.empty()) {
    for (const auto& [cell, key] : pending) {
      CellContext ctx{ds, split, fp, config_hash, out / "artifacts" / key};
      try {
        finish(run_cell(cell, ctx));
      } catch (const std::exception& e) {
        finish(failure_record(cell, key, e.what(), fp, config_hash));
      }
    }
    return summary;
  }

  fs::create_directories(out / "cells");
  std::map<pid_t, std::pair<const Cell*, std::string>> running;
  auto reap_one = [&] {
    int wstatus = 0;
    pid_t pid = waitpid(-1, &wstatus, 0);
    if (pid < 0) throw Error(fmt::format("waitpid failed: {}", std::strerror(errno)));
    auto it = running.find(pid);
    if (it == running.end()) return;
    const auto& [cell, key] = it->second;
    json record;
    try {
      record = read_record(record_path(out, key).string() + ".part");
      fs::remove(record_path(out, key).string() + ".part");
    } catch (const std::exception&) {
      const std::string why = WIFSIGNALED(wstatus) ? fmt::format("worker killed by signal {}", WTERMSIG(wstatus))
                                                   : fmt::format("worker exited with status {} and no record",
                                                                 WEXITSTATUS(wstatus));
      record = failure_record(*cell, key, why, fp, config_hash);
    }
    finish(record);
    running.erase(it);
  };
  for (const auto& [cell, key] : pending) {
    json job = {{"cell", cell.to_json()},
                {"key", key},
                {"out", fs::absolute(out).string()},
                {"dataset_fingerprint", fp},
                {"config_hash", config_hash}};
    const auto cell_file = out / "cells" / (key + ".json");
    write_text_file_atomic(cell_file, job.dump(2) + "\n");
    while (static_cast<int>(running.size()) >= options.workers) reap_one();
    running[spawn_worker(options.executable, cell_file)] = {&cell, key};
  }
  while (!running.empty()) reap_one();
  return summary;
}

int run_cell_file(const fs::path& cell_file) {
  const json job = json::parse(read_text_file(cell_file));
  const Cell cell = Cell::from_json(job.at("cell"));
  const fs::path out = job.at("out").get<std::string>();
  const auto key = job.at("key").get<std::string>();
  const auto fp = job.at("dataset_fingerprint").get<std::string>();
  const auto config_hash = job.at("config_hash").get<std::string>();
  // The parent owns records/<key>.json and the manifest; the worker leaves
  // its result beside them for the parent to publish.
  const fs::path part = record_path(out, key).string() + ".part";
  json record;
  try {
    const Dataset ds = read_dataset(out / "dataset.csv");
    if (dataset_fingerprint(ds) != fp) throw Error("dataset.csv changed since the run started");
    const auto split = split_user_temporal(ds);
    record = run_cell(cell, {ds, split, fp, config_hash, out / "artifacts" / key});
  } catch (const std::exception& e) {
    record = failure_record(cell, key, e.what(), fp, config_hash);
  }
  write_text_file_atomic(part, record.dump(2) + "\n");
  return record.at("status") == "ok" ? 0 : 1;
}

std::vector<json> load_records(const fs::path& out) {
  std::vector<fs::path> files;
  if (fs::exists(out / "records")) {
    for (const auto& e : fs::directory_iterator(out / "records")) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<json> records;
  for (const auto& f : files) records.push_back(read_record(f));
  return records;
}

// ---- reports --------------------------------------------------------------

namespace {

EvalReport mean_report(const std::vector<EvalReport>& reports) {
  EvalReport m;
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    for (int k = 0; k < kNumClasses; ++k) {
      m.per_class[k].precision += r.per_class[k].precision / n;
      m.per_class[k].recall += r.per_class[k].recall / n;
      m.per_class[k].f1 += r.per_class[k].f1 / n;
      m.per_class[k].support += r.per_class[k].support;
      m.per_class[k].predicted += r.per_class[k].predicted;
      for (int p = 0; p < kNumClasses; ++p) m.confusion[k][p] += r.confusion[k][p];
    }
    m.accuracy += r.accuracy / n;
    m.macro_f1 += r.macro_f1 / n;
    m.total += r.total;
    m.unparseable += r.unparseable;
  }
  return m;
}

EvalReport report_for(const json& record, Protocol p) {
  const auto& reports = record.at("reports");
  if (p == Protocol::kEarlyCurve) return EvalReport::from_json(reports.at("early_curve").back().at("report"));
  return EvalReport::from_json(reports.at(std::string(protocol_name(p))));
}

}  // namespace

std::vector<ReportTable> build_report(const std::vector<json>& records) {
  std::vector<ReportTable> tables;
  for (auto p : {Protocol::kForecast, Protocol::kFullWindow, Protocol::kEarlyCurve}) {
    std::map<std::pair<std::string, std::string>, std::vector<EvalReport>> groups;
    for (const auto& r : records) {
      if (r.at("status") != "ok" || !r.at("reports").contains(std::string(protocol_name(p)))) continue;
      groups[{r.at("model_label").get<std::string>(), r.at("config_label").get<std::string>()}].push_back(
          report_for(r, p));
    }
    if (groups.empty()) continue;
    ReportTable t;
    t.protocol = p;
    for (const auto& [k, reports] : groups) {
      t.rows.push_back({k.first, k.second, mean_report(reports)});
      t.seed_count.push_back(reports.size());
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

std::string render_report(const std::vector<ReportTable>& tables) {
  std::string out;
  for (const auto& t : tables) {
    out += fmt::format("== {}{} (mean over seeds) ==\n", protocol_name(t.protocol),
                       t.protocol == Protocol::kEarlyCurve ? " at T=14" : "");
    out += format_report_table(t.rows);
    out += "\n";
  }
  if (tables.empty()) out = "no completed records\n";
  return out;
}

json report_json(const std::vector<ReportTable>& tables) {
  json out = json::array();
  for (const auto& t : tables) {
    json rows = json::array();
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      rows.push_back({{"model", t.rows[i].model},
                      {"config", t.rows[i].config},
                      {"seeds", t.seed_count[i]},
                      {"report", t.rows[i].report.to_json()}});
    }
    out.push_back({{"protocol", protocol_name(t.protocol)}, {"rows", rows}});
  }
  return out;
}

std::string early_curve_csv(const std::vector<json>& records) {
  std::map<std::tuple<std::string, std::string, int>, std::vector<EvalReport>> groups;
  for (const auto& r : records) {
    if (r.at("status") != "ok" || !r.at("reports").contains("early_curve")) continue;
    for (const auto& pt : r.at("reports").at("early_curve")) {
      groups[{r.at("model_label").get<std::string>(), r.at("config_label").get<std::string>(),
              pt.at("T").get<int>()}]
          .push_back(EvalReport::from_json(pt.at("report")));
    }
  }
  std::string out = "model,config,T,accuracy,macro_f1,seeds\n";
  for (const auto& [k, reports] : groups) {
    auto m = mean_report(reports);
    out += fmt::format("{},{},{},{:.6f},{:.6f},{}\n", std::get<0>(k), std::get<1>(k), std::get<2>(k), m.accuracy,
                       m.macro_f1, reports.size());
  }
  return out;
}

}  // namespace mhf
