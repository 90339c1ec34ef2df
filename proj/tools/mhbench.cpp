// mhbench: generate datasets, run experiment grids, analyze and report.
//
// Exit codes: 0 success, 1 some cells (or the command) failed, 2 bad config.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mhf/analysis.hpp"
#include "mhf/dataset_io.hpp"
#include "mhf/experiment.hpp"
#include "mhf/llm.hpp"

namespace fs = std::filesystem;
using namespace mhf;

namespace {

struct Common {
  std::string config;
  std::string out;
  int workers = 1;
  std::optional<std::uint64_t> seed_override;
};

ExperimentConfig load_config(const Common& c) {
  if (c.config.empty()) throw ConfigError("--config is required");
  auto cfg = ExperimentConfig::load(c.config);
  if (!c.out.empty()) cfg.output = c.out;
  if (c.seed_override) {
    cfg.seeds = {*c.seed_override};
    if (cfg.dataset.generate) cfg.dataset.generate->seed = *c.seed_override;
  }
  return cfg;
}

int run_grid(const Common& c, std::optional<std::vector<Protocol>> protocols) {
  auto cfg = load_config(c);
  if (c.workers < 1) throw ConfigError("--workers must be >= 1");
  RunOptions opt;
  opt.workers = c.workers;
  opt.executable = fs::read_symlink("/proc/self/exe");
  opt.protocols_override = std::move(protocols);
  auto s = run_experiment(cfg, opt);
  fmt::print("{} cells: {} executed, {} cached, {} failed\n", s.total, s.executed, s.skipped, s.failed);
  fmt::print("results in {}\n", cfg.output.string());
  return s.failed == 0 ? 0 : 1;
}

int report(const Common& c) {
  fs::path out = c.out;
  if (out.empty()) {
    if (c.config.empty()) throw ConfigError("report needs --out or --config");
    out = ExperimentConfig::load(c.config).output;
  }
  if (!fs::exists(out / "records")) throw ConfigError(fmt::format("{} holds no result records", out.string()));
  auto records = load_records(out);
  auto tables = build_report(records);
  auto text = render_report(tables);
  write_text_file_atomic(out / "report.txt", text);
  write_text_file_atomic(out / "report.json", report_json(tables).dump(2) + "\n");
  write_text_file_atomic(out / "early_curves.csv", early_curve_csv(records));
  std::size_t failed = 0;
  for (const auto& r : records) failed += r.at("status") != "ok";
  fmt::print("{}", text);
  if (failed) fmt::print("{} failed record(s) left out\n", failed);
  return 0;
}

int analyze(const Common& c, const ImportanceParams& params) {
  auto cfg = load_config(c);
  auto ds = materialize_dataset(cfg, cfg.output);
  const fs::path dir = cfg.output / "analysis";
  fs::create_directories(dir);
  auto sim = class_similarity_matrix(ds);
  write_text_file_atomic(dir / "similarity.csv", sim.to_csv());
  write_text_file_atomic(dir / "similarity.json", sim.to_json().dump(2) + "\n");
  auto disp = importance_dispersion(ds, params);
  write_text_file_atomic(dir / "importance_dispersion.csv", disp.to_csv());
  write_text_file_atomic(dir / "importance_per_user.csv", disp.per_user_csv());
  fmt::print("class similarity (mean pairwise cosine):\n{}\n", sim.to_csv());
  for (const auto& f : sim.flags) fmt::print("note: {}\n", f);
  fmt::print("largest importance spread across users: {:.4f}\n", disp.max_range());
  fmt::print("top features by median importance:\n");
  for (const auto& f : disp.top(5)) {
    fmt::print("  {:<28} median {:.4f}  range {:.4f}\n", f.feature, f.median, f.range());
  }
  fmt::print("results in {}\n", dir.string());
  return 0;
}

int export_peft(const Common& c, const std::string& strategy_name_arg, int days, const std::string& features) {
  auto cfg = load_config(c);
  auto ds = materialize_dataset(cfg, cfg.output);
  auto split = split_user_temporal(ds);
  FeatureConfig fc = FeatureConfig::from_json(nlohmann::json::parse(features));
  if (fc.layout != Layout::kSequence) throw ConfigError("prompts serialize sequence layouts");
  auto pipeline = FeaturePipeline::fit(fc, ds, split.train());
  auto train = split.train();
  PromptBuilder builder(ds, {train.begin(), train.end()}, pipeline);
  const auto strategy = strategy_from_name(strategy_name_arg);
  const fs::path dir = cfg.output / "peft";
  for (auto [name, idx] : {std::pair{"train", split.train()}, std::pair{"val", split.val()}}) {
    auto corpus = build_peft_corpus(builder, idx, strategy, days);
    write_jsonl(dir / fmt::format("{}.jsonl", name), corpus);
    fmt::print("{}: {} records\n", name, corpus.size());
  }
  fmt::print("results in {}\n", dir.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mental-health forecasting benchmark harness"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  Common common;
  auto add_common = [&](CLI::App* sub, bool grid) {
    sub->add_option("--config", common.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "Output directory (overrides the config)");
    sub->add_option("--seed-override", common.seed_override, "Use this single seed everywhere");
    if (grid) sub->add_option("--workers", common.workers, "Worker processes")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("generate", "Generate (or import) the configured dataset");
  add_common(gen, false);
  auto* run = app.add_subcommand("run", "Train and evaluate every grid cell");
  add_common(run, true);
  auto* early = app.add_subcommand("early", "Early-prediction curves (T = 7..14) for every grid cell");
  add_common(early, true);
  auto* an = app.add_subcommand("analyze", "Class similarity and per-user feature importance");
  add_common(an, false);
  ImportanceParams params;
  an->add_option("--trees", params.n_estimators, "Boosting rounds per participant");
  an->add_option("--depth", params.max_depth, "Tree depth");
  auto* rep = app.add_subcommand("report", "Tables from stored result records");
  rep->add_option("--config", common.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  rep->add_option("--out", common.out, "Result directory");
  auto* peft = app.add_subcommand("export-peft", "Instruction-tuning corpus (JSONL) from train/val windows");
  add_common(peft, false);
  std::string strategy = "zero_shot", features = R"({"dimension":"35D","granularity":"daily"})";
  int days = kForecastObservedDays;
  peft->add_option("--strategy", strategy, "Prompt strategy");
  peft->add_option("--days", days, "Observed days per prompt")->check(CLI::Range(1, kWindowDays));
  peft->add_option("--features", features, "Feature config (JSON)");
  auto* sch = app.add_subcommand("schema", "Write the feature schema and default category map as editable JSON");
  std::string schema_out = "data";
  sch->add_option("--out", schema_out, "Output directory");
  auto* cell = app.add_subcommand("run-cell", "");  // worker-process entry
  cell->group("");
  std::string cell_file;
  cell->add_option("file", cell_file)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");

  try {
    if (*cell) return run_cell_file(cell_file);
    if (*gen) {
      auto cfg = load_config(common);
      auto ds = materialize_dataset(cfg, cfg.output);
      auto counts = class_counts(ds);
      fmt::print("{} windows from {} users (Normal {}, Mild {}, Moderate {}, Severe {})\n", ds.size(),
                 ds.users().size(), counts[0], counts[1], counts[2], counts[3]);
      fmt::print("fingerprint {}\nwritten to {}\n", dataset_fingerprint(ds), (cfg.output / "dataset.csv").string());
      return 0;
    }
    if (*sch) {
      const auto& schema = FeatureSchema::canonical();
      fs::create_directories(schema_out);
      write_text_file_atomic(fs::path(schema_out) / "feature_schema.json", schema.to_json().dump(2) + "\n");
      write_text_file_atomic(fs::path(schema_out) / "category_map.json",
                             CategoryMap::default_map(schema).to_json(schema).dump(2) + "\n");
      fmt::print("wrote feature_schema.json and category_map.json to {}\n", schema_out);
      return 0;
    }
    if (*run) return run_grid(common, std::nullopt);
    if (*early) return run_grid(common, std::vector<Protocol>{Protocol::kEarlyCurve});
    if (*an) return analyze(common, params);
    if (*rep) return report(common);
    if (*peft) return export_peft(common, strategy, days, features);
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("config error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
