#include "mhf/llm.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mhf/dataset_io.hpp"

namespace mhf {

namespace {

constexpr std::array<std::string_view, 6> kStrategyNames = {"zero_shot",
                                                            "few_shot_recency",
                                                            "few_shot_similarity",
                                                            "statistical_individual",
                                                            "statistical_population",
                                                            "pattern"};

constexpr std::string_view kInstructionHeading = "## Instruction";
constexpr std::string_view kContextHeading = "## Context";
constexpr std::string_view kBehaviorHeading = "## Behavior";
constexpr std::string_view kAnswerHeading = "## Answer format";
constexpr std::string_view kParticipantPrefix = "Participant: ";

constexpr std::array<std::string_view, kNumCategories> kCategoryHeaders = {
    "Leisure (z-score)", "Me time (z-score)", "Phone time (z-score)", "Sleep (z-score)", "Social time (z-score)"};

std::string fixed2(double v) {
  std::string s = fmt::format("{:.2f}", v);
  return s == "-0.00" ? "0.00" : s;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::vector<std::string> table_cells(std::string_view line) {
  std::string t = trim(line);
  if (t.size() < 2 || t.front() != '|' || t.back() != '|') {
    throw ValidationError(fmt::format("not a table row: '{}'", t));
  }
  std::vector<std::string> cells;
  std::size_t start = 1;
  while (start < t.size()) {
    auto bar = t.find('|', start);
    cells.push_back(trim(std::string_view(t).substr(start, bar - start)));
    start = bar + 1;
  }
  return cells;
}

double parse_number(const std::string& cell) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw ValidationError(fmt::format("table cell '{}' is not a number", cell));
  }
  return v;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::vector<std::string> period_labels(const FeatureConfig& config, Eigen::Index rows) {
  std::vector<std::string> labels;
  const char* unit = config.granularity == Granularity::kDaily ? "Day" : "Week";
  for (Eigen::Index i = 0; i < rows; ++i) labels.push_back(fmt::format("{} {}", unit, i + 1));
  return labels;
}

double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  double na = a.norm(), nb = b.norm();
  return na > 0 && nb > 0 ? a.dot(b) / (na * nb) : 0.0;
}

std::string level_word(Severity s) { return std::string(severity_name(s)); }

}  // namespace

std::string_view strategy_name(Strategy s) { return kStrategyNames[static_cast<int>(s)]; }

Strategy strategy_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kStrategyNames.size(); ++i) {
    if (kStrategyNames[i] == name) return static_cast<Strategy>(i);
  }
  throw ConfigError(fmt::format("unknown prompting strategy '{}'", name));
}

std::string window_id(const SampleWindow& w) { return fmt::format("{}@{}", w.participant_id(), w.start_day()); }

// ---- rename schema and tables ----

RenameSchema::RenameSchema(std::map<std::string, std::string> headers) : headers_(std::move(headers)) {
  for (const auto& [key, h] : headers_) {
    if (h.empty() || h.find('|') != std::string::npos || h.find('\n') != std::string::npos) {
      throw ConfigError(fmt::format("rename entry for '{}' must be non-empty without '|' or newlines", key));
    }
  }
}

RenameSchema RenameSchema::defaults(const FeatureSchema& schema) {
  std::map<std::string, std::string> h;
  for (const auto& f : schema.features()) h[f.name] = fmt::format("{} ({})", f.display_name, f.unit);
  for (int c = 0; c < kNumCategories; ++c) {
    h[std::string(category_name(static_cast<Category>(c)))] = std::string(kCategoryHeaders[c]);
  }
  return RenameSchema(std::move(h));
}

RenameSchema RenameSchema::from_json(const nlohmann::json& j) {
  try {
    return RenameSchema(j.get<std::map<std::string, std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed rename schema: {}", e.what()));
  }
}

const std::string& RenameSchema::header(const std::string& key) const {
  auto it = headers_.find(key);
  if (it == headers_.end()) throw ConfigError(fmt::format("rename schema has no entry for '{}'", key));
  return it->second;
}

std::vector<std::string> RenameSchema::columns(const FeatureConfig& config) const {
  std::vector<std::string> out;
  if (config.dimension == Dimension::kD35) {
    for (const auto& n : FeatureSchema::canonical().names()) out.push_back(header(n));
  } else {
    for (int c = 0; c < kNumCategories; ++c) out.push_back(header(std::string(category_name(static_cast<Category>(c)))));
  }
  return out;
}

Eigen::MatrixXd table_values(const SampleWindow& window, const FeaturePipeline& pipeline, int num_days) {
  const auto& config = pipeline.config();
  if (config.dimension == Dimension::kD5) return pipeline.sequence(window, num_days);
  Eigen::MatrixXd raw = window.matrix(num_days);
  return config.granularity == Granularity::kWeekly ? to_weekly(raw) : raw;
}

std::string render_table(const std::vector<std::string>& row_labels, const std::vector<std::string>& headers,
                         const Eigen::MatrixXd& values) {
  if (values.rows() != static_cast<Eigen::Index>(row_labels.size()) ||
      values.cols() != static_cast<Eigen::Index>(headers.size())) {
    throw ValidationError("table shape does not match its labels");
  }
  std::string out = "| Period |";
  for (const auto& h : headers) out += " " + h + " |";
  out += "\n|---|";
  for (std::size_t c = 0; c < headers.size(); ++c) out += "---|";
  out += "\n";
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    out += "| " + row_labels[r] + " |";
    for (Eigen::Index c = 0; c < values.cols(); ++c) out += " " + fixed2(values(r, c)) + " |";
    out += "\n";
  }
  out.pop_back();
  return out;
}

std::string serialize_window(const SampleWindow& window, const FeaturePipeline& pipeline, const RenameSchema& rename,
                             int num_days) {
  auto headers = rename.columns(pipeline.config());
  Eigen::MatrixXd values = table_values(window, pipeline, num_days);
  return render_table(period_labels(pipeline.config(), values.rows()), headers, values);
}

ParsedTable parse_table(std::string_view text) {
  std::vector<std::string> lines;
  for (auto& l : split_lines(text)) {
    if (!trim(l).empty()) lines.push_back(std::move(l));
  }
  if (lines.size() < 2) throw ValidationError("table needs a header and a separator row");
  ParsedTable t;
  auto header = table_cells(lines[0]);
  if (header.empty()) throw ValidationError("table header is empty");
  t.headers.assign(header.begin() + 1, header.end());
  auto sep = table_cells(lines[1]);
  if (sep.size() != header.size() ||
      !std::all_of(sep.begin(), sep.end(), [](const std::string& s) {
        return !s.empty() && s.find_first_not_of("-:") == std::string::npos;
      })) {
    throw ValidationError("malformed table separator row");
  }
  t.values.resize(static_cast<Eigen::Index>(lines.size() - 2), static_cast<Eigen::Index>(t.headers.size()));
  for (std::size_t r = 2; r < lines.size(); ++r) {
    auto cells = table_cells(lines[r]);
    if (cells.size() != header.size()) {
      throw ValidationError(fmt::format("table row {} has {} cells, expected {}", r - 1, cells.size(), header.size()));
    }
    t.row_labels.push_back(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      t.values(static_cast<Eigen::Index>(r - 2), static_cast<Eigen::Index>(c - 1)) = parse_number(cells[c]);
    }
  }
  return t;
}

// ---- prompt bundle ----

std::string PromptBundle::render() const {
  for (const auto* part : {&system_instruction, &context_block, &behavior_table, &answer_format_instruction}) {
    for (const auto& line : split_lines(*part)) {
      if (line.rfind("## ", 0) == 0) throw ValidationError(fmt::format("prompt text may not contain a section heading: '{}'", line));
    }
  }
  std::string out;
  if (participant) {
    if (participant->empty() || participant->find('\n') != std::string::npos) {
      throw ValidationError("participant id must be a single non-empty line");
    }
    out += std::string(kParticipantPrefix) + *participant + "\n\n";
  }
  out += std::string(kInstructionHeading) + "\n" + system_instruction + "\n\n";
  if (!context_block.empty()) out += std::string(kContextHeading) + "\n" + context_block + "\n\n";
  out += std::string(kBehaviorHeading) + "\n" + behavior_table + "\n\n";
  out += std::string(kAnswerHeading) + "\n" + answer_format_instruction + "\n";
  return out;
}

PromptBundle PromptBundle::parse(std::string_view text) {
  PromptBundle b;
  auto lines = split_lines(text);
  std::size_t i = 0;
  if (!lines.empty() && lines[0].rfind(kParticipantPrefix, 0) == 0) {
    b.participant = lines[0].substr(kParticipantPrefix.size());
    i = 1;
  }
  std::map<std::string, std::vector<std::string>> sections;
  std::string current;
  for (; i < lines.size(); ++i) {
    const auto& l = lines[i];
    if (l == kInstructionHeading || l == kContextHeading || l == kBehaviorHeading || l == kAnswerHeading) {
      if (sections.count(l)) throw ValidationError(fmt::format("duplicate prompt section '{}'", l));
      current = l;
      sections[current];
    } else if (!current.empty()) {
      sections[current].push_back(l);
    } else if (!trim(l).empty()) {
      throw ValidationError("text before the first prompt section");
    }
  }
  auto body = [&](std::string_view heading, bool required) {
    auto it = sections.find(std::string(heading));
    if (it == sections.end()) {
      if (required) throw ValidationError(fmt::format("prompt is missing section '{}'", heading));
      return std::string();
    }
    auto& v = it->second;
    while (!v.empty() && v.back().empty()) v.pop_back();
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "\n" : "") + v[k];
    return s;
  };
  b.system_instruction = body(kInstructionHeading, true);
  b.context_block = body(kContextHeading, false);
  b.behavior_table = body(kBehaviorHeading, true);
  b.answer_format_instruction = body(kAnswerHeading, true);
  parse_table(b.behavior_table);
  return b;
}

Severity parse_response(std::string_view text) {
  const std::string t = lower(text);
  std::optional<Severity> found;
  std::size_t best = 0;
  for (auto s : kAllSeverities) {
    const std::string word = lower(severity_name(s));
    for (auto pos = t.find(word); pos != std::string::npos; pos = t.find(word, pos + 1)) {
      bool left = pos == 0 || !is_word_char(t[pos - 1]);
      bool right = pos + word.size() >= t.size() || !is_word_char(t[pos + word.size()]);
      if (left && right && (!found || pos >= best)) {
        found = s;
        best = pos;
      }
    }
  }
  if (!found) throw UnparseableResponse(std::string(text));
  return *found;
}

// ---- class statistics and patterns ----

ClassStatistics compute_class_statistics(const Dataset& dataset, std::span<const std::size_t> train,
                                         const FeaturePipeline& pipeline, StatsLevel level, const std::string& user) {
  if (train.empty()) throw ValidationError("class statistics need a non-empty training split");
  if (level == StatsLevel::kIndividual && user.empty()) throw ValidationError("individual statistics need a participant");
  ClassStatistics stats;
  stats.level = level;
  stats.user = level == StatsLevel::kIndividual ? user : std::string();
  std::array<std::vector<Eigen::RowVectorXd>, kNumClasses> rows;
  for (auto i : train) {
    const auto& w = dataset[i];
    if (level == StatsLevel::kIndividual && w.participant_id() != user) continue;
    rows[rank(w.label())].push_back(statistical_aggregate(table_values(w, pipeline)));
  }
  bool any = false;
  for (int k = 0; k < kNumClasses; ++k) {
    if (rows[k].empty()) continue;
    any = true;
    ClassMoments m;
    m.count = rows[k].size();
    m.mean = Eigen::RowVectorXd::Zero(rows[k][0].size());
    for (const auto& r : rows[k]) m.mean += r;
    m.mean /= static_cast<double>(m.count);
    m.variance = Eigen::RowVectorXd::Zero(m.mean.size());
    for (const auto& r : rows[k]) m.variance += (r - m.mean).array().square().matrix();
    m.variance /= static_cast<double>(m.count);
    stats.classes[k] = std::move(m);
  }
  if (!any) throw ValidationError(fmt::format("participant '{}' has no training windows", user));
  return stats;
}

std::string ClassStatistics::render(const std::vector<std::string>& headers) const {
  std::vector<std::string> present;
  std::vector<int> cols;
  std::string missing;
  for (int k = 0; k < kNumClasses; ++k) {
    if (classes[k]) {
      cols.push_back(k);
    } else {
      missing += (missing.empty() ? "" : ", ") + level_word(severity_from_rank(k));
    }
  }
  std::string out = level == StatsLevel::kIndividual
                        ? "Mean (variance) of each feature by level over this participant's earlier periods:\n"
                        : "Mean (variance) of each feature by level over all participants' earlier periods:\n";
  out += "| Feature |";
  for (int k : cols) out += " " + level_word(severity_from_rank(k)) + " |";
  out += "\n|---|";
  for (std::size_t c = 0; c < cols.size(); ++c) out += "---|";
  for (std::size_t f = 0; f < headers.size(); ++f) {
    out += "\n| " + headers[f] + " |";
    for (int k : cols) {
      const auto& m = *classes[k];
      out += fmt::format(" {} ({}) |", fixed2(m.mean[static_cast<Eigen::Index>(f)]),
                         fixed2(m.variance[static_cast<Eigen::Index>(f)]));
    }
  }
  if (!missing.empty()) out += "\nNo earlier periods were reported at these levels: " + missing + ".";
  return out;
}

nlohmann::json PatternKnowledge::to_json() const {
  nlohmann::json p = nlohmann::json::object();
  for (int k = 0; k < kNumClasses; ++k) {
    if (!summaries[k].empty()) p[level_word(severity_from_rank(k))] = summaries[k];
  }
  return {{"provenance", provenance}, {"patterns", p}};
}

PatternKnowledge PatternKnowledge::from_json(const nlohmann::json& j) {
  PatternKnowledge k;
  try {
    k.provenance = j.at("provenance").get<std::string>();
    for (const auto& [name, text] : j.at("patterns").items()) {
      auto s = severity_from_name(name);
      if (!s) throw ConfigError(fmt::format("pattern knowledge names unknown level '{}'", name));
      k.summaries[rank(*s)] = text.get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed pattern knowledge: {}", e.what()));
  }
  return k;
}

PatternKnowledge summarize_patterns(const ClassStatistics& stats, const std::vector<std::string>& headers,
                                    int top_features) {
  PatternKnowledge out;
  out.provenance = "rule-based-summarizer-v1";
  for (int k = 0; k < kNumClasses; ++k) {
    if (!stats.classes[k]) continue;
    const auto& c = *stats.classes[k];
    // Reference: Normal for abnormal levels, pooled abnormal levels for Normal.
    Eigen::RowVectorXd ref_mean = Eigen::RowVectorXd::Zero(c.mean.size());
    Eigen::RowVectorXd ref_var = Eigen::RowVectorXd::Zero(c.mean.size());
    double n = 0;
    std::string ref_name;
    for (int r = 0; r < kNumClasses; ++r) {
      bool use = k == 0 ? r != 0 : r == 0;
      if (!use || !stats.classes[r]) continue;
      const auto& m = *stats.classes[r];
      ref_mean += static_cast<double>(m.count) * m.mean;
      ref_var += static_cast<double>(m.count) * m.variance;
      n += static_cast<double>(m.count);
    }
    if (n == 0) {
      out.summaries[k] = "No reference level is available for comparison.";
      continue;
    }
    ref_mean /= n;
    ref_var /= n;
    ref_name = k == 0 ? "the other levels" : "Normal periods";
    std::vector<int> order(static_cast<std::size_t>(c.mean.size()));
    std::iota(order.begin(), order.end(), 0);
    auto effect = [&](int f) {
      double pooled = std::sqrt(0.5 * (c.variance[f] + ref_var[f])) + 1e-9;
      return (c.mean[f] - ref_mean[f]) / pooled;
    };
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return std::abs(effect(a)) > std::abs(effect(b)); });
    std::string text = "Compared with " + ref_name + ":";
    const int n_top = std::min<int>(top_features, static_cast<int>(order.size()));
    for (int i = 0; i < n_top; ++i) {
      int f = order[i];
      text += fmt::format(" {} {} ({} vs {}){}", effect(f) >= 0 ? "higher" : "lower", headers[f], fixed2(c.mean[f]),
                          fixed2(ref_mean[f]), i + 1 < n_top ? ";" : ".");
    }
    out.summaries[k] = text;
  }
  return out;
}

PatternLibrary load_pattern_library(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  PatternLibrary lib;
  if (!j.is_object()) throw ConfigError(fmt::format("{}: expected an object keyed by participant", path.string()));
  for (const auto& [user, k] : j.items()) lib[user] = PatternKnowledge::from_json(k);
  return lib;
}

// ---- prompt builder ----

PromptBuilder::PromptBuilder(const Dataset& dataset, std::vector<std::size_t> history, FeaturePipeline pipeline,
                             RenameSchema rename, PromptOptions options, PatternLibrary patterns)
    : dataset_(dataset),
      history_(std::move(history)),
      pipeline_(std::move(pipeline)),
      rename_(std::move(rename)),
      options_(options),
      patterns_(std::move(patterns)) {
  if (options_.k < 1) throw ConfigError("few-shot k must be at least 1");
  headers_ = rename_.columns(pipeline_.config());
  std::sort(history_.begin(), history_.end());
  history_.erase(std::unique(history_.begin(), history_.end()), history_.end());
  if (history_.empty()) throw ValidationError("prompt history (training split) is empty");
  population_ = compute_class_statistics(dataset_, history_, pipeline_, StatsLevel::kPopulation);
  std::set<std::string> users;
  for (auto i : history_) users.insert(dataset_[i].participant_id());
  for (const auto& u : users) {
    auto stats = compute_class_statistics(dataset_, history_, pipeline_, StatsLevel::kIndividual, u);
    if (!patterns_.count(u)) patterns_[u] = summarize_patterns(stats, headers_);
    individual_.emplace(u, std::move(stats));
  }
  if (!patterns_.count("*")) patterns_["*"] = summarize_patterns(population_, headers_);
}

std::vector<std::size_t> PromptBuilder::eligible_history(const SampleWindow& target) const {
  std::vector<std::size_t> out;
  for (auto i : history_) {
    const auto& w = dataset_[i];
    if (w.participant_id() == target.participant_id() && w.start_day() != target.start_day()) out.push_back(i);
  }
  std::stable_sort(out.begin(), out.end(),
                   [&](std::size_t a, std::size_t b) { return dataset_[a].start_day() < dataset_[b].start_day(); });
  return out;
}

std::vector<std::size_t> PromptBuilder::select_recent(const SampleWindow& target, int k) const {
  auto h = eligible_history(target);
  if (static_cast<int>(h.size()) > k) h.erase(h.begin(), h.end() - k);
  return h;
}

Eigen::RowVectorXd PromptBuilder::similarity_vector(const SampleWindow& window, int num_days) const {
  return sequential_flatten(pipeline_.sequence(window, num_days));
}

std::vector<std::size_t> PromptBuilder::select_similar(const SampleWindow& target, int k, int num_days) const {
  auto h = eligible_history(target);
  const Eigen::RowVectorXd q = similarity_vector(target, num_days);
  std::vector<std::pair<double, std::size_t>> scored;
  for (auto i : h) scored.emplace_back(cosine(q, similarity_vector(dataset_[i], num_days)), i);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out;
  for (int j = 0; j < k && j < static_cast<int>(scored.size()); ++j) out.push_back(scored[j].second);
  return out;
}

std::string PromptBuilder::examples_block(const std::vector<std::size_t>& chosen, int num_days) const {
  std::string out = "Earlier periods from this participant and the level reported at the end of each:";
  for (std::size_t j = 0; j < chosen.size(); ++j) {
    const auto& w = dataset_[chosen[j]];
    out += fmt::format("\n\n### Example {}\n{}\nLevel: {}", j + 1, serialize_window(w, pipeline_, rename_, num_days),
                       level_word(w.label()));
  }
  return out;
}

const PatternKnowledge& PromptBuilder::patterns_for(const std::string& user) const {
  auto it = patterns_.find(user);
  return it != patterns_.end() ? it->second : patterns_.at("*");
}

PromptBundle PromptBuilder::build(Strategy strategy, const SampleWindow& target, int num_days) const {
  PromptBundle b;
  const bool weekly = pipeline_.config().granularity == Granularity::kWeekly;
  b.system_instruction = fmt::format(
      "You are assisting with mental health screening research. The table below summarizes a participant's "
      "passively sensed smartphone behavior for the first {} days of a 14-day period{}. Forecast the PHQ-4 severity "
      "level the participant will report at the end of the period: Normal (0-3), Mild (4-6), Moderate (7-9) or "
      "Severe (10-12).",
      num_days, weekly ? ", averaged by week" : "");
  b.behavior_table = serialize_window(target, pipeline_, rename_, num_days);
  b.answer_format_instruction = "Answer with exactly one word: Normal, Mild, Moderate, or Severe.";
  if (options_.user_aware) b.participant = target.participant_id();

  const auto& user = target.participant_id();
  switch (strategy) {
    case Strategy::kZeroShot:
      break;
    case Strategy::kFewShotRecency:
    case Strategy::kFewShotSimilarity: {
      auto chosen = strategy == Strategy::kFewShotRecency ? select_recent(target, options_.k)
                                                          : select_similar(target, options_.k, num_days);
      if (chosen.empty()) {
        spdlog::warn("no earlier periods for participant {}; {} falls back to zero_shot", user, strategy_name(strategy));
      } else {
        b.context_block = examples_block(chosen, num_days);
      }
      break;
    }
    case Strategy::kStatisticalIndividual: {
      auto it = individual_.find(user);
      if (it == individual_.end()) {
        spdlog::warn("no earlier periods for participant {}; statistical_individual falls back to zero_shot", user);
      } else {
        b.context_block = it->second.render(headers_);
      }
      break;
    }
    case Strategy::kStatisticalPopulation:
      b.context_block = population_.render(headers_);
      break;
    case Strategy::kPattern: {
      const auto& k = patterns_for(user);
      std::string text = "Behavioral patterns that distinguish each level:";
      for (int c = 0; c < kNumClasses; ++c) {
        if (!k.summaries[c].empty()) text += fmt::format("\n- {}: {}", level_word(severity_from_rank(c)), k.summaries[c]);
      }
      b.context_block = text;
      break;
    }
  }
  return b;
}

// ---- instruction-tuning corpus ----

nlohmann::json PeftRecord::to_json() const {
  return {{"id", id}, {"user", user}, {"prompt", prompt}, {"completion", completion}};
}

std::vector<PeftRecord> build_peft_corpus(const PromptBuilder& builder, std::span<const std::size_t> windows,
                                          Strategy strategy, int num_days) {
  std::vector<PeftRecord> out;
  out.reserve(windows.size());
  for (auto i : windows) {
    const auto& w = builder.dataset()[i];
    out.push_back({window_id(w), w.participant_id(), builder.build(strategy, w, num_days).render(), level_word(w.label())});
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, std::span<const PeftRecord> records) {
  std::string text;
  for (const auto& r : records) text += r.to_json().dump() + "\n";
  write_text_file_atomic(path, text);
}

}  // namespace mhf
