#include "mhf/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "mhf/hash.hpp"

namespace mhf {

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

void append_window_rows(std::string& out, const SampleWindow& w) {
  for (int t = 0; t < kWindowDays; ++t) {
    out += w.participant_id();
    out += ',';
    out += std::to_string(w.start_day());
    out += ',';
    out += std::to_string(t);
    for (double v : w.days()[t]) {
      out += ',';
      append_double(out, v);
    }
    out += ',';
    out += std::to_string(w.phq4_score());
    out += '\n';
  }
}

std::string csv_header(const FeatureSchema& schema) {
  std::string out = "participant_id,start_day,day_offset";
  for (const auto& f : schema.features()) {
    out += ',';
    out += f.name;
  }
  out += ",phq4_score\n";
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

struct PendingWindow {
  std::string participant_id;
  int start_day = 0;
  std::map<int, FeatureVector> days;
  std::vector<int> scores;
  std::vector<std::string> problems;
};

ImportResult parse_csv(const std::string& text, Provenance provenance, const FeatureSchema& schema,
                       bool strict) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ImportError("empty CSV: missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_fields(line);

  auto column_of = [&](std::string_view name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw ImportError(fmt::format("CSV header is missing column '{}'", name));
  };
  const int col_pid = column_of("participant_id");
  const int col_start = column_of("start_day");
  const int col_offset = column_of("day_offset");
  const int col_score = column_of("phq4_score");
  std::array<int, kNumFeatures> col_feature{};
  for (int f = 0; f < kNumFeatures; ++f) col_feature[f] = column_of(schema[f].name);

  std::vector<PendingWindow> pending;
  std::map<std::pair<std::string, int>, std::size_t> lookup;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ImportError(fmt::format("row {}: expected {} fields, found {}", row, header.size(), fields.size()));
    }
    std::string pid(fields[col_pid]);
    if (pid.empty()) throw ImportError(fmt::format("row {}: empty participant_id", row));
    int start = 0, offset = 0, score = 0;
    if (!parse_number(fields[col_start], start)) {
      throw ImportError(fmt::format("row {}: bad start_day '{}'", row, fields[col_start]));
    }
    if (!parse_number(fields[col_offset], offset)) {
      throw ImportError(fmt::format("row {}: bad day_offset '{}'", row, fields[col_offset]));
    }
    if (!parse_number(fields[col_score], score)) {
      throw ImportError(fmt::format("row {}: bad phq4_score '{}'", row, fields[col_score]));
    }
    FeatureVector values{};
    for (int f = 0; f < kNumFeatures; ++f) {
      if (!parse_number(fields[col_feature[f]], values[f])) {
        throw ImportError(fmt::format("row {}: bad value '{}' for {}", row, fields[col_feature[f]], schema[f].name));
      }
    }

    auto key = std::make_pair(pid, start);
    auto it = lookup.find(key);
    if (it == lookup.end()) {
      it = lookup.emplace(key, pending.size()).first;
      pending.push_back({pid, start, {}, {}, {}});
    }
    auto& w = pending[it->second];
    if (offset < 0 || offset >= kWindowDays) {
      w.problems.push_back(fmt::format("row {}: day_offset {} outside [0, {}]", row, offset, kWindowDays - 1));
    } else if (!w.days.emplace(offset, values).second) {
      w.problems.push_back(fmt::format("row {}: duplicate day_offset {}", row, offset));
    }
    w.scores.push_back(score);
  }

  ImportResult result;
  std::vector<SampleWindow> windows;
  for (auto& w : pending) {
    std::vector<std::string> problems = std::move(w.problems);
    if (w.days.size() != static_cast<std::size_t>(kWindowDays)) {
      problems.push_back(fmt::format("{} of {} days present", w.days.size(), kWindowDays));
    }
    for (int s : w.scores) {
      if (s != w.scores.front()) {
        problems.push_back("phq4_score differs between rows");
        break;
      }
    }
    if (w.scores.front() < 0 || w.scores.front() > kMaxPhq4) {
      problems.push_back(fmt::format("phq4_score {} outside [0, {}]", w.scores.front(), kMaxPhq4));
    }
    if (problems.empty()) {
      for (const auto& [_, day] : w.days) {
        try {
          schema.validate(day);
        } catch (const ValidationError& e) {
          problems.push_back(e.what());
          break;
        }
      }
    }
    if (!problems.empty()) {
      std::string reason = fmt::format("{}", fmt::join(problems, "; "));
      if (strict) {
        throw ImportError(fmt::format("window {}@{} rejected: {}", w.participant_id, w.start_day, reason));
      }
      result.skipped.push_back({w.participant_id, w.start_day, std::move(reason)});
      continue;
    }
    std::vector<FeatureVector> days;
    for (auto& [_, day] : w.days) days.push_back(day);
    windows.emplace_back(w.participant_id, w.start_day, std::move(days), w.scores.front());
  }
  result.dataset = Dataset(std::move(windows), provenance);
  return result;
}

}  // namespace

std::string dataset_to_csv(const Dataset& dataset, const FeatureSchema& schema) {
  std::string out = csv_header(schema);
  out.reserve(out.size() + dataset.size() * kWindowDays * kNumFeatures * 12);
  for (const auto& w : dataset.samples()) {
    if (w.participant_id().find_first_of(",\"\n\r") != std::string::npos) {
      throw ValidationError(fmt::format("participant id '{}' cannot be written to CSV", w.participant_id()));
    }
    append_window_rows(out, w);
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text, Provenance provenance, const FeatureSchema& schema) {
  return parse_csv(text, provenance, schema, /*strict=*/true).dataset;
}

ImportResult import_csv_text(const std::string& text, Provenance provenance, const FeatureSchema& schema) {
  return parse_csv(text, provenance, schema, /*strict=*/false);
}

std::filesystem::path manifest_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".manifest.json");
  return p;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImportError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += fmt::format(".tmp{}", static_cast<long>(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", tmp.string()));
    out << contents;
    if (!out) throw Error(fmt::format("write to {} failed", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& csv_path, const FeatureSchema& schema) {
  write_text_file_atomic(csv_path, dataset_to_csv(dataset, schema));
  nlohmann::json manifest = {{"schema_version", kDatasetSchemaVersion},
                             {"provenance", provenance_name(dataset.provenance())},
                             {"feature_schema", schema.to_json()}};
  write_text_file_atomic(manifest_path(csv_path), manifest.dump(2) + "\n");
}

namespace {

struct ManifestInfo {
  Provenance provenance;
  FeatureSchema schema;
};

std::optional<ManifestInfo> read_manifest(const std::filesystem::path& csv_path) {
  auto mpath = manifest_path(csv_path);
  if (!std::filesystem::exists(mpath)) return std::nullopt;
  try {
    auto j = nlohmann::json::parse(read_text_file(mpath));
    int version = j.at("schema_version").get<int>();
    if (version != kDatasetSchemaVersion) {
      throw ImportError(fmt::format("{}: unsupported schema_version {}", mpath.string(), version));
    }
    return ManifestInfo{provenance_from_name(j.at("provenance").get<std::string>()),
                        FeatureSchema::from_json(j.at("feature_schema"))};
  } catch (const nlohmann::json::exception& e) {
    throw ImportError(fmt::format("{}: {}", mpath.string(), e.what()));
  }
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& csv_path) {
  auto manifest = read_manifest(csv_path);
  auto text = read_text_file(csv_path);
  if (manifest) return dataset_from_csv(text, manifest->provenance, manifest->schema);
  return dataset_from_csv(text, Provenance::kSynthetic);
}

ImportResult import_ces_csv(const std::filesystem::path& csv_path) {
  auto manifest = read_manifest(csv_path);
  auto text = read_text_file(csv_path);
  if (manifest) return import_csv_text(text, manifest->provenance, manifest->schema);
  return import_csv_text(text, Provenance::kCesImport);
}

std::string dataset_fingerprint(const Dataset& dataset) {
  return sha256_hex(std::string(provenance_name(dataset.provenance())) + "\n" + dataset_to_csv(dataset));
}

std::string dataset_fingerprint(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::string out;
  for (auto i : indices) append_window_rows(out, dataset[i]);
  return sha256_hex(out);
}

}  // namespace mhf
