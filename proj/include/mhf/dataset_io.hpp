#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mhf/core.hpp"
#include "mhf/schema.hpp"

namespace mhf {

inline constexpr int kDatasetSchemaVersion = 1;

// A window dropped while importing, with the reason it was rejected.
struct SkippedWindow {
  std::string participant_id;
  int start_day = 0;
  std::string reason;
};

struct ImportResult {
  Dataset dataset;
  std::vector<SkippedWindow> skipped;
};

// CSV columns: participant_id, start_day, day_offset, the 35 features in
// schema order, phq4_score. Values use shortest round-trip formatting.
std::string dataset_to_csv(const Dataset& dataset, const FeatureSchema& schema = FeatureSchema::canonical());

// Strict parse: any incomplete window is an error.
Dataset dataset_from_csv(const std::string& text, Provenance provenance,
                         const FeatureSchema& schema = FeatureSchema::canonical());

// Lenient parse: incomplete windows are reported and dropped; schema problems
// still raise ImportError with row numbers.
ImportResult import_csv_text(const std::string& text, Provenance provenance,
                             const FeatureSchema& schema = FeatureSchema::canonical());

std::filesystem::path manifest_path(const std::filesystem::path& csv_path);

// Writes the CSV and its sidecar manifest {schema_version, provenance, feature_schema}.
void write_dataset(const Dataset& dataset, const std::filesystem::path& csv_path,
                   const FeatureSchema& schema = FeatureSchema::canonical());

// Reads a CSV written by write_dataset; uses the manifest when present.
Dataset read_dataset(const std::filesystem::path& csv_path);

// Imports an externally produced CSV in the core schema. Provenance is
// ces-import unless a manifest says otherwise.
ImportResult import_ces_csv(const std::filesystem::path& csv_path);

// SHA-256 hex digest of the canonical CSV rendering of the chosen windows.
std::string dataset_fingerprint(const Dataset& dataset);
std::string dataset_fingerprint(const Dataset& dataset, std::span<const std::size_t> indices);

std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary file and rename so readers never see partial files.
void write_text_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace mhf
