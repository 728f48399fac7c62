#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "agest/image.hpp"

namespace agest {

enum class Gender { female, male, unknown };

std::string_view to_string(Gender g);
Gender gender_from_string(std::string_view s);  // "", "unknown" -> unknown

struct ImageRecord {
  std::string subject_id;  // normalized lower-case "firstname_lastname"
  int age = 0;             // [0,100]
  std::string path;
  Gender gender = Gender::unknown;
  std::string source;
  std::optional<CropSpec> crop;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct RejectEntry {
  std::string path;
  std::string reason;
  friend bool operator==(const RejectEntry&, const RejectEntry&) = default;
};

struct DatasetManifest {
  std::string name;
  std::vector<ImageRecord> records;
  std::vector<std::string> provenance;
  std::vector<RejectEntry> rejects;  // unparseable files, dropped subjects

  std::size_t size() const noexcept { return records.size(); }
};

struct FileInfo {
  std::uint64_t size_bytes = 0;
  std::string modified_utc;  // ISO-8601, e.g. 2024-05-01T12:00:00Z
};

FileInfo stat_file(const std::string& path);

// Result of parsing one "firstname_lastname_age.ext" filename.
struct ParsedName {
  std::string subject_id;
  int age = 0;
};

// Splits the stem on '_' and takes the final token as the age (1-3 digits,
// at most 100). Returns the reject reason on failure.
std::variant<ParsedName, std::string> parse_filename(const std::string& filename);

// One record per parseable regular file, sorted by file name. Files that do
// not parse land in `rejects`. File size and mtime go into metadata.
DatasetManifest ingest_directory(const std::string& dir, const std::string& source_tag);

struct KeepFirstSorted {};
struct RandomSeeded {
  std::uint64_t seed = 0;
};
using DedupPolicy = std::variant<KeepFirstSorted, RandomSeeded>;

// Exactly one record per subject. With max_age, candidates older than
// max_age are discarded first; subjects left with none are dropped and
// listed in rejects. Output is sorted by subject_id.
DatasetManifest dedup(const DatasetManifest& manifest, const DedupPolicy& policy = KeepFirstSorted{},
                      std::optional<int> max_age = std::nullopt);

enum class CollisionPolicy { error, prefer_a, prefer_b };

// Union of two deduplicated manifests, sorted by subject_id.
DatasetManifest merge(const DatasetManifest& a, const DatasetManifest& b,
                      CollisionPolicy collision = CollisionPolicy::error);

// Occupied bins only, ascending. A bin is keyed by its lower edge.
std::vector<std::pair<int, std::size_t>> age_histogram(const DatasetManifest& manifest, int bin_width = 1);

// Mean of the normalized age entropy (over 0..max_age) and the normalized
// gender entropy (female/male only). The gender term is dropped when no
// record has a known gender.
double diversity_score(const DatasetManifest& manifest);

// Manifest CSV:
// subject_id,file_path,age,gender,source,crop_x,crop_y,crop_w,crop_h,rotation_deg,notes
// `notes` carries metadata as "key=value;key=value".
inline constexpr const char* kManifestHeader =
    "subject_id,file_path,age,gender,source,crop_x,crop_y,crop_w,crop_h,rotation_deg,notes";
inline constexpr const char* kRejectsHeader = "file_path,reason";

std::string manifest_to_csv(const DatasetManifest& manifest);
DatasetManifest manifest_from_csv(std::istream& in, const std::string& name = "manifest");
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

std::string rejects_to_csv(const std::vector<RejectEntry>& rejects);
void write_rejects(const std::vector<RejectEntry>& rejects, const std::string& path);

}  // namespace agest
