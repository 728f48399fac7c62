#include "agest/dataset.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "agest/csv.hpp"
#include "agest/error.hpp"

namespace fs = std::filesystem;

namespace agest {

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::female: return "female";
    case Gender::male: return "male";
    case Gender::unknown: break;
  }
  return "unknown";
}

Gender gender_from_string(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "female" || lower == "f") return Gender::female;
  if (lower == "male" || lower == "m") return Gender::male;
  if (lower.empty() || lower == "unknown" || lower == "u") return Gender::unknown;
  throw FormatError("unknown gender '" + std::string(s) + "'");
}

FileInfo stat_file(const std::string& path) {
  struct stat st {};
  if (::stat(path.c_str(), &st) != 0) throw Error("cannot stat '" + path + "'");
  std::tm tm{};
  const std::time_t t = st.st_mtime;
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return {static_cast<std::uint64_t>(st.st_size), buf};
}

std::variant<ParsedName, std::string> parse_filename(const std::string& filename) {
  std::string stem = fs::path(filename).filename().string();
  if (const auto dot = stem.rfind('.'); dot != std::string::npos && dot != 0) stem.resize(dot);

  const auto us = stem.rfind('_');
  if (us == std::string::npos) return std::string("no age token");
  const std::string age_tok = stem.substr(us + 1);
  std::string subject = stem.substr(0, us);

  const bool digits = !age_tok.empty() && std::all_of(age_tok.begin(), age_tok.end(), [](unsigned char c) {
    return std::isdigit(c);
  });
  if (!digits || age_tok.size() > 3) return std::string("no age token");
  const int age = std::stoi(age_tok);
  if (age > 100) return std::string("age out of range");
  std::transform(subject.begin(), subject.end(), subject.begin(), [](unsigned char c) { return std::tolower(c); });
  if (subject.empty()) return std::string("empty subject name");
  return ParsedName{std::move(subject), age};
}

DatasetManifest ingest_directory(const std::string& dir, const std::string& source_tag) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error("'" + dir + "' is not a readable directory");

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });

  DatasetManifest m;
  m.name = source_tag;
  m.provenance = {source_tag};
  for (const auto& path : files) {
    auto parsed = parse_filename(path.filename().string());
    if (auto* reason = std::get_if<std::string>(&parsed)) {
      m.rejects.push_back({path.string(), *reason});
      continue;
    }
    auto& name = std::get<ParsedName>(parsed);
    ImageRecord rec;
    rec.subject_id = std::move(name.subject_id);
    rec.age = name.age;
    rec.path = path.string();
    rec.source = source_tag;
    const auto info = stat_file(rec.path);
    rec.metadata["file_size"] = std::to_string(info.size_bytes);
    rec.metadata["modified_ts"] = info.modified_utc;
    m.records.push_back(std::move(rec));
  }
  return m;
}

namespace {

std::string sort_key(const ImageRecord& r) { return fs::path(r.path).filename().string(); }

bool record_less(const ImageRecord& a, const ImageRecord& b) {
  const auto ka = sort_key(a), kb = sort_key(b);
  return ka != kb ? ka < kb : a.path < b.path;
}

void require_unique(const DatasetManifest& m) {
  std::set<std::string_view> seen;
  for (const auto& r : m.records) {
    if (!seen.insert(r.subject_id).second) {
      throw std::invalid_argument("manifest '" + m.name + "' is not deduplicated (subject '" + r.subject_id +
                                  "' appears twice)");
    }
  }
}

}  // namespace

DatasetManifest dedup(const DatasetManifest& manifest, const DedupPolicy& policy, std::optional<int> max_age) {
  std::map<std::string, std::vector<const ImageRecord*>> by_subject;
  for (const auto& r : manifest.records) by_subject[r.subject_id].push_back(&r);

  DatasetManifest out;
  out.name = manifest.name;
  out.provenance = manifest.provenance;
  out.rejects = manifest.rejects;

  std::mt19937_64 rng(std::holds_alternative<RandomSeeded>(policy) ? std::get<RandomSeeded>(policy).seed : 0);
  for (auto& [subject, all] : by_subject) {
    std::vector<const ImageRecord*> candidates;
    for (const auto* r : all) {
      if (!max_age || r->age <= *max_age) candidates.push_back(r);
    }
    if (candidates.empty()) {
      out.rejects.push_back({subject, fmt::format("no record with age <= {}", *max_age)});
      continue;
    }
    std::sort(candidates.begin(), candidates.end(), [](auto* a, auto* b) { return record_less(*a, *b); });
    std::size_t pick = 0;
    if (std::holds_alternative<RandomSeeded>(policy)) pick = static_cast<std::size_t>(rng() % candidates.size());
    out.records.push_back(*candidates[pick]);
  }
  return out;
}

DatasetManifest merge(const DatasetManifest& a, const DatasetManifest& b, CollisionPolicy collision) {
  require_unique(a);
  require_unique(b);

  std::map<std::string, ImageRecord> merged;
  for (const auto& r : a.records) merged.emplace(r.subject_id, r);
  std::vector<std::string> collisions;
  for (const auto& r : b.records) {
    auto [it, inserted] = merged.emplace(r.subject_id, r);
    if (inserted) continue;
    collisions.push_back(r.subject_id);
    if (collision == CollisionPolicy::prefer_b) it->second = r;
  }
  if (collision == CollisionPolicy::error && !collisions.empty()) {
    std::string ids;
    for (const auto& id : collisions) ids += (ids.empty() ? "" : ", ") + id;
    throw Error("merge: subject collision: " + ids);
  }

  DatasetManifest out;
  out.name = a.name.empty() ? b.name : b.name.empty() ? a.name : a.name + "+" + b.name;
  out.provenance = a.provenance;
  out.provenance.insert(out.provenance.end(), b.provenance.begin(), b.provenance.end());
  out.rejects = a.rejects;
  out.rejects.insert(out.rejects.end(), b.rejects.begin(), b.rejects.end());
  for (auto& [id, r] : merged) out.records.push_back(std::move(r));
  return out;
}

std::vector<std::pair<int, std::size_t>> age_histogram(const DatasetManifest& manifest, int bin_width) {
  if (bin_width <= 0) throw std::invalid_argument("age_histogram: bin width must be positive");
  std::map<int, std::size_t> bins;
  for (const auto& r : manifest.records) ++bins[(r.age / bin_width) * bin_width];
  return {bins.begin(), bins.end()};
}

namespace {

double normalized_entropy(const std::vector<std::size_t>& counts, std::size_t classes) {
  if (classes <= 1) return 0.0;
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  if (total == 0.0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(classes));
}

}  // namespace

double diversity_score(const DatasetManifest& manifest) {
  if (manifest.records.empty()) throw std::invalid_argument("diversity_score: empty manifest");
  int max_age = 0;
  for (const auto& r : manifest.records) max_age = std::max(max_age, r.age);
  std::vector<std::size_t> ages(static_cast<std::size_t>(max_age) + 1, 0);
  std::vector<std::size_t> genders(2, 0);
  for (const auto& r : manifest.records) {
    ++ages[static_cast<std::size_t>(r.age)];
    if (r.gender == Gender::female) ++genders[0];
    if (r.gender == Gender::male) ++genders[1];
  }
  const double age_term = normalized_entropy(ages, ages.size());
  if (genders[0] + genders[1] == 0) return age_term;
  return (age_term + normalized_entropy(genders, 2)) / 2.0;
}

// --- CSV ---------------------------------------------------------------------

namespace {

std::string encode_notes(const std::map<std::string, std::string>& md) {
  std::string out;
  for (const auto& [k, v] : md) out += (out.empty() ? "" : ";") + k + "=" + v;
  return out;
}

std::map<std::string, std::string> decode_notes(const std::string& s) {
  std::map<std::string, std::string> md;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      md["note"] = item;
    } else {
      md[item.substr(0, eq)] = item.substr(eq + 1);
    }
  }
  return md;
}

long long parse_int(const std::string& s, std::size_t line, const char* column) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (s.empty() || pos != s.size()) throw FormatError(fmt::format("manifest line {}: bad {} '{}'", line, column, s));
  return v;
}

}  // namespace

std::string manifest_to_csv(const DatasetManifest& m) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : m.records) {
    std::vector<std::string> f{r.subject_id, r.path, std::to_string(r.age),
                               r.gender == Gender::unknown ? "" : std::string(to_string(r.gender)), r.source};
    if (r.crop) {
      f.push_back(std::to_string(r.crop->x));
      f.push_back(std::to_string(r.crop->y));
      f.push_back(std::to_string(r.crop->w));
      f.push_back(std::to_string(r.crop->h));
      f.push_back(fmt::format("{}", r.crop->rotation_deg));
    } else {
      f.insert(f.end(), 5, "");
    }
    f.push_back(encode_notes(r.metadata));
    out += csv::join(f) + "\n";
  }
  return out;
}

DatasetManifest manifest_from_csv(std::istream& in, const std::string& name) {
  const auto rows = csv::read(in);
  if (rows.empty() || csv::join(rows[0].fields) != kManifestHeader) {
    throw FormatError(std::string("manifest: expected header '") + kManifestHeader + "'");
  }
  DatasetManifest m;
  m.name = name;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.fields.size() != 11) {
      throw FormatError(fmt::format("manifest line {}: expected 11 fields, got {}", row.line, row.fields.size()));
    }
    const auto& f = row.fields;
    ImageRecord r;
    r.subject_id = f[0];
    r.path = f[1];
    if (r.subject_id.empty()) throw FormatError(fmt::format("manifest line {}: empty subject_id", row.line));
    const auto age = parse_int(f[2], row.line, "age");
    if (age < 0 || age > 100) throw FormatError(fmt::format("manifest line {}: age {} outside [0,100]", row.line, age));
    r.age = static_cast<int>(age);
    try {
      r.gender = gender_from_string(f[3]);
    } catch (const FormatError& e) {
      throw FormatError(fmt::format("manifest line {}: {}", row.line, e.what()));
    }
    r.source = f[4];
    const bool any_crop = std::any_of(f.begin() + 5, f.begin() + 10, [](const auto& s) { return !s.empty(); });
    if (any_crop) {
      CropSpec c;
      c.x = static_cast<std::size_t>(parse_int(f[5], row.line, "crop_x"));
      c.y = static_cast<std::size_t>(parse_int(f[6], row.line, "crop_y"));
      c.w = static_cast<std::size_t>(parse_int(f[7], row.line, "crop_w"));
      c.h = static_cast<std::size_t>(parse_int(f[8], row.line, "crop_h"));
      if (!f[9].empty()) {
        try {
          c.rotation_deg = std::stod(f[9]);
        } catch (const std::exception&) {
          throw FormatError(fmt::format("manifest line {}: bad rotation_deg '{}'", row.line, f[9]));
        }
      }
      r.crop = c;
    }
    r.metadata = decode_notes(f[10]);
    if (!r.source.empty() && std::find(m.provenance.begin(), m.provenance.end(), r.source) == m.provenance.end()) {
      m.provenance.push_back(r.source);
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open manifest '" + path + "'");
  return manifest_from_csv(in, fs::path(path).stem().string());
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest '" + path + "'");
  out << manifest_to_csv(manifest);
}

std::string rejects_to_csv(const std::vector<RejectEntry>& rejects) {
  std::string out = std::string(kRejectsHeader) + "\n";
  for (const auto& r : rejects) out += csv::join({r.path, r.reason}) + "\n";
  return out;
}

void write_rejects(const std::vector<RejectEntry>& rejects, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write rejects '" + path + "'");
  out << rejects_to_csv(rejects);
}

}  // namespace agest
