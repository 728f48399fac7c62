#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "agest/dataset.hpp"
#include "agest/error.hpp"
#include "fixtures.hpp"

namespace agest {
namespace {

ImageRecord rec(std::string subject, int age, std::string path, Gender g = Gender::unknown) {
  ImageRecord r;
  r.subject_id = std::move(subject);
  r.age = age;
  r.path = std::move(path);
  r.gender = g;
  r.source = "fixture";
  return r;
}

DatasetManifest numbered(const std::string& prefix, std::size_t n, const std::string& name) {
  DatasetManifest m;
  m.name = name;
  m.provenance = {name};
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = prefix + "_" + std::to_string(i);
    m.records.push_back(rec(id, static_cast<int>(i % 18), "/data/" + name + "/" + id + "_" + std::to_string(i % 18) + ".jpg"));
  }
  return m;
}

// 82 subjects, 1002 images, every subject photographed at least once aged <= 20.
DatasetManifest fgnet_shaped() {
  DatasetManifest m;
  m.name = "fgnet";
  for (int s = 0; s < 82; ++s) {
    const int n = s < 18 ? 13 : 12;
    for (int j = 0; j < n; ++j) {
      const int age = j == 0 ? s % 21 : (j * 5 + s % 7) % 70;
      char name[64];
      std::snprintf(name, sizeof name, "%03dA%02d%c.JPG", s, age, 'a' + j);
      m.records.push_back(rec("subject_" + std::to_string(s), age, std::string("/fgnet/") + name));
    }
  }
  return m;
}

TEST(ParseFilename, Examples) {
  const auto a = std::get<ParsedName>(parse_filename("john_doe_07.jpg"));
  EXPECT_EQ(a.subject_id, "john_doe");
  EXPECT_EQ(a.age, 7);
  const auto b = std::get<ParsedName>(parse_filename("mary_ann_smith_16.png"));
  EXPECT_EQ(b.subject_id, "mary_ann_smith");
  EXPECT_EQ(b.age, 16);
  EXPECT_EQ(std::get<std::string>(parse_filename("IMG_1234.jpg")), "no age token");
}

TEST(ParseFilename, Rejections) {
  EXPECT_EQ(std::get<std::string>(parse_filename("nounderscore.jpg")), "no age token");
  EXPECT_EQ(std::get<std::string>(parse_filename("john_doe_x7.jpg")), "no age token");
  EXPECT_EQ(std::get<std::string>(parse_filename("john_doe_101.jpg")), "age out of range");
  EXPECT_EQ(std::get<std::string>(parse_filename("_12.jpg")), "empty subject name");
  EXPECT_EQ(std::get<ParsedName>(parse_filename("John_Doe_100.jpeg")).subject_id, "john_doe");
  EXPECT_EQ(std::get<ParsedName>(parse_filename("a_b_0.bmp")).age, 0);
}

TEST(Ingest, ValidAndRejected) {
  testing::TempDir dir;
  for (const char* f : {"john_doe_07.jpg", "mary_ann_smith_16.png", "zoe_z_3.bmp", "IMG_1234.jpg"})
    std::ofstream(dir.file(f)) << "x";
  std::filesystem::create_directory(dir.path() / "sub_dir_12");
  const auto m = ingest_directory(dir.path().string(), "fixture");
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.records[0].subject_id, "john_doe");
  EXPECT_EQ(m.records[1].subject_id, "mary_ann_smith");
  EXPECT_EQ(m.records[2].subject_id, "zoe_z");
  EXPECT_EQ(m.records[0].source, "fixture");
  EXPECT_EQ(m.records[0].metadata.at("file_size"), "1");
  EXPECT_EQ(m.records[0].metadata.at("modified_ts").size(), 20u);
  ASSERT_EQ(m.rejects.size(), 1u);
  EXPECT_EQ(m.rejects[0].reason, "no age token");
  EXPECT_NE(m.rejects[0].path.find("IMG_1234.jpg"), std::string::npos);
}

TEST(Ingest, EmptyDirectoryIsEmptyManifest) {
  testing::TempDir dir;
  const auto m = ingest_directory(dir.path().string(), "x");
  EXPECT_EQ(m.size(), 0u);
  EXPECT_TRUE(m.rejects.empty());
  EXPECT_THROW(ingest_directory(dir.file("nope"), "x"), Error);
}

TEST(Dedup, UniqueSubjectsUnchanged) {
  const auto m = numbered("p", 20, "m");
  const auto d = dedup(m);
  ASSERT_EQ(d.size(), 20u);
  auto sorted = m.records;
  std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.subject_id < b.subject_id; });
  EXPECT_EQ(d.records, sorted);
}

TEST(Dedup, KeepFirstSortedPicksFirstFilename) {
  DatasetManifest m;
  m.records = {rec("john_doe", 7, "/x/john_doe_07.jpg"), rec("john_doe", 5, "/x/john_doe_05.jpg")};
  const auto d = dedup(m, KeepFirstSorted{});
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.records[0].age, 5);
}

TEST(Dedup, FgnetShapedRandomSeeded) {
  const auto m = fgnet_shaped();
  ASSERT_EQ(m.size(), 1002u);
  const auto a = dedup(m, RandomSeeded{42}, 20);
  const auto b = dedup(m, RandomSeeded{42}, 20);
  ASSERT_EQ(a.size(), 82u);
  EXPECT_EQ(a.records, b.records);
  std::set<std::string> ids;
  for (const auto& r : a.records) {
    EXPECT_LE(r.age, 20);
    ids.insert(r.subject_id);
  }
  EXPECT_EQ(ids.size(), 82u);
  const auto c = dedup(m, RandomSeeded{43}, 20);
  EXPECT_EQ(c.size(), 82u);
  EXPECT_NE(c.records, a.records);
}

TEST(Dedup, DropsSubjectsWithoutQualifyingAge) {
  DatasetManifest m;
  m.records = {rec("old_one", 40, "/o/old_one_40.jpg"), rec("young_one", 10, "/y/young_one_10.jpg")};
  const auto d = dedup(m, KeepFirstSorted{}, 20);
  ASSERT_EQ(d.size(), 1u);
  ASSERT_EQ(d.rejects.size(), 1u);
  EXPECT_EQ(d.rejects[0].path, "old_one");
  EXPECT_EQ(d.rejects[0].reason, "no record with age <= 20");
}

TEST(Dedup, Idempotent) {
  const auto m = fgnet_shaped();
  for (DedupPolicy p : {DedupPolicy{KeepFirstSorted{}}, DedupPolicy{RandomSeeded{7}}}) {
    const auto once = dedup(m, p);
    const auto twice = dedup(once, p);
    EXPECT_EQ(twice.records, once.records);
    EXPECT_EQ(twice.rejects, once.rejects);
  }
}

TEST(Merge, DisjointManifestsGive327) {
  const auto a = numbered("uk", 245, "uk");
  const auto b = dedup(fgnet_shaped(), RandomSeeded{1}, 20);
  const auto m = merge(a, b);
  EXPECT_EQ(m.size(), 327u);
  EXPECT_EQ(m.name, "uk+fgnet");
  std::size_t total = 0;
  for (const auto& [bin, n] : age_histogram(m)) total += n;
  EXPECT_EQ(total, 327u);
  for (std::size_t i = 1; i < m.records.size(); ++i) EXPECT_LT(m.records[i - 1].subject_id, m.records[i].subject_id);
}

TEST(Merge, EmptyIsIdentity) {
  const auto a = dedup(numbered("p", 12, "a"));
  DatasetManifest empty;
  const auto m = merge(a, empty);
  EXPECT_EQ(m.records, a.records);
  EXPECT_EQ(m.provenance, a.provenance);
}

TEST(Merge, CollisionPolicies) {
  DatasetManifest a, b;
  a.name = "a";
  b.name = "b";
  a.records = {rec("shared", 10, "/a/shared_10.jpg"), rec("only_a", 3, "/a/only_a_3.jpg")};
  b.records = {rec("shared", 12, "/b/shared_12.jpg")};
  EXPECT_EQ(merge(a, b, CollisionPolicy::prefer_a).records[1].age, 10);
  EXPECT_EQ(merge(a, b, CollisionPolicy::prefer_b).records[1].age, 12);
  try {
    merge(a, b, CollisionPolicy::error);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("shared"), std::string::npos);
  }
}

TEST(Merge, RequiresDeduplicatedInputs) {
  DatasetManifest a;
  a.records = {rec("x", 1, "/x_1.jpg"), rec("x", 2, "/x_2.jpg")};
  EXPECT_THROW(merge(a, DatasetManifest{}), std::invalid_argument);
}

TEST(Merge, AssociativeForDisjointInputs) {
  const auto a = numbered("a", 5, "a"), b = numbered("b", 6, "b"), c = numbered("c", 7, "c");
  EXPECT_EQ(merge(merge(a, b), c).records, merge(a, merge(b, c)).records);
}

TEST(Histogram, Examples) {
  EXPECT_TRUE(age_histogram(DatasetManifest{}).empty());
  DatasetManifest m;
  m.records = {rec("a", 5, "a"), rec("b", 5, "b"), rec("c", 7, "c")};
  EXPECT_EQ(age_histogram(m), (std::vector<std::pair<int, std::size_t>>{{5, 2}, {7, 1}}));
  EXPECT_EQ(age_histogram(m, 5), (std::vector<std::pair<int, std::size_t>>{{5, 3}}));
  EXPECT_THROW(age_histogram(m, 0), std::invalid_argument);
}

TEST(Histogram, MassConservedForAnyBinWidth) {
  const auto m = fgnet_shaped();
  for (int w = 1; w <= 30; ++w) {
    std::size_t total = 0;
    for (const auto& [bin, n] : age_histogram(m, w)) {
      EXPECT_EQ(bin % w, 0);
      total += n;
    }
    EXPECT_EQ(total, m.size());
  }
}

TEST(Diversity, Examples) {
  DatasetManifest single;
  single.records = {rec("a", 30, "a", Gender::male), rec("b", 30, "b", Gender::male)};
  EXPECT_EQ(diversity_score(single), 0.0);

  DatasetManifest uniform;
  for (int age = 0; age <= 20; ++age) {
    uniform.records.push_back(rec("f" + std::to_string(age), age, "f", Gender::female));
    uniform.records.push_back(rec("m" + std::to_string(age), age, "m", Gender::male));
  }
  EXPECT_NEAR(diversity_score(uniform), 1.0, 1e-12);

  DatasetManifest two;
  for (int i = 0; i < 5; ++i) {
    two.records.push_back(rec("y" + std::to_string(i), 0, "y"));
    two.records.push_back(rec("o" + std::to_string(i), 20, "o"));
  }
  EXPECT_NEAR(diversity_score(two), std::log(2.0) / std::log(21.0), 1e-12);
  EXPECT_NEAR(diversity_score(two), 0.2276, 1e-4);

  EXPECT_THROW(diversity_score(DatasetManifest{}), std::invalid_argument);
}

TEST(Diversity, ZeroOnlyWhenDegenerate) {
  DatasetManifest m;
  m.records = {rec("a", 30, "a", Gender::female), rec("b", 30, "b", Gender::male)};
  EXPECT_GT(diversity_score(m), 0.0);
  m.records = {rec("a", 30, "a", Gender::female), rec("b", 31, "b", Gender::female)};
  EXPECT_GT(diversity_score(m), 0.0);
}

TEST(Gender, Strings) {
  EXPECT_EQ(gender_from_string("f"), Gender::female);
  EXPECT_EQ(gender_from_string("male"), Gender::male);
  EXPECT_EQ(gender_from_string(""), Gender::unknown);
  EXPECT_EQ(to_string(Gender::female), "female");
  EXPECT_THROW(gender_from_string("robot"), FormatError);
}

TEST(ManifestCsv, RoundTrip) {
  DatasetManifest m = numbered("p", 4, "m");
  m.records[1].crop = CropSpec{1, 2, 30, 40, -7.5};
  m.records[2].gender = Gender::female;
  m.records[3].metadata = {{"colorcast", "sepia"}, {"file_size", "1024"}};
  m.records[0].path = "/odd, path/with \"quotes\"_3.jpg";
  const auto text = manifest_to_csv(m);
  EXPECT_EQ(text.substr(0, text.find('\n')), kManifestHeader);
  std::istringstream in(text);
  const auto back = manifest_from_csv(in, "m");
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(manifest_to_csv(back), text);
}

TEST(ManifestCsv, FileRoundTripAndRejects) {
  testing::TempDir dir;
  auto m = dedup(fgnet_shaped(), RandomSeeded{5}, 20);
  write_manifest(m, dir.file("m.csv"));
  EXPECT_EQ(read_manifest(dir.file("m.csv")).records, m.records);
  write_rejects({{"IMG_1.jpg", "no age token"}}, dir.file("r.csv"));
  EXPECT_EQ(testing::read_text(dir.file("r.csv")), "file_path,reason\nIMG_1.jpg,no age token\n");
}

TEST(ManifestCsv, ErrorsNameLine) {
  std::istringstream bad_age(std::string(kManifestHeader) + "\na_b,/a_b_1.jpg,200,,s,,,,,,\n");
  try {
    manifest_from_csv(bad_age);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  std::istringstream no_header("a_b,/a_b_1.jpg,20,,s,,,,,,\n");
  EXPECT_THROW(manifest_from_csv(no_header), FormatError);
  std::istringstream short_row(std::string(kManifestHeader) + "\na_b,/a_b_1.jpg\n");
  EXPECT_THROW(manifest_from_csv(short_row), FormatError);
}

}  // namespace
}  // namespace agest
