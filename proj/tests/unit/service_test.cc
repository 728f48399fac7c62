#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "agest/image.hpp"
#include "agest/pipeline.hpp"
#include "agest/service.hpp"
#include "fixtures.hpp"

namespace agest {
namespace {

using nlohmann::json;

std::string png_body(std::uint64_t seed) {
  const auto bytes = encode_png(testing::noise_image(24, 24, seed));
  return {bytes.begin(), bytes.end()};
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_toy_model(dir_.path().string());
    model_ = load_model(dir_.file("model.agew"), dir_.file("model.spec"));
  }

  std::unique_ptr<Service> start(std::shared_ptr<const Model> model, const std::string& journal = "") {
    ServiceOptions o;
    o.port = 0;
    o.batch_workers = 2;
    o.journal_path = journal;
    auto s = std::make_unique<Service>(std::move(model), o);
    port_ = s->start();
    return s;
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30, 0);
    return c;
  }

  json wait_done(const std::string& job_id) {
    auto c = client();
    for (int i = 0; i < 600; ++i) {
      auto res = c.Get("/v1/batch/" + job_id);
      EXPECT_TRUE(res);
      auto j = json::parse(res->body);
      if (j.at("status") == "done" || j.at("status") == "failed") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ADD_FAILURE() << "job never finished";
    return {};
  }

  std::string submit_uploads(std::size_t n, std::size_t corrupt = SIZE_MAX) {
    httplib::MultipartFormDataItems items;
    for (std::size_t i = 0; i < n; ++i) {
      std::string body = png_body(i);
      if (i == corrupt) body = "not an image";
      items.push_back({"file" + std::to_string(i), body, "img_" + std::to_string(i) + ".png", "image/png"});
    }
    auto res = client().Post("/v1/batch", items);
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 202);
    return json::parse(res->body).at("job_id").get<std::string>();
  }

  testing::TempDir dir_;
  std::shared_ptr<const Model> model_;
  int port_ = 0;
};

TEST_F(ServiceTest, Health) {
  auto s = start(model_);
  auto res = client().Get("/v1/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  EXPECT_EQ(j.at("schema_version"), 1);
  EXPECT_TRUE(j.at("model_loaded").get<bool>());
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST_F(ServiceTest, EstimateReturnsValidPosterior) {
  auto s = start(model_);
  auto res = client().Post("/v1/estimate", png_body(1), "image/png");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto j = json::parse(res->body);
  EXPECT_EQ(j.at("schema_version"), 1);
  const auto p = j.at("posterior").get<std::vector<double>>();
  ASSERT_EQ(p.size(), 101u);
  double sum = 0;
  for (double v : p) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    sum += v;
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
  EXPECT_GE(j.at("expected_age").get<double>(), 0.0);
  EXPECT_LE(j.at("expected_age").get<double>(), 100.0);
  EXPECT_TRUE(j.contains("p_minor"));
  EXPECT_TRUE(j.contains("confidence"));
}

TEST_F(ServiceTest, EstimateMultipart) {
  auto s = start(model_);
  httplib::MultipartFormDataItems items{{"image", png_body(2), "face.png", "image/png"}};
  auto res = client().Post("/v1/estimate", items);
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body).at("path"), "face.png");
}

TEST_F(ServiceTest, UndecodableImageIs400) {
  auto s = start(model_);
  for (const std::string body : {std::string("definitely not an image"), std::string()}) {
    auto res = client().Post("/v1/estimate", body, "application/octet-stream");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400);
    const auto j = json::parse(res->body);
    EXPECT_EQ(j.at("code"), "undecodable_image");
    EXPECT_TRUE(j.contains("message"));
    EXPECT_EQ(j.at("schema_version"), 1);
  }
}

TEST_F(ServiceTest, UnknownJobIs404) {
  auto s = start(model_);
  for (const char* path : {"/v1/batch/job-nope", "/v1/batch/job-nope/report", "/v1/posterior/job-nope/0"}) {
    auto res = client().Get(path);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 404) << path;
    EXPECT_EQ(json::parse(res->body).at("code"), "not_found");
  }
}

TEST_F(ServiceTest, NoModelIs503) {
  auto s = start(nullptr);
  auto res = client().Post("/v1/estimate", png_body(1), "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 503);
  EXPECT_EQ(json::parse(res->body).at("code"), "model_not_loaded");
  auto batch = client().Post("/v1/batch", R"({"paths":["a.png"]})", "application/json");
  EXPECT_EQ(batch->status, 503);
}

TEST_F(ServiceTest, BatchOfFiveReachesDone) {
  auto s = start(model_);
  const auto id = submit_uploads(5);
  const auto j = wait_done(id);
  EXPECT_EQ(j.at("status"), "done");
  EXPECT_EQ(j.at("progress").at("completed"), 5);
  EXPECT_EQ(j.at("progress").at("total"), 5);
  EXPECT_EQ(j.at("schema_version"), 1);
  ASSERT_EQ(j.at("results").size(), 5u);
  for (const auto& r : j.at("results")) {
    EXPECT_EQ(r.at("state"), "ok");
    EXPECT_EQ(r.at("review_state"), "unreviewed");
    EXPECT_EQ(r.at("result").at("posterior").size(), 101u);
  }
}

TEST_F(ServiceTest, BatchWithCorruptItem) {
  auto s = start(model_);
  const auto j = wait_done(submit_uploads(4, 2));
  EXPECT_EQ(j.at("status"), "done");
  EXPECT_EQ(j.at("results").at(2).at("state"), "error");
  auto report = client().Get("/v1/batch/" + j.at("job_id").get<std::string>() + "/report");
  const auto rj = json::parse(report->body);
  EXPECT_EQ(rj.at("succeeded"), 3);
  EXPECT_EQ(rj.at("failed"), 1);
}

TEST_F(ServiceTest, BatchFromPathsWithAgesReportsMetrics) {
  auto s = start(model_);
  json items = json::array();
  for (int i = 0; i < 3; ++i) {
    const auto path = dir_.file("p" + std::to_string(i) + ".png");
    testing::write_bytes(path, encode_png(testing::noise_image(20, 20, i)));
    items.push_back({{"path", path}, {"real_age", 15 + i}});
  }
  auto res = client().Post("/v1/batch", json{{"items", items}}.dump(), "application/json");
  ASSERT_EQ(res->status, 202);
  const auto j = wait_done(json::parse(res->body).at("job_id"));
  EXPECT_EQ(j.at("results").at(1).at("real_age"), 16);
  EXPECT_TRUE(j.at("results").at(0).at("result").at("file_size").is_number());
  auto report = json::parse(client().Get("/v1/batch/" + j.at("job_id").get<std::string>() + "/report")->body);
  EXPECT_EQ(report.at("metrics").at("overall").at("count"), 3);
}

TEST_F(ServiceTest, BatchRejectsEmptyAndMalformed) {
  auto s = start(model_);
  EXPECT_EQ(client().Post("/v1/batch", R"({"paths":[]})", "application/json")->status, 400);
  EXPECT_EQ(client().Post("/v1/batch", "{oops", "application/json")->status, 400);
  EXPECT_EQ(client().Post("/v1/batch", R"({"what":1})", "application/json")->status, 400);
}

TEST_F(ServiceTest, ReviewAndPosteriorDocument) {
  auto s = start(model_);
  const auto id = submit_uploads(2);
  wait_done(id);
  auto c = client();
  auto put = c.Put("/v1/batch/" + id + "/items/1/review", R"({"review_state":"flagged_minor","reviewer_note":"check"})",
                   "application/json");
  ASSERT_EQ(put->status, 200);
  EXPECT_EQ(c.Put("/v1/batch/" + id + "/items/1/review", R"({"review_state":"bogus"})", "application/json")->status,
            400);
  EXPECT_EQ(c.Put("/v1/batch/" + id + "/items/9/review", R"({"review_state":"flagged_minor"})", "application/json")->status,
            404);
  const auto j = json::parse(c.Get("/v1/batch/" + id)->body);
  EXPECT_EQ(j.at("results").at(1).at("review_state"), "flagged_minor");
  EXPECT_EQ(j.at("results").at(1).at("reviewer_note"), "check");

  auto svg = c.Get("/v1/posterior/" + id + "/0");
  ASSERT_EQ(svg->status, 200);
  EXPECT_EQ(svg->get_header_value("Content-Type"), "image/svg+xml");
  EXPECT_NE(svg->body.find("data-role=\"predicted\""), std::string::npos);
  auto csv = c.Get("/v1/posterior/" + id + "/0?format=csv");
  EXPECT_EQ(csv->body.substr(0, 14), "age,prob,role\n");
  EXPECT_EQ(std::count(csv->body.begin(), csv->body.end(), '\n'), 102);
}

TEST_F(ServiceTest, JournalReplaysJobsAndReviews) {
  const auto journal = dir_.file("journal.jsonl");
  std::string id;
  {
    auto s = start(model_, journal);
    id = submit_uploads(3);
    wait_done(id);
    client().Put("/v1/batch/" + id + "/items/0/review", R"({"review_state":"confirmed_adult","reviewer_note":"ok"})",
                 "application/json");
    s->stop();
  }
  // A job that was created but never finished.
  {
    std::ofstream out(journal, std::ios::app);
    out << R"({"event":"job_created","job_id":"job-crashed","ts":"2024-01-01T00:00:00Z","inputs":[{"path":"x.png"}]})"
        << "\n{torn";
  }
  auto s = start(model_, journal);
  const auto j = json::parse(client().Get("/v1/batch/" + id)->body);
  EXPECT_EQ(j.at("status"), "done");
  EXPECT_EQ(j.at("progress").at("completed"), 3);
  EXPECT_EQ(j.at("results").at(0).at("review_state"), "confirmed_adult");
  EXPECT_EQ(j.at("results").at(2).at("result").at("posterior").size(), 101u);
  const auto crashed = json::parse(client().Get("/v1/batch/job-crashed")->body);
  EXPECT_EQ(crashed.at("status"), "failed");
  EXPECT_NE(crashed.at("message").get<std::string>().find("interrupted"), std::string::npos);
}

TEST_F(ServiceTest, CorsPreflight) {
  auto s = start(model_);
  auto res = client().Options("/v1/estimate");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Methods"), "GET, POST, PUT, OPTIONS");
}

}  // namespace
}  // namespace agest
