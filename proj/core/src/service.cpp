#include "agest/service.hpp"

#include <httplib.h>

#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "agest/error.hpp"
#include "agest/metrics.hpp"

using nlohmann::json;

namespace agest {

namespace {

constexpr const char* kReviewStates[] = {"unreviewed", "flagged_minor", "confirmed_adult", "needs_escalation"};

bool valid_review_state(const std::string& s) {
  for (const char* k : kReviewStates) {
    if (s == k) return true;
  }
  return false;
}

std::string now_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Review {
  std::string state = "unreviewed";
  std::string note;
};

struct Job {
  std::string id;
  std::string status = "queued";  // queued | running | done | failed
  std::string message;
  std::string created_ts;
  std::vector<BatchInput> inputs;
  std::vector<std::optional<BatchItem>> items;
  std::vector<Review> reviews;
  std::size_t completed = 0;
};

json result_json(const EstimateResult& r) { return json::parse(to_json(r, true)); }

void send_json(httplib::Response& res, int status, json body) {
  body["schema_version"] = kSchemaVersion;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

}  // namespace

struct Service::Impl {
  std::shared_ptr<const Model> model;
  std::optional<Estimator> estimator;
  ServiceOptions options;

  httplib::Server server;
  int port = -1;
  std::thread listen_thread;

  std::mutex mu;  // guards jobs, queue, stopping
  std::map<std::string, std::shared_ptr<Job>> jobs;
  std::deque<std::shared_ptr<Job>> queue;
  std::condition_variable cv;
  bool stopping = false;
  std::thread runner;

  std::mutex journal_mu;
  std::ofstream journal;

  std::mt19937_64 id_rng{std::random_device{}()};

  Impl(std::shared_ptr<const Model> m, ServiceOptions o) : model(std::move(m)), options(std::move(o)) {
    if (model) estimator.emplace(model, options.estimator);
    if (!options.journal_path.empty()) {
      replay_journal();
      const bool needs_newline = journal_ends_mid_line(options.journal_path);
      journal.open(options.journal_path, std::ios::app);
      if (!journal) throw Error("cannot open journal '" + options.journal_path + "'");
      if (needs_newline) journal << '\n';
    }
    routes();
    runner = std::thread([this] { run_jobs(); });
  }

  ~Impl() {
    server.stop();
    if (listen_thread.joinable()) listen_thread.join();
    {
      std::lock_guard lock(mu);
      stopping = true;
    }
    cv.notify_all();
    if (runner.joinable()) runner.join();
  }

  // --- journal ---------------------------------------------------------------

  static bool journal_ends_mid_line(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in || in.tellg() <= 0) return false;
    in.seekg(-1, std::ios::end);
    return in.get() != '\n';
  }

  void log_event(json event) {
    if (!journal.is_open()) return;
    event["ts"] = now_utc();
    std::lock_guard lock(journal_mu);
    journal << event.dump() << '\n';
    journal.flush();
  }

  void replay_journal() {
    std::ifstream in(options.journal_path);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json e;
      try {
        e = json::parse(line);
      } catch (const json::exception&) {
        continue;  // torn last line after a crash
      }
      const std::string kind = e.value("event", "");
      const std::string id = e.value("job_id", "");
      if (kind == "job_created") {
        auto job = std::make_shared<Job>();
        job->id = id;
        job->status = "running";
        job->created_ts = e.value("ts", "");
        for (const auto& in_j : e.at("inputs")) {
          BatchInput bi;
          bi.path = in_j.value("path", "");
          bi.subject_id = in_j.value("subject_id", "");
          if (in_j.contains("real_age")) bi.real_age = in_j.at("real_age").get<int>();
          job->inputs.push_back(std::move(bi));
        }
        job->items.resize(job->inputs.size());
        job->reviews.resize(job->inputs.size());
        jobs[id] = job;
        continue;
      }
      auto it = jobs.find(id);
      if (it == jobs.end()) continue;
      Job& job = *it->second;
      const auto index = e.value("index", std::size_t{0});
      if (kind == "item_done" && index < job.items.size()) {
        BatchItem item;
        item.path = job.inputs[index].path;
        if (e.contains("result")) {
          item.result = estimate_result_from_json(e.at("result").dump());
        } else {
          item.error = e.value("error", "");
        }
        if (!job.items[index]) ++job.completed;
        job.items[index] = std::move(item);
      } else if (kind == "job_finished") {
        job.status = e.value("status", "done");
        job.message = e.value("message", "");
      } else if (kind == "review" && index < job.reviews.size()) {
        job.reviews[index] = {e.value("review_state", "unreviewed"), e.value("reviewer_note", "")};
      }
    }
    for (auto& [id, job] : jobs) {
      if (job->status == "running" || job->status == "queued") {
        job->status = "failed";
        job->message = "interrupted: service restarted before the job finished";
      }
    }
  }

  // --- jobs ------------------------------------------------------------------

  std::string new_job_id() {
    return fmt::format("job-{:016x}", id_rng());
  }

  std::shared_ptr<Job> submit(std::vector<BatchInput> inputs) {
    auto job = std::make_shared<Job>();
    job->created_ts = now_utc();
    job->items.resize(inputs.size());
    job->reviews.resize(inputs.size());
    job->inputs = std::move(inputs);
    json inputs_j = json::array();
    for (const auto& in : job->inputs) {
      json j{{"path", in.path}};
      if (!in.subject_id.empty()) j["subject_id"] = in.subject_id;
      if (in.real_age) j["real_age"] = *in.real_age;
      inputs_j.push_back(std::move(j));
    }
    {
      std::lock_guard lock(mu);
      do job->id = new_job_id();
      while (jobs.contains(job->id));
      jobs[job->id] = job;
      queue.push_back(job);
    }
    log_event({{"event", "job_created"}, {"job_id", job->id}, {"inputs", std::move(inputs_j)}});
    cv.notify_one();
    return job;
  }

  void run_jobs() {
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return stopping || !queue.empty(); });
        if (stopping) return;
        job = queue.front();
        queue.pop_front();
        job->status = "running";
      }
      std::size_t succeeded = 0;
      try {
        run_batch(*estimator, job->inputs, options.batch_workers, [&](std::size_t i, const BatchItem& item) {
          json e{{"event", "item_done"}, {"job_id", job->id}, {"index", i}};
          if (item.ok()) {
            e["result"] = result_json(*item.result);
            ++succeeded;
          } else {
            e["error"] = item.error;
          }
          log_event(std::move(e));
          std::lock_guard lock(mu);
          job->items[i] = item;
          ++job->completed;
        });
      } catch (const std::exception& ex) {
        std::lock_guard lock(mu);
        job->message = ex.what();
      }
      std::string status;
      {
        std::lock_guard lock(mu);
        job->status = succeeded == 0 && !job->inputs.empty() ? "failed" : "done";
        if (job->status == "failed" && job->message.empty()) job->message = "no input could be processed";
        status = job->status;
      }
      log_event({{"event", "job_finished"}, {"job_id", job->id}, {"status", status}, {"message", job->message}});
    }
  }

  // Caller holds `mu`.
  json job_json(const Job& job) const {
    json results = json::array();
    for (std::size_t i = 0; i < job.items.size(); ++i) {
      json r{{"index", i},
             {"path", job.inputs[i].path},
             {"review_state", job.reviews[i].state},
             {"reviewer_note", job.reviews[i].note}};
      if (job.inputs[i].real_age) r["real_age"] = *job.inputs[i].real_age;
      if (!job.items[i]) {
        r["state"] = "pending";
      } else if (job.items[i]->ok()) {
        r["state"] = "ok";
        r["result"] = result_json(*job.items[i]->result);
      } else {
        r["state"] = "error";
        r["error"] = job.items[i]->error;
      }
      results.push_back(std::move(r));
    }
    return {{"job_id", job.id},
            {"status", job.status},
            {"message", job.message},
            {"created_ts", job.created_ts},
            {"progress", {{"completed", job.completed}, {"total", job.inputs.size()}}},
            {"results", std::move(results)}};
  }

  json report_json(const Job& job) const {
    std::size_t ok = 0, failed = 0, flagged = 0;
    double expected_sum = 0.0;
    std::map<std::string, std::size_t> casts;
    std::vector<PredictionRecord> records;
    for (std::size_t i = 0; i < job.items.size(); ++i) {
      if (!job.items[i]) continue;
      if (!job.items[i]->ok()) {
        ++failed;
        continue;
      }
      const auto& r = *job.items[i]->result;
      ++ok;
      expected_sum += r.estimate.expected_age;
      flagged += r.estimate.p_minor >= 0.5;
      ++casts[std::string(to_string(r.colorcast))];
      if (job.inputs[i].real_age) {
        const auto& in = job.inputs[i];
        records.push_back({in.subject_id.empty() ? in.path : in.subject_id, *in.real_age, r.estimate.expected_age,
                           std::nullopt, std::nullopt});
      }
    }
    json body{{"job_id", job.id},
              {"status", job.status},
              {"total", job.inputs.size()},
              {"succeeded", ok},
              {"failed", failed},
              {"boundary_age", options.estimator.boundary_age},
              {"p_minor_at_least_half", flagged},
              {"mean_expected_age", ok ? json(expected_sum / static_cast<double>(ok)) : json(nullptr)},
              {"colorcast", casts}};
    if (!records.empty()) body["metrics"] = json::parse(report_to_json(build_report(records)));
    return body;
  }

  std::vector<BatchInput> parse_batch_request(const httplib::Request& req) {
    std::vector<BatchInput> inputs;
    if (req.is_multipart_form_data()) {
      for (const auto& [field, file] : req.files) {
        BatchInput in;
        in.path = file.filename.empty() ? field : file.filename;
        in.bytes = std::make_shared<const std::vector<std::uint8_t>>(file.content.begin(), file.content.end());
        inputs.push_back(std::move(in));
      }
      return inputs;
    }
    const std::string type = req.get_header_value("Content-Type");
    if (type.find("csv") != std::string::npos) {
      std::istringstream in(req.body);
      for (const auto& r : manifest_from_csv(in).records) inputs.push_back({r.path, r.crop, r.age, r.subject_id, nullptr});
      return inputs;
    }
    const json body = json::parse(req.body);
    if (body.contains("manifest")) return batch_inputs_from(body.at("manifest").get<std::string>());
    if (body.contains("paths")) {
      for (const auto& p : body.at("paths")) inputs.push_back({p.get<std::string>(), std::nullopt, std::nullopt, "", nullptr});
      return inputs;
    }
    if (body.contains("items")) {
      for (const auto& it : body.at("items")) {
        BatchInput in;
        in.path = it.at("path").get<std::string>();
        in.subject_id = it.value("subject_id", "");
        if (it.contains("real_age")) in.real_age = it.at("real_age").get<int>();
        inputs.push_back(std::move(in));
      }
      return inputs;
    }
    throw FormatError("batch request needs \"paths\", \"items\" or \"manifest\"");
  }

  // --- routes ----------------------------------------------------------------

  void routes() {
    server.set_payload_max_length(256u << 20);
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      } catch (...) {
        send_error(res, 500, "internal", "unknown error");
      }
    });

    server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}, {"model_loaded", estimator.has_value()}});
    });

    server.Post("/v1/estimate", [this](const httplib::Request& req, httplib::Response& res) {
      if (!estimator) return send_error(res, 503, "model_not_loaded", "no model is loaded");
      std::string label = "upload";
      const std::string* body = &req.body;
      if (req.is_multipart_form_data()) {
        if (req.files.empty()) return send_error(res, 400, "bad_request", "multipart request without a file");
        const auto& file = req.has_file("image") ? req.files.find("image")->second : req.files.begin()->second;
        body = &file.content;
        if (!file.filename.empty()) label = file.filename;
      }
      if (body->empty()) return send_error(res, 400, "undecodable_image", "empty request body");
      try {
        const auto* data = reinterpret_cast<const std::uint8_t*>(body->data());
        const auto result = estimator->estimate_bytes({data, body->size()}, label);
        send_json(res, 200, result_json(result));
      } catch (const DecodeError& e) {
        send_error(res, 400, "undecodable_image", e.what());
      }
    });

    server.Post("/v1/batch", [this](const httplib::Request& req, httplib::Response& res) {
      if (!estimator) return send_error(res, 503, "model_not_loaded", "no model is loaded");
      std::vector<BatchInput> inputs;
      try {
        inputs = parse_batch_request(req);
      } catch (const std::exception& e) {
        return send_error(res, 400, "bad_request", e.what());
      }
      if (inputs.empty()) return send_error(res, 400, "bad_request", "batch has no inputs");
      const auto job = submit(std::move(inputs));
      send_json(res, 202, {{"job_id", job->id}, {"status", "queued"}});
    });

    auto find_job = [this](const std::string& id) {
      std::lock_guard lock(mu);
      auto it = jobs.find(id);
      return it == jobs.end() ? nullptr : it->second;
    };

    server.Get(R"(/v1/batch/([^/]+))", [this, find_job](const httplib::Request& req, httplib::Response& res) {
      auto job = find_job(req.matches[1]);
      if (!job) return send_error(res, 404, "not_found", "unknown job '" + std::string(req.matches[1]) + "'");
      std::lock_guard lock(mu);
      send_json(res, 200, job_json(*job));
    });

    server.Get(R"(/v1/batch/([^/]+)/report)", [this, find_job](const httplib::Request& req, httplib::Response& res) {
      auto job = find_job(req.matches[1]);
      if (!job) return send_error(res, 404, "not_found", "unknown job '" + std::string(req.matches[1]) + "'");
      std::lock_guard lock(mu);
      send_json(res, 200, report_json(*job));
    });

    server.Put(R"(/v1/batch/([^/]+)/items/(\d+)/review)",
               [this, find_job](const httplib::Request& req, httplib::Response& res) {
                 auto job = find_job(req.matches[1]);
                 if (!job) return send_error(res, 404, "not_found", "unknown job");
                 const auto index = std::stoul(req.matches[2]);
                 json body;
                 try {
                   body = json::parse(req.body);
                 } catch (const json::exception& e) {
                   return send_error(res, 400, "bad_request", e.what());
                 }
                 const std::string state = body.value("review_state", "");
                 if (!valid_review_state(state)) {
                   return send_error(res, 400, "bad_request", "unknown review_state '" + state + "'");
                 }
                 const std::string note = body.value("reviewer_note", "");
                 {
                   std::lock_guard lock(mu);
                   if (index >= job->reviews.size()) return send_error(res, 404, "not_found", "no such item");
                   job->reviews[index] = {state, note};
                 }
                 log_event({{"event", "review"},
                            {"job_id", job->id},
                            {"index", index},
                            {"review_state", state},
                            {"reviewer_note", note}});
                 send_json(res, 200, {{"job_id", job->id}, {"index", index}, {"review_state", state}, {"reviewer_note", note}});
               });

    server.Get(R"(/v1/posterior/([^/]+)/(\d+))", [this, find_job](const httplib::Request& req, httplib::Response& res) {
      auto job = find_job(req.matches[1]);
      if (!job) return send_error(res, 404, "not_found", "unknown job");
      const auto index = std::stoul(req.matches[2]);
      std::optional<EstimateResult> result;
      std::optional<int> real_age;
      {
        std::lock_guard lock(mu);
        if (index >= job->items.size() || !job->items[index] || !job->items[index]->ok()) {
          return send_error(res, 404, "not_found", "no posterior for that item");
        }
        result = job->items[index]->result;
        real_age = job->inputs[index].real_age;
      }
      const AgePosterior p(result->posterior);
      const auto doc = posterior_plot(p, static_cast<int>(std::lround(result->estimate.expected_age)), real_age);
      if (req.get_param_value("format") == "csv") {
        res.set_content(doc.csv, "text/csv");
      } else {
        res.set_content(doc.svg, "image/svg+xml");
      }
    });
  }
};

Service::Service(std::shared_ptr<const Model> model, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(model), std::move(options))) {}

Service::~Service() = default;

int Service::bind() {
  if (impl_->port >= 0) return impl_->port;
  if (impl_->options.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(impl_->options.host);
  } else if (impl_->server.bind_to_port(impl_->options.host, impl_->options.port)) {
    impl_->port = impl_->options.port;
  }
  if (impl_->port < 0) {
    throw Error(fmt::format("cannot bind {}:{}", impl_->options.host, impl_->options.port));
  }
  return impl_->port;
}

void Service::listen() {
  bind();
  impl_->server.listen_after_bind();
}

int Service::start() {
  const int port = bind();
  impl_->listen_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->listen_thread.joinable()) impl_->listen_thread.join();
}

}  // namespace agest
