#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "agest/pipeline.hpp"

namespace agest {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;                // 0 picks a free port
  std::size_t batch_workers = 2;
  std::string journal_path;       // empty: no journal
  EstimatorOptions estimator;
};

// Batch HTTP service.
//
//   GET  /v1/health
//   POST /v1/estimate                       raw image body or multipart field "image"
//   POST /v1/batch                          JSON {"paths":[...]} | {"manifest":"<path>"},
//                                           text/csv manifest body, or multipart files
//   GET  /v1/batch/{id}                     job status, progress and results
//   GET  /v1/batch/{id}/report              summary (+ metrics when ages are known)
//   PUT  /v1/batch/{id}/items/{i}/review    {"review_state":..., "reviewer_note":...}
//   GET  /v1/posterior/{id}/{i}             posterior SVG (?format=csv for the sidecar)
//
// Every JSON body carries "schema_version". Errors are {code, message}.
//
// The journal is append-only JSON lines, one event per line:
//   {"event":"job_created","job_id":..,"ts":..,"inputs":[{"path","real_age"?}...]}
//   {"event":"item_done","job_id":..,"index":..,"ts":..,"result":{..}|"error":".."}
//   {"event":"job_finished","job_id":..,"ts":..,"status":"done"|"failed"}
//   {"event":"review","job_id":..,"index":..,"ts":..,"review_state":..,"reviewer_note":..}
// It is replayed at startup; jobs left running by a previous process come
// back as "failed".
class Service {
 public:
  // `model` may be null, in which case model-dependent endpoints answer 503.
  Service(std::shared_ptr<const Model> model, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds the listening socket and returns the bound port.
  int bind();
  // Serves until stop(). Calls bind() first if needed.
  void listen();
  // bind() + listen() on a background thread.
  int start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace agest
