// agest: command-line front end.
//
//   agest estimate <image>            single-number age estimate
//   agest batch <dir|manifest.csv>    results CSV for many images
//   agest eval <predictions.csv>      per-age-class MAE / CS report
//   agest dataset ingest|dedup|merge|stats
//   agest serve                       batch HTTP service
//   agest model toy|vgg16             write demo model files
//
// Exit codes: 0 ok, 1 usage or general failure, 2 unreadable/undecodable
// input, 3 model problems.

#include <CLI11.hpp>

#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>

#include "agest/dataset.hpp"
#include "agest/error.hpp"
#include "agest/metrics.hpp"
#include "agest/pipeline.hpp"
#include "agest/service.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitInput = 2;
constexpr int kExitModel = 3;

struct CliFailure {
  int code;
  std::string message;
};

struct ModelFlags {
  std::string model;
  std::string spec;
};

void add_model_flags(CLI::App* cmd, ModelFlags& flags) {
  cmd->add_option("--model", flags.model, "Weight file (.agew); default $AGEST_MODEL_DIR/model.agew");
  cmd->add_option("--spec", flags.spec, "Graph spec file; default: the weight file with a .spec extension");
}

std::shared_ptr<const agest::Model> open_model(const ModelFlags& flags) {
  std::string weights = flags.model;
  if (weights.empty()) {
    const char* dir = std::getenv("AGEST_MODEL_DIR");
    if (dir == nullptr) throw CliFailure{kExitModel, "no --model given and AGEST_MODEL_DIR is not set"};
    weights = (fs::path(dir) / "model.agew").string();
  }
  std::string spec = flags.spec;
  if (spec.empty()) spec = fs::path(weights).replace_extension(".spec").string();
  try {
    return agest::load_model(weights, spec);
  } catch (const std::exception& e) {
    throw CliFailure{kExitModel, fmt::format("model error: {}", e.what())};
  }
}

std::optional<agest::CropSpec> parse_crop(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::vector<double> v;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) v.push_back(std::stod(tok));
  if (v.size() != 4 && v.size() != 5) throw CliFailure{kExitFailure, "--crop expects x,y,w,h[,rotation_deg]"};
  for (int i = 0; i < 4; ++i) {
    if (v[i] < 0 || v[i] != std::floor(v[i])) throw CliFailure{kExitFailure, "--crop x,y,w,h must be non-negative integers"};
  }
  return agest::CropSpec{static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1]),
                         static_cast<std::size_t>(v[2]), static_cast<std::size_t>(v[3]), v.size() == 5 ? v[4] : 0.0};
}

std::vector<int> parse_levels(const std::string& s) {
  std::vector<int> levels;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    std::size_t pos = 0;
    int v = -1;
    try {
      v = std::stoi(tok, &pos);
    } catch (const std::exception&) {
    }
    if (v < 0 || pos != tok.size()) throw CliFailure{kExitFailure, "--cs-levels expects comma-separated non-negative integers"};
    levels.push_back(v);
  }
  if (levels.empty()) throw CliFailure{kExitFailure, "--cs-levels is empty"};
  return levels;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliFailure{kExitFailure, "cannot write '" + path + "'"};
  out << text;
}

// --- estimate ------------------------------------------------------------------

struct EstimateArgs {
  std::string image;
  ModelFlags model;
  std::string plot;
  bool json = false;
  int boundary_age = 18;
  std::string crop;
  int real_age = -1;
};

int cmd_estimate(const EstimateArgs& a) {
  const auto model = open_model(a.model);
  agest::Estimator estimator(model, {a.boundary_age});
  agest::EstimateResult r;
  try {
    r = estimator.estimate_file(a.image, parse_crop(a.crop));
  } catch (const agest::DecodeError& e) {
    throw CliFailure{kExitInput, e.what()};
  } catch (const agest::LayerError& e) {
    throw CliFailure{kExitModel, fmt::format("model error: {}", e.what())};
  } catch (const agest::DimensionError& e) {
    throw CliFailure{kExitInput, e.what()};
  } catch (const agest::Error& e) {
    throw CliFailure{kExitInput, fmt::format("cannot read input: {}", e.what())};
  }
  if (!a.plot.empty()) {
    const agest::AgePosterior p(r.posterior);
    std::optional<int> real;
    if (a.real_age >= 0) real = a.real_age;
    agest::posterior_plot(p, static_cast<int>(std::lround(r.estimate.expected_age)), real).write(a.plot);
  }
  if (a.json) {
    std::cout << agest::to_json(r) << "\n";
  } else {
    std::cout << fmt::format("{:.2f}\n", r.estimate.expected_age);
  }
  return 0;
}

// --- batch ---------------------------------------------------------------------

struct BatchArgs {
  std::string input;
  ModelFlags model;
  std::string out;
  std::size_t workers = 1;
  int boundary_age = 18;
};

int cmd_batch(const BatchArgs& a) {
  const auto model = open_model(a.model);
  agest::Estimator estimator(model, {a.boundary_age});
  std::vector<agest::BatchInput> inputs;
  try {
    inputs = agest::batch_inputs_from(a.input);
  } catch (const std::exception& e) {
    throw CliFailure{kExitInput, e.what()};
  }
  if (inputs.empty()) throw CliFailure{kExitInput, "no images to process in '" + a.input + "'"};

  const auto items = agest::run_batch(estimator, inputs, a.workers);
  std::size_t ok = 0;
  for (const auto& item : items) {
    if (item.ok()) {
      ++ok;
    } else {
      std::cerr << "error: " << item.path << ": " << item.error << "\n";
    }
  }
  write_text(a.out, agest::results_to_csv(items));
  std::cerr << fmt::format("{} of {} images processed, {} failed; results in {}\n", ok, items.size(),
                           items.size() - ok, a.out);
  return ok == 0 ? kExitInput : 0;
}

// --- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string predictions;
  std::string out = ".";
  std::string cs_levels = "1,2,3";
  bool rounded = false;
};

int cmd_eval(const EvalArgs& a) {
  std::vector<agest::PredictionRecord> records;
  try {
    records = agest::read_predictions(a.predictions);
  } catch (const std::exception& e) {
    throw CliFailure{kExitInput, e.what()};
  }
  if (records.empty()) throw CliFailure{kExitInput, "no prediction rows in '" + a.predictions + "'"};
  const auto report = agest::build_report(records, parse_levels(a.cs_levels),
                                          a.rounded ? agest::ErrorMode::rounded : agest::ErrorMode::continuous);
  fs::create_directories(a.out);
  const fs::path dir(a.out);
  write_text((dir / "report.csv").string(), agest::report_to_csv(report));
  write_text((dir / "report.json").string(), agest::report_to_json(report));
  agest::plot_mae(report).write((dir / "mae.svg").string());
  for (int l : report.cs_levels) agest::plot_cs(report, l).write((dir / fmt::format("cs{}.svg", l)).string());
  try {
    std::cout << fmt::format("epsilon_error {:.4f}\n", agest::epsilon_error(records));
  } catch (const agest::UnsupportedMetricError&) {
    // no vote statistics in this file
  }
  std::cout << fmt::format("records {}  mae {:.2f}", report.overall.count, report.overall.mae);
  for (int l : report.cs_levels) std::cout << fmt::format("  cs{} {:.2f}", l, report.overall.cs.at(l));
  std::cout << fmt::format("  shift {:+.2f}\n", report.overall.mean_signed_error);
  return 0;
}

// --- dataset -------------------------------------------------------------------

struct DatasetArgs {
  std::string dir, source, manifest, second, out, rejects, collision = "error";
  std::optional<std::uint64_t> seed;
  std::optional<int> max_age;
  int bin_width = 1;
};

agest::DatasetManifest load_manifest(const std::string& path) {
  try {
    return agest::read_manifest(path);
  } catch (const std::exception& e) {
    throw CliFailure{kExitInput, e.what()};
  }
}

int cmd_ingest(const DatasetArgs& a) {
  const std::string tag = a.source.empty() ? fs::weakly_canonical(fs::absolute(a.dir)).filename().string() : a.source;
  const auto m = agest::ingest_directory(a.dir, tag);
  agest::write_manifest(m, a.out);
  const std::string rejects = a.rejects.empty() ? fs::path(a.out).replace_extension(".rejects.csv").string() : a.rejects;
  agest::write_rejects(m.rejects, rejects);
  std::cerr << fmt::format("{} records, {} rejects\n", m.records.size(), m.rejects.size());
  return 0;
}

int cmd_dedup(const DatasetArgs& a) {
  const auto in = load_manifest(a.manifest);
  agest::DedupPolicy policy = agest::KeepFirstSorted{};
  if (a.seed) policy = agest::RandomSeeded{*a.seed};
  const auto out = agest::dedup(in, policy, a.max_age);
  agest::write_manifest(out, a.out);
  for (std::size_t i = in.rejects.size(); i < out.rejects.size(); ++i) {
    std::cerr << "dropped subject " << out.rejects[i].path << ": " << out.rejects[i].reason << "\n";
  }
  std::cerr << fmt::format("{} -> {} records\n", in.records.size(), out.records.size());
  return 0;
}

int cmd_merge(const DatasetArgs& a) {
  const auto ma = load_manifest(a.manifest), mb = load_manifest(a.second);
  agest::CollisionPolicy policy;
  if (a.collision == "error") {
    policy = agest::CollisionPolicy::error;
  } else if (a.collision == "prefer_a") {
    policy = agest::CollisionPolicy::prefer_a;
  } else if (a.collision == "prefer_b") {
    policy = agest::CollisionPolicy::prefer_b;
  } else {
    throw CliFailure{kExitFailure, "--collision must be error, prefer_a or prefer_b"};
  }
  const auto out = agest::merge(ma, mb, policy);
  agest::write_manifest(out, a.out);
  std::cerr << fmt::format("{} + {} -> {} records\n", ma.records.size(), mb.records.size(), out.records.size());
  return 0;
}

int cmd_stats(const DatasetArgs& a) {
  const auto m = load_manifest(a.manifest);
  std::string csv = "age_bin,count\n";
  for (const auto& [bin, count] : agest::age_histogram(m, a.bin_width)) csv += fmt::format("{},{}\n", bin, count);
  if (!a.out.empty()) {
    write_text(a.out, csv);
  } else {
    std::cout << csv;
  }
  std::cout << fmt::format("records {}\n", m.records.size());
  if (!m.records.empty()) std::cout << fmt::format("diversity {:.4f}\n", agest::diversity_score(m));
  return 0;
}

// --- serve ---------------------------------------------------------------------

struct ServeArgs {
  ModelFlags model;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t workers = 2;
  std::string journal;
  int boundary_age = 18;
};

agest::Service* g_service = nullptr;

int cmd_serve(const ServeArgs& a) {
  std::shared_ptr<const agest::Model> model;
  try {
    model = open_model(a.model);
  } catch (const CliFailure& f) {
    std::cerr << "warning: " << f.message << "; serving without a model (estimation endpoints answer 503)\n";
  }
  agest::ServiceOptions options;
  options.host = a.host;
  options.port = a.port;
  options.batch_workers = a.workers;
  options.journal_path = a.journal;
  options.estimator.boundary_age = a.boundary_age;
  agest::Service service(model, options);
  const int port = service.bind();
  std::cerr << fmt::format("listening on http://{}:{}\n", a.host, port);
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  service.listen();
  g_service = nullptr;
  return 0;
}

// --- model ---------------------------------------------------------------------

int cmd_model_toy(const std::string& out, std::uint64_t seed) {
  agest::write_toy_model(out, seed);
  std::cout << (fs::path(out) / "model.agew").string() << "\n";
  return 0;
}

int cmd_model_vgg16(const std::string& out, std::size_t classes) {
  const auto graph = agest::build_vgg16_age(classes);
  agest::write_graph_spec(out, graph);
  std::cout << fmt::format("{}: {} conv, {} fc, {} parameters\n", out, graph.count_layers(agest::LayerKind::conv),
                           graph.count_layers(agest::LayerKind::fully_connected), graph.parameter_count());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agest: facial age estimation toolkit"};
  app.require_subcommand(1);

  EstimateArgs est;
  auto* c_est = app.add_subcommand("estimate", "Estimate the age of the face in one image");
  c_est->add_option("image", est.image, "Image file (PNG, JPEG or BMP)")->required();
  add_model_flags(c_est, est.model);
  c_est->add_option("--plot", est.plot, "Write the posterior chart to this SVG (plus a .csv sidecar)");
  c_est->add_flag("--json", est.json, "Print the full result as JSON");
  c_est->add_option("--boundary-age", est.boundary_age, "Adult/minor boundary for p_minor")->check(CLI::Range(0, 100));
  c_est->add_option("--crop", est.crop, "Face crop x,y,w,h[,rotation_deg]");
  c_est->add_option("--real-age", est.real_age, "Known age, marked in the posterior chart")->check(CLI::Range(0, 100));

  BatchArgs bat;
  auto* c_bat = app.add_subcommand("batch", "Estimate every image in a directory or manifest");
  c_bat->add_option("input", bat.input, "Directory of images or manifest CSV")->required();
  add_model_flags(c_bat, bat.model);
  c_bat->add_option("--out", bat.out, "Results CSV")->required();
  c_bat->add_option("--workers", bat.workers, "Worker threads")->check(CLI::Range(1, 256));
  c_bat->add_option("--boundary-age", bat.boundary_age, "Adult/minor boundary for p_minor")->check(CLI::Range(0, 100));

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Per-age-class MAE and cumulative scores");
  c_eval->add_option("predictions", ev.predictions, "CSV with subject_id,real_age,estimated_age")->required();
  c_eval->add_option("--out", ev.out, "Output directory for report.csv/json and plots");
  c_eval->add_option("--cs-levels", ev.cs_levels, "Comma-separated CS levels in years");
  c_eval->add_flag("--rounded", ev.rounded, "Round estimates to whole years before the CS comparison");

  DatasetArgs ds;
  auto* c_ds = app.add_subcommand("dataset", "Manifest curation");
  c_ds->require_subcommand(1);
  auto* c_ingest = c_ds->add_subcommand("ingest", "Build a manifest from firstname_lastname_age.ext files");
  c_ingest->add_option("dir", ds.dir, "Image directory")->required();
  c_ingest->add_option("--source", ds.source, "Dataset tag (default: directory name)");
  c_ingest->add_option("--out", ds.out, "Manifest CSV")->required();
  c_ingest->add_option("--rejects", ds.rejects, "Rejects CSV (default: <out>.rejects.csv)");
  auto* c_dedup = c_ds->add_subcommand("dedup", "Keep one image per subject");
  c_dedup->add_option("manifest", ds.manifest)->required();
  c_dedup->add_option("--out", ds.out, "Output manifest")->required();
  c_dedup->add_option("--seed", ds.seed, "Pick randomly with this seed (default: first file by name)");
  c_dedup->add_option("--max-age", ds.max_age, "Only consider images at or below this age");
  auto* c_merge = c_ds->add_subcommand("merge", "Merge two deduplicated manifests");
  c_merge->add_option("a", ds.manifest)->required();
  c_merge->add_option("b", ds.second)->required();
  c_merge->add_option("--out", ds.out, "Output manifest")->required();
  c_merge->add_option("--collision", ds.collision, "error | prefer_a | prefer_b");
  auto* c_stats = c_ds->add_subcommand("stats", "Age histogram and diversity score");
  c_stats->add_option("manifest", ds.manifest)->required();
  c_stats->add_option("--out", ds.out, "Histogram CSV (default: stdout)");
  c_stats->add_option("--bin-width", ds.bin_width, "Histogram bin width in years")->check(CLI::PositiveNumber);

  ServeArgs sv;
  auto* c_serve = app.add_subcommand("serve", "Run the batch HTTP service");
  add_model_flags(c_serve, sv.model);
  c_serve->add_option("--host", sv.host, "Bind address");
  c_serve->add_option("--port", sv.port, "Port (0 picks a free one)");
  c_serve->add_option("--workers", sv.workers, "Threads per batch job")->check(CLI::Range(1, 256));
  c_serve->add_option("--journal", sv.journal, "Append-only job journal (JSON lines)");
  c_serve->add_option("--boundary-age", sv.boundary_age)->check(CLI::Range(0, 100));

  std::string model_out;
  std::uint64_t toy_seed = 7;
  std::size_t classes = 101;
  auto* c_model = app.add_subcommand("model", "Write demo model files");
  c_model->require_subcommand(1);
  auto* c_toy = c_model->add_subcommand("toy", "Small random 101-class model (model.spec + model.agew)");
  c_toy->add_option("--out", model_out, "Output directory")->required();
  c_toy->add_option("--seed", toy_seed);
  auto* c_vgg = c_model->add_subcommand("vgg16", "Write the VGG-16 age graph spec (no weights)");
  c_vgg->add_option("--out", model_out, "Spec file")->required();
  c_vgg->add_option("--classes", classes)->check(CLI::Range(2, 100000));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_est) return cmd_estimate(est);
    if (*c_bat) return cmd_batch(bat);
    if (*c_eval) return cmd_eval(ev);
    if (*c_ingest) return cmd_ingest(ds);
    if (*c_dedup) return cmd_dedup(ds);
    if (*c_merge) return cmd_merge(ds);
    if (*c_stats) return cmd_stats(ds);
    if (*c_serve) return cmd_serve(sv);
    if (*c_toy) return cmd_model_toy(model_out, toy_seed);
    if (*c_vgg) return cmd_model_vgg16(model_out, classes);
  } catch (const CliFailure& f) {
    std::cerr << "agest: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "agest: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
