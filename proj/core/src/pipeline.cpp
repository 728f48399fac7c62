#include "agest/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "agest/csv.hpp"
#include "agest/error.hpp"
#include "agest/weights_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace agest {

std::shared_ptr<const Model> load_model(const std::string& weights_path, const std::string& spec_path) {
  auto spec = read_graph_spec(spec_path);
  auto model = std::make_shared<Model>();
  model->graph = load_weights(spec.graph, weights_path);
  model->channel_mean = spec.channel_mean;
  return model;
}

NetworkGraph build_toy_age_net(std::size_t side) {
  if (side < 4 || side % 4 != 0) throw std::invalid_argument("toy net side must be a positive multiple of 4");
  std::vector<LayerSpec> layers{
      {"conv1", ConvLayer{8, {3, 3}, {1, 1}, {1, 1}}},
      {"relu1", ReluLayer{}},
      {"pool1", MaxPoolLayer{{2, 2}, {2, 2}}},
      {"conv2", ConvLayer{16, {3, 3}, {1, 1}, {1, 1}}},
      {"relu2", ReluLayer{}},
      {"pool2", MaxPoolLayer{{2, 2}, {2, 2}}},
      {"flatten", FlattenLayer{}},
      {"fc", FullyConnectedLayer{kAgeClasses}},
      {"prob", SoftmaxLayer{}},
  };
  return NetworkGraph({3, side, side}, std::move(layers));
}

void write_toy_model(const std::string& dir, std::uint64_t seed) {
  fs::create_directories(dir);
  NetworkGraph graph = build_toy_age_net();
  init_random_weights(graph, seed);
  // Inputs arrive in [0,255]; bring the first layer back to unit scale.
  LayerWeights first = graph.weights().at("conv1");
  for (float& v : first.weight.data()) v /= 255.0f;
  graph.set_weights("conv1", std::move(first));
  write_graph_spec((fs::path(dir) / "model.spec").string(), graph);
  save_weights(graph, (fs::path(dir) / "model.agew").string());
}

Estimator::Estimator(std::shared_ptr<const Model> model, EstimatorOptions options)
    : model_(std::move(model)), options_(options) {
  if (!model_) throw std::invalid_argument("Estimator: no model");
  const auto& in = model_->graph.input_shape();
  if (in[0] != 3) throw DimensionError("model input must have 3 channels, got " + shape_to_string(in));
  const auto out = model_->graph.output_shape();
  if (out != Shape{kAgeClasses}) {
    const std::string last = model_->graph.layers().empty() ? "<input>" : model_->graph.layers().back().name;
    throw LayerError(last, "model output " + shape_to_string(out) + " is not the 101 age classes");
  }
  if (!model_->graph.fully_weighted()) throw Error("Estimator: model has unweighted layers");
  if (options_.boundary_age < 0 || options_.boundary_age > 100) {
    throw std::out_of_range("boundary age must be in [0,100]");
  }
}

AgePosterior Estimator::posterior_for(const RawImage& img, const std::optional<CropSpec>& crop) const {
  const auto& in = model_->graph.input_shape();
  PreprocessOptions pre;
  pre.target_height = in[1];
  pre.target_width = in[2];
  pre.channel_mean = model_->channel_mean;
  pre.interpolation = options_.interpolation;
  const Tensor x = crop_resize(img, crop.value_or(CropSpec::full_frame()), pre);
  const Tensor logits = forward_logits(model_->graph, x);
  return AgePosterior::from_logits(logits.data());
}

EstimateResult Estimator::estimate_bytes(std::span<const std::uint8_t> bytes, const std::string& label,
                                         const std::optional<CropSpec>& crop) const {
  const RawImage img = decode(bytes);
  const AgePosterior p = posterior_for(img, crop);
  EstimateResult r;
  r.path = label;
  r.estimate = decode(p, {options_.top_k, options_.boundary_age});
  r.posterior.assign(p.probs().begin(), p.probs().end());
  r.colorcast = detect_colorcast(img);
  return r;
}

EstimateResult Estimator::estimate_file(const std::string& path, const std::optional<CropSpec>& crop) const {
  const auto bytes = read_file_bytes(path);
  EstimateResult r = estimate_bytes(bytes, path, crop);
  const auto info = stat_file(path);
  r.file_size = info.size_bytes;
  r.modified_ts = info.modified_utc;
  return r;
}

namespace {

bool is_image_name(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

}  // namespace

std::vector<BatchInput> batch_inputs_from(const std::string& dir_or_manifest) {
  std::vector<BatchInput> inputs;
  if (fs::is_directory(dir_or_manifest)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir_or_manifest)) {
      if (e.is_regular_file() && is_image_name(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    for (const auto& f : files) inputs.push_back({f.string(), std::nullopt, std::nullopt, "", nullptr});
    return inputs;
  }
  if (fs::is_regular_file(dir_or_manifest)) {
    const auto manifest = read_manifest(dir_or_manifest);
    for (const auto& r : manifest.records) inputs.push_back({r.path, r.crop, r.age, r.subject_id, nullptr});
    return inputs;
  }
  throw Error("'" + dir_or_manifest + "' is neither a directory nor a manifest file");
}

std::vector<BatchItem> run_batch(const Estimator& estimator, const std::vector<BatchInput>& inputs,
                                 std::size_t workers, const ProgressFn& on_done) {
  std::vector<BatchItem> items(inputs.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mu;

  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= inputs.size()) return;
      const auto& in = inputs[i];
      BatchItem item;
      item.path = in.path;
      try {
        if (in.bytes) {
          item.result = estimator.estimate_bytes(*in.bytes, in.path, in.crop);
        } else {
          item.result = estimator.estimate_file(in.path, in.crop);
        }
      } catch (const std::exception& e) {
        item.error = e.what();
      }
      items[i] = std::move(item);
      if (on_done) {
        std::lock_guard lock(done_mu);
        on_done(i, items[i]);
      }
    }
  };

  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(inputs.size(), 1));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return items;
}

std::string results_to_csv(const std::vector<BatchItem>& items) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& item : items) {
    std::vector<std::string> f{item.path};
    if (!item.ok()) {
      f.insert(f.end(), 7, "");
      f.push_back("error");
      f.insert(f.end(), 2, "");
      out += csv::join(f) + "\n";
      continue;
    }
    const auto& r = *item.result;
    const auto& e = r.estimate;
    f.push_back(fmt::format("{:.4f}", e.expected_age));
    f.push_back(std::to_string(e.argmax_age));
    for (std::size_t k = 0; k < 3; ++k) {
      f.push_back(k < e.top_k.size() ? fmt::format("{}:{:.6f}", e.top_k[k].age, e.top_k[k].prob) : "");
    }
    f.push_back(fmt::format("{:.6f}", e.confidence));
    f.push_back(fmt::format("{:.6f}", e.p_minor));
    f.emplace_back(to_string(r.colorcast));
    f.push_back(r.file_size ? std::to_string(*r.file_size) : "");
    f.push_back(r.modified_ts.value_or(""));
    out += csv::join(f) + "\n";
  }
  return out;
}

std::string to_json(const EstimateResult& r, bool with_posterior) {
  json top = json::array();
  for (const auto& g : r.estimate.top_k) top.push_back({{"age", g.age}, {"prob", g.prob}});
  json j{{"schema_version", kSchemaVersion},
         {"path", r.path},
         {"expected_age", r.estimate.expected_age},
         {"argmax_age", r.estimate.argmax_age},
         {"top_k", std::move(top)},
         {"confidence", r.estimate.confidence},
         {"p_minor", r.estimate.p_minor},
         {"colorcast", std::string(to_string(r.colorcast))},
         {"file_size", r.file_size ? json(*r.file_size) : json(nullptr)},
         {"modified_ts", r.modified_ts ? json(*r.modified_ts) : json(nullptr)}};
  if (with_posterior) j["posterior"] = r.posterior;
  return j.dump();
}

EstimateResult estimate_result_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw FormatError("estimate result: unsupported schema_version " + j.at("schema_version").dump());
    }
    EstimateResult r;
    r.path = j.at("path").get<std::string>();
    r.estimate.expected_age = j.at("expected_age").get<double>();
    r.estimate.argmax_age = j.at("argmax_age").get<int>();
    for (const auto& g : j.at("top_k")) r.estimate.top_k.push_back({g.at("age").get<int>(), g.at("prob").get<double>()});
    r.estimate.confidence = j.at("confidence").get<double>();
    r.estimate.p_minor = j.at("p_minor").get<double>();
    const auto cast = j.at("colorcast").get<std::string>();
    r.colorcast = cast == "monochrome" ? ColorCast::monochrome : cast == "sepia" ? ColorCast::sepia : ColorCast::color;
    if (!j.at("file_size").is_null()) r.file_size = j.at("file_size").get<std::uint64_t>();
    if (!j.at("modified_ts").is_null()) r.modified_ts = j.at("modified_ts").get<std::string>();
    if (j.contains("posterior")) r.posterior = j.at("posterior").get<std::vector<double>>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("estimate result JSON: ") + e.what());
  }
}

}  // namespace agest
