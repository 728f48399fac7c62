#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agest/dataset.hpp"
#include "agest/dex.hpp"
#include "agest/image.hpp"
#include "agest/network.hpp"

namespace agest {

inline constexpr int kSchemaVersion = 1;

// A loaded, immutable model: weighted graph plus the input normalization
// read from its spec file.
struct Model {
  NetworkGraph graph;
  std::array<float, 3> channel_mean{0.0f, 0.0f, 0.0f};
};

// Reads the graph spec and the weight file and validates them against each
// other. Errors name the offending layer.
std::shared_ptr<const Model> load_model(const std::string& weights_path, const std::string& spec_path);

// Writes `<dir>/model.spec` and `<dir>/model.agew` for a small randomly
// initialized 101-class network taking 3x32x32 inputs. Useful for demos
// and smoke tests; its estimates mean nothing.
void write_toy_model(const std::string& dir, std::uint64_t seed = 7);
NetworkGraph build_toy_age_net(std::size_t side = 32);

struct EstimatorOptions {
  int boundary_age = 18;
  std::size_t top_k = 3;
  Interpolation interpolation = Interpolation::bilinear;
};

struct EstimateResult {
  std::string path;
  AgeEstimate estimate;
  std::vector<double> posterior;  // 101 entries
  ColorCast colorcast = ColorCast::color;
  std::optional<std::uint64_t> file_size;
  std::optional<std::string> modified_ts;
};

// decode -> crop_resize -> forward -> softmax -> DEX decode. Immutable and
// safe to share between threads.
class Estimator {
 public:
  Estimator(std::shared_ptr<const Model> model, EstimatorOptions options = {});

  EstimateResult estimate_bytes(std::span<const std::uint8_t> bytes, const std::string& label,
                                const std::optional<CropSpec>& crop = std::nullopt) const;
  // Adds file size and modification time to the result.
  EstimateResult estimate_file(const std::string& path, const std::optional<CropSpec>& crop = std::nullopt) const;

  AgePosterior posterior_for(const RawImage& img, const std::optional<CropSpec>& crop) const;

  const EstimatorOptions& options() const noexcept { return options_; }
  const Model& model() const noexcept { return *model_; }

 private:
  std::shared_ptr<const Model> model_;
  EstimatorOptions options_;
};

struct BatchInput {
  std::string path;                          // label, and file to read when `bytes` is empty
  std::optional<CropSpec> crop;
  std::optional<int> real_age;
  std::string subject_id;
  std::shared_ptr<const std::vector<std::uint8_t>> bytes;  // in-memory upload
};

struct BatchItem {
  std::string path;
  std::optional<EstimateResult> result;
  std::string error;  // set when result is empty

  bool ok() const noexcept { return result.has_value(); }
};

// Inputs from a directory (image files sorted by name) or a manifest CSV
// (manifest order, with its crops and ages).
std::vector<BatchInput> batch_inputs_from(const std::string& dir_or_manifest);

using ProgressFn = std::function<void(std::size_t index, const BatchItem& item)>;

// Processes every input with `workers` threads. The returned items are in
// input order whatever order they completed in; failures become error items
// and never stop the batch. `on_done` is called (serialized) as items finish.
std::vector<BatchItem> run_batch(const Estimator& estimator, const std::vector<BatchInput>& inputs,
                                 std::size_t workers = 1, const ProgressFn& on_done = {});

// path,expected_age,argmax_age,top1,top2,top3,confidence,p_minor,colorcast,file_size,modified_ts
// topN cells are "age:prob". A failed item keeps its path, has colorcast
// "error" and leaves every other cell empty.
inline constexpr const char* kResultsHeader =
    "path,expected_age,argmax_age,top1,top2,top3,confidence,p_minor,colorcast,file_size,modified_ts";
std::string results_to_csv(const std::vector<BatchItem>& items);

// Versioned JSON for one estimate. The posterior is included on request.
std::string to_json(const EstimateResult& result, bool with_posterior = true);
EstimateResult estimate_result_from_json(const std::string& json);

}  // namespace agest
