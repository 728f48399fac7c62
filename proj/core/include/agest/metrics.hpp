#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "agest/dex.hpp"
#include "agest/plot.hpp"

namespace agest {

// Crowd-vote statistics for apparent-age datasets.
struct VoteStats {
  double mean = 0.0;
  double stddev = 0.0;
};

struct PredictionRecord {
  std::string subject_id;
  int real_age = 0;            // [0,100]
  double estimated_age = 0.0;  // [0,100]
  std::optional<AgePosterior> posterior;
  std::optional<VoteStats> votes;
};

// How the absolute error is compared against a cumulative-score level.
enum class ErrorMode {
  continuous,  // |estimate - real| as a real number
  rounded,     // |round(estimate) - real|, for argmax-style pipelines
};

// All aggregates below reduce in a fixed order (sorted by subject_id, then
// real age, then estimate) so results do not depend on input order.

double mae(const std::vector<PredictionRecord>& records);

// Percentage in [0,100] of records whose error is <= level.
double cumulative_score(const std::vector<PredictionRecord>& records, int level,
                        ErrorMode mode = ErrorMode::continuous);

// 1 - exp(-(x - mu)^2 / (2 sigma^2)).
double epsilon_error(double x, double mu, double sigma);

// Mean epsilon-error of estimated_age over the records that carry vote
// statistics. Throws UnsupportedMetricError when none do.
double epsilon_error(const std::vector<PredictionRecord>& records);

// Mean signed error; positive means the estimates run high.
double estimation_shift(const std::vector<PredictionRecord>& records);
std::map<int, double> estimation_shift_by_class(const std::vector<PredictionRecord>& records);

struct ClassStats {
  std::size_t count = 0;
  double mae = 0.0;
  std::map<int, double> cs;  // level -> percent
  double mean_signed_error = 0.0;
};

struct EvalReport {
  std::vector<int> cs_levels;
  std::map<int, ClassStats> per_class;  // keyed by real age; empty classes omitted
  ClassStats overall;
};

EvalReport build_report(const std::vector<PredictionRecord>& records, std::vector<int> cs_levels = {1, 2, 3},
                        ErrorMode mode = ErrorMode::continuous);

// age_class,count,mae,cs<l>...,mean_signed_error ; 2 decimals; final row "overall".
std::string report_to_csv(const EvalReport& report);
// Same content at full precision, with a schema_version field.
std::string report_to_json(const EvalReport& report);

PlotDocument plot_mae(const EvalReport& report);
PlotDocument plot_cs(const EvalReport& report, int level);

// Reads `subject_id,real_age,estimated_age[,vote_mean,vote_stddev]`.
// Errors name the offending line.
std::vector<PredictionRecord> read_predictions(std::istream& in);
std::vector<PredictionRecord> read_predictions(const std::string& path);

}  // namespace agest
