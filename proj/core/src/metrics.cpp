#include "agest/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "agest/csv.hpp"
#include "agest/error.hpp"

namespace agest {

namespace {

void require_records(const std::vector<PredictionRecord>& records, const char* op) {
  if (records.empty()) throw std::invalid_argument(std::string(op) + ": empty record set");
}

std::vector<const PredictionRecord*> reduction_order(const std::vector<PredictionRecord>& records) {
  std::vector<const PredictionRecord*> order;
  order.reserve(records.size());
  for (const auto& r : records) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const PredictionRecord* a, const PredictionRecord* b) {
    if (a->subject_id != b->subject_id) return a->subject_id < b->subject_id;
    if (a->real_age != b->real_age) return a->real_age < b->real_age;
    return a->estimated_age < b->estimated_age;
  });
  return order;
}

double error_of(const PredictionRecord& r, ErrorMode mode) {
  const double est = mode == ErrorMode::rounded ? std::round(r.estimated_age) : r.estimated_age;
  return std::abs(est - static_cast<double>(r.real_age));
}

ClassStats stats_for(const std::vector<const PredictionRecord*>& ordered, const std::vector<int>& levels,
                     ErrorMode mode) {
  ClassStats s;
  s.count = ordered.size();
  double abs_sum = 0.0, signed_sum = 0.0;
  std::map<int, std::size_t> within;
  for (const auto* r : ordered) {
    abs_sum += std::abs(r->estimated_age - static_cast<double>(r->real_age));
    signed_sum += r->estimated_age - static_cast<double>(r->real_age);
    const double e = error_of(*r, mode);
    for (int l : levels) within[l] += e <= static_cast<double>(l);
  }
  const double n = static_cast<double>(s.count);
  s.mae = abs_sum / n;
  s.mean_signed_error = signed_sum / n;
  for (int l : levels) s.cs[l] = 100.0 * static_cast<double>(within[l]) / n;
  return s;
}

}  // namespace

double mae(const std::vector<PredictionRecord>& records) {
  require_records(records, "mae");
  double sum = 0.0;
  for (const auto* r : reduction_order(records)) sum += std::abs(r->estimated_age - static_cast<double>(r->real_age));
  return sum / static_cast<double>(records.size());
}

double cumulative_score(const std::vector<PredictionRecord>& records, int level, ErrorMode mode) {
  require_records(records, "cumulative_score");
  if (level < 0) throw std::invalid_argument("cumulative_score: level must be non-negative");
  std::size_t hits = 0;
  for (const auto& r : records) hits += error_of(r, mode) <= static_cast<double>(level);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(records.size());
}

double epsilon_error(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument(fmt::format("epsilon_error: sigma must be positive, got {}", sigma));
  const double d = x - mu;
  return 1.0 - std::exp(-(d * d) / (2.0 * sigma * sigma));
}

double epsilon_error(const std::vector<PredictionRecord>& records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto* r : reduction_order(records)) {
    if (!r->votes) continue;
    sum += epsilon_error(r->estimated_age, r->votes->mean, r->votes->stddev);
    ++n;
  }
  if (n == 0) throw UnsupportedMetricError("epsilon-error needs vote statistics (mean, stddev); none present");
  return sum / static_cast<double>(n);
}

double estimation_shift(const std::vector<PredictionRecord>& records) {
  require_records(records, "estimation_shift");
  double sum = 0.0;
  for (const auto* r : reduction_order(records)) sum += r->estimated_age - static_cast<double>(r->real_age);
  return sum / static_cast<double>(records.size());
}

std::map<int, double> estimation_shift_by_class(const std::vector<PredictionRecord>& records) {
  require_records(records, "estimation_shift");
  std::map<int, std::pair<double, std::size_t>> acc;
  for (const auto* r : reduction_order(records)) {
    auto& [sum, n] = acc[r->real_age];
    sum += r->estimated_age - static_cast<double>(r->real_age);
    ++n;
  }
  std::map<int, double> out;
  for (const auto& [age, v] : acc) out[age] = v.first / static_cast<double>(v.second);
  return out;
}

EvalReport build_report(const std::vector<PredictionRecord>& records, std::vector<int> cs_levels, ErrorMode mode) {
  require_records(records, "build_report");
  if (cs_levels.empty()) throw std::invalid_argument("build_report: no CS levels");
  if (std::any_of(cs_levels.begin(), cs_levels.end(), [](int l) { return l < 0; })) {
    throw std::invalid_argument("build_report: CS levels must be non-negative");
  }
  std::sort(cs_levels.begin(), cs_levels.end());
  cs_levels.erase(std::unique(cs_levels.begin(), cs_levels.end()), cs_levels.end());

  for (const auto& r : records) {
    if (r.real_age < 0 || r.real_age > 100 || !(r.estimated_age >= 0.0 && r.estimated_age <= 100.0)) {
      throw std::invalid_argument(fmt::format("build_report: record '{}' has ages outside [0,100]", r.subject_id));
    }
  }

  const auto ordered = reduction_order(records);
  std::map<int, std::vector<const PredictionRecord*>> by_class;
  for (const auto* r : ordered) by_class[r->real_age].push_back(r);

  EvalReport report;
  report.cs_levels = cs_levels;
  for (const auto& [age, members] : by_class) report.per_class[age] = stats_for(members, cs_levels, mode);
  report.overall = stats_for(ordered, cs_levels, mode);
  return report;
}

std::string report_to_csv(const EvalReport& report) {
  std::string out = "age_class,count,mae";
  for (int l : report.cs_levels) out += fmt::format(",cs{}", l);
  out += ",mean_signed_error\n";
  auto row = [&](const std::string& label, const ClassStats& s) {
    out += fmt::format("{},{},{:.2f}", label, s.count, s.mae);
    for (int l : report.cs_levels) out += fmt::format(",{:.2f}", s.cs.at(l));
    out += fmt::format(",{:.2f}\n", s.mean_signed_error);
  };
  for (const auto& [age, s] : report.per_class) row(std::to_string(age), s);
  row("overall", report.overall);
  return out;
}

namespace {

nlohmann::json stats_json(const ClassStats& s) {
  nlohmann::json cs = nlohmann::json::object();
  for (const auto& [l, v] : s.cs) cs[std::to_string(l)] = v;
  return {{"count", s.count}, {"mae", s.mae}, {"cs", cs}, {"mean_signed_error", s.mean_signed_error}};
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& [age, s] : report.per_class) {
    auto j = stats_json(s);
    j["age_class"] = age;
    classes.push_back(std::move(j));
  }
  nlohmann::json doc{{"schema_version", 1},
                     {"cs_levels", report.cs_levels},
                     {"per_class", std::move(classes)},
                     {"overall", stats_json(report.overall)}};
  return doc.dump(2) + "\n";
}

PlotDocument plot_mae(const EvalReport& report) {
  if (report.per_class.empty()) throw std::invalid_argument("plot_mae: report has no age classes");
  std::vector<svg::Point> pts;
  double y_max = 1.0;
  PlotDocument doc;
  doc.csv = "age_class,mae\n";
  for (const auto& [age, s] : report.per_class) {
    pts.push_back({static_cast<double>(age), s.mae});
    y_max = std::max(y_max, std::ceil(s.mae));
    doc.csv += fmt::format("{},{:.6f}\n", age, s.mae);
  }
  svg::LineChartOptions o{"Mean absolute error per age class", "real age (years)", "MAE (years)",
                          pts.front().x - 0.5, pts.back().x + 0.5, 0.0, y_max};
  doc.svg = svg::line_chart(pts, o);
  return doc;
}

PlotDocument plot_cs(const EvalReport& report, int level) {
  if (report.per_class.empty()) throw std::invalid_argument("plot_cs: report has no age classes");
  if (std::find(report.cs_levels.begin(), report.cs_levels.end(), level) == report.cs_levels.end()) {
    throw std::invalid_argument(fmt::format("plot_cs: level {} not in report", level));
  }
  std::vector<svg::Point> pts;
  PlotDocument doc;
  doc.csv = fmt::format("age_class,cs{}\n", level);
  for (const auto& [age, s] : report.per_class) {
    pts.push_back({static_cast<double>(age), s.cs.at(level)});
    doc.csv += fmt::format("{},{:.6f}\n", age, s.cs.at(level));
  }
  svg::LineChartOptions o{fmt::format("Cumulative score (l = {}) per age class", level), "real age (years)",
                          "CS (%)", pts.front().x - 0.5, pts.back().x + 0.5, 0.0, 100.0};
  doc.svg = svg::line_chart(pts, o);
  return doc;
}

std::vector<PredictionRecord> read_predictions(std::istream& in) {
  const auto rows = csv::read(in);
  constexpr const char* kExpected = "subject_id,real_age,estimated_age";
  if (rows.empty() || rows[0].fields.size() < 3 || rows[0].fields[0] != "subject_id" ||
      rows[0].fields[1] != "real_age" || rows[0].fields[2] != "estimated_age") {
    throw FormatError(std::string("predictions: missing header; expected columns ") + kExpected +
                      "[,vote_mean,vote_stddev]");
  }
  const bool has_votes = rows[0].fields.size() >= 5 && rows[0].fields[3] == "vote_mean" &&
                         rows[0].fields[4] == "vote_stddev";
  std::vector<PredictionRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    auto fail = [&](const std::string& msg) -> void {
      throw FormatError(fmt::format("predictions line {}: {}", row.line, msg));
    };
    if (row.fields.size() != rows[0].fields.size()) {
      fail(fmt::format("expected {} fields, got {}", rows[0].fields.size(), row.fields.size()));
    }
    auto number = [&](const std::string& s, const char* col) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (s.empty() || pos != s.size() || !std::isfinite(v)) fail(fmt::format("bad {} '{}'", col, s));
      return v;
    };
    PredictionRecord r;
    r.subject_id = row.fields[0];
    const double real = number(row.fields[1], "real_age");
    if (real != std::floor(real) || real < 0 || real > 100) fail("real_age must be an integer in [0,100]");
    r.real_age = static_cast<int>(real);
    r.estimated_age = number(row.fields[2], "estimated_age");
    if (r.estimated_age < 0 || r.estimated_age > 100) fail("estimated_age outside [0,100]");
    if (has_votes && !row.fields[3].empty()) {
      r.votes = VoteStats{number(row.fields[3], "vote_mean"), number(row.fields[4], "vote_stddev")};
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open predictions '" + path + "'");
  return read_predictions(in);
}

}  // namespace agest
