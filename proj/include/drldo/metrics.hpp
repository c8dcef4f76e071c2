#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "drldo/agent.hpp"
#include "drldo/errors.hpp"
#include "drldo/stats.hpp"
#include "drldo/text_io.hpp"

namespace drldo {

/// One greedy-evaluation result for a repository variant.
struct EvaluationRow {
  std::string variant_id;
  double p_malicious_before = 0.0;
  double p_malicious_after = 0.0;
  double sim_to_original = 0.0;
  double sim_to_obfuscated = 0.0;
};

struct MetricsLog {
  std::vector<EpisodeMetrics> episodes;
  std::vector<EvaluationRow> evaluations;

  void validate() const {
    for (const auto& e : episodes)
      if (e.final_p_malicious < 0.0 || e.final_p_malicious > 1.0)
        throw ParameterError("metrics: episode probability out of [0, 1]");
    for (const auto& row : evaluations) {
      if (row.p_malicious_before < 0.0 || row.p_malicious_before > 1.0 ||
          row.p_malicious_after < 0.0 || row.p_malicious_after > 1.0)
        throw ParameterError("metrics: evaluation probability out of [0, 1]");
      if (row.sim_to_original < -1.0 || row.sim_to_original > 1.0 ||
          row.sim_to_obfuscated < -1.0 || row.sim_to_obfuscated > 1.0)
        throw ParameterError("metrics: similarity out of [-1, 1]");
    }
  }
};

struct ReportConfig {
  int moving_average_window = 100;
  int probability_bins = 20;
  int similarity_bins = 40;

  bool operator==(const ReportConfig& other) const = default;
};

/// Aggregate evaluation statistics plus the plot-ready histogram tables.
struct EvaluationReport {
  int n_variants = 0;
  double mean_p_after = 0.0;
  double median_p_after = 0.0;
  double fraction_detected = 0.0;  // p_after > 0.5
  double mean_sim_to_original = 0.0;
  double mean_sim_to_obfuscated = 0.0;
  std::vector<HistogramBin> hist_p_after;
  std::vector<HistogramBin> hist_sim_to_original;
  std::vector<HistogramBin> hist_sim_to_obfuscated;
};

/// Plot-ready series and tables derived from a metrics log.
struct ReportTables {
  std::vector<double> ma_final_p_malicious;
  std::vector<double> ma_total_reward;
  std::vector<double> ma_total_discounted_reward;
  std::vector<double> ma_last_reward;
  EvaluationReport evaluation;
};

inline EvaluationReport build_evaluation_report(
    const std::vector<EvaluationRow>& rows, const ReportConfig& cfg) {
  if (rows.empty())
    throw ParameterError("evaluation report: no evaluation rows");
  EvaluationReport report;
  report.n_variants = static_cast<int>(rows.size());
  std::vector<double> p_after(rows.size());
  std::vector<double> sim_orig(rows.size());
  std::vector<double> sim_obf(rows.size());
  int detected = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    p_after[i] = rows[i].p_malicious_after;
    sim_orig[i] = rows[i].sim_to_original;
    sim_obf[i] = rows[i].sim_to_obfuscated;
    report.mean_p_after += p_after[i];
    report.mean_sim_to_original += sim_orig[i];
    report.mean_sim_to_obfuscated += sim_obf[i];
    if (p_after[i] > 0.5) ++detected;
  }
  const auto n = static_cast<double>(rows.size());
  report.mean_p_after /= n;
  report.mean_sim_to_original /= n;
  report.mean_sim_to_obfuscated /= n;
  report.fraction_detected = static_cast<double>(detected) / n;
  std::vector<double> sorted = p_after;
  std::sort(sorted.begin(), sorted.end());
  report.median_p_after = sorted.size() % 2 == 1
                              ? sorted[sorted.size() / 2]
                              : 0.5 * (sorted[sorted.size() / 2 - 1] +
                                       sorted[sorted.size() / 2]);
  const auto prob_bins = static_cast<std::size_t>(cfg.probability_bins);
  const auto sim_bins = static_cast<std::size_t>(cfg.similarity_bins);
  report.hist_p_after = histogram(p_after, prob_bins, 0.0, 1.0);
  report.hist_sim_to_original = histogram(sim_orig, sim_bins, -1.0, 1.0);
  report.hist_sim_to_obfuscated = histogram(sim_obf, sim_bins, -1.0, 1.0);
  return report;
}

/// Computes every report table from the log (moving averages over the
/// training series, histograms over the evaluation rows).
inline ReportTables build_report(const MetricsLog& log,
                                 const ReportConfig& cfg) {
  if (log.episodes.empty() || log.evaluations.empty())
    throw ParameterError("report: metrics log is empty");
  if (cfg.moving_average_window <= 0 || cfg.probability_bins <= 0 ||
      cfg.similarity_bins <= 0)
    throw ParameterError("report: window and bin counts must be positive");
  log.validate();
  ReportTables tables;
  const auto window = static_cast<std::size_t>(cfg.moving_average_window);
  auto series = [&](auto&& get) {
    std::vector<double> values(log.episodes.size());
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] = get(log.episodes[i]);
    return moving_average(values, window);
  };
  tables.ma_final_p_malicious =
      series([](const EpisodeMetrics& e) { return e.final_p_malicious; });
  tables.ma_total_reward =
      series([](const EpisodeMetrics& e) { return e.total_reward; });
  tables.ma_total_discounted_reward = series(
      [](const EpisodeMetrics& e) { return e.total_discounted_reward; });
  tables.ma_last_reward =
      series([](const EpisodeMetrics& e) { return e.last_reward; });
  tables.evaluation = build_evaluation_report(log.evaluations, cfg);
  return tables;
}

// ---- CSV encodings (fixed column orders; see README) ----

inline std::string training_metrics_csv(
    const std::vector<EpisodeMetrics>& episodes) {
  std::string out =
      "episode,final_p_malicious,total_reward,total_discounted_reward,"
      "last_reward,steps_used\n";
  for (const auto& e : episodes) {
    out += std::to_string(e.episode) + "," +
           format_double(e.final_p_malicious) + "," +
           format_double(e.total_reward) + "," +
           format_double(e.total_discounted_reward) + "," +
           format_double(e.last_reward) + "," + std::to_string(e.steps_used) +
           "\n";
  }
  return out;
}

inline std::string evaluation_metrics_csv(
    const std::vector<EvaluationRow>& rows) {
  std::string out =
      "variant_id,p_malicious_before,p_malicious_after,sim_to_original,"
      "sim_to_obfuscated\n";
  for (const auto& row : rows) {
    out += row.variant_id + "," + format_double(row.p_malicious_before) + "," +
           format_double(row.p_malicious_after) + "," +
           format_double(row.sim_to_original) + "," +
           format_double(row.sim_to_obfuscated) + "\n";
  }
  return out;
}

inline std::string series_csv(const char* value_column,
                              const std::vector<double>& series) {
  std::string out = std::string("episode,") + value_column + "\n";
  for (std::size_t i = 0; i < series.size(); ++i)
    out += std::to_string(i) + "," + format_double(series[i]) + "\n";
  return out;
}

inline std::string reward_series_csv(const ReportTables& tables) {
  std::string out =
      "episode,total_reward_ma,total_discounted_reward_ma,last_reward_ma\n";
  for (std::size_t i = 0; i < tables.ma_total_reward.size(); ++i)
    out += std::to_string(i) + "," + format_double(tables.ma_total_reward[i]) +
           "," + format_double(tables.ma_total_discounted_reward[i]) + "," +
           format_double(tables.ma_last_reward[i]) + "\n";
  return out;
}

inline std::string histogram_csv(const std::vector<HistogramBin>& bins) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (const auto& bin : bins)
    out += format_double(bin.lo) + "," + format_double(bin.hi) + "," +
           std::to_string(bin.count) + "\n";
  return out;
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}
}  // namespace detail

inline std::vector<EpisodeMetrics> parse_training_metrics_csv(
    const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() ||
      lines[0] !=
          "episode,final_p_malicious,total_reward,total_discounted_reward,"
          "last_reward,steps_used")
    throw MalformedFileError("training metrics csv: bad header");
  std::vector<EpisodeMetrics> episodes;
  episodes.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = detail::split_csv_line(lines[i]);
    if (fields.size() != 6)
      throw MalformedFileError("training metrics csv: bad row " +
                               std::to_string(i));
    EpisodeMetrics e;
    e.episode = static_cast<int>(parse_int(fields[0], "episode"));
    e.final_p_malicious = parse_double(fields[1], "final_p_malicious");
    e.total_reward = parse_double(fields[2], "total_reward");
    e.total_discounted_reward =
        parse_double(fields[3], "total_discounted_reward");
    e.last_reward = parse_double(fields[4], "last_reward");
    e.steps_used = static_cast<int>(parse_int(fields[5], "steps_used"));
    episodes.push_back(e);
  }
  return episodes;
}

inline std::vector<EvaluationRow> parse_evaluation_metrics_csv(
    const std::string& text) {
  const auto lines = split_lines(text);
  if (lines.empty() ||
      lines[0] !=
          "variant_id,p_malicious_before,p_malicious_after,sim_to_original,"
          "sim_to_obfuscated")
    throw MalformedFileError("evaluation metrics csv: bad header");
  std::vector<EvaluationRow> rows;
  rows.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = detail::split_csv_line(lines[i]);
    if (fields.size() != 5)
      throw MalformedFileError("evaluation metrics csv: bad row " +
                               std::to_string(i));
    EvaluationRow row;
    row.variant_id = fields[0];
    row.p_malicious_before = parse_double(fields[1], "p_malicious_before");
    row.p_malicious_after = parse_double(fields[2], "p_malicious_after");
    row.sim_to_original = parse_double(fields[3], "sim_to_original");
    row.sim_to_obfuscated = parse_double(fields[4], "sim_to_obfuscated");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace drldo
