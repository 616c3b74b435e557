#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bwsemo {

/// Label universes used by the two tasks.
std::vector<std::string> emotion_universe();
std::vector<std::string> detection_universe();  // {"EE", "Neutral"}

struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> counts;  // [gold][predicted]
  std::size_t missing = 0;                       // pairs without a prediction

  std::size_t total() const;
  std::size_t trace() const;
};

/// Tallies (gold, predicted) pairs. Pairs whose prediction is absent are
/// excluded and counted in `missing`. Throws std::invalid_argument on length
/// mismatch, empty input, or a label outside `universe`.
ConfusionMatrix confusion(std::span<const std::string> gold,
                          std::span<const std::optional<std::string>> pred,
                          std::vector<std::string> universe);
ConfusionMatrix confusion(std::span<const std::string> gold, std::span<const std::string> pred,
                          std::vector<std::string> universe);

struct LabelMetrics {
  std::string label;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;
};

struct ClassMetrics {
  std::vector<LabelMetrics> per_label;  // universe order
  double macro_f1 = 0;                  // mean over the full universe
  double accuracy = 0;

  const LabelMetrics& at(const std::string& label) const;
};

/// Precision = diag / column sum, recall = diag / row sum, 0 on empty
/// denominators. Throws std::invalid_argument for a matrix with no counts.
ClassMetrics metrics(const ConfusionMatrix& cm);

/// Percentage with one decimal, rounded half away from zero: 0.6965 -> "69.7".
std::string format_percent(double fraction);

struct RunMetadata {
  std::string run;  // row label in tables
  std::map<std::string, std::string> fields;
};

struct ReportArtifacts {
  std::string json;
  std::string csv;
  std::string markdown;
};

/// Renders the three report forms. The markdown table follows the layout of
/// the task: six-emotion F1 columns or EE/Neutral precision/recall/F1.
/// Throws std::invalid_argument for a run with no scored predictions.
ReportArtifacts report(const ClassMetrics& m, const ConfusionMatrix& cm, const RunMetadata& meta);

/// Writes `<dir>/<stem>.json`, `.csv` and `.md`. Throws std::runtime_error
/// when a file cannot be written.
void write_report(const ReportArtifacts& artifacts, const std::filesystem::path& dir,
                  const std::string& stem);

struct ScalingPoint {
  double k = 0;
  std::size_t tuples = 0;
  ClassMetrics metrics;
};

/// One row per multiplier: k, tuples, macro_f1, then per-emotion F1.
std::string scaling_csv(std::span<const ScalingPoint> points);

}  // namespace bwsemo
