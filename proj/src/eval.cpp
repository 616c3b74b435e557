#include "bwsemo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "bwsemo/bws.hpp"
#include "bwsemo/emotion.hpp"

namespace bwsemo {

using json = nlohmann::json;

std::vector<std::string> emotion_universe() {
  std::vector<std::string> out;
  for (Emotion e : kAllEmotions) out.emplace_back(to_string(e));
  return out;
}

std::vector<std::string> detection_universe() { return {"EE", "Neutral"}; }

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& row : counts) {
    for (auto c : row) t += c;
  }
  return t;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
  return t;
}

ConfusionMatrix confusion(std::span<const std::string> gold,
                          std::span<const std::optional<std::string>> pred,
                          std::vector<std::string> universe) {
  if (gold.size() != pred.size()) {
    throw std::invalid_argument("confusion: " + std::to_string(gold.size()) + " gold labels vs " +
                                std::to_string(pred.size()) + " predictions");
  }
  if (gold.empty()) throw std::invalid_argument("confusion: no instances");
  auto index = [&](const std::string& label) {
    auto it = std::find(universe.begin(), universe.end(), label);
    if (it == universe.end()) throw std::invalid_argument("confusion: label '" + label + "' not in universe");
    return static_cast<std::size_t>(it - universe.begin());
  };
  ConfusionMatrix cm;
  cm.counts.assign(universe.size(), std::vector<std::size_t>(universe.size(), 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::size_t g = index(gold[i]);
    if (!pred[i]) {
      ++cm.missing;
      continue;
    }
    ++cm.counts[g][index(*pred[i])];
  }
  cm.labels = std::move(universe);
  return cm;
}

ConfusionMatrix confusion(std::span<const std::string> gold, std::span<const std::string> pred,
                          std::vector<std::string> universe) {
  std::vector<std::optional<std::string>> wrapped(pred.begin(), pred.end());
  return confusion(gold, wrapped, std::move(universe));
}

const LabelMetrics& ClassMetrics::at(const std::string& label) const {
  for (const auto& m : per_label) {
    if (m.label == label) return m;
  }
  throw std::out_of_range("no metrics for label '" + label + "'");
}

ClassMetrics metrics(const ConfusionMatrix& cm) {
  const std::size_t n = cm.labels.size();
  const std::size_t total = cm.total();
  if (n == 0 || total == 0) throw std::invalid_argument("metrics: empty confusion matrix");
  ClassMetrics out;
  double f1_sum = 0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t row = 0;
    std::size_t col = 0;
    for (std::size_t j = 0; j < n; ++j) {
      row += cm.counts[k][j];
      col += cm.counts[j][k];
    }
    const double tp = static_cast<double>(cm.counts[k][k]);
    LabelMetrics m;
    m.label = cm.labels[k];
    m.support = row;
    m.precision = col ? tp / static_cast<double>(col) : 0.0;
    m.recall = row ? tp / static_cast<double>(row) : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    f1_sum += m.f1;
    out.per_label.push_back(std::move(m));
  }
  out.macro_f1 = f1_sum / static_cast<double>(n);
  out.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  return out;
}

std::string format_percent(double fraction) {
  double tenths = std::round(fraction * 1000.0);  // half away from zero
  if (tenths == 0) tenths = 0;                    // no "-0.0"
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << tenths / 10.0;
  return os.str();
}

namespace {

const std::vector<std::pair<std::string, std::string>>& emotion_columns() {
  static const std::vector<std::pair<std::string, std::string>> cols = {
      {"F1-J", "Joy"}, {"F1-Sa", "Sadness"}, {"F1-F", "Fear"},
      {"F1-A", "Anger"}, {"F1-D", "Disgust"}, {"F1-Su", "Surprise"}};
  return cols;
}

std::string markdown_table(const ClassMetrics& m, const ConfusionMatrix& cm, const RunMetadata& meta) {
  std::ostringstream os;
  const std::string run = meta.run.empty() ? "run" : meta.run;
  if (cm.labels == emotion_universe()) {
    os << "| Model | F1 |";
    for (const auto& [col, label] : emotion_columns()) os << ' ' << col << " |";
    os << "\n|---|---|---|---|---|---|---|---|\n";
    os << "| " << run << " | " << format_percent(m.macro_f1) << " |";
    for (const auto& [col, label] : emotion_columns()) os << ' ' << format_percent(m.at(label).f1) << " |";
    os << '\n';
  } else if (cm.labels == detection_universe()) {
    os << "| Model | Macro F1 | EE Pre | EE Rec | EE F1 | Neutral Pre | Neutral Rec | Neutral F1 |\n";
    os << "|---|---|---|---|---|---|---|---|\n";
    const auto& ee = m.at("EE");
    const auto& ne = m.at("Neutral");
    os << "| " << run << " | " << format_percent(m.macro_f1) << " | " << format_percent(ee.precision)
       << " | " << format_percent(ee.recall) << " | " << format_percent(ee.f1) << " | "
       << format_percent(ne.precision) << " | " << format_percent(ne.recall) << " | "
       << format_percent(ne.f1) << " |\n";
  } else {
    os << "| Model | Macro F1 |";
    for (const auto& l : m.per_label) os << ' ' << l.label << " Pre | " << l.label << " Rec | " << l.label << " F1 |";
    os << "\n|---|---|";
    for (std::size_t i = 0; i < m.per_label.size(); ++i) os << "---|---|---|";
    os << "\n| " << run << " | " << format_percent(m.macro_f1) << " |";
    for (const auto& l : m.per_label) {
      os << ' ' << format_percent(l.precision) << " | " << format_percent(l.recall) << " | "
         << format_percent(l.f1) << " |";
    }
    os << '\n';
  }

  os << "\nConfusion matrix (rows: gold, columns: predicted)\n\n| gold \\ pred |";
  for (const auto& l : cm.labels) os << ' ' << l << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < cm.labels.size(); ++i) os << "---|";
  os << '\n';
  for (std::size_t g = 0; g < cm.labels.size(); ++g) {
    os << "| " << cm.labels[g] << " |";
    for (auto c : cm.counts[g]) os << ' ' << c << " |";
    os << '\n';
  }
  os << "\nScored: " << cm.total() << ", missing predictions: " << cm.missing << '\n';
  return os.str();
}

}  // namespace

ReportArtifacts report(const ClassMetrics& m, const ConfusionMatrix& cm, const RunMetadata& meta) {
  if (cm.total() == 0) throw std::invalid_argument("report: no scored predictions");
  ReportArtifacts out;

  json j;
  j["run"] = meta.run;
  j["metadata"] = meta.fields;
  j["macro_f1"] = m.macro_f1;
  j["accuracy"] = m.accuracy;
  j["scored"] = cm.total();
  j["missing"] = cm.missing;
  j["per_label"] = json::array();
  for (const auto& l : m.per_label) {
    j["per_label"].push_back({{"label", l.label},
                              {"precision", l.precision},
                              {"recall", l.recall},
                              {"f1", l.f1},
                              {"support", l.support}});
  }
  j["confusion"] = {{"labels", cm.labels}, {"counts", cm.counts}};
  out.json = j.dump(2) + "\n";

  std::ostringstream csv;
  csv << "label,precision,recall,f1,support\n";
  for (const auto& l : m.per_label) {
    csv << l.label << ',' << format_double(l.precision) << ',' << format_double(l.recall) << ','
        << format_double(l.f1) << ',' << l.support << '\n';
  }
  csv << "macro,," << "," << format_double(m.macro_f1) << ',' << cm.total() << '\n';
  out.csv = csv.str();

  out.markdown = markdown_table(m, cm, meta);
  return out;
}

void write_report(const ReportArtifacts& artifacts, const std::filesystem::path& dir,
                  const std::string& stem) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  for (const auto& [ext, body] : {std::pair{".json", &artifacts.json},
                                  std::pair{".csv", &artifacts.csv},
                                  std::pair{".md", &artifacts.markdown}}) {
    auto path = dir / (stem + ext);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << *body) || !out.flush()) {
      throw std::runtime_error("cannot write report file '" + path.string() + "'");
    }
  }
}

std::string scaling_csv(std::span<const ScalingPoint> points) {
  std::ostringstream os;
  os << "k,tuples,macro_f1";
  for (const auto& [col, label] : emotion_columns()) os << ',' << col;
  os << '\n';
  for (const auto& p : points) {
    os << format_double(p.k) << ',' << p.tuples << ',' << format_double(p.metrics.macro_f1);
    for (const auto& [col, label] : emotion_columns()) os << ',' << format_double(p.metrics.at(label).f1);
    os << '\n';
  }
  return os.str();
}

}  // namespace bwsemo
