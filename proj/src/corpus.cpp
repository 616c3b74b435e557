#include "bwsemo/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "bwsemo/errors.hpp"
#include "bwsemo/sha256.hpp"

namespace bwsemo {

using json = nlohmann::json;

std::string_view to_string(DatasetFormat f) { return f == DatasetFormat::Jsonl ? "jsonl" : "csv"; }

std::optional<DatasetFormat> parse_dataset_format(std::string_view s) {
  if (s == "jsonl") return DatasetFormat::Jsonl;
  if (s == "csv") return DatasetFormat::Csv;
  return std::nullopt;
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool has_placeholder_token(const std::string& text) {
  static const std::regex token(R"(<(sentence|bdypart|preceed|textid|emo)\|>)");
  return std::regex_search(text, token);
}

void validate_record(const InstanceRecord& r, bool strict, std::size_t line) {
  if (r.id.empty()) throw DatasetError("empty id", line);
  if (r.sentence.empty()) throw DatasetError("record '" + r.id + "': empty sentence", line);
  if (r.body_part.empty()) throw DatasetError("record '" + r.id + "': empty body_part", line);
  if (r.preceding.size() > kMaxPreceding) {
    throw DatasetError("record '" + r.id + "': " + std::to_string(r.preceding.size()) +
                           " preceding sentences (at most 3 allowed)",
                       line);
  }
  if (lower(r.sentence).find(lower(r.body_part)) == std::string::npos) {
    std::string msg = "record '" + r.id + "': body part '" + r.body_part + "' not found in sentence";
    if (strict) throw DatasetError(msg, line);
    spdlog::warn("{}{}", line ? "line " + std::to_string(line) + ": " : "", msg);
  }
  bool token = has_placeholder_token(r.sentence) || has_placeholder_token(r.body_part);
  for (const auto& p : r.preceding) token = token || has_placeholder_token(p);
  if (token) spdlog::warn("record '{}' contains a prompt placeholder token", r.id);
}

InstanceRecord record_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw DatasetError("expected a JSON object", line);
  auto req_string = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw DatasetError(std::string("missing or non-string field '") + key + "'", line);
    }
    return it->get<std::string>();
  };
  InstanceRecord r;
  r.id = req_string("id");
  r.sentence = req_string("sentence");
  r.body_part = req_string("body_part");
  if (auto it = j.find("preceding"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw DatasetError("'preceding' must be an array", line);
    for (const auto& p : *it) {
      if (!p.is_string()) throw DatasetError("'preceding' entries must be strings", line);
      r.preceding.push_back(p.get<std::string>());
    }
  }
  if (auto it = j.find("gold_emotion"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw DatasetError("'gold_emotion' must be a string", line);
    auto e = parse_emotion(it->get<std::string>());
    if (!e) throw DatasetError("unknown gold_emotion '" + it->get<std::string>() + "'", line);
    r.gold_emotion = *e;
  }
  if (auto it = j.find("gold_embodied"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) throw DatasetError("'gold_embodied' must be a boolean", line);
    r.gold_embodied = it->get<bool>();
  }
  return r;
}

json record_to_json(const InstanceRecord& r) {
  json j;
  j["id"] = r.id;
  j["sentence"] = r.sentence;
  j["body_part"] = r.body_part;
  j["preceding"] = r.preceding;
  if (r.gold_emotion) j["gold_emotion"] = std::string(to_string(*r.gold_emotion));
  if (r.gold_embodied) j["gold_embodied"] = *r.gold_embodied;
  return j;
}

// Reads one RFC 4180 record. Returns false at end of input. `line` is advanced
// past every physical line consumed.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      // tolerate CRLF
    } else if (c == '\n') {
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) throw DatasetError("unterminated quoted field", line + 1);
  if (!any) return false;
  ++line;
  fields.push_back(std::move(field));
  return true;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<std::string> split_preceding(const std::string& cell) {
  std::vector<std::string> out;
  if (cell.empty()) return out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = cell.find(kCsvPrecedingSeparator, start);
    out.push_back(cell.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + kCsvPrecedingSeparator.size();
  }
  return out;
}

std::vector<InstanceRecord> parse_jsonl(std::istream& in, std::vector<std::size_t>& lines) {
  std::vector<InstanceRecord> records;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DatasetError(std::string("malformed JSON: ") + e.what(), line);
    }
    records.push_back(record_from_json(j, line));
    lines.push_back(line);
  }
  return records;
}

std::vector<InstanceRecord> parse_csv(std::istream& in, std::vector<std::size_t>& lines) {
  std::vector<InstanceRecord> records;
  std::vector<std::string> fields;
  std::size_t line = 0;
  if (!read_csv_record(in, fields, line)) throw DatasetError("empty CSV file");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
  for (const char* required : {"id", "sentence", "body_part"}) {
    if (!col.count(required)) throw DatasetError(std::string("CSV header lacks '") + required + "'", 1);
  }
  auto cell = [&](const char* name) -> std::optional<std::string> {
    auto it = col.find(name);
    if (it == col.end() || it->second >= fields.size()) return std::nullopt;
    return fields[it->second];
  };
  while (true) {
    std::size_t row_line = line + 1;
    if (!read_csv_record(in, fields, line)) break;
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != col.size()) {
      throw DatasetError("expected " + std::to_string(col.size()) + " columns, got " +
                             std::to_string(fields.size()),
                         row_line);
    }
    InstanceRecord r;
    r.id = *cell("id");
    r.sentence = *cell("sentence");
    r.body_part = *cell("body_part");
    if (auto p = cell("preceding")) r.preceding = split_preceding(*p);
    if (auto g = cell("gold_emotion"); g && !g->empty()) {
      auto e = parse_emotion(*g);
      if (!e) throw DatasetError("unknown gold_emotion '" + *g + "'", row_line);
      r.gold_emotion = *e;
    }
    if (auto g = cell("gold_embodied"); g && !g->empty()) {
      std::string v = lower(*g);
      if (v == "true" || v == "1") {
        r.gold_embodied = true;
      } else if (v == "false" || v == "0") {
        r.gold_embodied = false;
      } else {
        throw DatasetError("bad gold_embodied '" + *g + "'", row_line);
      }
    }
    records.push_back(std::move(r));
    lines.push_back(row_line);
  }
  return records;
}

}  // namespace

Dataset::Dataset(std::vector<InstanceRecord> records, std::string source_path, DatasetFormat format,
                 bool strict)
    : records_(std::move(records)), source_path_(std::move(source_path)), format_(format) {
  if (records_.empty()) throw DatasetError("dataset is empty");
  for (std::size_t i = 0; i < records_.size(); ++i) {
    validate_record(records_[i], strict, 0);
    if (!index_.emplace(records_[i].id, i).second) {
      throw DatasetError("duplicate id '" + records_[i].id + "'");
    }
  }
}

Dataset::Dataset(Prevalidated, std::vector<InstanceRecord> records, std::string source_path,
                 DatasetFormat format)
    : records_(std::move(records)), source_path_(std::move(source_path)), format_(format) {
  for (std::size_t i = 0; i < records_.size(); ++i) index_.emplace(records_[i].id, i);
}

const InstanceRecord* Dataset::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.id);
  return out;
}

Dataset parse_dataset(std::istream& in, DatasetFormat format, bool strict,
                      const std::string& source_name) {
  std::vector<std::size_t> lines;
  auto records = format == DatasetFormat::Jsonl ? parse_jsonl(in, lines) : parse_csv(in, lines);
  // Row-level checks first so errors carry the line number.
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    validate_record(records[i], strict, lines[i]);
    auto [it, fresh] = seen.emplace(records[i].id, lines[i]);
    if (!fresh) {
      throw DatasetError("duplicate id '" + records[i].id + "' (first seen on line " +
                             std::to_string(it->second) + ")",
                         lines[i]);
    }
  }
  if (records.empty()) throw DatasetError(source_name + ": no records");
  return Dataset(Dataset::Prevalidated{}, std::move(records), source_name, format);
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format, bool strict) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset file '" + path.string() + "'");
  return parse_dataset(in, format, strict, path.string());
}

void write_dataset(const Dataset& ds, std::ostream& out, DatasetFormat format) {
  if (format == DatasetFormat::Jsonl) {
    for (const auto& r : ds.records()) out << record_to_json(r).dump() << '\n';
    return;
  }
  out << "id,sentence,body_part,preceding,gold_emotion,gold_embodied\n";
  for (const auto& r : ds.records()) {
    std::string preceding;
    for (std::size_t i = 0; i < r.preceding.size(); ++i) {
      if (i) preceding += kCsvPrecedingSeparator;
      preceding += r.preceding[i];
    }
    out << csv_escape(r.id) << ',' << csv_escape(r.sentence) << ',' << csv_escape(r.body_part)
        << ',' << csv_escape(preceding) << ','
        << (r.gold_emotion ? std::string(to_string(*r.gold_emotion)) : std::string()) << ','
        << (r.gold_embodied ? (*r.gold_embodied ? "true" : "false") : "") << '\n';
  }
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path, DatasetFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write dataset file '" + path.string() + "'");
  write_dataset(ds, out, format);
}

std::string dataset_digest(const Dataset& ds) {
  std::ostringstream os;
  write_dataset(ds, os, DatasetFormat::Jsonl);
  return sha256_hex(os.str());
}

LabelDistribution distribution(const Dataset& ds) {
  LabelDistribution dist;
  for (const auto& r : ds.records()) {
    if (!r.gold_emotion) continue;
    ++dist.counts[index_of(*r.gold_emotion)];
    ++dist.labeled;
  }
  if (dist.labeled == 0) throw DatasetError("no records carry a gold emotion");
  for (std::size_t i = 0; i < kEmotionCount; ++i) {
    dist.proportions[i] = static_cast<double>(dist.counts[i]) / static_cast<double>(dist.labeled);
  }
  return dist;
}

double cohen_kappa(std::span<const std::string> labels_a, std::span<const std::string> labels_b) {
  if (labels_a.size() != labels_b.size()) {
    throw std::invalid_argument("cohen_kappa: length mismatch (" + std::to_string(labels_a.size()) +
                                " vs " + std::to_string(labels_b.size()) + ")");
  }
  if (labels_a.empty()) throw std::invalid_argument("cohen_kappa: empty label lists");
  const double n = static_cast<double>(labels_a.size());
  std::map<std::string, std::pair<std::size_t, std::size_t>> marginals;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    ++marginals[labels_a[i]].first;
    ++marginals[labels_b[i]].second;
    if (labels_a[i] == labels_b[i]) ++agree;
  }
  if (agree == labels_a.size()) return 1.0;
  const double p_o = static_cast<double>(agree) / n;
  double p_e = 0.0;
  for (const auto& [label, m] : marginals) {
    p_e += (static_cast<double>(m.first) / n) * (static_cast<double>(m.second) / n);
  }
  if (p_e >= 1.0) throw std::invalid_argument("cohen_kappa: undefined (chance agreement is 1)");
  return (p_o - p_e) / (1.0 - p_e);
}

}  // namespace bwsemo
