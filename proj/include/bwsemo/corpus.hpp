#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bwsemo/emotion.hpp"

namespace bwsemo {

inline constexpr std::size_t kMaxPreceding = 3;

/// Separator used for the preceding-context column in CSV files.
inline constexpr std::string_view kCsvPrecedingSeparator = "|||";

struct InstanceRecord {
  std::string id;
  std::string sentence;
  std::string body_part;
  std::vector<std::string> preceding;  // earliest first, at most 3
  std::optional<Emotion> gold_emotion;
  std::optional<bool> gold_embodied;

  bool operator==(const InstanceRecord&) const = default;
};

enum class DatasetFormat { Jsonl, Csv };

std::string_view to_string(DatasetFormat f);
std::optional<DatasetFormat> parse_dataset_format(std::string_view s);

class Dataset;
Dataset parse_dataset(std::istream& in, DatasetFormat format, bool strict,
                      const std::string& source_name = "<stream>");

class Dataset {
 public:
  /// Validates every record and id uniqueness. With `strict`, a body part
  /// that does not occur in its sentence is an error instead of a warning.
  Dataset(std::vector<InstanceRecord> records, std::string source_path = {},
          DatasetFormat format = DatasetFormat::Jsonl, bool strict = false);

  const std::vector<InstanceRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const InstanceRecord& operator[](std::size_t i) const { return records_[i]; }

  const InstanceRecord* find(const std::string& id) const;
  bool contains(const std::string& id) const { return find(id) != nullptr; }

  const std::string& source_path() const { return source_path_; }
  DatasetFormat format() const { return format_; }

  std::vector<std::string> ids() const;

  bool operator==(const Dataset& o) const { return records_ == o.records_; }

 private:
  friend Dataset parse_dataset(std::istream&, DatasetFormat, bool, const std::string&);
  struct Prevalidated {};
  Dataset(Prevalidated, std::vector<InstanceRecord> records, std::string source_path,
          DatasetFormat format);

  std::vector<InstanceRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
  std::string source_path_;
  DatasetFormat format_;
};

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format, bool strict);
void write_dataset(const Dataset& ds, std::ostream& out, DatasetFormat format);
void save_dataset(const Dataset& ds, const std::filesystem::path& path, DatasetFormat format);

/// Hex SHA-256 of the canonical JSONL serialization.
std::string dataset_digest(const Dataset& ds);

struct LabelDistribution {
  PerEmotion<std::size_t> counts{};
  PerEmotion<double> proportions{};
  std::size_t labeled = 0;
};

/// Gold-emotion distribution over labeled records only. Throws DatasetError
/// when no record carries a gold emotion.
LabelDistribution distribution(const Dataset& ds);

/// Cohen's kappa between two aligned label sequences.
///
/// Returns exactly 1 when the sequences agree everywhere (including the
/// degenerate case where chance agreement is also 1). Throws
/// std::invalid_argument on length mismatch, empty input, or when chance
/// agreement is 1 without perfect observed agreement.
double cohen_kappa(std::span<const std::string> labels_a, std::span<const std::string> labels_b);

}  // namespace bwsemo
