#include "bwsemo/oracle.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "bwsemo/errors.hpp"
#include "bwsemo/sha256.hpp"

namespace bwsemo {

using json = nlohmann::json;

namespace {

constexpr double kEmbodiedLogit = 2.1972245773362196;  // log(0.9 / 0.1)

std::mt19937_64 seeded_rng(const std::string& material) {
  std::string digest = sha256_hex(material);
  return std::mt19937_64(std::stoull(digest.substr(0, 16), nullptr, 16));
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string strip(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool starts_with(const std::string& s, std::string_view prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

const PerEmotion<double>& latent_of(const OracleProfile& profile, const std::string& id) {
  auto it = profile.latent.find(id);
  if (it == profile.latent.end()) throw std::out_of_range("oracle: no latent intensities for '" + id + "'");
  return it->second;
}

}  // namespace

OracleProfile load_oracle_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read oracle profile '" + path.string() + "'");
  OracleProfile p;
  try {
    json j = json::parse(in);
    p.seed = j.value("seed", std::uint64_t{0});
    p.noise_sd = j.value("noise_sd", 0.0);
    if (p.noise_sd < 0) throw ConfigError("oracle profile: noise_sd must be non-negative");
    const json latent = j.value("latent", json::object());
    for (const auto& [id, emotions] : latent.items()) {
      PerEmotion<double> values{};
      PerEmotion<bool> present{};
      for (const auto& [name, v] : emotions.items()) {
        auto e = parse_emotion(name);
        if (!e) throw ConfigError("oracle profile: unknown emotion '" + name + "' for '" + id + "'");
        values[index_of(*e)] = v.get<double>();
        present[index_of(*e)] = true;
      }
      if (std::find(present.begin(), present.end(), false) != present.end()) {
        throw ConfigError("oracle profile: '" + id + "' lacks a latent for some emotion");
      }
      p.latent.emplace(id, values);
    }
    const json embodied = j.value("embodied", json::object());
    for (const auto& [id, v] : embodied.items()) {
      p.embodied.emplace(id, v.get<bool>());
    }
  } catch (const json::exception& e) {
    throw ConfigError("oracle profile '" + path.string() + "': " + e.what());
  }
  return p;
}

void save_oracle_profile(const OracleProfile& profile, const std::filesystem::path& path) {
  json j;
  j["seed"] = profile.seed;
  j["noise_sd"] = profile.noise_sd;
  j["latent"] = json::object();
  for (const auto& [id, values] : profile.latent) {
    json row;
    for (Emotion e : kAllEmotions) row[std::string(to_string(e))] = values[index_of(e)];
    j["latent"][id] = row;
  }
  j["embodied"] = profile.embodied;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write oracle profile '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

OracleProfile profile_from_gold(const Dataset& ds, std::uint64_t seed, double noise_sd,
                                double distractor_max) {
  OracleProfile p;
  p.seed = seed;
  p.noise_sd = noise_sd;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> distractor(0.0, distractor_max);
  for (const auto& r : ds.records()) {
    PerEmotion<double> values{};
    for (Emotion e : kAllEmotions) {
      values[index_of(e)] = (r.gold_emotion && *r.gold_emotion == e) ? 1.0 : distractor(rng);
    }
    p.latent.emplace(r.id, values);
    if (r.gold_embodied) p.embodied.emplace(r.id, *r.gold_embodied);
  }
  return p;
}

std::string oracle_bws_answer(const std::array<std::string, 4>& tuple_ids, Emotion emotion,
                              const OracleProfile& profile) {
  std::string material = std::to_string(profile.seed) + "|bws|" + std::string(to_string(emotion));
  for (const auto& id : tuple_ids) material += "|" + id;
  auto rng = seeded_rng(material);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::array<double, 4> intensity{};
  for (std::size_t i = 0; i < 4; ++i) {
    double z = noise(rng);
    intensity[i] = latent_of(profile, tuple_ids[i])[index_of(emotion)] + profile.noise_sd * z;
  }
  std::size_t most = 0;
  std::size_t least = 0;
  for (std::size_t i = 1; i < 4; ++i) {
    const auto& id = tuple_ids[i];
    if (intensity[i] > intensity[most] ||
        (intensity[i] == intensity[most] && id < tuple_ids[most])) {
      most = i;
    }
    if (intensity[i] < intensity[least] ||
        (intensity[i] == intensity[least] && id > tuple_ids[least])) {
      least = i;
    }
  }
  std::string name(to_string(emotion));
  return "Most " + name + " Example: " + tuple_ids[most] + "\nLeast " + name +
         " Example: " + tuple_ids[least];
}

OracleAnnotator::OracleAnnotator(const Dataset& dataset, OracleProfile profile,
                                 bool supports_logprobs)
    : dataset_(dataset), profile_(std::move(profile)), supports_logprobs_(supports_logprobs) {
  for (const auto& r : dataset_.records()) by_text_.emplace(std::pair{r.sentence, r.body_part}, r.id);
}

std::string OracleAnnotator::backend_id() const {
  std::ostringstream os;
  os << "oracle:seed=" << profile_.seed << ",noise=" << profile_.noise_sd;
  return os.str();
}

const InstanceRecord* OracleAnnotator::locate(const std::string& prompt) const {
  std::string sentence;
  std::string body_part;
  for (const auto& line : split_lines(prompt)) {
    std::string s = strip(line);
    if (starts_with(s, "Sentence: ")) sentence = s.substr(10);
    if (starts_with(s, "Body part: ")) body_part = s.substr(11);
  }
  auto it = by_text_.find({sentence, body_part});
  return it == by_text_.end() ? nullptr : dataset_.find(it->second);
}

double OracleAnnotator::embodied_margin(const InstanceRecord& r) const {
  bool embodied;
  if (auto it = profile_.embodied.find(r.id); it != profile_.embodied.end()) {
    embodied = it->second;
  } else if (r.gold_embodied) {
    embodied = *r.gold_embodied;
  } else {
    throw std::out_of_range("oracle: no embodied label for '" + r.id + "'");
  }
  auto rng = seeded_rng(std::to_string(profile_.seed) + "|embodied|" + r.id);
  std::normal_distribution<double> noise(0.0, 1.0);
  double z = noise(rng);
  return (embodied ? kEmbodiedLogit : -kEmbodiedLogit) + profile_.noise_sd * z;
}

std::string OracleAnnotator::complete(const std::string& prompt, const DecodeParams&) {
  auto lines = split_lines(prompt);

  std::vector<std::string> example_ids;
  std::optional<Emotion> bws_emotion;
  for (const auto& line : lines) {
    std::string s = strip(line);
    if (starts_with(s, "Example: ")) example_ids.push_back(strip(s.substr(9)));
    if (starts_with(s, "Most ") && s.ends_with(" Example:")) {
      bws_emotion = parse_emotion(s.substr(5, s.size() - 5 - 9));
    }
  }
  if (bws_emotion) {
    if (example_ids.size() != 4) return "I am unable to rank these examples.";
    std::array<std::string, 4> ids{example_ids[0], example_ids[1], example_ids[2], example_ids[3]};
    return oracle_bws_answer(ids, *bws_emotion, profile_);
  }

  const InstanceRecord* r = locate(prompt);
  if (!r) return "I cannot find the sentence in question.";

  if (prompt.find("Classify the emotion") != std::string::npos) {
    const auto& latent = latent_of(profile_, r->id);
    auto rng = seeded_rng(std::to_string(profile_.seed) + "|classify|" + r->id);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::size_t best = 0;
    double best_v = 0;
    for (std::size_t i = 0; i < kEmotionCount; ++i) {
      double v = latent[i] + profile_.noise_sd * noise(rng);
      if (i == 0 || v > best_v) {
        best = i;
        best_v = v;
      }
    }
    return " " + std::string(to_string(kAllEmotions[best]));
  }

  bool embodied = embodied_margin(*r) >= 0;
  std::string trimmed = prompt;
  while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) {
    trimmed.pop_back();
  }
  if (trimmed.ends_with("Answer:")) return embodied ? " True" : " False";

  std::string verdict = embodied ? "True" : "False";
  return "1. The body part mentioned is \"" + r->body_part + "\".\n" +
         (embodied ? "2. Its movement is caused by emotion.\n"
                     "3. The movement serves no purpose other than expressing that emotion.\n"
                   : "2. The movement is not purely an expression of emotion.\n") +
         "Therefore, the answer is \"" + verdict + ".\"";
}

LogprobMap OracleAnnotator::choice_logprob(const ChoiceQuery& query, const DecodeParams&) {
  query.validate();
  if (!supports_logprobs_) throw UnsupportedError("oracle configured without logprob support");
  const InstanceRecord* r = locate(query.prompt);
  if (!r) throw std::out_of_range("oracle: prompt does not reference a known record");
  double margin = embodied_margin(*r);
  // log sigmoid(+/- margin), computed stably
  auto log_sigmoid = [](double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); };
  LogprobMap out;
  for (const auto& c : query.candidates) {
    std::string lc;
    for (char ch : c) lc.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    if (lc == "true") {
      out[c] = log_sigmoid(margin);
    } else if (lc == "false") {
      out[c] = log_sigmoid(-margin);
    } else {
      out[c] = std::log(1e-6);
    }
  }
  return out;
}

}  // namespace bwsemo
