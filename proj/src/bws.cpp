#include "bwsemo/bws.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "bwsemo/parallel.hpp"

namespace bwsemo {

using json = nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

// ---------------------------------------------------------------------------
// Tuple scheduling

std::size_t tuple_count(std::size_t n_items, double multiplier) {
  double t = std::round(multiplier * static_cast<double>(n_items));
  return t < 0 ? 0 : static_cast<std::size_t>(t);
}

TuplePlan schedule_tuples(std::span<const std::string> ids, double multiplier, std::uint64_t seed) {
  const std::size_t n = ids.size();
  if (n < 4) throw std::invalid_argument("schedule_tuples: need at least 4 ids, got " + std::to_string(n));
  if (!(multiplier > 0) || !std::isfinite(multiplier)) {
    throw std::invalid_argument("schedule_tuples: multiplier must be positive");
  }
  if (std::set<std::string>(ids.begin(), ids.end()).size() != n) {
    throw std::invalid_argument("schedule_tuples: ids must be unique");
  }
  const std::size_t target = tuple_count(n, multiplier);
  if (target < 1) throw std::invalid_argument("schedule_tuples: k*N rounds to zero tuples");
  if (target * 4 < n || target < (n + 3) / 4) {
    throw std::invalid_argument("schedule_tuples: " + std::to_string(target) +
                                " tuples cannot cover " + std::to_string(n) + " ids");
  }

  TuplePlan plan;
  plan.ids.assign(ids.begin(), ids.end());
  plan.multiplier = multiplier;
  plan.seed = seed;
  plan.tuples.reserve(target);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> used(n, 0);

  auto emit = [&](const std::vector<std::size_t>& group) {
    Tuple t;
    for (std::size_t i = 0; i < 4; ++i) {
      t[i] = ids[group[i]];
      ++used[group[i]];
    }
    plan.tuples.push_back(std::move(t));
  };

  while (plan.tuples.size() < target) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t g = 0; g < n && plan.tuples.size() < target; g += 4) {
      std::vector<std::size_t> group(order.begin() + g, order.begin() + std::min(g + 4, n));
      if (group.size() < 4) {
        std::vector<std::size_t> outside(order.begin(), order.begin() + g);
        std::shuffle(outside.begin(), outside.end(), rng);
        std::stable_sort(outside.begin(), outside.end(),
                         [&](std::size_t a, std::size_t b) { return used[a] < used[b]; });
        for (std::size_t i = 0; group.size() < 4; ++i) group.push_back(outside[i]);
      }
      emit(group);
    }
  }

  for (std::size_t i = 0; i < n; ++i) plan.occurrence[ids[i]] = used[i];
  return plan;
}

json to_json(const TuplePlan& plan) {
  json j;
  j["ids"] = plan.ids;
  j["k"] = plan.multiplier;
  j["seed"] = plan.seed;
  j["tuples"] = json::array();
  for (const auto& t : plan.tuples) j["tuples"].push_back(json(t));
  return j;
}

TuplePlan tuple_plan_from_json(const json& j) {
  TuplePlan plan;
  plan.ids = j.at("ids").get<std::vector<std::string>>();
  plan.multiplier = j.at("k").get<double>();
  plan.seed = j.at("seed").get<std::uint64_t>();
  std::set<std::string> known(plan.ids.begin(), plan.ids.end());
  for (const auto& id : plan.ids) plan.occurrence[id] = 0;
  for (const auto& row : j.at("tuples")) {
    auto t = row.get<Tuple>();
    if (std::set<std::string>(t.begin(), t.end()).size() != 4) {
      throw std::invalid_argument("tuple plan: tuple with repeated ids");
    }
    for (const auto& id : t) {
      if (!known.count(id)) throw std::invalid_argument("tuple plan: unknown id '" + id + "'");
      ++plan.occurrence[id];
    }
    plan.tuples.push_back(std::move(t));
  }
  return plan;
}

std::vector<double> k_preset(std::string_view name) {
  if (name == "paper") return {4, 12, 24, 36, 48, 72};
  if (name == "fifty-percent") {
    std::vector<double> ks;
    for (double k = 2; k <= 72; k *= 1.5) ks.push_back(k);
    return ks;
  }
  throw std::invalid_argument("unknown k preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Response parsing

std::string_view to_string(BwsParseFailure f) {
  switch (f) {
    case BwsParseFailure::MissingLine: return "missing_line";
    case BwsParseFailure::IdNotInTuple: return "id_not_in_tuple";
    case BwsParseFailure::SameId: return "same_id";
    case BwsParseFailure::ConflictingIds: return "conflicting_ids";
  }
  return "unknown";
}

namespace {

struct LineValue {
  bool found = false;
  std::string value;
};

LineValue last_answer_line(std::string_view raw, const std::regex& pattern) {
  LineValue out;
  std::size_t start = 0;
  while (start <= raw.size()) {
    std::size_t end = raw.find('\n', start);
    if (end == std::string_view::npos) end = raw.size();
    std::string line(raw.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (std::regex_match(line, m, pattern)) {
      out.found = true;
      out.value = m[1].str();
    }
    start = end + 1;
  }
  return out;
}

std::string strip_punct(const std::string& token) {
  static const std::string punct = ".,;:!?\"'()[]{}<>*#`_~|";
  auto b = token.find_first_not_of(punct);
  if (b == std::string::npos) return {};
  auto e = token.find_last_not_of(punct);
  return token.substr(b, e - b + 1);
}

struct Resolution {
  std::optional<std::string> id;
  std::optional<BwsParseFailure> failure;
  std::string detail;
};

Resolution resolve(const LineValue& line, const Tuple& tuple, std::string_view which) {
  Resolution r;
  if (!line.found) {
    r.failure = BwsParseFailure::MissingLine;
    r.detail = std::string("no '") + std::string(which) + " ... Example:' line";
    return r;
  }
  std::vector<std::string> matches;
  std::istringstream in(line.value);
  std::string token;
  bool any = false;
  while (in >> token) {
    std::string bare = strip_punct(token);
    if (bare.empty()) continue;
    any = true;
    if (std::find(tuple.begin(), tuple.end(), bare) != tuple.end() &&
        std::find(matches.begin(), matches.end(), bare) == matches.end()) {
      matches.push_back(bare);
    }
  }
  if (!any) {
    r.failure = BwsParseFailure::MissingLine;
    r.detail = std::string(which) + " line has no id";
  } else if (matches.empty()) {
    r.failure = BwsParseFailure::IdNotInTuple;
    r.detail = std::string(which) + " line names no id of the tuple: '" + line.value + "'";
  } else if (matches.size() > 1) {
    r.failure = BwsParseFailure::ConflictingIds;
    r.detail = std::string(which) + " line names several tuple ids: '" + line.value + "'";
  } else {
    r.id = matches.front();
  }
  return r;
}

}  // namespace

BwsParse parse_bws_response(std::string_view raw, const Tuple& tuple_ids, Emotion) {
  // Optional markdown decoration before the keyword; anything between the
  // keyword and "Example" (normally the emotion name).
  static const std::regex most_re(R"(^[\s*#>_`-]*most\b.*?\bexample\b[\s*_`]*:(.*)$)",
                                  std::regex::icase | std::regex::ECMAScript);
  static const std::regex least_re(R"(^[\s*#>_`-]*least\b.*?\bexample\b[\s*_`]*:(.*)$)",
                                   std::regex::icase | std::regex::ECMAScript);
  BwsParse out;
  Resolution most = resolve(last_answer_line(raw, most_re), tuple_ids, "Most");
  Resolution least = resolve(last_answer_line(raw, least_re), tuple_ids, "Least");
  out.most_id = most.id;
  out.least_id = least.id;
  if (most.failure) {
    out.failure = most.failure;
    out.detail = most.detail;
  } else if (least.failure) {
    out.failure = least.failure;
    out.detail = least.detail;
  } else if (*most.id == *least.id) {
    out.failure = BwsParseFailure::SameId;
    out.detail = "most and least are both '" + *most.id + "'";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Judgments

json to_json(const BwsJudgment& j) {
  json o;
  o["tuple"] = j.tuple_index;
  o["emotion"] = std::string(to_string(j.emotion));
  o["most"] = j.valid ? json(j.most_id) : json(nullptr);
  o["least"] = j.valid ? json(j.least_id) : json(nullptr);
  o["valid"] = j.valid;
  if (!j.valid) o["reason"] = j.failure_reason;
  o["attempts"] = j.attempts;
  o["raw"] = j.raw;
  return o;
}

BwsJudgment bws_judgment_from_json(const json& o) {
  BwsJudgment j;
  j.tuple_index = o.at("tuple").get<std::size_t>();
  auto e = parse_emotion(o.at("emotion").get<std::string>());
  if (!e) throw std::invalid_argument("judgment: unknown emotion");
  j.emotion = *e;
  j.valid = o.at("valid").get<bool>();
  if (j.valid) {
    j.most_id = o.at("most").get<std::string>();
    j.least_id = o.at("least").get<std::string>();
  } else {
    j.failure_reason = o.value("reason", "");
  }
  j.attempts = o.value("attempts", 1);
  j.raw = o.value("raw", "");
  return j;
}

BwsRunResult run_bws(const TuplePlan& plan, const Dataset& dataset, const PromptTemplate& tmpl,
                     std::span<const Emotion> emotions, Annotator& annotator,
                     const DecodeParams& params, BwsRunOptions options) {
  for (const auto& id : plan.ids) {
    if (!dataset.contains(id)) throw std::invalid_argument("run_bws: plan id '" + id + "' not in dataset");
  }
  std::vector<Emotion> emos(emotions.begin(), emotions.end());
  const std::size_t per_tuple = emos.size();
  const std::size_t total = plan.tuples.size() * per_tuple;
  auto slot_of = [&](std::size_t tuple, Emotion e) -> std::optional<std::size_t> {
    auto it = std::find(emos.begin(), emos.end(), e);
    if (tuple >= plan.tuples.size() || it == emos.end()) return std::nullopt;
    return tuple * per_tuple + static_cast<std::size_t>(it - emos.begin());
  };

  std::vector<std::optional<BwsJudgment>> slots(total);
  for (auto& j : options.completed) {
    auto slot = slot_of(j.tuple_index, j.emotion);
    if (!slot) throw std::invalid_argument("run_bws: completed judgment outside the plan");
    if (!slots[*slot]) slots[*slot] = std::move(j);
  }
  std::vector<std::size_t> pending;
  for (std::size_t s = 0; s < total; ++s) {
    if (!slots[s]) pending.push_back(s);
  }
  if (options.max_new_judgments && pending.size() > *options.max_new_judgments) {
    pending.resize(*options.max_new_judgments);
  }

  std::mutex sink_mutex;
  parallel_for(pending.size(), options.concurrency, [&](std::size_t p) {
    const std::size_t slot = pending[p];
    const std::size_t ti = slot / per_tuple;
    const Emotion emotion = emos[slot % per_tuple];
    const Tuple& tuple = plan.tuples[ti];

    RenderContext ctx;
    for (const auto& id : tuple) ctx.records.push_back(dataset.find(id));
    ctx.emotion = emotion;
    const std::string prompt = render(tmpl, ctx);

    BwsJudgment j;
    j.tuple_index = ti;
    j.emotion = emotion;
    for (int attempt = 0; attempt <= options.parse_retries; ++attempt) {
      j.raw = attempt == 0 ? annotator.complete(prompt, params)
                           : annotator.complete_retry(prompt, params, attempt);
      j.attempts = attempt + 1;
      BwsParse parsed = parse_bws_response(j.raw, tuple, emotion);
      if (parsed.ok()) {
        j.valid = true;
        j.most_id = *parsed.most_id;
        j.least_id = *parsed.least_id;
        j.failure_reason.clear();
        break;
      }
      j.failure_reason = std::string(to_string(*parsed.failure)) + ": " + parsed.detail;
    }
    if (options.on_judgment) {
      std::lock_guard lock(sink_mutex);
      options.on_judgment(j);
    }
    slots[slot] = std::move(j);
  });

  BwsRunResult result;
  result.issued = pending.size();
  result.complete = true;
  result.judgments.reserve(total);
  for (auto& s : slots) {
    if (!s) {
      result.complete = false;
      continue;
    }
    if (!s->valid) ++result.invalid;
    result.judgments.push_back(std::move(*s));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Scores and classification

const ItemScores* ScoreTable::find(const std::string& id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  return it == ids.end() ? nullptr : &rows[static_cast<std::size_t>(it - ids.begin())];
}

ScoreTable compute_scores(std::span<const BwsJudgment> judgments, const TuplePlan& plan) {
  ScoreTable table;
  table.ids = plan.ids;
  table.rows.resize(plan.ids.size());
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < plan.ids.size(); ++i) row_of.emplace(plan.ids[i], i);

  for (const auto& j : judgments) {
    if (!j.valid) continue;
    if (j.tuple_index >= plan.tuples.size()) {
      throw std::invalid_argument("compute_scores: judgment references tuple " +
                                  std::to_string(j.tuple_index) + " outside the plan");
    }
    const Tuple& t = plan.tuples[j.tuple_index];
    const std::size_t e = index_of(j.emotion);
    if (j.most_id == j.least_id || std::find(t.begin(), t.end(), j.most_id) == t.end() ||
        std::find(t.begin(), t.end(), j.least_id) == t.end()) {
      throw std::invalid_argument("compute_scores: valid judgment inconsistent with its tuple");
    }
    for (const auto& id : t) ++table.rows[row_of.at(id)].overall[e];
    ++table.rows[row_of.at(j.most_id)].best[e];
    ++table.rows[row_of.at(j.least_id)].worst[e];
    ++table.valid_judgments[e];
  }

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    auto& row = table.rows[r];
    for (std::size_t e = 0; e < kEmotionCount; ++e) {
      if (row.overall[e] == 0) {
        row.score[e] = 0.0;
        ++table.uncovered;
        continue;
      }
      row.score[e] = (static_cast<double>(row.best[e]) - static_cast<double>(row.worst[e])) /
                     static_cast<double>(row.overall[e]);
    }
  }
  if (table.uncovered) {
    spdlog::warn("{} (item, emotion) cells have no valid judgment; their score is 0",
                 table.uncovered);
  }
  return table;
}

std::string score_table_csv(const ScoreTable& table) {
  std::ostringstream os;
  os << "id";
  for (Emotion e : kAllEmotions) {
    auto n = to_string(e);
    os << ',' << n << "_best," << n << "_worst," << n << "_overall," << n << "_score";
  }
  os << '\n';
  for (std::size_t r = 0; r < table.ids.size(); ++r) {
    const auto& row = table.rows[r];
    os << table.ids[r];
    for (std::size_t e = 0; e < kEmotionCount; ++e) {
      os << ',' << row.best[e] << ',' << row.worst[e] << ',' << row.overall[e] << ','
         << format_double(row.score[e]);
    }
    os << '\n';
  }
  return os.str();
}

std::vector<EmotionPrediction> classify(const ScoreTable& scores) {
  std::vector<EmotionPrediction> out;
  out.reserve(scores.ids.size());
  for (std::size_t r = 0; r < scores.ids.size(); ++r) {
    EmotionPrediction p;
    p.id = scores.ids[r];
    p.scores = scores.rows[r].score;
    std::size_t best = 0;
    for (std::size_t e = 1; e < kEmotionCount; ++e) {
      if (p.scores[e] > p.scores[best]) best = e;
    }
    p.predicted = kAllEmotions[best];
    p.tie = std::count(p.scores.begin(), p.scores.end(), p.scores[best]) > 1;
    out.push_back(std::move(p));
  }
  return out;
}

json to_json(const EmotionPrediction& p) {
  json j;
  j["id"] = p.id;
  j["predicted"] = std::string(to_string(p.predicted));
  json scores = json::object();
  for (Emotion e : kAllEmotions) scores[std::string(to_string(e))] = p.scores[index_of(e)];
  j["scores"] = scores;
  j["tie"] = p.tie;
  return j;
}

}  // namespace bwsemo
