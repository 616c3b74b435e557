#include "bwsemo/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "bwsemo/bws.hpp"
#include "bwsemo/detection.hpp"
#include "bwsemo/errors.hpp"
#include "bwsemo/eval.hpp"
#include "bwsemo/http_annotator.hpp"
#include "bwsemo/oracle.hpp"
#include "bwsemo/parallel.hpp"
#include "bwsemo/prompting.hpp"
#include "bwsemo/response_cache.hpp"

namespace bwsemo {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out || !(out << content) || !out.flush()) {
      throw std::runtime_error("cannot write '" + path.string() + "'");
    }
  }
  fs::rename(tmp, path);
}

std::string jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

Dataset open_dataset(const RunConfig& config) {
  if (config.dataset.empty()) throw ConfigError("--dataset is required");
  if (!fs::exists(config.dataset)) throw ConfigError("dataset not found: " + config.dataset.string());
  return load_dataset(config.dataset, config.format, config.strict);
}

TemplateRegistry open_templates(const fs::path& manifest) {
  TemplateRegistry reg = TemplateRegistry::builtin();
  if (!manifest.empty()) reg.load_manifest(manifest);
  return reg;
}

struct Backend {
  std::shared_ptr<CachedAnnotator> annotator;
  std::string model;
};

Backend open_backend(const RunConfig& config, const Dataset& dataset, const fs::path& cache_dir) {
  std::shared_ptr<Annotator> raw;
  std::string model;
  if (config.backend.is_oracle()) {
    if (!config.seed) throw ConfigError("--seed is required for oracle runs");
    OracleProfile profile =
        config.backend.oracle_profile == "gold"
            ? profile_from_gold(dataset, *config.seed, config.backend.oracle_noise)
            : load_oracle_profile(config.backend.oracle_profile);
    raw = std::make_shared<OracleAnnotator>(dataset, std::move(profile), config.backend.oracle_logprobs);
    model = "oracle";
  } else {
    if (config.backend.endpoint.empty()) {
      throw ConfigError("either --endpoint or --oracle-profile is required");
    }
    HttpBackendConfig http;
    http.endpoint = config.backend.endpoint;
    http.model = config.backend.model;
    http.api_key_env = config.backend.api_key_env;
    http.timeout = std::chrono::milliseconds(config.backend.timeout_ms);
    http.retry.max_attempts = std::max(1, config.backend.retries);
    http.retry.initial_backoff = std::chrono::milliseconds(config.backend.backoff_ms);
    raw = std::make_shared<HttpAnnotator>(http);
    model = config.backend.model;
  }
  auto cache = std::make_shared<ResponseCache>(cache_dir);
  if (cache->skipped_lines()) spdlog::warn("{} corrupt cache lines skipped", cache->skipped_lines());
  return {std::make_shared<CachedAnnotator>(raw, cache), model};
}

fs::path cache_directory(const RunConfig& config) {
  return config.cache_dir.empty() ? config.out_dir / "cache" : config.cache_dir;
}

DecodeParams decode_params(const RunConfig& config, const PromptTemplate& tmpl, const std::string& model) {
  DecodeParams p;
  p.temperature = config.temperature;
  if (p.temperature < 0) throw ConfigError("--temperature must be non-negative");
  p.max_tokens = config.max_tokens.value_or(tmpl.is_bare_answer() ? kBareAnswerMaxTokens : kCotMaxTokens);
  if (p.max_tokens <= 0) throw ConfigError("--max-tokens must be positive");
  if (config.seed) p.seed = static_cast<std::int64_t>(*config.seed);
  p.model = model;
  return p;
}

void write_run_log(const fs::path& dir, const json& summary) {
  write_file(dir / "run.log.jsonl", summary.dump() + "\n");
}

json counter_json(const CachedAnnotator& a) {
  auto c = a.counters();
  return {{"requests", c.requests}, {"cache_hits", c.cache_hits}, {"backend_calls", c.backend_calls}};
}

void print_counters(std::ostream& out, const CachedAnnotator& a) {
  auto c = a.counters();
  out << "requests: " << c.requests << ", cache hits: " << c.cache_hits
      << ", backend calls: " << c.backend_calls << "\n";
}

/// Runs `body`, mapping exceptions onto the exit-code contract.
template <typename Fn>
int guarded(std::ostream& err, Fn&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DatasetError& e) {
    err << "dataset error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TemplateError& e) {
    err << "template error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnsupportedError& e) {
    err << "backend cannot score continuations (" << e.what()
        << "); rerun with a chain-of-thought template\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

std::string k_label(double k) { return format_double(k); }

}  // namespace

fs::path run_directory(const RunConfig& config, std::string_view command,
                       const std::string& dataset_digest, std::optional<double> k) {
  std::string name = std::string(command) + "-" + dataset_digest.substr(0, 12) + "-s" +
                     (config.seed ? std::to_string(*config.seed) : std::string("none"));
  if (k) name += "-k" + k_label(*k);
  if (!k && !config.template_name.empty()) name += "-" + config.template_name;
  return config.out_dir / name;
}

std::optional<Emotion> parse_zeroshot_answer(std::string_view response) {
  std::string lowered(response);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::size_t start = lowered.find("answer:");
  start = start == std::string::npos ? 0 : start + 7;
  std::size_t i = start;
  while (i < response.size()) {
    while (i < response.size() && !std::isalpha(static_cast<unsigned char>(response[i]))) ++i;
    std::size_t j = i;
    while (j < response.size() && std::isalpha(static_cast<unsigned char>(response[j]))) ++j;
    if (j > i) {
      if (auto e = parse_emotion(response.substr(i, j - i))) return e;
    }
    i = j;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

int cmd_detect(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Dataset dataset = open_dataset(config);
    TemplateRegistry templates = open_templates(config.template_manifest);
    if (config.template_name.empty()) throw ConfigError("--template is required");
    const PromptTemplate& tmpl = templates.at(config.template_name);
    if (tmpl.record_arity != 1 || tmpl.requires_emotion()) {
      throw ConfigError("template '" + tmpl.name + "' is not a detection template");
    }
    DetectionMethod method = tmpl.is_bare_answer() ? DetectionMethod::Logit : DetectionMethod::Cot;
    if (config.method == "logit") {
      method = DetectionMethod::Logit;
    } else if (config.method == "cot") {
      method = DetectionMethod::Cot;
    } else if (!config.method.empty()) {
      throw ConfigError("--method must be 'logit' or 'cot'");
    }
    if (method == DetectionMethod::Logit && !tmpl.is_bare_answer()) {
      throw ConfigError("logit detection needs a template ending in 'Answer:'");
    }

    std::string digest = dataset_digest(dataset);
    fs::path dir = run_directory(config, "detect", digest);
    fs::create_directories(dir);
    Backend backend = open_backend(config, dataset, cache_directory(config));
    if (config.audit_log) backend.annotator->set_audit_log(dir / "requests.jsonl");
    DecodeParams params = decode_params(config, tmpl, backend.model);

    DetectionRun run = run_detection(dataset, tmpl, method, *backend.annotator, params,
                                     std::max<std::size_t>(1, config.concurrency));
    std::vector<json> rows;
    for (const auto& p : run.predictions) rows.push_back(to_json(p));
    write_file(dir / "predictions.jsonl", jsonl(rows));

    json summary = {{"event", "summary"},
                    {"command", "detect"},
                    {"template", tmpl.name},
                    {"method", std::string(to_string(method))},
                    {"records", dataset.size()},
                    {"ties", run.ties},
                    {"unparsed", run.unparsed},
                    {"failed", run.failed}};
    summary.update(counter_json(*backend.annotator));

    std::vector<std::string> gold;
    std::vector<std::optional<std::string>> pred;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (!dataset[i].gold_embodied) continue;
      gold.emplace_back(*dataset[i].gold_embodied ? "EE" : "Neutral");
      const auto& p = run.predictions[i];
      pred.push_back(p.predicted ? std::optional<std::string>(*p.predicted ? "EE" : "Neutral")
                                 : std::nullopt);
    }
    if (!gold.empty() && gold.size() > static_cast<std::size_t>(std::count(pred.begin(), pred.end(), std::nullopt))) {
      ConfusionMatrix cm = confusion(gold, pred, detection_universe());
      ClassMetrics m = metrics(cm);
      RunMetadata meta{tmpl.name, {{"command", "detect"},
                                   {"template", tmpl.name},
                                   {"method", std::string(to_string(method))},
                                   {"model", backend.model},
                                   {"unparsed", std::to_string(run.unparsed)},
                                   {"failed", std::to_string(run.failed)}}};
      write_report(report(m, cm, meta), dir, "report");
      summary["macro_f1"] = m.macro_f1;
      out << "macro F1: " << format_percent(m.macro_f1) << "\n";
    }
    write_run_log(dir, summary);

    out << "predictions: " << (dir / "predictions.jsonl").string() << "\n";
    out << "records: " << dataset.size() << ", ties: " << run.ties << ", unparsed: " << run.unparsed
        << ", failed: " << run.failed << "\n";
    print_counters(out, *backend.annotator);
    if (run.failed) {
      for (const auto& p : run.predictions) {
        if (p.status == PredictionStatus::Failed) err << "  " << p.id << ": " << p.error << "\n";
      }
      return kExitRuntime;
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

int cmd_classify_zeroshot(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Dataset dataset = open_dataset(config);
    TemplateRegistry templates = open_templates(config.template_manifest);
    RunConfig cfg = config;
    if (cfg.template_name.empty()) cfg.template_name = "classify_zeroshot";
    const PromptTemplate& tmpl = templates.at(cfg.template_name);
    if (tmpl.record_arity != 1) throw ConfigError("template '" + tmpl.name + "' is not single-record");

    std::string digest = dataset_digest(dataset);
    fs::path dir = run_directory(cfg, "classify-zeroshot", digest);
    fs::create_directories(dir);
    Backend backend = open_backend(cfg, dataset, cache_directory(cfg));
    if (cfg.audit_log) backend.annotator->set_audit_log(dir / "requests.jsonl");
    DecodeParams params = decode_params(cfg, tmpl, backend.model);

    struct Outcome {
      std::string raw;
      std::optional<Emotion> predicted;
      std::string error;
    };
    std::vector<Outcome> outcomes(dataset.size());
    parallel_for(dataset.size(), std::max<std::size_t>(1, cfg.concurrency), [&](std::size_t i) {
      RenderContext ctx;
      ctx.record = &dataset[i];
      try {
        outcomes[i].raw = backend.annotator->complete(render(tmpl, ctx), params);
        outcomes[i].predicted = parse_zeroshot_answer(outcomes[i].raw);
      } catch (const TemplateError&) {
        throw;
      } catch (const std::exception& e) {
        outcomes[i].error = e.what();
      }
    });

    std::size_t unparsed = 0;
    std::size_t failed = 0;
    std::vector<json> rows;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& o = outcomes[i];
      json row = {{"id", dataset[i].id},
                  {"predicted", o.predicted ? json(std::string(to_string(*o.predicted))) : json(nullptr)},
                  {"raw", o.raw},
                  {"template", tmpl.name},
                  {"model", backend.model}};
      if (!o.error.empty()) {
        row["status"] = "failed";
        row["error"] = o.error;
        ++failed;
      } else if (!o.predicted) {
        row["status"] = "unparsed";
        ++unparsed;
      }
      rows.push_back(std::move(row));
    }
    write_file(dir / "predictions.jsonl", jsonl(rows));

    json summary = {{"event", "summary"}, {"command", "classify-zeroshot"}, {"records", dataset.size()},
                    {"unparsed", unparsed}, {"failed", failed}};
    summary.update(counter_json(*backend.annotator));

    std::vector<std::string> gold;
    std::vector<std::optional<std::string>> pred;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (!dataset[i].gold_emotion) continue;
      gold.emplace_back(to_string(*dataset[i].gold_emotion));
      pred.push_back(outcomes[i].predicted
                         ? std::optional<std::string>(std::string(to_string(*outcomes[i].predicted)))
                         : std::nullopt);
    }
    if (!gold.empty() && static_cast<std::size_t>(std::count(pred.begin(), pred.end(), std::nullopt)) < gold.size()) {
      ConfusionMatrix cm = confusion(gold, pred, emotion_universe());
      ClassMetrics m = metrics(cm);
      RunMetadata meta{tmpl.name, {{"command", "classify-zeroshot"},
                                   {"model", backend.model},
                                   {"unparsed", std::to_string(unparsed)}}};
      write_report(report(m, cm, meta), dir, "report");
      summary["macro_f1"] = m.macro_f1;
      out << "macro F1: " << format_percent(m.macro_f1) << "\n";
    }
    write_run_log(dir, summary);
    out << "predictions: " << (dir / "predictions.jsonl").string() << "\n";
    out << "records: " << dataset.size() << ", unparsed: " << unparsed << ", failed: " << failed << "\n";
    print_counters(out, *backend.annotator);
    return failed ? kExitRuntime : kExitOk;
  });
}

// ---------------------------------------------------------------------------

namespace {

std::vector<BwsJudgment> load_judgment_log(const fs::path& path, const TuplePlan& plan) {
  std::vector<BwsJudgment> out;
  std::ifstream in(path);
  if (!in) return out;
  std::set<std::pair<std::size_t, Emotion>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      BwsJudgment j = bws_judgment_from_json(json::parse(line));
      if (j.tuple_index >= plan.tuples.size()) continue;
      if (!seen.insert({j.tuple_index, j.emotion}).second) continue;
      out.push_back(std::move(j));
    } catch (const std::exception&) {
      spdlog::warn("{}:{}: skipping unreadable judgment", path.string(), lineno);
    }
  }
  return out;
}

TuplePlan open_plan(const fs::path& path, const Dataset& dataset, double k, std::uint64_t seed) {
  std::vector<std::string> ids = dataset.ids();
  if (fs::exists(path)) {
    std::ifstream in(path);
    TuplePlan plan;
    try {
      plan = tuple_plan_from_json(json::parse(in));
    } catch (const std::exception& e) {
      throw ConfigError("unreadable tuple plan '" + path.string() + "': " + e.what());
    }
    if (plan.ids != ids || plan.seed != seed || plan.multiplier != k) {
      throw ConfigError("existing tuple plan '" + path.string() + "' does not match this run");
    }
    return plan;
  }
  TuplePlan plan;
  try {
    plan = schedule_tuples(ids, k, seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  write_file(path, to_json(plan).dump() + "\n");
  return plan;
}

}  // namespace

int cmd_classify_bws(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    Dataset dataset = open_dataset(config);
    if (dataset.size() < 4) throw ConfigError("BWS needs at least 4 records");
    if (!config.seed) throw ConfigError("--seed is required for classify-bws");
    TemplateRegistry templates = open_templates(config.template_manifest);
    RunConfig cfg = config;
    if (cfg.template_name.empty()) cfg.template_name = "bws_rank";
    const PromptTemplate& tmpl = templates.at(cfg.template_name);
    if (tmpl.record_arity != 4 || !tmpl.requires_emotion()) {
      throw ConfigError("template '" + tmpl.name + "' is not a 4-record BWS template");
    }

    std::vector<double> ks;
    if (!cfg.k_preset.empty()) {
      if (cfg.k) throw ConfigError("--k and --k-preset are mutually exclusive");
      try {
        ks = k_preset(cfg.k_preset);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else {
      ks.push_back(cfg.k.value_or(2.0));
    }

    const std::string digest = dataset_digest(dataset);
    Backend backend = open_backend(cfg, dataset, cache_directory(cfg));
    DecodeParams params = decode_params(cfg, tmpl, backend.model);
    const bool labeled = std::any_of(dataset.records().begin(), dataset.records().end(),
                                     [](const InstanceRecord& r) { return r.gold_emotion.has_value(); });

    std::vector<ScalingPoint> scaling;
    bool all_complete = true;
    for (double k : ks) {
      fs::path dir = run_directory(cfg, "classify-bws", digest, k);
      fs::create_directories(dir);
      if (cfg.audit_log) backend.annotator->set_audit_log(dir / "requests.jsonl");
      auto before = backend.annotator->counters();

      TuplePlan plan = open_plan(dir / "plan.json", dataset, k, *cfg.seed);
      const fs::path log_path = dir / "judgments.jsonl";

      BwsRunOptions options;
      options.parse_retries = cfg.parse_retries;
      options.concurrency = std::max<std::size_t>(1, cfg.concurrency);
      options.completed = load_judgment_log(log_path, plan);
      options.max_new_judgments = cfg.max_judgments;
      const std::size_t resumed = options.completed.size();
      // Rewrite the log without torn or duplicate lines before appending.
      {
        std::vector<json> rows;
        for (const auto& j : options.completed) rows.push_back(to_json(j));
        write_file(log_path, jsonl(rows));
      }
      std::ofstream log(log_path, std::ios::app | std::ios::binary);
      options.on_judgment = [&](const BwsJudgment& j) {
        log << to_json(j).dump() << '\n';
        log.flush();
      };

      BwsRunResult result = run_bws(plan, dataset, tmpl, kAllEmotions, *backend.annotator, params,
                                    std::move(options));
      log.close();

      auto after = backend.annotator->counters();
      json summary = {{"event", "summary"},
                      {"command", "classify-bws"},
                      {"k", k},
                      {"tuples", plan.tuples.size()},
                      {"judgments_total", plan.tuples.size() * kEmotionCount},
                      {"judgments_resumed", resumed},
                      {"judgments_issued", result.issued},
                      {"invalid", result.invalid},
                      {"complete", result.complete},
                      {"requests", after.requests - before.requests},
                      {"cache_hits", after.cache_hits - before.cache_hits},
                      {"backend_calls", after.backend_calls - before.backend_calls}};

      out << "k=" << k_label(k) << ": " << plan.tuples.size() << " tuples, "
          << result.judgments.size() << "/" << plan.tuples.size() * kEmotionCount
          << " judgments (" << resumed << " resumed, " << result.issued << " issued, "
          << result.invalid << " invalid)\n";

      if (!result.complete) {
        all_complete = false;
        write_run_log(dir, summary);
        out << "run incomplete; rerun the same command to resume\n";
        continue;
      }

      {
        std::vector<json> rows;
        for (const auto& j : result.judgments) rows.push_back(to_json(j));
        write_file(log_path, jsonl(rows));
      }

      ScoreTable scores = compute_scores(result.judgments, plan);
      write_file(dir / "scores.csv", score_table_csv(scores));
      {
        std::vector<json> rows;
        for (std::size_t r = 0; r < scores.ids.size(); ++r) {
          json row = {{"id", scores.ids[r]}};
          for (Emotion e : kAllEmotions) {
            std::size_t i = index_of(e);
            row[std::string(to_string(e))] = {{"best", scores.rows[r].best[i]},
                                               {"worst", scores.rows[r].worst[i]},
                                               {"overall", scores.rows[r].overall[i]},
                                               {"score", scores.rows[r].score[i]}};
          }
          rows.push_back(std::move(row));
        }
        write_file(dir / "scores.jsonl", jsonl(rows));
      }

      std::vector<EmotionPrediction> preds = classify(scores);
      {
        std::vector<json> rows;
        std::ostringstream csv;
        csv << "id,predicted,tie\n";
        for (const auto& p : preds) {
          rows.push_back(to_json(p));
          csv << p.id << ',' << to_string(p.predicted) << ',' << (p.tie ? "true" : "false") << '\n';
        }
        write_file(dir / "predictions.jsonl", jsonl(rows));
        write_file(dir / "predictions.csv", csv.str());
      }
      summary["uncovered_cells"] = scores.uncovered;
      summary["ties"] = std::count_if(preds.begin(), preds.end(), [](const auto& p) { return p.tie; });

      if (labeled) {
        std::vector<std::string> gold;
        std::vector<std::string> pred;
        for (const auto& p : preds) {
          const InstanceRecord* r = dataset.find(p.id);
          if (!r->gold_emotion) continue;
          gold.emplace_back(to_string(*r->gold_emotion));
          pred.emplace_back(to_string(p.predicted));
        }
        ConfusionMatrix cm = confusion(gold, pred, emotion_universe());
        ClassMetrics m = metrics(cm);
        RunMetadata meta{"BWS_" + k_label(k) + "N", {{"command", "classify-bws"},
                                                     {"k", k_label(k)},
                                                     {"seed", std::to_string(*cfg.seed)},
                                                     {"model", backend.model},
                                                     {"invalid_judgments", std::to_string(result.invalid)}}};
        write_report(report(m, cm, meta), dir, "report");
        summary["macro_f1"] = m.macro_f1;
        summary["accuracy"] = m.accuracy;
        scaling.push_back({k, plan.tuples.size(), m});
        out << "  macro F1: " << format_percent(m.macro_f1) << ", accuracy: " << format_percent(m.accuracy)
            << "\n";
      }
      write_run_log(dir, summary);
    }

    if (!scaling.empty()) {
      fs::path csv = cfg.out_dir / ("classify-bws-" + digest.substr(0, 12) + "-s" +
                                    std::to_string(*cfg.seed) + "-scaling.csv");
      write_file(csv, scaling_csv(scaling));
      out << "scaling curve: " << csv.string() << "\n";
    }
    print_counters(out, *backend.annotator);
    (void)all_complete;
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

int cmd_eval(const fs::path& gold_path, const fs::path& pred_path, DatasetFormat gold_format,
             const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!fs::exists(gold_path)) throw ConfigError("gold file not found: " + gold_path.string());
    if (!fs::exists(pred_path)) throw ConfigError("predictions file not found: " + pred_path.string());
    Dataset gold = load_dataset(gold_path, gold_format, false);

    std::ifstream in(pred_path);
    std::vector<std::pair<std::string, json>> preds;
    std::set<std::string> pred_ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        json j = json::parse(line);
        std::string id = j.at("id").get<std::string>();
        if (!pred_ids.insert(id).second) {
          throw ConfigError(pred_path.string() + ":" + std::to_string(lineno) + ": duplicate id '" + id + "'");
        }
        json label = nullptr;
        if (j.contains("predicted")) {
          label = j["predicted"];
        } else if (j.contains("gold_emotion")) {
          label = j["gold_emotion"];
        } else if (j.contains("gold_embodied")) {
          label = j["gold_embodied"];
        }
        preds.emplace_back(id, std::move(label));
      } catch (const json::exception& e) {
        throw ConfigError(pred_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }

    bool detection = false;
    bool decided = false;
    for (const auto& [id, v] : preds) {
      if (v.is_null()) continue;
      detection = v.is_boolean();
      decided = true;
      break;
    }
    if (!decided) {
      err << "no predictions in " << pred_path.string() << "\n";
      return kExitRuntime;
    }

    auto gold_label = [&](const InstanceRecord& r) -> std::optional<std::string> {
      if (detection) {
        if (!r.gold_embodied) return std::nullopt;
        return std::string(*r.gold_embodied ? "EE" : "Neutral");
      }
      if (!r.gold_emotion) return std::nullopt;
      return std::string(to_string(*r.gold_emotion));
    };

    std::vector<std::string> gold_labels;
    std::vector<std::optional<std::string>> pred_labels;
    std::vector<std::string> unknown;
    for (const auto& [id, v] : preds) {
      const InstanceRecord* r = gold.find(id);
      if (!r || !gold_label(*r)) {
        unknown.push_back(id);
        continue;
      }
      gold_labels.push_back(*gold_label(*r));
      if (v.is_null()) {
        pred_labels.emplace_back(std::nullopt);
      } else if (detection) {
        if (!v.is_boolean()) throw ConfigError("prediction for '" + id + "' is not a boolean");
        pred_labels.emplace_back(v.get<bool>() ? "EE" : "Neutral");
      } else {
        auto e = v.is_string() ? parse_emotion(v.get<std::string>()) : std::nullopt;
        if (!e) throw ConfigError("prediction for '" + id + "' is not an emotion name");
        pred_labels.emplace_back(std::string(to_string(*e)));
      }
    }
    std::vector<std::string> missing;
    std::size_t labeled = 0;
    for (const auto& r : gold.records()) {
      if (!gold_label(r)) continue;
      ++labeled;
      if (!pred_ids.count(r.id)) missing.push_back(r.id);
    }

    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      err << what << " (" << ids.size() << "):";
      for (const auto& id : ids) err << ' ' << id;
      err << "\n";
    };
    if (gold_labels.empty()) {
      err << "no overlapping ids between gold and predictions\n";
      list("gold ids without prediction", missing);
      list("predicted ids not in gold", unknown);
      return kExitRuntime;
    }
    list("gold ids without prediction", missing);
    list("predicted ids not in gold", unknown);

    ConfusionMatrix cm = confusion(gold_labels, pred_labels,
                                   detection ? detection_universe() : emotion_universe());
    if (cm.total() == 0) {
      err << "every overlapping prediction is empty\n";
      return kExitRuntime;
    }
    ClassMetrics m = metrics(cm);
    double coverage = static_cast<double>(gold_labels.size()) / static_cast<double>(labeled);
    std::ostringstream cov;
    cov << std::fixed << std::setprecision(4) << coverage;
    RunMetadata meta{pred_path.stem().string(),
                     {{"command", "eval"}, {"coverage", cov.str()},
                      {"evaluated", std::to_string(gold_labels.size())},
                      {"gold_labeled", std::to_string(labeled)}}};
    fs::path dir = out_dir.empty() ? pred_path.parent_path() : out_dir;
    write_report(report(m, cm, meta), dir.empty() ? fs::path(".") : dir, "eval");
    out << "evaluated: " << gold_labels.size() << " of " << labeled << " labeled (coverage "
        << format_percent(coverage) << "%)\n";
    out << "macro F1: " << format_percent(m.macro_f1) << "\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read label file '" + path.string() + "'");
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    auto e = line.find_last_not_of(" \t\r");
    labels.push_back(line.substr(b, e - b + 1));
  }
  return labels;
}

}  // namespace

int cmd_kappa(const fs::path& labels_a, const fs::path& labels_b, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto a = read_labels(labels_a);
    auto b = read_labels(labels_b);
    if (a.size() != b.size()) {
      throw ConfigError("label files are not aligned: " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + " labels");
    }
    if (a.empty()) throw ConfigError("label files are empty");
    double kappa = cohen_kappa(a, b);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", kappa);
    out << buf << "\n";
    return kExitOk;
  });
}

int cmd_templates(std::string_view action, const std::string& name, const fs::path& manifest,
                  std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    TemplateRegistry reg = open_templates(manifest);
    if (action == "list") {
      for (const auto& n : reg.names()) {
        const auto& t = reg.at(n);
        out << n << "\t";
        bool first = true;
        for (const auto& p : t.required_placeholders) {
          out << (first ? "" : ",") << p;
          first = false;
        }
        out << "\n";
      }
      return kExitOk;
    }
    if (action == "dump") {
      if (name.empty()) throw ConfigError("templates dump needs a template name");
      out << reg.at(name).body;
      return kExitOk;
    }
    throw ConfigError("templates action must be 'list' or 'dump'");
  });
}

}  // namespace bwsemo
