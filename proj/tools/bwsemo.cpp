// bwsemo: embodied-emotion detection and BWS emotion classification CLI.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "bwsemo/commands.hpp"
#include "bwsemo/corpus.hpp"

using namespace bwsemo;

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("bwsemo"));
  spdlog::set_pattern("[%l] %v");
  spdlog::cfg::load_env_levels();

  CLI::App app{"Best-worst scaling emotion classification and embodied-emotion detection"};
  app.set_config("--config", "", "Flat key = value config file (CLI flags take precedence)");
  app.require_subcommand(1);

  RunConfig cfg;
  std::string format = "jsonl";
  std::string dataset, manifest, cache_dir, out_dir = "runs";
  std::optional<int> max_tokens;
  std::optional<std::uint64_t> seed;
  std::optional<double> k;
  std::optional<std::size_t> max_judgments;
  bool no_logprobs = false;

  app.add_option("--dataset", dataset, "Dataset file");
  app.add_option("--format", format, "Dataset format")->check(CLI::IsMember({"jsonl", "csv"}));
  app.add_flag("--strict", cfg.strict, "Treat body-part mismatches as errors");
  app.add_option("--template", cfg.template_name, "Template name");
  app.add_option("--template-manifest", manifest, "Extra templates (name = path per line)");
  app.add_option("--method", cfg.method, "Detection method")->check(CLI::IsMember({"logit", "cot"}));
  app.add_option("--endpoint", cfg.backend.endpoint, "OpenAI-compatible base URL");
  app.add_option("--model", cfg.backend.model, "Model name");
  app.add_option("--api-key-env", cfg.backend.api_key_env, "Environment variable holding the API key");
  app.add_option("--timeout-ms", cfg.backend.timeout_ms, "HTTP timeout");
  app.add_option("--retries", cfg.backend.retries, "HTTP attempts per request");
  app.add_option("--backoff-ms", cfg.backend.backoff_ms, "Initial retry backoff");
  app.add_option("--oracle-profile", cfg.backend.oracle_profile,
                 "Simulated annotator profile JSON, or 'gold'");
  app.add_option("--oracle-noise", cfg.backend.oracle_noise, "Noise sd for --oracle-profile gold");
  app.add_flag("--oracle-no-logprobs", no_logprobs, "Oracle refuses continuation scoring");
  app.add_option("--temperature", cfg.temperature, "Sampling temperature");
  app.add_option("--max-tokens", max_tokens, "Completion token limit");
  app.add_option("--seed", seed, "Seed for tuple plans, oracle and backend");
  auto* k_opt = app.add_option("--k", k, "Tuple multiplier (tuples = round(k * N))");
  app.add_option("--k-preset", cfg.k_preset, "Multiplier sweep")
      ->check(CLI::IsMember({"paper", "fifty-percent"}))
      ->excludes(k_opt);
  app.add_option("--concurrency", cfg.concurrency, "Requests in flight")->check(CLI::PositiveNumber);
  app.add_option("--parse-retries", cfg.parse_retries, "Re-asks after an unparseable BWS answer")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--max-judgments", max_judgments, "Stop after this many new BWS judgments");
  app.add_option("--cache-dir", cache_dir, "Response cache directory (default <out>/cache)");
  app.add_option("--out", out_dir, "Output root");
  app.add_flag("--audit-log", cfg.audit_log, "Log every request and response to requests.jsonl");

  auto* detect = app.add_subcommand("detect", "Binary embodied-emotion detection")->fallthrough();
  auto* zeroshot = app.add_subcommand("classify-zeroshot", "Zero-shot emotion classification")->fallthrough();
  auto* bws = app.add_subcommand("classify-bws", "Emotion classification by best-worst scaling")->fallthrough();

  std::string gold, predictions;
  auto* eval = app.add_subcommand("eval", "Score a predictions file against gold labels")->fallthrough();
  eval->add_option("gold", gold, "Gold dataset")->required();
  eval->add_option("predictions", predictions, "Predictions JSONL")->required();

  std::string labels_a, labels_b;
  auto* kappa = app.add_subcommand("kappa", "Cohen's kappa between two label files")->fallthrough();
  kappa->add_option("a", labels_a, "First label file")->required();
  kappa->add_option("b", labels_b, "Second label file")->required();

  std::string action, template_name;
  auto* templates = app.add_subcommand("templates", "List or print prompt templates")->fallthrough();
  templates->add_option("action", action, "list or dump")->required()->check(CLI::IsMember({"list", "dump"}));
  templates->add_option("name", template_name, "Template to dump");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  cfg.format = parse_dataset_format(format).value_or(DatasetFormat::Jsonl);
  cfg.dataset = dataset;
  cfg.template_manifest = manifest;
  cfg.cache_dir = cache_dir;
  cfg.out_dir = out_dir;
  cfg.max_tokens = max_tokens;
  cfg.seed = seed;
  cfg.k = k;
  cfg.max_judgments = max_judgments;
  cfg.backend.oracle_logprobs = !no_logprobs;

  if (*detect) return cmd_detect(cfg, std::cout, std::cerr);
  if (*zeroshot) return cmd_classify_zeroshot(cfg, std::cout, std::cerr);
  if (*bws) return cmd_classify_bws(cfg, std::cout, std::cerr);
  if (*eval) {
    std::filesystem::path report_dir = app.count("--out") ? std::filesystem::path(out_dir) : "";
    return cmd_eval(gold, predictions, cfg.format, report_dir, std::cout, std::cerr);
  }
  if (*kappa) return cmd_kappa(labels_a, labels_b, std::cout, std::cerr);
  return cmd_templates(action, template_name, cfg.template_manifest, std::cout, std::cerr);
}
