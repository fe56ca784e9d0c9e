// claimlink command-line front end. Each subcommand wraps one library stage;
// `run` drives the whole pipeline from a config file.

#include <CLI11.hpp>

#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "claimlink.hpp"
#include "claimlink/remote.hpp"

namespace fs = std::filesystem;
using namespace claimlink;

namespace {

PipelineHooks remote_hooks() {
  PipelineHooks h;
  h.embedding_provider = [](const ProviderSpec& spec) { return make_provider(spec); };
  h.pair_scorer = [](const RerankSection& r) -> std::unique_ptr<PairScorer> {
    return std::make_unique<HttpPairScorer>(r.endpoint, r.timeout_seconds);
  };
  h.generator = [](const RerankSection& r) -> std::unique_ptr<TextGenerator> {
    if (r.api == "chat") return std::make_unique<ChatHttpGenerator>(r.endpoint, r.system_message, r.model, r.timeout_seconds);
    return std::make_unique<HttpGenerator>(r.endpoint, r.timeout_seconds);
  };
  return h;
}

// Items for embedding / language identification: JSONL or CSV records with
// "id" and "text" (or "claim_text").
struct TextItem {
  std::string id;
  std::string text;
};

std::vector<TextItem> read_text_items(const fs::path& path) {
  std::vector<TextItem> out;
  const std::string source = path.string();
  for (const auto& r : read_records(path)) {
    const char* key = r.fields.contains("text") ? "text" : "claim_text";
    out.push_back({field_as_id(r, "id", source), field_as_text(r, key, source)});
  }
  return out;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"claimlink: retrieval of previously fact-checked claims"};
  app.require_subcommand(1);

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Load and validate posts, claims and pairs");
  fs::path posts_in, claims_in, pairs_in, ingest_out;
  ingest_cmd->add_option("--posts", posts_in, "Posts (JSONL or CSV)")->required();
  ingest_cmd->add_option("--claims", claims_in, "Fact-checked claims (JSONL or CSV)")->required();
  ingest_cmd->add_option("--pairs", pairs_in, "Gold pairs (JSONL or CSV)")->required();
  ingest_cmd->add_option("--out", ingest_out, "Output corpus directory")->required();

  // filter
  auto* filter_cmd = app.add_subcommand("filter", "Drop undetermined posts and languages below a post threshold");
  fs::path filter_in, filter_out;
  std::size_t min_posts = 180;
  filter_cmd->add_option("--corpus", filter_in, "Corpus directory")->required();
  filter_cmd->add_option("--min-posts", min_posts, "Minimum posts per language")->capture_default_str();
  filter_cmd->add_option("--out", filter_out, "Output corpus directory")->required();

  // langid
  auto* langid_cmd = app.add_subcommand("langid", "Fuse language votes from several detectors");
  fs::path langid_in, langid_out, langid_overrides, langid_report;
  std::vector<std::string> detector_specs;
  FusionConfig fusion;
  std::size_t rare_threshold = 10;
  langid_cmd->add_option("--input", langid_in, "Records with id and text")->required();
  langid_cmd->add_option("--detectors", detector_specs, "Detectors as name=command or command")
      ->delimiter(',')
      ->required();
  langid_cmd->add_option("--min-avg", fusion.min_avg_score, "Minimum average normalized score")->capture_default_str();
  langid_cmd->add_option("--min-votes", fusion.min_vote_count, "Detectors that must agree")->capture_default_str();
  langid_cmd->add_option("--rare-threshold", rare_threshold, "Languages seen fewer times go to review")
      ->capture_default_str();
  langid_cmd->add_option("--overrides", langid_overrides, "JSON object id -> reviewed language code");
  langid_cmd->add_option("--report", langid_report, "Write the review report here");
  langid_cmd->add_option("--out", langid_out, "Output JSONL with one decision per record")->required();

  // split
  auto* split_cmd = app.add_subcommand("split", "Build leakage-free train/dev/test splits");
  fs::path split_corpus, split_out;
  std::string ratios_text = "0.8,0.1,0.1";
  std::uint64_t split_seed = 0;
  std::string stratify = "post_language";
  split_cmd->add_option("--corpus", split_corpus, "Corpus directory")->required();
  split_cmd->add_option("--ratios", ratios_text, "train,dev,test fractions")->capture_default_str();
  split_cmd->add_option("--seed", split_seed, "Random seed")->capture_default_str();
  split_cmd->add_option("--stratify", stratify, "Stratification key")
      ->check(CLI::IsMember({"post_language"}))
      ->capture_default_str();
  split_cmd->add_option("--out", split_out, "Manifest path")->required();

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "Embed texts into a .clnk store");
  fs::path embed_items, embed_out;
  std::string embed_role = "passage", provider_location;
  ProviderSpec spec;
  bool resume = false;
  embed_cmd->add_option("--items", embed_items, "Records with id and text")->required();
  embed_cmd->add_option("--role", embed_role, "query or passage")
      ->check(CLI::IsMember({"query", "passage"}))
      ->capture_default_str();
  embed_cmd->add_option("--provider", provider_location, "Service URL or precomputed vector file")->required();
  embed_cmd->add_option("--query-template", spec.query_template)->capture_default_str();
  embed_cmd->add_option("--passage-template", spec.passage_template)->capture_default_str();
  embed_cmd->add_option("--batch-size", spec.batch_size)->capture_default_str();
  embed_cmd->add_option("--parallel", spec.max_parallel_requests, "Concurrent requests")->capture_default_str();
  embed_cmd->add_option("--max-retries", spec.max_retries)->capture_default_str();
  embed_cmd->add_option("--tag", spec.tag, "Provider tag recorded in the store");
  embed_cmd->add_flag("--resume", resume, "Keep rows already in --out and embed only the rest");
  embed_cmd->add_option("--out", embed_out, "Store path")->required();

  // retrieve
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Exact top-k cosine retrieval");
  fs::path r_posts, r_claims, r_corpus, r_manifest, r_out;
  std::string pool_text = "test", setting_text = "multi";
  std::size_t retrieve_k = 100, threads = 0;
  retrieve_cmd->add_option("--posts-store", r_posts)->required();
  retrieve_cmd->add_option("--claims-store", r_claims)->required();
  retrieve_cmd->add_option("--corpus", r_corpus, "Corpus directory")->required();
  retrieve_cmd->add_option("--manifest", r_manifest, "Split manifest")->required();
  retrieve_cmd->add_option("--pool", pool_text)->check(CLI::IsMember({"test", "full"}))->capture_default_str();
  retrieve_cmd->add_option("--setting", setting_text)->check(CLI::IsMember({"multi", "cross"}))->capture_default_str();
  retrieve_cmd->add_option("--k", retrieve_k)->capture_default_str();
  retrieve_cmd->add_option("--threads", threads, "0 = hardware concurrency")->capture_default_str();
  retrieve_cmd->add_option("--out", r_out, "Run file")->required();

  // rerank
  auto* rerank_cmd = app.add_subcommand("rerank", "Re-rank the head of each list");
  fs::path rr_run, rr_corpus, rr_out, rr_log, rr_prompt;
  std::string rr_mode = "ce";
  RerankSection rr;
  rerank_cmd->add_option("--run", rr_run, "Retrieved run file")->required();
  rerank_cmd->add_option("--corpus", rr_corpus, "Corpus directory (texts)")->required();
  rerank_cmd->add_option("--mode", rr_mode)->check(CLI::IsMember({"ce", "llm"}))->capture_default_str();
  rerank_cmd->add_option("--top-n", rr.cfg.top_n)->capture_default_str();
  rerank_cmd->add_option("--window-size", rr.cfg.window_size)->capture_default_str();
  rerank_cmd->add_option("--window-stride", rr.cfg.window_stride)->capture_default_str();
  rerank_cmd->add_option("--max-retries", rr.cfg.max_retries)->capture_default_str();
  rerank_cmd->add_option("--max-tokens", rr.cfg.max_tokens)->capture_default_str();
  rerank_cmd->add_option("--endpoint", rr.endpoint, "Scoring or generation URL")->required();
  rerank_cmd->add_option("--api", rr.api)->check(CLI::IsMember({"generate", "chat"}))->capture_default_str();
  rerank_cmd->add_option("--model", rr.model);
  rerank_cmd->add_option("--system", rr.system_message);
  rerank_cmd->add_option("--prompt", rr_prompt, "Prompt template file");
  rerank_cmd->add_option("--parallel", rr.max_parallel_requests, "Queries re-ranked concurrently")->capture_default_str();
  rerank_cmd->add_option("--log", rr_log, "Per-query cost/latency log (default: <out>.log.jsonl)");
  rerank_cmd->add_option("--out", rr_out, "Output run file")->required();

  // cluster
  auto* cluster_cmd = app.add_subcommand("cluster", "Topic clusters over claim (and post) embeddings");
  fs::path c_claims, c_posts, c_out;
  ClusterParams cparams;
  cluster_cmd->add_option("--claims-store", c_claims)->required();
  cluster_cmd->add_option("--posts-store", c_posts, "Cluster posts jointly with claims");
  cluster_cmd->add_option("--num-clusters", cparams.num_clusters)->capture_default_str();
  cluster_cmd->add_option("--tau", cparams.tau, "Minimum cosine to the centroid")->capture_default_str();
  cluster_cmd->add_option("--seed", cparams.seed)->capture_default_str();
  cluster_cmd->add_option("--out", c_out)->required();

  // negatives
  auto* neg_cmd = app.add_subcommand("negatives", "Mine hard negatives for the train split");
  fs::path n_corpus, n_manifest, n_posts, n_claims, n_clusters, n_out;
  std::string strategy_text = "similarity";
  NegativeConfig ncfg;
  neg_cmd->add_option("--strategy", strategy_text)
      ->check(CLI::IsMember({"random", "topic", "similarity"}))
      ->capture_default_str();
  neg_cmd->add_option("--k", ncfg.k)->capture_default_str();
  neg_cmd->add_option("--seed", ncfg.seed)->capture_default_str();
  neg_cmd->add_option("--corpus", n_corpus)->required();
  neg_cmd->add_option("--manifest", n_manifest)->required();
  neg_cmd->add_option("--posts-store", n_posts, "Needed for similarity");
  neg_cmd->add_option("--claims-store", n_claims, "Needed for similarity");
  neg_cmd->add_option("--clusters", n_clusters, "Cluster map, needed for topic");
  neg_cmd->add_option("--out", n_out)->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Pair Success@k and MRR@k of a run");
  fs::path e_run, e_pairs, e_corpus, e_manifest, e_out;
  std::string e_scope = "test", e_setting = "multi", e_unit = "pair", e_label;
  std::size_t e_k = 10;
  eval_cmd->add_option("--run", e_run)->required();
  auto* e_pairs_opt = eval_cmd->add_option("--pairs", e_pairs, "Evaluated gold pairs (instead of corpus + manifest)");
  auto* e_corpus_opt = eval_cmd->add_option("--corpus", e_corpus, "Corpus directory");
  auto* e_manifest_opt = eval_cmd->add_option("--manifest", e_manifest, "Split manifest");
  e_corpus_opt->needs(e_manifest_opt);
  e_manifest_opt->needs(e_corpus_opt);
  e_pairs_opt->excludes(e_manifest_opt);
  eval_cmd->add_option("--scope,--pool", e_scope)->check(CLI::IsMember({"test", "full"}))->capture_default_str();
  eval_cmd->add_option("--setting", e_setting)->check(CLI::IsMember({"multi", "cross"}))->capture_default_str();
  eval_cmd->add_option("--k", e_k)->capture_default_str();
  eval_cmd->add_option("--unit", e_unit)->check(CLI::IsMember({"pair", "post"}))->capture_default_str();
  eval_cmd->add_option("--label", e_label);
  eval_cmd->add_option("--out", e_out, "Metrics JSON");

  // report
  auto* report_cmd = app.add_subcommand("report", "Compare metrics files against the first one");
  std::vector<fs::path> reports;
  std::string report_format = "text";
  report_cmd->add_option("--runs", reports, "Metrics JSON files, baseline first")->delimiter(',')->required();
  report_cmd->add_option("--format", report_format)->check(CLI::IsMember({"text", "csv"}))->capture_default_str();

  // run
  auto* run_cmd = app.add_subcommand("run", "Run the whole pipeline from a config file");
  fs::path config_path;
  bool dry_run = false, force = false;
  run_cmd->add_option("--config", config_path)->required();
  run_cmd->add_flag("--dry-run", dry_run, "Print the stage plan without touching anything");
  run_cmd->add_flag("--force", force, "Ignore cached stages");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*ingest_cmd) {
      auto r = ingest_files(posts_in, claims_in, pairs_in);
      save_corpus(ingest_out, r.corpus);
      write_file(ingest_out / "ingest_report.json", r.report.to_json().dump(2) + "\n");
      print_json(r.report.to_json());
    } else if (*filter_cmd) {
      auto r = filter_language_threshold(load_corpus(filter_in), min_posts);
      save_corpus(filter_out, r.corpus);
      print_json(r.report.to_json());
    } else if (*langid_cmd) {
      const auto items = read_text_items(langid_in);
      std::vector<std::shared_ptr<LanguageDetector>> detectors;
      for (const auto& d : detector_specs) {
        const auto eq = d.find('=');
        detectors.push_back(eq == std::string::npos
                                ? std::make_shared<CommandDetector>(d, d)
                                : std::make_shared<CommandDetector>(d.substr(0, eq), d.substr(eq + 1)));
      }
      std::vector<std::string> texts;
      for (const auto& it : items) texts.push_back(it.text);
      const auto decisions = detect_languages(texts, detectors, fusion);
      std::map<std::string, std::string> assignments;
      for (std::size_t i = 0; i < items.size(); ++i) {
        assignments[items[i].id] = decisions[i].language.value_or(std::string(kUndetermined));
      }
      std::map<std::string, std::string> overrides;
      if (!langid_overrides.empty()) {
        overrides = json::parse(read_file(langid_overrides)).get<std::map<std::string, std::string>>();
      }
      const auto resolved = resolve_outliers(assignments, rare_threshold, overrides);
      std::vector<json> rows;
      for (std::size_t i = 0; i < items.size(); ++i) {
        json votes = json::array();
        for (const auto& v : decisions[i].votes) {
          votes.push_back({{"detector", v.detector}, {"language", v.language}, {"score", v.score}});
        }
        rows.push_back({{"id", items[i].id}, {"language", resolved.assignments.at(items[i].id)}, {"votes", votes}});
      }
      write_jsonl(langid_out, rows);
      json report = resolved.to_json();
      report["normalizer"] = kVoteNormalizer;
      if (!langid_report.empty()) write_file(langid_report, report.dump(2) + "\n");
      print_json(report);
    } else if (*split_cmd) {
      const Corpus c = load_corpus(split_corpus);
      const auto m = build_splits(c, parse_ratios(ratios_text), split_seed);
      save_manifest(split_out, m);
      for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
      print_json(m.to_json()["strata"]);
    } else if (*embed_cmd) {
      std::string tag = spec.tag;
      ProviderSpec s = ProviderSpec::from_location(provider_location);
      s.query_template = spec.query_template;
      s.passage_template = spec.passage_template;
      s.batch_size = spec.batch_size;
      s.max_parallel_requests = spec.max_parallel_requests;
      s.max_retries = spec.max_retries;
      s.tag = tag;
      auto provider = make_provider(s);
      const Role role = parse_role(embed_role);
      std::vector<EmbedItem> items;
      for (auto& it : read_text_items(embed_items)) items.push_back({std::move(it.id), std::move(it.text), role});
      std::optional<EmbeddingStore> existing;
      if (resume && fs::exists(embed_out)) existing = load_store(embed_out);
      auto run = embed_corpus(items, *provider, s, existing ? &*existing : nullptr);
      save_store(run.store, embed_out);
      for (const auto& f : run.failures) std::cerr << "failed: " << f.id << ": " << f.message << "\n";
      print_json({{"rows", run.store.size()},
                  {"dim", run.store.dim()},
                  {"skipped", run.skipped},
                  {"provider_calls", run.provider_calls},
                  {"failures", run.failures.size()}});
      if (!run.failures.empty()) return 3;
    } else if (*retrieve_cmd) {
      const Corpus c = load_corpus(r_corpus);
      const auto m = load_manifest(r_manifest);
      const auto view = make_view(c, m, parse_setting(setting_text), parse_scope(pool_text));
      const auto posts = load_store(r_posts);
      const auto claims = load_store(r_claims);
      auto batch = batch_retrieve(view.query_ids, posts, claims, view.pool, retrieve_k, threads);
      std::vector<RankedList> lists;
      for (auto& l : batch.lists) {
        if (l) lists.push_back(std::move(*l));
      }
      write_run(r_out, lists);
      for (const auto& e : batch.errors) std::cerr << "skipped " << e.post_id << ": " << e.message << "\n";
      print_json({{"queries", lists.size()}, {"pool", view.pool.claim_ids.size()}, {"errors", batch.errors.size()}});
    } else if (*rerank_cmd) {
      rr.cfg.mode = parse_rerank_mode(rr_mode);
      const Corpus c = load_corpus(rr_corpus);
      const auto lists = read_run(rr_run);
      const PromptTemplate prompt = rr_prompt.empty() ? PromptTemplate() : PromptTemplate::from_file(rr_prompt);
      const auto hooks = remote_hooks();
      std::unique_ptr<PairScorer> scorer;
      std::unique_ptr<TextGenerator> llm;
      if (rr.cfg.mode == RerankMode::cross_encoder) {
        scorer = hooks.pair_scorer(rr);
      } else {
        llm = hooks.generator(rr);
      }
      std::vector<RerankLogEntry> log;
      const auto out = rerank_batch(lists, rr.cfg, c, scorer.get(), llm.get(), prompt, rr.max_parallel_requests, &log);
      write_run(rr_out, out);
      write_rerank_log(rr_log.empty() ? fs::path(rr_out.string() + ".log.jsonl") : rr_log, log, rr.cfg.mode);
      std::size_t failures = 0, calls = 0;
      for (const auto& e : log) {
        failures += e.stats.failures;
        calls += e.stats.calls;
      }
      print_json({{"queries", out.size()}, {"calls", calls}, {"failures", failures}});
    } else if (*cluster_cmd) {
      const auto claims = load_store(c_claims);
      std::optional<EmbeddingStore> posts;
      if (!c_posts.empty()) posts = load_store(c_posts);
      const auto m = cluster_claims(claims, cparams, {}, posts ? &*posts : nullptr);
      save_cluster_map(c_out, m);
      std::size_t uncategorized = 0;
      for (const auto& [id, c] : m.cluster_of) uncategorized += c == kUncategorized;
      print_json({{"claims", m.cluster_of.size()}, {"uncategorized", uncategorized}, {"method_tag", m.method_tag}});
    } else if (*neg_cmd) {
      ncfg.strategy = parse_negative_strategy(strategy_text);
      const Corpus train = split_subset(apply_manifest(load_corpus(n_corpus), load_manifest(n_manifest)), Split::train);
      std::vector<std::string> pool;
      for (const auto& f : train.claims) pool.push_back(f.id);
      NegativeFileHeader header;
      header.strategy = ncfg.strategy;
      header.k = ncfg.k;
      header.seed = ncfg.seed;
      std::vector<NegativeRecord> records;
      switch (ncfg.strategy) {
        case NegativeStrategy::random:
          records = mine_random(train.pairs, pool, ncfg);
          break;
        case NegativeStrategy::similarity: {
          if (n_posts.empty() || n_claims.empty()) {
            throw ValidationError("similarity negatives need --posts-store and --claims-store");
          }
          const auto posts = load_store(n_posts);
          const auto claims = load_store(n_claims);
          header.provider_tag = claims.provider_tag();
          records = mine_similarity(train.pairs, posts, claims, pool, ncfg);
          break;
        }
        case NegativeStrategy::topic: {
          if (n_clusters.empty()) throw ValidationError("topic negatives need --clusters");
          const auto clusters = load_cluster_map(n_clusters);
          header.cluster_method_tag = clusters.method_tag;
          records = mine_topic(train.pairs, clusters, pool, ncfg);
          break;
        }
      }
      serialize_negatives(n_out, header, records);
      const auto audit = audit_negatives(records, train.pairs, ncfg.k);
      std::size_t short_records = 0;
      for (const auto& r : records) short_records += r.pool_exhausted;
      print_json({{"records", records.size()},
                  {"pool_exhausted", short_records},
                  {"gold_leaks", audit.gold_leaks},
                  {"duplicates", audit.duplicates}});
    } else if (*eval_cmd) {
      const Setting setting = parse_setting(e_setting);
      const Scope scope = parse_scope(e_scope);
      EvalOptions eo;
      eo.per_post_best = e_unit == "post";
      eo.label = e_label.empty() ? e_run.stem().string() : e_label;
      std::optional<ExperimentView> view;
      std::vector<PairLink> pairs;
      if (!e_corpus.empty()) {
        view = make_view(load_corpus(e_corpus), load_manifest(e_manifest), setting, scope);
        eo.pool = &view->pool;
        eo.languages = &view->corpus;
        pairs = view->pairs;
      } else if (!e_pairs.empty()) {
        for (const auto& r : read_records(e_pairs)) {
          pairs.push_back({field_as_id(r, "post_id", e_pairs.string()), field_as_id(r, "claim_id", e_pairs.string()),
                           Relationship::claim_review});
        }
      } else {
        throw ValidationError("eval needs --pairs or --corpus with --manifest");
      }
      const auto report = evaluate_run(read_run(e_run), pairs, setting, scope, e_k, eo);
      if (!e_out.empty()) save_report(e_out, report);
      print_json(report.to_json());
    } else if (*report_cmd) {
      std::vector<MetricsReport> loaded;
      for (const auto& p : reports) loaded.push_back(load_report(p));
      const auto table = compare_runs(loaded);
      std::cout << (report_format == "csv" ? render_csv(table) : render_text(table));
    } else if (*run_cmd) {
      ExperimentConfig cfg;
      try {
        cfg = load_config(config_path);
      } catch (const Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
      }
      PipelineOptions opts;
      opts.dry_run = dry_run;
      opts.force = force;
      const auto result = run_pipeline(cfg, opts, remote_hooks());
      if (result.exit_code == 0 && result.metrics) print_json(result.metrics->to_json());
      return result.exit_code;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
