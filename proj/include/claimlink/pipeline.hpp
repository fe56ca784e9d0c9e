#pragma once

// End-to-end experiment runner: ingest, langid, split, embed, retrieve,
// optional rerank and negatives, eval.
//
// Every stage writes its artifacts under the output directory and records a
// key (hash of its parameters and input artifacts) plus the hashes of its
// outputs in manifest.json. A stage whose key and outputs still match is
// reported as cached and not re-run. Logs with wall-clock data live under
// logs/ and are not part of the hashed outputs.

#include <atomic>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "clustering.hpp"
#include "config.hpp"
#include "corpus.hpp"
#include "embed.hpp"
#include "eval.hpp"
#include "hash.hpp"
#include "langid.hpp"
#include "negatives.hpp"
#include "rerank.hpp"
#include "retrieval.hpp"
#include "split.hpp"

namespace claimlink {

// Factories for anything that talks to the outside world. Unset factories
// fall back to the built-in file provider; remote endpoints need a factory.
struct PipelineHooks {
  std::function<std::unique_ptr<EmbeddingProvider>(const ProviderSpec&)> embedding_provider;
  std::function<std::unique_ptr<PairScorer>(const RerankSection&)> pair_scorer;
  std::function<std::unique_ptr<TextGenerator>(const RerankSection&)> generator;
  std::function<std::shared_ptr<LanguageDetector>(const std::string& name, const std::string& command)> detector;
};

struct RerankLogEntry {
  std::string post_id;
  RerankStats stats;
};

// Re-ranks every list; different queries run concurrently on up to
// `max_parallel` threads, windows of one query stay sequential.
inline std::vector<RankedList> rerank_batch(const std::vector<RankedList>& lists, const RerankConfig& cfg,
                                            const Corpus& corpus, PairScorer* scorer, TextGenerator* llm,
                                            const PromptTemplate& prompt, std::size_t max_parallel,
                                            std::vector<RerankLogEntry>* log = nullptr) {
  cfg.validate();
  if (cfg.mode == RerankMode::cross_encoder && !scorer) throw ValidationError("cross-encoder mode needs a scorer");
  if (cfg.mode == RerankMode::llm_listwise && !llm) throw ValidationError("llm mode needs a generator");
  auto claim_text = [&](const std::string& id) {
    const FactCheck* c = corpus.find_claim(id);
    if (!c) throw ValidationError("claim '" + id + "' not in corpus");
    return c->claim_text;
  };
  for (const auto& l : lists) {
    if (!corpus.find_post(l.post_id)) throw ValidationError("post '" + l.post_id + "' not in corpus");
    for (const auto& e : l.entries) claim_text(e.claim_id);
  }

  std::vector<RankedList> out(lists.size());
  std::vector<RerankStats> stats(lists.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next++;
      if (i >= lists.size()) return;
      const std::string& query = corpus.find_post(lists[i].post_id)->text;
      auto res = cfg.mode == RerankMode::cross_encoder
                     ? rerank_cross_encoder(lists[i], cfg, *scorer, query, claim_text)
                     : rerank_llm(lists[i], cfg, *llm, prompt, query, claim_text);
      out[i] = std::move(res.list);
      stats[i] = res.stats;
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(max_parallel, 1), std::max<std::size_t>(lists.size(), 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (log) {
    for (std::size_t i = 0; i < lists.size(); ++i) log->push_back({lists[i].post_id, stats[i]});
  }
  return out;
}

inline void write_rerank_log(const std::filesystem::path& path, const std::vector<RerankLogEntry>& log,
                             RerankMode mode) {
  std::vector<json> rows;
  for (const auto& e : log) {
    json row = e.stats.to_json();
    row["post_id"] = e.post_id;
    row["mode"] = to_string(mode);
    rows.push_back(std::move(row));
  }
  write_jsonl(path, rows);
}

enum class StageStatus { planned, ran, cached, failed, skipped };

inline const char* to_string(StageStatus s) {
  switch (s) {
    case StageStatus::planned: return "planned";
    case StageStatus::ran: return "ran";
    case StageStatus::cached: return "cached";
    case StageStatus::failed: return "failed";
    case StageStatus::skipped: return "skipped";
  }
  return "?";
}

struct StageReport {
  std::string name;
  StageStatus status = StageStatus::planned;
  std::vector<std::string> outputs;  // relative to the output directory
  std::string message;
};

struct PipelineResult {
  int exit_code = 0;
  std::vector<StageReport> stages;
  std::string error;
  std::optional<MetricsReport> metrics;
};

struct PipelineOptions {
  bool dry_run = false;
  bool force = false;  // ignore cached stages
  std::ostream* log = &std::cerr;
};

class StageError : public Error {
public:
  StageError(const std::string& stage, const std::string& artifact, const std::string& what)
      : Error("stage '" + stage + "' failed (artifact: " + artifact + "): " + what) {}
};

inline std::string file_hash(const std::filesystem::path& p) { return hex64(fnv1a64(read_file(p))); }

namespace pipeline_detail {

namespace fs = std::filesystem;

struct Stage {
  std::string name;
  std::vector<fs::path> inputs;  // absolute
  json params;
  std::vector<std::string> outputs;  // relative to the output dir
  std::function<void()> run;
};

inline std::string stage_key(const Stage& s) {
  std::uint64_t h = fnv1a64(s.name);
  h = fnv1a64(s.params.dump(), h);
  for (const auto& in : s.inputs) {
    h = fnv1a64(in.filename().string(), h);
    h = fnv1a64(file_hash(in), h);
  }
  return hex64(h);
}

inline bool outputs_match(const json& entry, const fs::path& out_dir) {
  if (!entry.contains("outputs")) return false;
  for (const auto& [rel, hash] : entry["outputs"].items()) {
    const fs::path p = out_dir / rel;
    if (!fs::is_regular_file(p) || file_hash(p) != hash.get<std::string>()) return false;
  }
  return true;
}

}  // namespace pipeline_detail

// Runs (or, with dry_run, plans) the full pipeline. Exit codes: 0 success,
// 2 configuration error, 3 stage failure. Artifacts of completed stages and
// partial artifacts of a failed stage are kept.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& opts = {},
                                   const PipelineHooks& hooks = {}) {
  namespace fs = std::filesystem;
  using pipeline_detail::Stage;
  PipelineResult result;
  std::ostream& log = *opts.log;
  try {
    cfg.validate();
    if (cfg.embed.kind == ProviderKind::remote_service && !hooks.embedding_provider) {
      throw ValidationError("embed.provider is a URL but no remote client is available");
    }
  } catch (const ValidationError& e) {
    result.exit_code = 2;
    result.error = e.what();
    log << "config error: " << e.what() << "\n";
    return result;
  }

  const fs::path out = cfg.output_dir;
  auto at = [&](const std::string& rel) { return out / rel; };

  // Artifact layout.
  const std::string corpus_dir = "corpus";
  const std::string filtered_dir = "langid/corpus";
  const std::vector<std::string> corpus_files = {"posts.jsonl", "claims.jsonl", "pairs.jsonl"};
  auto files_in = [&](const std::string& dir) {
    std::vector<fs::path> v;
    for (const auto& f : corpus_files) v.push_back(at(dir + "/" + f));
    return v;
  };
  auto rel_files_in = [&](const std::string& dir, std::vector<std::string> extra = {}) {
    std::vector<std::string> v;
    for (const auto& f : corpus_files) v.push_back(dir + "/" + f);
    v.insert(v.end(), extra.begin(), extra.end());
    return v;
  };
  const std::string manifest_file = "split/manifest.json";
  const std::string posts_store = "embeddings/posts.clnk";
  const std::string claims_store = "embeddings/claims.clnk";
  const std::string retrieved_run = "runs/retrieved.jsonl";
  const std::string reranked_run = "runs/reranked.jsonl";
  const std::string negatives_file = "negatives/negatives.jsonl";
  const std::string clusters_file = "negatives/clusters.json";
  const std::string metrics_file = "eval/metrics.json";

  std::vector<Stage> stages;

  stages.push_back({"ingest",
                    {cfg.corpus.posts, cfg.corpus.claims, cfg.corpus.pairs},
                    json::object(),
                    rel_files_in(corpus_dir, {"corpus/ingest_report.json"}),
                    [&] {
                      auto r = ingest_files(cfg.corpus.posts, cfg.corpus.claims, cfg.corpus.pairs);
                      save_corpus(at(corpus_dir), r.corpus);
                      write_file(at("corpus/ingest_report.json"), r.report.to_json().dump(2) + "\n");
                    }});

  {
    std::vector<fs::path> inputs = files_in(corpus_dir);
    if (!cfg.langid.overrides.empty()) inputs.push_back(cfg.langid.overrides);
    json params = cfg.to_json()["langid"];
    params["min_posts"] = cfg.corpus.min_posts;
    stages.push_back(
        {"langid", inputs, params, rel_files_in(filtered_dir, {"langid/report.json"}), [&] {
           Corpus c = load_corpus(at(corpus_dir));
           std::map<std::string, std::string> assignments;
           json decisions = json::array();
           if (!cfg.langid.detectors.empty()) {
             std::vector<std::shared_ptr<LanguageDetector>> detectors;
             for (const auto& [name, command] : cfg.langid.detectors) {
               detectors.push_back(hooks.detector ? hooks.detector(name, command)
                                                  : std::make_shared<CommandDetector>(name, command));
             }
             std::vector<std::string> texts;
             for (const auto& p : c.posts) texts.push_back(p.text);
             for (const auto& f : c.claims) texts.push_back(f.claim_text);
             const auto decided = detect_languages(texts, detectors, cfg.langid.fusion);
             for (std::size_t i = 0; i < decided.size(); ++i) {
               const bool is_post = i < c.posts.size();
               const std::string key = is_post ? "post:" + c.posts[i].id
                                               : "claim:" + c.claims[i - c.posts.size()].id;
               assignments[key] = decided[i].language.value_or(std::string(kUndetermined));
             }
           } else {
             for (const auto& p : c.posts) assignments["post:" + p.id] = p.language;
             for (const auto& f : c.claims) assignments["claim:" + f.id] = f.language;
           }
           std::map<std::string, std::string> overrides;
           if (!cfg.langid.overrides.empty()) {
             try {
               overrides = json::parse(read_file(cfg.langid.overrides)).get<std::map<std::string, std::string>>();
             } catch (const json::exception& e) {
               throw FormatError(cfg.langid.overrides.string() + ": " + e.what());
             }
           }
           const auto resolved = resolve_outliers(assignments, cfg.langid.rare_threshold, overrides);
           for (auto& p : c.posts) p.language = resolved.assignments.at("post:" + p.id);
           for (auto& f : c.claims) f.language = resolved.assignments.at("claim:" + f.id);
           const auto filtered = filter_language_threshold(c, cfg.corpus.min_posts);
           save_corpus(at(filtered_dir), filtered.corpus);
           json report = {{"outliers", resolved.to_json()},
                          {"filter", filtered.report.to_json()},
                          {"source", cfg.langid.detectors.empty() ? "records" : "detectors"},
                          {"posts", filtered.corpus.posts.size()},
                          {"claims", filtered.corpus.claims.size()},
                          {"pairs", filtered.corpus.pairs.size()}};
           write_file(at("langid/report.json"), report.dump(2) + "\n");
         }});
  }

  stages.push_back({"split", files_in(filtered_dir), cfg.to_json()["split"], {manifest_file}, [&] {
                      const Corpus c = load_corpus(at(filtered_dir));
                      const auto m = build_splits(c, cfg.split.ratios, cfg.split.seed);
                      const auto problems = check_manifest(c, m);
                      if (!problems.empty()) throw Error("split manifest check failed: " + problems.front());
                      save_manifest(at(manifest_file), m);
                    }});

  {
    std::vector<fs::path> inputs = files_in(filtered_dir);
    if (cfg.embed.kind == ProviderKind::precomputed_file) inputs.push_back(cfg.embed.location);
    stages.push_back({"embed", inputs, cfg.to_json()["embed"], {posts_store, claims_store}, [&] {
                        const Corpus c = load_corpus(at(filtered_dir));
                        auto provider = hooks.embedding_provider ? hooks.embedding_provider(cfg.embed)
                                                                 : std::make_unique<PrecomputedProvider>(cfg.embed.location);
                        auto embed_role = [&](Role role, const std::string& rel) {
                          std::vector<EmbedItem> items;
                          if (role == Role::query) {
                            for (const auto& p : c.posts) items.push_back({p.id, p.text, role});
                          } else {
                            for (const auto& f : c.claims) items.push_back({f.id, f.claim_text, role});
                          }
                          auto run = embed_corpus(items, *provider, cfg.embed);
                          save_store(run.store, at(rel));
                          if (!run.failures.empty()) {
                            throw StageError("embed", at(rel).string(),
                                             std::to_string(run.failures.size()) + " item(s) failed, first '" +
                                                 run.failures.front().id + "': " + run.failures.front().message);
                          }
                        };
                        embed_role(Role::query, posts_store);
                        embed_role(Role::passage, claims_store);
                      }});
  }

  auto view_of = [&](const Corpus& c, const SplitManifest& m) {
    return make_view(c, m, cfg.retrieve.setting, cfg.retrieve.scope);
  };

  {
    std::vector<fs::path> inputs = files_in(filtered_dir);
    inputs.push_back(at(manifest_file));
    inputs.push_back(at(posts_store));
    inputs.push_back(at(claims_store));
    json params = cfg.to_json()["retrieve"];
    stages.push_back({"retrieve", inputs, params, {retrieved_run}, [&] {
                        const Corpus c = load_corpus(at(filtered_dir));
                        const auto m = load_manifest(at(manifest_file));
                        const auto view = view_of(c, m);
                        const auto posts = load_store(at(posts_store));
                        const auto claims = load_store(at(claims_store));
                        auto batch = batch_retrieve(view.query_ids, posts, claims, view.pool, cfg.retrieve.k,
                                                    cfg.retrieve.threads);
                        std::vector<RankedList> lists;
                        for (auto& l : batch.lists) {
                          if (l) lists.push_back(std::move(*l));
                        }
                        write_run(at(retrieved_run), lists);
                        if (!batch.errors.empty()) {
                          throw StageError("retrieve", at(retrieved_run).string(),
                                           std::to_string(batch.errors.size()) + " post(s) not retrievable, first '" +
                                               batch.errors.front().post_id + "': " + batch.errors.front().message);
                        }
                      }});
  }

  std::string final_run = retrieved_run;
  if (cfg.rerank.enabled) {
    final_run = reranked_run;
    std::vector<fs::path> inputs = {at(filtered_dir + "/posts.jsonl"), at(filtered_dir + "/claims.jsonl"),
                                    at(retrieved_run)};
    if (!cfg.rerank.prompt.empty()) inputs.push_back(cfg.rerank.prompt);
    stages.push_back({"rerank", inputs, cfg.to_json()["rerank"], {reranked_run}, [&] {
                        const Corpus c = load_corpus(at(filtered_dir));
                        const auto lists = read_run(at(retrieved_run));
                        const PromptTemplate prompt =
                            cfg.rerank.prompt.empty() ? PromptTemplate() : PromptTemplate::from_file(cfg.rerank.prompt);
                        std::unique_ptr<PairScorer> scorer;
                        std::unique_ptr<TextGenerator> llm;
                        if (cfg.rerank.cfg.mode == RerankMode::cross_encoder) {
                          if (!hooks.pair_scorer) throw ValidationError("no pair-scoring client available");
                          scorer = hooks.pair_scorer(cfg.rerank);
                        } else {
                          if (!hooks.generator) throw ValidationError("no text-generation client available");
                          llm = hooks.generator(cfg.rerank);
                        }
                        std::vector<RerankLogEntry> entries;
                        const auto reranked = rerank_batch(lists, cfg.rerank.cfg, c, scorer.get(), llm.get(), prompt,
                                                           cfg.rerank.max_parallel_requests, &entries);
                        write_run(at(reranked_run), reranked);
                        write_rerank_log(at("logs/rerank_log.jsonl"), entries, cfg.rerank.cfg.mode);
                      }});
  }

  if (cfg.negatives.enabled) {
    std::vector<fs::path> inputs = files_in(filtered_dir);
    inputs.push_back(at(manifest_file));
    std::vector<std::string> outputs = {negatives_file};
    const auto strategy = cfg.negatives.cfg.strategy;
    if (strategy != NegativeStrategy::random) {
      inputs.push_back(at(posts_store));
      inputs.push_back(at(claims_store));
    }
    if (strategy == NegativeStrategy::topic) outputs.push_back(clusters_file);
    stages.push_back({"negatives", inputs, cfg.to_json()["negatives"], outputs, [&, strategy] {
                        const Corpus c = load_corpus(at(filtered_dir));
                        const auto m = load_manifest(at(manifest_file));
                        const Corpus train = split_subset(apply_manifest(c, m), Split::train);
                        std::vector<std::string> pool;
                        for (const auto& f : train.claims) pool.push_back(f.id);
                        NegativeFileHeader header;
                        header.strategy = strategy;
                        header.k = cfg.negatives.cfg.k;
                        header.seed = cfg.negatives.cfg.seed;
                        std::vector<NegativeRecord> records;
                        if (strategy == NegativeStrategy::random) {
                          records = mine_random(train.pairs, pool, cfg.negatives.cfg);
                        } else {
                          const auto posts = load_store(at(posts_store));
                          const auto claims = load_store(at(claims_store));
                          header.provider_tag = claims.provider_tag();
                          if (strategy == NegativeStrategy::similarity) {
                            records = mine_similarity(train.pairs, posts, claims, pool, cfg.negatives.cfg);
                          } else {
                            ClusterParams params;
                            params.num_clusters = cfg.negatives.num_clusters;
                            params.tau = cfg.negatives.tau;
                            params.seed = cfg.negatives.cfg.seed;
                            std::vector<std::string> post_ids;
                            for (const auto& p : train.posts) post_ids.push_back(p.id);
                            const auto clusters = cluster_claims(claims, params, pool, &posts, post_ids);
                            save_cluster_map(at(clusters_file), clusters);
                            header.cluster_method_tag = clusters.method_tag;
                            records = mine_topic(train.pairs, clusters, pool, cfg.negatives.cfg);
                          }
                        }
                        serialize_negatives(at(negatives_file), header, records);
                      }});
  }

  {
    std::vector<fs::path> inputs = files_in(filtered_dir);
    inputs.push_back(at(manifest_file));
    inputs.push_back(at(final_run));
    json params = cfg.to_json()["eval"];
    params["setting"] = to_string(cfg.retrieve.setting);
    params["scope"] = to_string(cfg.retrieve.scope);
    stages.push_back({"eval", inputs, params, {metrics_file}, [&] {
                        const Corpus c = load_corpus(at(filtered_dir));
                        const auto m = load_manifest(at(manifest_file));
                        const auto view = view_of(c, m);
                        EvalOptions eo;
                        eo.per_post_best = cfg.eval.per_post_best;
                        eo.pool = &view.pool;
                        eo.languages = &view.corpus;
                        eo.label = fs::path(final_run).stem().string();
                        const auto report = evaluate_run(read_run(at(final_run)), view.pairs, cfg.retrieve.setting,
                                                         cfg.retrieve.scope, cfg.eval.k, eo);
                        save_report(at(metrics_file), report);
                      }});
  }

  // Previous manifest, if any.
  json previous = json::object();
  const fs::path manifest_path = at("manifest.json");
  if (fs::is_regular_file(manifest_path)) {
    try {
      previous = json::parse(read_file(manifest_path)).value("stages", json::object());
    } catch (const json::exception&) {
      previous = json::object();
    }
  }

  json manifest = {{"config", cfg.to_json()},
                   {"seeds", {{"split", cfg.split.seed}, {"negatives", cfg.negatives.cfg.seed}}},
                   {"stages", json::object()}};
  auto save_pipeline_manifest = [&] { write_file(manifest_path, manifest.dump(2) + "\n"); };

  bool upstream_changed = opts.force;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const Stage& s = stages[i];
    StageReport rep{s.name, StageStatus::planned, s.outputs, {}};
    std::string key;
    const bool inputs_ready =
        std::all_of(s.inputs.begin(), s.inputs.end(), [](const fs::path& p) { return fs::is_regular_file(p); });
    if (!upstream_changed && inputs_ready) {
      key = pipeline_detail::stage_key(s);
      const json* prev = previous.contains(s.name) ? &previous[s.name] : nullptr;
      if (prev && prev->value("key", std::string{}) == key && pipeline_detail::outputs_match(*prev, out)) {
        rep.status = StageStatus::cached;
        manifest["stages"][s.name] = *prev;
      }
    }
    if (opts.dry_run) {
      if (rep.status != StageStatus::cached) upstream_changed = true;
      log << "[plan] " << s.name << ": " << (rep.status == StageStatus::cached ? "cached" : "run") << " -> ";
      for (std::size_t j = 0; j < s.outputs.size(); ++j) log << (j ? ", " : "") << (out / s.outputs[j]).string();
      log << "\n";
      result.stages.push_back(std::move(rep));
      continue;
    }
    if (rep.status == StageStatus::cached) {
      log << "[" << s.name << "] cached\n";
      result.stages.push_back(std::move(rep));
      continue;
    }
    upstream_changed = true;
    log << "[" << s.name << "] running\n";
    try {
      s.run();
      json outputs = json::object();
      for (const auto& rel : s.outputs) outputs[rel] = file_hash(out / rel);
      manifest["stages"][s.name] = {{"key", pipeline_detail::stage_key(s)}, {"outputs", outputs}};
      rep.status = StageStatus::ran;
      result.stages.push_back(std::move(rep));
      save_pipeline_manifest();
    } catch (const std::exception& e) {
      const StageError* se = dynamic_cast<const StageError*>(&e);
      const std::string msg =
          se ? e.what() : StageError(s.name, (out / s.outputs.front()).string(), e.what()).what();
      rep.status = StageStatus::failed;
      rep.message = msg;
      result.stages.push_back(std::move(rep));
      for (std::size_t j = i + 1; j < stages.size(); ++j) {
        result.stages.push_back({stages[j].name, StageStatus::skipped, stages[j].outputs, {}});
      }
      result.exit_code = 3;
      result.error = msg;
      log << msg << "\n";
      save_pipeline_manifest();
      return result;
    }
  }
  if (!opts.dry_run) {
    save_pipeline_manifest();
    result.metrics = load_report(at(metrics_file));
  }
  return result;
}

}  // namespace claimlink
