#pragma once

// Exact dense retrieval over unit-normalized stores.
//
// Rankings are total: higher score first, equal scores ordered by claim id.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "corpus.hpp"
#include "embedstore.hpp"
#include "error.hpp"
#include "records.hpp"
#include "split.hpp"

namespace claimlink {

enum class Stage { retrieved, ce_reranked, llm_reranked };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::retrieved: return "retrieved";
    case Stage::ce_reranked: return "ce_reranked";
    case Stage::llm_reranked: return "llm_reranked";
  }
  return "retrieved";
}

inline Stage parse_stage(std::string_view s) {
  if (s == "retrieved") return Stage::retrieved;
  if (s == "ce_reranked") return Stage::ce_reranked;
  if (s == "llm_reranked") return Stage::llm_reranked;
  throw FormatError("unknown stage '" + std::string(s) + "'");
}

struct RankedEntry {
  std::string claim_id;
  double score = 0.0;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

// Higher score first; equal scores by ascending claim id.
inline bool ranks_before(double score_a, std::string_view id_a, double score_b, std::string_view id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

struct RankedList {
  std::string post_id;
  std::vector<RankedEntry> entries;
  Stage stage = Stage::retrieved;
  std::size_t k = 0;
  // Original retrieval scores of re-ranked entries.
  std::map<std::string, double> retrieval_scores;
  std::vector<std::string> annotations;

  std::optional<std::size_t> rank_of(std::string_view claim_id) const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].claim_id == claim_id) return i + 1;
    }
    return std::nullopt;
  }
};

enum class Setting { multilingual, crosslingual };
enum class Scope { test, full };

inline const char* to_string(Setting s) { return s == Setting::multilingual ? "multilingual" : "crosslingual"; }
inline const char* to_string(Scope s) { return s == Scope::test ? "test" : "full"; }

inline Setting parse_setting(std::string_view s) {
  if (s == "multi" || s == "multilingual") return Setting::multilingual;
  if (s == "cross" || s == "crosslingual") return Setting::crosslingual;
  throw ValidationError("unknown setting '" + std::string(s) + "' (expected multi|cross)");
}

inline Scope parse_scope(std::string_view s) {
  if (s == "test") return Scope::test;
  if (s == "full") return Scope::full;
  throw ValidationError("unknown scope '" + std::string(s) + "' (expected test|full)");
}

enum class PoolPolicy { test_split, full_corpus, crosslingual_test, crosslingual_full };

inline const char* to_string(PoolPolicy p) {
  switch (p) {
    case PoolPolicy::test_split: return "test_split";
    case PoolPolicy::full_corpus: return "full_corpus";
    case PoolPolicy::crosslingual_test: return "crosslingual_test";
    case PoolPolicy::crosslingual_full: return "crosslingual_full";
  }
  return "test_split";
}

struct CandidatePool {
  std::vector<std::string> claim_ids;  // sorted, unique
  PoolPolicy policy = PoolPolicy::full_corpus;
  const SplitManifest* source_manifest = nullptr;
};

inline CandidatePool pool_of(std::vector<std::string> ids, PoolPolicy policy = PoolPolicy::full_corpus) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return {std::move(ids), policy, nullptr};
}

// Queries, gold pairs and the candidate pool for one (setting, scope).
// Queries and pairs always come from the test split; the full scope only
// widens the pool with distractors.
struct ExperimentView {
  Corpus corpus;  // setting view with splits applied
  CandidatePool pool;
  std::vector<std::string> query_ids;
  std::vector<PairLink> pairs;
  Setting setting = Setting::multilingual;
  Scope scope = Scope::test;
};

inline CandidatePool make_pool(const Corpus& corpus, const SplitManifest& manifest, Setting setting,
                               Scope scope) {
  const Corpus view = setting == Setting::crosslingual ? crosslingual_view(corpus) : corpus;
  CandidatePool pool;
  pool.source_manifest = &manifest;
  pool.policy = setting == Setting::multilingual
                    ? (scope == Scope::test ? PoolPolicy::test_split : PoolPolicy::full_corpus)
                    : (scope == Scope::test ? PoolPolicy::crosslingual_test : PoolPolicy::crosslingual_full);
  for (const auto& c : view.claims) {
    const Split s = manifest.claim_split(c.id);
    if (s == Split::unassigned) throw ValidationError("manifest does not cover claim '" + c.id + "'");
    if (scope == Scope::full || s == Split::test) pool.claim_ids.push_back(c.id);
  }
  if (pool.claim_ids.empty()) {
    throw ValidationError(std::string("empty candidate pool for ") + to_string(setting) + "/" + to_string(scope));
  }
  return pool;
}

inline ExperimentView make_view(const Corpus& corpus, const SplitManifest& manifest, Setting setting,
                                Scope scope) {
  ExperimentView v;
  v.setting = setting;
  v.scope = scope;
  v.corpus = apply_manifest(setting == Setting::crosslingual ? crosslingual_view(corpus) : corpus, manifest);
  v.pool = make_pool(corpus, manifest, setting, scope);
  for (const auto& p : v.corpus.posts) {
    if (p.split == Split::test) v.query_ids.push_back(p.id);
  }
  for (const auto& l : v.corpus.pairs) {
    if (manifest.post_split(l.post_id) == Split::test) v.pairs.push_back(l);
  }
  return v;
}

namespace detail {

struct ResolvedPool {
  std::vector<std::size_t> rows;
  std::vector<const std::string*> ids;
};

inline ResolvedPool resolve_pool(const EmbeddingStore& claims, const CandidatePool& pool) {
  if (pool.claim_ids.empty()) throw ValidationError("empty candidate pool");
  ResolvedPool r;
  r.rows.reserve(pool.claim_ids.size());
  for (const auto& id : pool.claim_ids) {
    auto row = claims.find(id);
    if (!row) throw ValidationError("pool claim '" + id + "' missing from claim store");
    r.rows.push_back(*row);
    r.ids.push_back(&id);
  }
  return r;
}

inline void check_stores(const EmbeddingStore& posts, const EmbeddingStore& claims, std::size_t k) {
  if (k < 1) throw ValidationError("k must be >= 1");
  if (posts.dim() != claims.dim()) {
    throw ValidationError("dimension mismatch: post store " + std::to_string(posts.dim()) +
                          ", claim store " + std::to_string(claims.dim()));
  }
}

inline constexpr std::size_t kQueryTile = 8;

// scores[q * pool_size + j] = <query q, pool row j>. Every dot product is
// accumulated in the same order as `dot`, so tiling does not change values.
inline void score_tile(const EmbeddingStore& claims, const ResolvedPool& pool,
                       const std::vector<std::span<const float>>& queries, std::vector<double>& scores) {
  const std::size_t n = pool.rows.size();
  const std::size_t dim = claims.dim();
  const std::size_t nq = queries.size();
  scores.assign(nq * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const float* c = claims.row(pool.rows[j]).data();
    for (std::size_t q = 0; q < nq; ++q) {
      const float* x = queries[q].data();
      double acc = 0.0;
      for (std::size_t d = 0; d < dim; ++d) acc += static_cast<double>(x[d]) * static_cast<double>(c[d]);
      scores[q * n + j] = acc;
    }
  }
}

inline std::vector<RankedEntry> select_top_k(const ResolvedPool& pool, const double* scores, std::size_t k,
                                             const std::vector<char>* excluded = nullptr) {
  std::vector<std::size_t> order;
  order.reserve(pool.rows.size());
  for (std::size_t j = 0; j < pool.rows.size(); ++j) {
    if (!excluded || !(*excluded)[j]) order.push_back(j);
  }
  const std::size_t take = std::min(k, order.size());
  auto cmp = [&](std::size_t a, std::size_t b) {
    return ranks_before(scores[a], *pool.ids[a], scores[b], *pool.ids[b]);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), cmp);
  std::vector<RankedEntry> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({*pool.ids[order[i]], scores[order[i]]});
  return out;
}

}  // namespace detail

inline RankedList retrieve_topk(std::string_view post_id, const EmbeddingStore& post_store,
                                const EmbeddingStore& claim_store, const CandidatePool& pool, std::size_t k) {
  detail::check_stores(post_store, claim_store, k);
  auto resolved = detail::resolve_pool(claim_store, pool);
  auto row = post_store.find(post_id);
  if (!row) throw ValidationError("post '" + std::string(post_id) + "' not in post store");
  std::vector<double> scores;
  detail::score_tile(claim_store, resolved, {post_store.row(*row)}, scores);
  RankedList list;
  list.post_id = std::string(post_id);
  list.k = k;
  list.stage = Stage::retrieved;
  list.entries = detail::select_top_k(resolved, scores.data(), k);
  return list;
}

struct SoftError {
  std::string post_id;
  std::string message;
};

struct BatchRetrieval {
  std::vector<std::optional<RankedList>> lists;  // aligned with the input ids
  std::vector<SoftError> errors;                 // ids missing from the post store
};

// Same result as calling retrieve_topk per post. Queries are scored in tiles
// and spread over `threads` workers; output does not depend on the count.
inline BatchRetrieval batch_retrieve(const std::vector<std::string>& post_ids, const EmbeddingStore& post_store,
                                     const EmbeddingStore& claim_store, const CandidatePool& pool, std::size_t k,
                                     std::size_t threads = 0) {
  detail::check_stores(post_store, claim_store, k);
  const auto resolved = detail::resolve_pool(claim_store, pool);

  BatchRetrieval out;
  out.lists.resize(post_ids.size());
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < post_ids.size(); ++i) {
    if (post_store.contains(post_ids[i])) {
      valid.push_back(i);
    } else {
      out.errors.push_back({post_ids[i], "post not in post store"});
    }
  }

  const std::size_t tiles = (valid.size() + detail::kQueryTile - 1) / detail::kQueryTile;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    std::vector<double> scores;
    std::vector<std::span<const float>> queries;
    while (true) {
      const std::size_t t = next++;
      if (t >= tiles) return;
      const std::size_t begin = t * detail::kQueryTile;
      const std::size_t end = std::min(valid.size(), begin + detail::kQueryTile);
      queries.clear();
      for (std::size_t i = begin; i < end; ++i) queries.push_back(post_store.row(post_ids[valid[i]]));
      detail::score_tile(claim_store, resolved, queries, scores);
      for (std::size_t i = begin; i < end; ++i) {
        RankedList list;
        list.post_id = post_ids[valid[i]];
        list.k = k;
        list.entries = detail::select_top_k(resolved, scores.data() + (i - begin) * resolved.rows.size(), k);
        out.lists[valid[i]] = std::move(list);
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(tiles, 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool_threads;
    for (std::size_t i = 0; i < threads; ++i) pool_threads.emplace_back(worker);
    for (auto& th : pool_threads) th.join();
  }
  return out;
}

// Run files: one JSON object per ranked list.
inline json to_json(const RankedList& l) {
  json entries = json::array();
  for (const auto& e : l.entries) entries.push_back(json::array({e.claim_id, e.score}));
  json j = {{"post_id", l.post_id}, {"stage", to_string(l.stage)}, {"k", l.k}, {"entries", std::move(entries)}};
  if (!l.retrieval_scores.empty()) j["retrieval_scores"] = l.retrieval_scores;
  if (!l.annotations.empty()) j["annotations"] = l.annotations;
  return j;
}

inline RankedList ranked_list_from_json(const json& j) {
  RankedList l;
  l.post_id = j.at("post_id").get<std::string>();
  l.stage = parse_stage(j.at("stage").get<std::string>());
  l.k = j.value("k", std::size_t{0});
  for (const auto& e : j.at("entries")) {
    l.entries.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
  }
  if (l.k == 0) l.k = l.entries.size();
  if (j.contains("retrieval_scores")) l.retrieval_scores = j["retrieval_scores"].get<std::map<std::string, double>>();
  if (j.contains("annotations")) l.annotations = j["annotations"].get<std::vector<std::string>>();
  return l;
}

inline void write_run(const std::filesystem::path& path, const std::vector<RankedList>& lists) {
  std::vector<json> rows;
  rows.reserve(lists.size());
  for (const auto& l : lists) rows.push_back(to_json(l));
  write_jsonl(path, rows);
}

inline std::vector<RankedList> read_run(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<RankedList> out;
  for (const auto& rec : parse_jsonl(in, path.string())) {
    try {
      out.push_back(ranked_list_from_json(rec.fields));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(rec.line) + ": malformed run record: " + e.what());
    }
  }
  return out;
}

}  // namespace claimlink
