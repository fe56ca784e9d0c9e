#pragma once

// Negative (post, claim) examples for contrastive fine-tuning, mined offline
// from the training split with three strategies:
//   random      uniform draws from the pool minus the post's gold claims
//   similarity  the k most similar non-gold claims, most similar first
//   topic       random draws from the post's topic cluster, falling back to
//               the uncategorized bucket when the cluster holds <= k claims

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "clustering.hpp"
#include "corpus.hpp"
#include "embedstore.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "records.hpp"
#include "retrieval.hpp"

namespace claimlink {

enum class NegativeStrategy { random, similarity, topic };

inline const char* to_string(NegativeStrategy s) {
  switch (s) {
    case NegativeStrategy::random: return "random";
    case NegativeStrategy::similarity: return "similarity";
    case NegativeStrategy::topic: return "topic";
  }
  return "random";
}

inline NegativeStrategy parse_negative_strategy(std::string_view s) {
  if (s == "random") return NegativeStrategy::random;
  if (s == "similarity") return NegativeStrategy::similarity;
  if (s == "topic") return NegativeStrategy::topic;
  throw ValidationError("unknown negative strategy '" + std::string(s) + "'");
}

inline constexpr std::array<std::size_t, 6> kNegativeCountGrid = {1, 2, 3, 4, 5, 10};

struct NegativeConfig {
  NegativeStrategy strategy = NegativeStrategy::similarity;
  std::size_t k = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (k < 1) throw ValidationError("negative count k must be >= 1");
  }
};

struct NegativeRecord {
  std::string post_id;
  NegativeStrategy strategy = NegativeStrategy::random;
  std::vector<std::string> negatives;
  bool pool_exhausted = false;  // fewer than k eligible claims

  friend bool operator==(const NegativeRecord&, const NegativeRecord&) = default;
};

namespace detail {

// post id -> gold claim ids, posts in id order
inline std::map<std::string, std::set<std::string>> gold_sets(const std::vector<PairLink>& pairs) {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& l : pairs) out[l.post_id].insert(l.claim_id);
  return out;
}

inline std::vector<std::string> sorted_unique(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

inline std::vector<std::string> without(const std::vector<std::string>& ids, const std::set<std::string>& drop) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    if (!drop.count(id)) out.push_back(id);
  }
  return out;
}

}  // namespace detail

inline std::vector<NegativeRecord> mine_random(const std::vector<PairLink>& pairs,
                                               const std::vector<std::string>& pool, const NegativeConfig& cfg) {
  cfg.validate();
  const auto base = detail::sorted_unique(pool);
  std::vector<NegativeRecord> out;
  for (const auto& [post, gold] : detail::gold_sets(pairs)) {
    auto eligible = detail::without(base, gold);
    auto rng = Rng::stream(cfg.seed, post);
    rng.sample_prefix(eligible, cfg.k);
    NegativeRecord r{post, NegativeStrategy::random, std::move(eligible), false};
    r.pool_exhausted = r.negatives.size() < cfg.k;
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<NegativeRecord> mine_similarity(const std::vector<PairLink>& pairs,
                                                   const EmbeddingStore& post_store,
                                                   const EmbeddingStore& claim_store,
                                                   const std::vector<std::string>& pool, const NegativeConfig& cfg) {
  cfg.validate();
  if (post_store.dim() != claim_store.dim()) throw ValidationError("post and claim stores differ in dim");
  const auto candidate = pool_of(pool);
  const auto resolved = detail::resolve_pool(claim_store, candidate);
  std::unordered_map<std::string_view, std::size_t> slot;
  for (std::size_t j = 0; j < candidate.claim_ids.size(); ++j) slot.emplace(candidate.claim_ids[j], j);

  std::vector<NegativeRecord> out;
  std::vector<double> scores;
  std::vector<char> excluded(candidate.claim_ids.size(), 0);
  for (const auto& [post, gold] : detail::gold_sets(pairs)) {
    auto row = post_store.find(post);
    if (!row) throw ValidationError("post '" + post + "' not in post store");
    detail::score_tile(claim_store, resolved, {post_store.row(*row)}, scores);
    for (const auto& g : gold) {
      if (auto it = slot.find(g); it != slot.end()) excluded[it->second] = 1;
    }
    NegativeRecord r{post, NegativeStrategy::similarity, {}, false};
    for (auto& e : detail::select_top_k(resolved, scores.data(), cfg.k, &excluded)) {
      r.negatives.push_back(std::move(e.claim_id));
    }
    for (const auto& g : gold) {
      if (auto it = slot.find(g); it != slot.end()) excluded[it->second] = 0;
    }
    r.pool_exhausted = r.negatives.size() < cfg.k;
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<NegativeRecord> mine_topic(const std::vector<PairLink>& pairs, const ClusterMap& clusters,
                                              const std::vector<std::string>& pool, const NegativeConfig& cfg) {
  cfg.validate();
  std::map<int, std::vector<std::string>> buckets;  // ids sorted within each bucket
  for (const auto& id : detail::sorted_unique(pool)) {
    auto it = clusters.cluster_of.find(id);
    if (it == clusters.cluster_of.end()) throw ValidationError("claim '" + id + "' missing from cluster map");
    buckets[it->second].push_back(id);
  }
  const std::vector<std::string> empty;
  auto bucket = [&](int c) -> const std::vector<std::string>& {
    auto it = buckets.find(c);
    return it == buckets.end() ? empty : it->second;
  };

  std::vector<NegativeRecord> out;
  for (const auto& [post, gold] : detail::gold_sets(pairs)) {
    auto pc = clusters.post_cluster_of.find(post);
    if (pc == clusters.post_cluster_of.end()) throw ValidationError("post '" + post + "' has no topic cluster");
    auto rng = Rng::stream(cfg.seed, post);
    NegativeRecord r{post, NegativeStrategy::topic, {}, false};

    std::set<std::string> taken = gold;
    if (pc->second != kUncategorized) {
      auto eligible = detail::without(bucket(pc->second), gold);
      if (eligible.size() > cfg.k) {
        rng.sample_prefix(eligible, cfg.k);
      } else {
        rng.shuffle(eligible);
      }
      for (auto& id : eligible) {
        taken.insert(id);
        r.negatives.push_back(std::move(id));
      }
    }
    if (r.negatives.size() < cfg.k) {
      auto fallback = detail::without(bucket(kUncategorized), taken);
      rng.sample_prefix(fallback, cfg.k - r.negatives.size());
      for (auto& id : fallback) r.negatives.push_back(std::move(id));
    }
    r.pool_exhausted = r.negatives.size() < cfg.k;
    out.push_back(std::move(r));
  }
  return out;
}

struct NegativeFileHeader {
  NegativeStrategy strategy = NegativeStrategy::random;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string split = "train";
  std::string provider_tag;
  std::string cluster_method_tag;

  friend bool operator==(const NegativeFileHeader&, const NegativeFileHeader&) = default;
};

struct NegativeFile {
  NegativeFileHeader header;
  std::vector<NegativeRecord> records;
};

inline json to_json(const NegativeRecord& r) {
  return {{"post_id", r.post_id},
          {"strategy", to_string(r.strategy)},
          {"negatives", r.negatives},
          {"shortfall_reason", r.pool_exhausted ? json("pool_exhausted") : json(nullptr)}};
}

// First line: {"header": {...}}; then one record per line.
inline void serialize_negatives(const std::filesystem::path& path, const NegativeFileHeader& header,
                                const std::vector<NegativeRecord>& records) {
  std::vector<json> rows;
  rows.reserve(records.size() + 1);
  rows.push_back({{"header",
                   {{"strategy", to_string(header.strategy)},
                    {"k", header.k},
                    {"seed", header.seed},
                    {"split", header.split},
                    {"provider_tag", header.provider_tag},
                    {"cluster_method_tag", header.cluster_method_tag},
                    {"num_records", records.size()}}}});
  for (const auto& r : records) rows.push_back(to_json(r));
  write_jsonl(path, rows);
}

inline NegativeFile load_negatives(const std::filesystem::path& path) {
  auto in = open_input(path);
  auto recs = parse_jsonl(in, path.string());
  if (recs.empty() || !recs.front().fields.contains("header")) {
    throw FormatError(path.string() + ": missing header line");
  }
  NegativeFile f;
  try {
    const auto& h = recs.front().fields.at("header");
    f.header.strategy = parse_negative_strategy(h.at("strategy").get<std::string>());
    f.header.k = h.at("k").get<std::size_t>();
    f.header.seed = h.at("seed").get<std::uint64_t>();
    f.header.split = h.at("split").get<std::string>();
    f.header.provider_tag = h.value("provider_tag", std::string{});
    f.header.cluster_method_tag = h.value("cluster_method_tag", std::string{});
    for (std::size_t i = 1; i < recs.size(); ++i) {
      const auto& j = recs[i].fields;
      NegativeRecord r;
      r.post_id = j.at("post_id").get<std::string>();
      r.strategy = parse_negative_strategy(j.at("strategy").get<std::string>());
      r.negatives = j.at("negatives").get<std::vector<std::string>>();
      r.pool_exhausted = j.contains("shortfall_reason") && !j["shortfall_reason"].is_null();
      f.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed negatives file: " + e.what());
  }
  return f;
}

struct NegativeAudit {
  std::size_t records = 0;
  std::size_t gold_leaks = 0;
  std::size_t duplicates = 0;
  std::size_t over_k = 0;

  bool clean() const { return gold_leaks == 0 && duplicates == 0 && over_k == 0; }
};

inline NegativeAudit audit_negatives(const std::vector<NegativeRecord>& records, const std::vector<PairLink>& pairs,
                                     std::size_t k) {
  const auto gold = detail::gold_sets(pairs);
  NegativeAudit a;
  for (const auto& r : records) {
    ++a.records;
    if (r.negatives.size() > k) ++a.over_k;
    std::set<std::string> seen;
    auto g = gold.find(r.post_id);
    for (const auto& n : r.negatives) {
      if (!seen.insert(n).second) ++a.duplicates;
      if (g != gold.end() && g->second.count(n)) ++a.gold_leaks;
    }
  }
  return a;
}

}  // namespace claimlink
