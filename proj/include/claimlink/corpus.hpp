#pragma once

#include <algorithm>
#include <array>
#include <tuple>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "error.hpp"
#include "languages.hpp"
#include "records.hpp"
#include "text.hpp"

namespace claimlink {

enum class Split { train, dev, test, unassigned };

inline constexpr std::array<Split, 3> kSplits = {Split::train, Split::dev, Split::test};

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  if (s == "unassigned") return Split::unassigned;
  throw FormatError("unknown split '" + std::string(s) + "'");
}

enum class Relationship { claim_review, backlink };

inline const char* to_string(Relationship r) {
  return r == Relationship::claim_review ? "claim_review" : "backlink";
}

inline std::optional<Relationship> parse_relationship(std::string_view s) {
  if (s == "claim_review") return Relationship::claim_review;
  if (s == "backlink") return Relationship::backlink;
  return std::nullopt;
}

struct Post {
  std::string id;
  std::string text;
  std::string language{kUndetermined};
  Split split = Split::unassigned;
};

struct FactCheck {
  std::string id;
  std::string claim_text;
  std::string language{kUndetermined};
  Split split = Split::unassigned;
};

struct PairLink {
  std::string post_id;
  std::string claim_id;
  Relationship relationship = Relationship::claim_review;

  friend bool operator==(const PairLink&, const PairLink&) = default;
};

// Posts, claims and pairs, each sorted by id (pairs by (post_id, claim_id)).
// Once built it is only read.
struct Corpus {
  std::vector<Post> posts;
  std::vector<FactCheck> claims;
  std::vector<PairLink> pairs;

  bool empty() const { return posts.empty() && claims.empty() && pairs.empty(); }

  const Post* find_post(std::string_view id) const {
    auto it = std::lower_bound(posts.begin(), posts.end(), id,
                               [](const Post& p, std::string_view v) { return p.id < v; });
    return it != posts.end() && it->id == id ? &*it : nullptr;
  }

  const FactCheck* find_claim(std::string_view id) const {
    auto it = std::lower_bound(claims.begin(), claims.end(), id,
                               [](const FactCheck& c, std::string_view v) { return c.id < v; });
    return it != claims.end() && it->id == id ? &*it : nullptr;
  }

  // post id -> sorted gold claim ids
  std::unordered_map<std::string, std::vector<std::string>> gold_by_post() const {
    std::unordered_map<std::string, std::vector<std::string>> out;
    for (const auto& p : pairs) out[p.post_id].push_back(p.claim_id);
    return out;
  }
};

inline void sort_corpus(Corpus& c) {
  std::sort(c.posts.begin(), c.posts.end(), [](auto& a, auto& b) { return a.id < b.id; });
  std::sort(c.claims.begin(), c.claims.end(), [](auto& a, auto& b) { return a.id < b.id; });
  std::sort(c.pairs.begin(), c.pairs.end(), [](auto& a, auto& b) {
    return std::tie(a.post_id, a.claim_id) < std::tie(b.post_id, b.claim_id);
  });
}

// Restricts posts and claims to those referenced by `c.pairs`.
inline void prune_to_pairs(Corpus& c) {
  std::unordered_set<std::string> post_ids, claim_ids;
  for (const auto& p : c.pairs) {
    post_ids.insert(p.post_id);
    claim_ids.insert(p.claim_id);
  }
  std::erase_if(c.posts, [&](const Post& p) { return !post_ids.count(p.id); });
  std::erase_if(c.claims, [&](const FactCheck& f) { return !claim_ids.count(f.id); });
}

struct IngestReport {
  std::size_t posts_read = 0;
  std::size_t claims_read = 0;
  std::size_t pairs_read = 0;
  std::size_t posts_kept = 0;
  std::size_t claims_kept = 0;
  std::size_t pairs_kept = 0;
  // reason -> count; reasons: empty_post_text, empty_claim_text,
  // bad_relationship, unknown_post, unknown_claim, duplicate_pair,
  // orphan_claim, orphan_post
  std::map<std::string, std::size_t> dropped;

  json to_json() const {
    return {{"posts_read", posts_read},   {"claims_read", claims_read},
            {"pairs_read", pairs_read},   {"posts_kept", posts_kept},
            {"claims_kept", claims_kept}, {"pairs_kept", pairs_kept},
            {"dropped", dropped}};
  }
};

struct IngestResult {
  Corpus corpus;
  IngestReport report;
};

struct RecordSources {
  std::vector<Record> posts;
  std::vector<Record> claims;
  std::vector<Record> pairs;
  std::string posts_name = "posts";
  std::string claims_name = "claims";
  std::string pairs_name = "pairs";
};

namespace detail {

inline std::string read_language(const Record& r, const std::string& source) {
  auto it = r.fields.find("language");
  if (it == r.fields.end() || it->is_null()) return std::string(kUndetermined);
  if (!it->is_string()) {
    throw FormatError(source + ":" + std::to_string(r.line) +
                      ": field 'language' must be a string");
  }
  auto code = to_lower_ascii(trim(it->get_ref<const std::string&>()));
  if (code.empty()) return std::string(kUndetermined);
  if (code != kUndetermined && !is_language_code(code)) {
    throw FormatError(source + ":" + std::to_string(r.line) +
                      ": invalid language code '" + code + "'");
  }
  return code;
}

inline std::string read_text(const Record& r, const char* key, const std::string& source) {
  auto text = field_as_text(r, key, source);
  if (!is_valid_utf8(text)) {
    throw FormatError(source + ":" + std::to_string(r.line) + ": field '" + key +
                      "' is not valid UTF-8");
  }
  return std::string(trim(text));
}

}  // namespace detail

// Builds a closed corpus from raw records: every pair has both endpoints,
// every retained post and claim has at least one pair.
inline IngestResult ingest(const RecordSources& src) {
  IngestResult result;
  auto& rep = result.report;
  auto& corpus = result.corpus;

  std::unordered_set<std::string> seen_posts, seen_claims;
  std::unordered_map<std::string, std::size_t> post_index, claim_index;

  rep.posts_read = src.posts.size();
  for (const auto& r : src.posts) {
    Post p;
    p.id = field_as_id(r, "id", src.posts_name);
    if (!seen_posts.insert(p.id).second) {
      throw FormatError(src.posts_name + ":" + std::to_string(r.line) +
                        ": duplicate post id '" + p.id + "'");
    }
    p.text = detail::read_text(r, "text", src.posts_name);
    p.language = detail::read_language(r, src.posts_name);
    if (p.text.empty()) {
      ++rep.dropped["empty_post_text"];
      continue;
    }
    post_index.emplace(p.id, corpus.posts.size());
    corpus.posts.push_back(std::move(p));
  }

  rep.claims_read = src.claims.size();
  for (const auto& r : src.claims) {
    FactCheck c;
    c.id = field_as_id(r, "id", src.claims_name);
    if (!seen_claims.insert(c.id).second) {
      throw FormatError(src.claims_name + ":" + std::to_string(r.line) +
                        ": duplicate claim id '" + c.id + "'");
    }
    c.claim_text = detail::read_text(r, "claim", src.claims_name);
    c.language = detail::read_language(r, src.claims_name);
    if (c.claim_text.empty()) {
      ++rep.dropped["empty_claim_text"];
      continue;
    }
    claim_index.emplace(c.id, corpus.claims.size());
    corpus.claims.push_back(std::move(c));
  }

  rep.pairs_read = src.pairs.size();
  std::map<std::pair<std::string, std::string>, Relationship> links;
  for (const auto& r : src.pairs) {
    auto post_id = field_as_id(r, "post_id", src.pairs_name);
    auto claim_id = field_as_id(r, "claim_id", src.pairs_name);
    auto rel_it = r.fields.find("relationship");
    std::optional<Relationship> rel;
    if (rel_it != r.fields.end() && rel_it->is_string()) {
      rel = parse_relationship(rel_it->get_ref<const std::string&>());
    }
    if (!rel) {
      ++rep.dropped["bad_relationship"];
      continue;
    }
    if (!post_index.count(post_id)) {
      ++rep.dropped["unknown_post"];
      continue;
    }
    if (!claim_index.count(claim_id)) {
      ++rep.dropped["unknown_claim"];
      continue;
    }
    auto [it, inserted] = links.emplace(std::pair{post_id, claim_id}, *rel);
    if (!inserted) {
      ++rep.dropped["duplicate_pair"];
      if (*rel == Relationship::claim_review) it->second = Relationship::claim_review;
    }
  }
  for (auto& [key, rel] : links) corpus.pairs.push_back({key.first, key.second, rel});

  const auto posts_before = corpus.posts.size();
  const auto claims_before = corpus.claims.size();
  prune_to_pairs(corpus);
  if (auto n = claims_before - corpus.claims.size()) rep.dropped["orphan_claim"] += n;
  if (auto n = posts_before - corpus.posts.size()) rep.dropped["orphan_post"] += n;

  sort_corpus(corpus);
  rep.posts_kept = corpus.posts.size();
  rep.claims_kept = corpus.claims.size();
  rep.pairs_kept = corpus.pairs.size();
  if (corpus.pairs.empty()) throw Error("corpus is empty after filtering");
  return result;
}

inline IngestResult ingest_files(const std::filesystem::path& posts,
                                 const std::filesystem::path& claims,
                                 const std::filesystem::path& pairs) {
  RecordSources src;
  src.posts = read_records(posts);
  src.claims = read_records(claims);
  src.pairs = read_records(pairs);
  src.posts_name = posts.string();
  src.claims_name = claims.string();
  src.pairs_name = pairs.string();
  return ingest(src);
}

struct LanguageFilterReport {
  std::size_t min_posts = 0;
  std::size_t undetermined_posts_dropped = 0;
  // removed language -> number of posts it had
  std::map<std::string, std::size_t> removed_languages;
  std::size_t posts_removed = 0;
  std::size_t claims_removed = 0;
  std::size_t pairs_removed = 0;

  json to_json() const {
    return {{"min_posts", min_posts},
            {"undetermined_posts_dropped", undetermined_posts_dropped},
            {"removed_languages", removed_languages},
            {"posts_removed", posts_removed},
            {"claims_removed", claims_removed},
            {"pairs_removed", pairs_removed}};
  }
};

struct FilterResult {
  Corpus corpus;
  LanguageFilterReport report;
};

// Drops posts with an undetermined language, then every post whose language
// has fewer than `min_posts` posts. Claims survive whatever their own
// language as long as they are still paired.
inline FilterResult filter_language_threshold(const Corpus& in, std::size_t min_posts = 180) {
  if (min_posts < 1) throw ValidationError("min_posts must be >= 1");
  FilterResult out;
  out.report.min_posts = min_posts;
  std::map<std::string, std::size_t> counts;
  for (const auto& p : in.posts) {
    if (p.language == kUndetermined) {
      ++out.report.undetermined_posts_dropped;
    } else {
      ++counts[p.language];
    }
  }
  std::unordered_set<std::string> keep_posts;
  for (const auto& p : in.posts) {
    if (p.language == kUndetermined) continue;
    if (counts[p.language] < min_posts) continue;
    keep_posts.insert(p.id);
  }
  for (const auto& [lang, n] : counts) {
    if (n < min_posts) out.report.removed_languages[lang] = n;
  }
  auto& c = out.corpus;
  c = in;
  std::erase_if(c.pairs, [&](const PairLink& l) { return !keep_posts.count(l.post_id); });
  prune_to_pairs(c);
  out.report.posts_removed = in.posts.size() - c.posts.size();
  out.report.claims_removed = in.claims.size() - c.claims.size();
  out.report.pairs_removed = in.pairs.size() - c.pairs.size();
  return out;
}

// Pairs whose post and claim languages differ (both determined), with posts
// and claims restricted to those pairs. Idempotent.
inline Corpus crosslingual_view(const Corpus& in) {
  Corpus c = in;
  std::erase_if(c.pairs, [&](const PairLink& l) {
    const Post* p = in.find_post(l.post_id);
    const FactCheck* f = in.find_claim(l.claim_id);
    if (!p || !f) return true;
    if (p->language == kUndetermined || f->language == kUndetermined) return true;
    return p->language == f->language;
  });
  prune_to_pairs(c);
  return c;
}

inline void save_corpus(const std::filesystem::path& dir, const Corpus& c) {
  std::vector<json> rows;
  rows.reserve(c.posts.size());
  for (const auto& p : c.posts) {
    rows.push_back({{"id", p.id}, {"text", p.text}, {"language", p.language}});
  }
  write_jsonl(dir / "posts.jsonl", rows);
  rows.clear();
  for (const auto& f : c.claims) {
    rows.push_back({{"id", f.id}, {"claim", f.claim_text}, {"language", f.language}});
  }
  write_jsonl(dir / "claims.jsonl", rows);
  rows.clear();
  for (const auto& l : c.pairs) {
    rows.push_back({{"post_id", l.post_id},
                    {"claim_id", l.claim_id},
                    {"relationship", to_string(l.relationship)}});
  }
  write_jsonl(dir / "pairs.jsonl", rows);
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  return ingest_files(dir / "posts.jsonl", dir / "claims.jsonl", dir / "pairs.jsonl").corpus;
}

}  // namespace claimlink
