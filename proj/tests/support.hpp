#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "claimlink.hpp"

namespace testkit {

namespace fs = std::filesystem;

// Self-deleting scratch directory.
class TempDir {
public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "claimlink-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
  fs::path path_;
};

inline std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::vector<float> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = nd(rng);
      norm += static_cast<double>(x) * x;
    }
  } while (norm == 0.0);
  return v;
}

// Store of `n` random rows with ids prefix0..prefix{n-1}, zero-padded so that
// lexicographic and numeric order agree.
inline claimlink::EmbeddingStore random_store(std::mt19937_64& rng, std::size_t n, std::size_t dim,
                                              const std::string& prefix, const std::string& tag = "test") {
  claimlink::EmbeddingStore s(static_cast<std::uint32_t>(dim), tag);
  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%06zu", prefix.c_str(), i);
    s.add(buf, random_unit(rng, dim));
  }
  return s;
}

inline claimlink::RankedList make_list(const std::string& post, const std::vector<std::string>& ids,
                                       std::size_t k = 0) {
  claimlink::RankedList l;
  l.post_id = post;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    l.entries.push_back({ids[i], static_cast<double>(ids.size() - i)});
  }
  l.k = k ? k : ids.size();
  return l;
}

inline void write_lines(const fs::path& path, const std::vector<claimlink::json>& rows) {
  claimlink::write_jsonl(path, rows);
}

inline claimlink::Corpus make_corpus(const std::vector<std::pair<std::string, std::string>>& posts,
                                     const std::vector<std::pair<std::string, std::string>>& claims,
                                     const std::vector<std::pair<std::string, std::string>>& pairs) {
  claimlink::Corpus c;
  for (const auto& [id, lang] : posts) c.posts.push_back({id, "post " + id, lang, claimlink::Split::unassigned});
  for (const auto& [id, lang] : claims) c.claims.push_back({id, "claim " + id, lang, claimlink::Split::unassigned});
  for (const auto& [p, f] : pairs) c.pairs.push_back({p, f, claimlink::Relationship::claim_review});
  claimlink::sort_corpus(c);
  return c;
}


// A corpus of one-claim posts per language, a precomputed vector file and a
// config that runs the whole pipeline on it. Every claim i gets its own basis
// direction. A regular test post points exactly at its gold claim. A "hard"
// test post points mostly at twelve other test claims, so its gold lands at
// rank 13.
struct SyntheticExperiment {
  fs::path config_path;
  fs::path output_dir;
  std::vector<std::string> test_posts;
  std::set<std::string> hard_posts;
  claimlink::SplitManifest expected_split;
};

inline SyntheticExperiment write_synthetic_experiment(const fs::path& dir,
                                                      const std::vector<std::pair<std::string, std::size_t>>& langs,
                                                      std::size_t hard, std::size_t dim = 1024,
                                                      std::uint64_t seed = 7) {
  using claimlink::json;
  std::vector<json> posts, claims, pairs;
  std::size_t n = 0;
  for (const auto& [lang, count] : langs) {
    for (std::size_t i = 0; i < count; ++i, ++n) {
      char pid[32], cid[32];
      std::snprintf(pid, sizeof pid, "p%05zu", n);
      std::snprintf(cid, sizeof cid, "c%05zu", n);
      posts.push_back({{"id", pid}, {"text", std::string("post about topic ") + cid}, {"language", lang}});
      claims.push_back({{"id", cid}, {"claim", std::string("claim number ") + cid}, {"language", lang}});
      pairs.push_back({{"post_id", pid}, {"claim_id", cid}, {"relationship", "claim_review"}});
    }
  }
  if (n > dim) throw std::runtime_error("synthetic corpus needs dim >= number of claims");
  write_lines(dir / "posts.jsonl", posts);
  write_lines(dir / "claims.jsonl", claims);
  write_lines(dir / "pairs.jsonl", pairs);

  SyntheticExperiment x;
  auto ingested = claimlink::ingest_files(dir / "posts.jsonl", dir / "claims.jsonl", dir / "pairs.jsonl");
  x.expected_split = claimlink::build_splits(ingested.corpus, {0.8, 0.1, 0.1}, seed);
  std::vector<std::string> test_claims;
  for (const auto& [id, s] : x.expected_split.split_of_post) {
    if (s == claimlink::Split::test) x.test_posts.push_back(id);
  }
  for (const auto& [id, s] : x.expected_split.split_of_claim) {
    if (s == claimlink::Split::test) test_claims.push_back(id);
  }
  for (std::size_t i = 0; i < hard && i < x.test_posts.size(); ++i) x.hard_posts.insert(x.test_posts[i]);

  auto index_of = [](const std::string& id) { return static_cast<std::size_t>(std::stoul(id.substr(1))); };
  std::vector<json> vectors;
  for (std::size_t i = 0; i < n; ++i) {
    char pid[32], cid[32];
    std::snprintf(pid, sizeof pid, "p%05zu", i);
    std::snprintf(cid, sizeof cid, "c%05zu", i);
    std::vector<float> c(dim, 0.0f), p(dim, 0.0f);
    c[i] = 1.0f;
    if (x.hard_posts.count(pid)) {
      std::size_t placed = 0;
      for (const auto& d : test_claims) {
        if (d == cid || placed == 12) continue;
        p[index_of(d)] = 2.0f - 0.05f * static_cast<float>(placed++);
      }
      p[i] = 0.5f;
    } else {
      p[i] = 1.0f;
    }
    vectors.push_back({{"id", pid}, {"vector", p}});
    vectors.push_back({{"id", cid}, {"vector", c}});
  }
  write_lines(dir / "vectors.jsonl", vectors);

  x.output_dir = dir / "out";
  x.config_path = dir / "experiment.toml";
  std::ofstream cfg(x.config_path);
  cfg << "[corpus]\nposts = \"posts.jsonl\"\nclaims = \"claims.jsonl\"\npairs = \"pairs.jsonl\"\n\n"
      << "[split]\nratios = [0.8, 0.1, 0.1]\nseed = " << seed << "\n\n"
      << "[embed]\nprovider = \"vectors.jsonl\"\n\n"
      << "[retrieve]\nsetting = \"multi\"\nscope = \"test\"\nk = 100\n\n"
      << "[eval]\nk = 10\n\n"
      << "[output]\ndir = \"out\"\n";
  return x;
}

}  // namespace testkit
