#pragma once

// Deliberately naive reference implementations. They share no code with the
// library beyond plain data types.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "claimlink.hpp"

namespace oracle {

// Dot product of two stored rows, double accumulation in index order.
inline double dot_rows(const float* a, const float* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t i = 0; i < dim; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

struct Scored {
  std::string id;
  double score;
};

// Scores every pool member, fully sorts, keeps k.
inline std::vector<Scored> topk(const claimlink::EmbeddingStore& posts, const std::string& post_id,
                                const claimlink::EmbeddingStore& claims, const std::vector<std::string>& pool,
                                std::size_t k, const std::set<std::string>& drop = {}) {
  std::size_t qrow = 0;
  while (posts.ids()[qrow] != post_id) ++qrow;
  const float* q = posts.matrix().data() + qrow * posts.dim();
  std::map<std::string, std::size_t> row_of;
  for (std::size_t r = 0; r < claims.ids().size(); ++r) row_of[claims.ids()[r]] = r;
  std::vector<Scored> all;
  for (const auto& id : pool) {
    if (drop.count(id)) continue;
    const std::size_t r = row_of.at(id);
    all.push_back({id, dot_rows(q, claims.matrix().data() + r * claims.dim(), claims.dim())});
  }
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

// S@k and MRR@k averaged over (post, gold) units.
inline std::pair<double, double> metrics(const std::map<std::string, std::vector<std::string>>& ranking_of,
                                         const std::vector<std::pair<std::string, std::string>>& gold_pairs,
                                         std::size_t k) {
  std::set<std::pair<std::string, std::string>> units(gold_pairs.begin(), gold_pairs.end());
  if (units.empty()) return {0.0, 0.0};
  long double hits = 0, rr = 0;
  for (const auto& [post, gold] : units) {
    const auto& ranking = ranking_of.at(post);
    for (std::size_t pos = 0; pos < ranking.size() && pos < k; ++pos) {
      if (ranking[pos] == gold) {
        hits += 1;
        rr += 1.0L / static_cast<long double>(pos + 1);
        break;
      }
    }
  }
  const auto n = static_cast<long double>(units.size());
  return {static_cast<double>(hits / n), static_cast<double>(rr / n)};
}

// The fusion rule applied step by step on normalized votes.
inline std::optional<std::string> fuse(const std::vector<claimlink::DetectorVote>& votes, double min_avg,
                                       std::size_t min_votes) {
  std::vector<std::string> langs;
  for (const auto& v : votes) langs.push_back(v.language);
  std::sort(langs.begin(), langs.end());
  langs.erase(std::unique(langs.begin(), langs.end()), langs.end());

  // Step 1: languages with too few votes go.
  std::vector<std::string> survivors;
  for (const auto& l : langs) {
    std::size_t n = 0;
    for (const auto& v : votes) n += v.language == l;
    if (n >= min_votes) survivors.push_back(l);
  }
  // Step 2 and 3: average, then threshold.
  std::vector<std::pair<std::string, double>> averaged;
  for (const auto& l : survivors) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& v : votes) {
      if (v.language == l) {
        sum += v.score;
        ++n;
      }
    }
    const double avg = sum / static_cast<double>(n);
    if (avg >= min_avg) averaged.emplace_back(l, avg);
  }
  if (averaged.empty()) return std::nullopt;
  // Step 4: highest average, smallest code on ties.
  auto best = averaged.front();
  for (const auto& a : averaged) {
    if (a.second > best.second || (a.second == best.second && a.first < best.first)) best = a;
  }
  return best.first;
}

// Connected components of the pair graph by repeated flood fill; returns the
// post count of each component keyed by any member post.
inline std::vector<std::vector<std::string>> components(const claimlink::Corpus& c) {
  std::map<std::string, std::vector<std::string>> post_claims, claim_posts;
  for (const auto& l : c.pairs) {
    post_claims[l.post_id].push_back(l.claim_id);
    claim_posts[l.claim_id].push_back(l.post_id);
  }
  std::set<std::string> seen;
  std::vector<std::vector<std::string>> out;
  for (const auto& p : c.posts) {
    if (seen.count(p.id)) continue;
    std::vector<std::string> comp, stack{p.id};
    std::set<std::string> seen_claims;
    seen.insert(p.id);
    while (!stack.empty()) {
      auto cur = stack.back();
      stack.pop_back();
      comp.push_back(cur);
      for (const auto& f : post_claims[cur]) {
        if (!seen_claims.insert(f).second) continue;
        for (const auto& q : claim_posts[f]) {
          if (seen.insert(q).second) stack.push_back(q);
        }
      }
    }
    out.push_back(comp);
  }
  return out;
}

}  // namespace oracle
