#pragma once

// Stratified, claim-disjoint train/dev/test splits.
//
// The pair graph (posts and claims as nodes, gold pairs as edges) is cut into
// connected components. A component moves as one unit, which is exactly what
// keeps every claim in one split and every pair inside one split. Each
// component belongs to the stratum of its majority post language; within a
// stratum, components are handed out largest first to the split with the
// largest remaining deficit of posts. That keeps every split within one
// component of its target.

#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "records.hpp"

namespace claimlink {

using SplitRatios = std::array<double, 3>;  // train, dev, test

inline void validate_ratios(const SplitRatios& r) {
  for (double v : r) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("split ratios must be finite and >= 0");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
}

inline SplitRatios parse_ratios(std::string_view text) {
  auto parts = split_list(text);
  if (parts.size() != 3) throw ValidationError("expected three ratios train,dev,test");
  SplitRatios r{};
  for (std::size_t i = 0; i < 3; ++i) {
    try {
      std::size_t used = 0;
      r[i] = std::stod(parts[i], &used);
      if (used != parts[i].size()) throw std::invalid_argument(parts[i]);
    } catch (const std::exception&) {
      throw ValidationError("invalid ratio '" + parts[i] + "'");
    }
  }
  validate_ratios(r);
  return r;
}

struct StratumStats {
  std::size_t posts = 0;
  std::size_t components = 0;
  std::size_t max_component_posts = 0;
  std::array<double, 3> target_posts{};
  std::array<std::size_t, 3> achieved_posts{};
  bool fallback_to_train = false;
};

struct SplitManifest {
  std::map<std::string, Split> split_of_post;
  std::map<std::string, Split> split_of_claim;
  SplitRatios ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
  std::string stratify_key = "post_language";
  std::map<std::string, StratumStats> strata;
  std::vector<std::string> warnings;

  Split post_split(std::string_view id) const {
    auto it = split_of_post.find(std::string(id));
    return it == split_of_post.end() ? Split::unassigned : it->second;
  }
  Split claim_split(std::string_view id) const {
    auto it = split_of_claim.find(std::string(id));
    return it == split_of_claim.end() ? Split::unassigned : it->second;
  }

  json to_json() const;
  static SplitManifest from_json(const json& j);
};

namespace detail {

inline json split_triple(const auto& values) {
  json j = json::object();
  for (std::size_t i = 0; i < 3; ++i) j[to_string(kSplits[i])] = values[i];
  return j;
}

template <typename T>
std::array<T, 3> read_triple(const json& j) {
  std::array<T, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = j.at(to_string(kSplits[i])).get<T>();
  return out;
}

inline std::size_t split_index(Split s) { return static_cast<std::size_t>(s); }

}  // namespace detail

inline json SplitManifest::to_json() const {
  json j;
  j["ratios"] = detail::split_triple(ratios);
  j["seed"] = seed;
  j["stratify_key"] = stratify_key;

  std::array<std::size_t, 3> posts{}, claims{};
  for (const auto& [id, s] : split_of_post) ++posts[detail::split_index(s)];
  for (const auto& [id, s] : split_of_claim) ++claims[detail::split_index(s)];
  auto fractions = [](const std::array<std::size_t, 3>& counts) {
    const double total = static_cast<double>(counts[0] + counts[1] + counts[2]);
    std::array<double, 3> f{};
    for (std::size_t i = 0; i < 3; ++i) f[i] = total > 0 ? counts[i] / total : 0.0;
    return f;
  };
  j["achieved"] = {{"posts", detail::split_triple(posts)},
                   {"claims", detail::split_triple(claims)},
                   {"post_fractions", detail::split_triple(fractions(posts))},
                   {"claim_fractions", detail::split_triple(fractions(claims))}};

  json strata_j = json::object();
  for (const auto& [lang, st] : strata) {
    std::array<double, 3> frac{};
    for (std::size_t i = 0; i < 3; ++i) {
      frac[i] = st.posts ? static_cast<double>(st.achieved_posts[i]) / st.posts : 0.0;
    }
    strata_j[lang] = {{"posts", st.posts},
                      {"components", st.components},
                      {"max_component_posts", st.max_component_posts},
                      {"target_posts", detail::split_triple(st.target_posts)},
                      {"achieved_posts", detail::split_triple(st.achieved_posts)},
                      {"achieved_fractions", detail::split_triple(frac)},
                      {"fallback_to_train", st.fallback_to_train}};
  }
  j["strata"] = std::move(strata_j);
  j["warnings"] = warnings;

  json sp = json::object();
  for (const auto& [id, s] : split_of_post) sp[id] = to_string(s);
  json sc = json::object();
  for (const auto& [id, s] : split_of_claim) sc[id] = to_string(s);
  j["split_of_post"] = std::move(sp);
  j["split_of_claim"] = std::move(sc);
  return j;
}

inline SplitManifest SplitManifest::from_json(const json& j) {
  SplitManifest m;
  try {
    m.ratios = detail::read_triple<double>(j.at("ratios"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.stratify_key = j.value("stratify_key", std::string("post_language"));
    if (j.contains("strata")) {
      for (const auto& [lang, sj] : j.at("strata").items()) {
        StratumStats st;
        st.posts = sj.at("posts").get<std::size_t>();
        st.components = sj.at("components").get<std::size_t>();
        st.max_component_posts = sj.at("max_component_posts").get<std::size_t>();
        st.target_posts = detail::read_triple<double>(sj.at("target_posts"));
        st.achieved_posts = detail::read_triple<std::size_t>(sj.at("achieved_posts"));
        st.fallback_to_train = sj.at("fallback_to_train").get<bool>();
        m.strata.emplace(lang, st);
      }
    }
    if (j.contains("warnings")) m.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& [id, s] : j.at("split_of_post").items()) {
      m.split_of_post.emplace(id, parse_split(s.get<std::string>()));
    }
    for (const auto& [id, s] : j.at("split_of_claim").items()) {
      m.split_of_claim.emplace(id, parse_split(s.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed split manifest: ") + e.what());
  }
  validate_ratios(m.ratios);
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const SplitManifest& m) {
  write_file(path, m.to_json().dump(2) + "\n");
}

inline SplitManifest load_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return SplitManifest::from_json(j);
}

namespace detail {

class DisjointSets {
public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

private:
  std::vector<std::size_t> parent_;
};

struct Component {
  std::vector<std::size_t> posts;   // indices into corpus.posts
  std::vector<std::size_t> claims;  // indices into corpus.claims
  std::string stratum;
};

}  // namespace detail

inline SplitManifest build_splits(const Corpus& corpus, const SplitRatios& ratios,
                                  std::uint64_t seed) {
  validate_ratios(ratios);
  SplitManifest m;
  m.ratios = ratios;
  m.seed = seed;

  const std::size_t np = corpus.posts.size();
  std::unordered_map<std::string_view, std::size_t> post_idx, claim_idx;
  for (std::size_t i = 0; i < np; ++i) post_idx.emplace(corpus.posts[i].id, i);
  for (std::size_t i = 0; i < corpus.claims.size(); ++i) claim_idx.emplace(corpus.claims[i].id, np + i);

  detail::DisjointSets sets(np + corpus.claims.size());
  for (const auto& l : corpus.pairs) {
    auto p = post_idx.find(l.post_id);
    auto c = claim_idx.find(l.claim_id);
    if (p == post_idx.end() || c == claim_idx.end()) {
      throw ValidationError("pair (" + l.post_id + ", " + l.claim_id +
                            ") references an item outside the corpus");
    }
    sets.unite(p->second, c->second);
  }

  // Roots are minimal node indices and corpus vectors are id-sorted, so the
  // component order below does not depend on input order.
  std::map<std::size_t, detail::Component> by_root;
  for (std::size_t i = 0; i < np; ++i) by_root[sets.find(i)].posts.push_back(i);
  for (std::size_t i = 0; i < corpus.claims.size(); ++i) {
    by_root[sets.find(np + i)].claims.push_back(i);
  }

  std::map<std::string, std::vector<detail::Component>> strata;
  for (auto& [root, comp] : by_root) {
    if (comp.posts.empty()) {
      throw ValidationError("claim '" + corpus.claims[comp.claims.front()].id +
                            "' has no paired post");
    }
    std::map<std::string, std::size_t> langs;
    for (auto i : comp.posts) ++langs[corpus.posts[i].language];
    auto best = langs.begin();
    for (auto it = langs.begin(); it != langs.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    comp.stratum = best->first;
    strata[comp.stratum].push_back(std::move(comp));
  }

  std::size_t active_splits = 0;
  for (double r : ratios) active_splits += r > 0.0 ? 1 : 0;

  for (auto& [lang, comps] : strata) {
    StratumStats st;
    st.components = comps.size();
    for (const auto& c : comps) {
      st.posts += c.posts.size();
      st.max_component_posts = std::max(st.max_component_posts, c.posts.size());
    }
    for (std::size_t s = 0; s < 3; ++s) st.target_posts[s] = ratios[s] * static_cast<double>(st.posts);

    auto rng = Rng::stream(seed, lang);
    rng.shuffle(comps);
    std::stable_sort(comps.begin(), comps.end(),
                     [](const auto& a, const auto& b) { return a.posts.size() > b.posts.size(); });

    st.fallback_to_train = comps.size() < active_splits;
    if (st.fallback_to_train) {
      m.warnings.push_back("stratum '" + lang + "' has " + std::to_string(comps.size()) +
                           " component(s), too few to populate every split; assigned to train");
    }

    std::array<double, 3> deficit = st.target_posts;
    for (const auto& c : comps) {
      std::size_t chosen = 0;
      if (!st.fallback_to_train) {
        for (std::size_t s = 1; s < 3; ++s) {
          if (deficit[s] > deficit[chosen]) chosen = s;
        }
      }
      deficit[chosen] -= static_cast<double>(c.posts.size());
      st.achieved_posts[chosen] += c.posts.size();
      const Split split = kSplits[chosen];
      for (auto i : c.posts) m.split_of_post.emplace(corpus.posts[i].id, split);
      for (auto i : c.claims) m.split_of_claim.emplace(corpus.claims[i].id, split);
    }
    m.strata.emplace(lang, st);
  }
  return m;
}

// Empty result means the manifest is consistent with the corpus.
inline std::vector<std::string> check_manifest(const Corpus& corpus, const SplitManifest& m) {
  std::vector<std::string> problems;
  if (std::abs(m.ratios[0] + m.ratios[1] + m.ratios[2] - 1.0) > 1e-9) {
    problems.push_back("ratios do not sum to 1");
  }
  for (const auto& p : corpus.posts) {
    if (m.post_split(p.id) == Split::unassigned) problems.push_back("post '" + p.id + "' unassigned");
  }
  for (const auto& c : corpus.claims) {
    if (m.claim_split(c.id) == Split::unassigned) problems.push_back("claim '" + c.id + "' unassigned");
  }
  for (const auto& l : corpus.pairs) {
    if (m.post_split(l.post_id) != m.claim_split(l.claim_id)) {
      problems.push_back("pair (" + l.post_id + ", " + l.claim_id + ") crosses splits");
    }
  }
  return problems;
}

inline Corpus apply_manifest(const Corpus& in, const SplitManifest& m) {
  Corpus c = in;
  for (auto& p : c.posts) {
    p.split = m.post_split(p.id);
    if (p.split == Split::unassigned) throw ValidationError("manifest does not cover post '" + p.id + "'");
  }
  for (auto& f : c.claims) {
    f.split = m.claim_split(f.id);
    if (f.split == Split::unassigned) throw ValidationError("manifest does not cover claim '" + f.id + "'");
  }
  return c;
}

// Posts, claims and pairs of one split. Requires splits applied.
inline Corpus split_subset(const Corpus& in, Split s) {
  Corpus c;
  for (const auto& p : in.posts) if (p.split == s) c.posts.push_back(p);
  for (const auto& f : in.claims) if (f.split == s) c.claims.push_back(f);
  for (const auto& l : in.pairs) {
    const Post* p = in.find_post(l.post_id);
    if (p && p->split == s) c.pairs.push_back(l);
  }
  return c;
}

}  // namespace claimlink
