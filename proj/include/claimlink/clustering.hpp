#pragma once

// Reference topic clustering: spherical k-means over unit vectors with a
// cosine floor. Points whose best centroid is below the floor go to the
// uncategorized bucket.

#include <map>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "embedstore.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "records.hpp"

namespace claimlink {

inline constexpr int kUncategorized = -1;

struct ClusterParams {
  std::size_t num_clusters = 50;
  double tau = 0.5;  // minimum cosine to the assigned centroid
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;

  std::string method_tag() const {
    std::ostringstream s;
    s << "spherical-kmeans(k=" << num_clusters << ",tau=" << tau << ",seed=" << seed
      << ",max_iters=" << max_iters << ")";
    return s.str();
  }
};

struct ClusterMap {
  std::map<std::string, int> cluster_of;       // claim id -> cluster or kUncategorized
  std::map<std::string, int> post_cluster_of;  // post id -> cluster or kUncategorized
  std::string method_tag;

  json to_json() const {
    return {{"method_tag", method_tag}, {"claims", cluster_of}, {"posts", post_cluster_of}};
  }

  static ClusterMap from_json(const json& j) {
    ClusterMap m;
    try {
      m.method_tag = j.at("method_tag").get<std::string>();
      m.cluster_of = j.at("claims").get<std::map<std::string, int>>();
      if (j.contains("posts")) m.post_cluster_of = j.at("posts").get<std::map<std::string, int>>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed cluster map: ") + e.what());
    }
    return m;
  }
};

inline void save_cluster_map(const std::filesystem::path& path, const ClusterMap& m) {
  write_file(path, m.to_json().dump(2) + "\n");
}

inline ClusterMap load_cluster_map(const std::filesystem::path& path) {
  try {
    return ClusterMap::from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Returns a cluster index (or kUncategorized) per point.
inline std::vector<int> spherical_kmeans(const std::vector<std::span<const float>>& points, std::size_t dim,
                                         const ClusterParams& params) {
  const std::size_t n = points.size();
  const std::size_t k = params.num_clusters;
  if (k < 1) throw ValidationError("num_clusters must be >= 1");
  if (n < k) {
    throw ValidationError("cannot form " + std::to_string(k) + " clusters from " + std::to_string(n) + " points");
  }
  Rng rng(params.seed);

  // k-means++ seeding with cosine distance.
  std::vector<std::vector<float>> centroids;
  std::vector<double> best_sim(n, -2.0);
  std::vector<char> chosen(n, 0);
  auto add_center = [&](std::size_t i) {
    chosen[i] = 1;
    centroids.emplace_back(points[i].begin(), points[i].end());
    for (std::size_t p = 0; p < n; ++p) best_sim[p] = std::max(best_sim[p], dot(points[p], centroids.back()));
  };
  add_center(rng.below(n));
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t p = 0; p < n; ++p) total += chosen[p] ? 0.0 : std::max(0.0, 1.0 - best_sim[p]);
    std::size_t pick = n;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t p = 0; p < n; ++p) {
        if (chosen[p]) continue;
        r -= std::max(0.0, 1.0 - best_sim[p]);
        if (r < 0.0) {
          pick = p;
          break;
        }
      }
    }
    if (pick == n) {
      // all remaining points coincide with a center (or rounding ran out)
      std::vector<std::size_t> rest;
      for (std::size_t p = 0; p < n; ++p) if (!chosen[p]) rest.push_back(p);
      pick = rest[rng.below(rest.size())];
    }
    add_center(pick);
  }

  std::vector<int> assign(n, -1);
  std::vector<double> sim(n, 0.0);
  for (std::size_t iter = 0; iter < params.max_iters; ++iter) {
    bool changed = false;
    for (std::size_t p = 0; p < n; ++p) {
      int best = 0;
      double best_s = dot(points[p], centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double s = dot(points[p], centroids[c]);
        if (s > best_s) {
          best_s = s;
          best = static_cast<int>(c);
        }
      }
      if (assign[p] != best) changed = true;
      assign[p] = best;
      sim[p] = best_s;
    }
    if (!changed && iter > 0) break;
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t p = 0; p < n; ++p) {
      auto& s = sums[static_cast<std::size_t>(assign[p])];
      for (std::size_t d = 0; d < dim; ++d) s[d] += points[p][d];
      ++counts[static_cast<std::size_t>(assign[p])];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      double norm = 0.0;
      for (double v : sums[c]) norm += v * v;
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = static_cast<float>(sums[c][d] / norm);
    }
  }
  // Final assignment against the last centroids.
  for (std::size_t p = 0; p < n; ++p) {
    int best = 0;
    double best_s = dot(points[p], centroids[0]);
    for (std::size_t c = 1; c < k; ++c) {
      const double s = dot(points[p], centroids[c]);
      if (s > best_s) {
        best_s = s;
        best = static_cast<int>(c);
      }
    }
    assign[p] = best_s < params.tau ? kUncategorized : best;
  }
  return assign;
}

// Clusters claims (and, when given, posts jointly in the same space).
// Empty id lists mean "every row of the store".
inline ClusterMap cluster_claims(const EmbeddingStore& claims, const ClusterParams& params,
                                 std::vector<std::string> claim_ids = {}, const EmbeddingStore* posts = nullptr,
                                 std::vector<std::string> post_ids = {}) {
  if (!claims.normalized()) throw ValidationError("clustering requires a normalized claim store");
  if (claim_ids.empty()) claim_ids = claims.ids();
  std::vector<std::span<const float>> points;
  for (const auto& id : claim_ids) points.push_back(claims.row(id));
  if (posts) {
    if (posts->dim() != claims.dim()) throw ValidationError("post and claim stores differ in dim");
    if (post_ids.empty()) post_ids = posts->ids();
    for (const auto& id : post_ids) points.push_back(posts->row(id));
  } else {
    post_ids.clear();
  }
  const auto assign = spherical_kmeans(points, claims.dim(), params);
  ClusterMap m;
  m.method_tag = params.method_tag();
  for (std::size_t i = 0; i < claim_ids.size(); ++i) m.cluster_of[claim_ids[i]] = assign[i];
  for (std::size_t i = 0; i < post_ids.size(); ++i) m.post_cluster_of[post_ids[i]] = assign[claim_ids.size() + i];
  return m;
}

}  // namespace claimlink
