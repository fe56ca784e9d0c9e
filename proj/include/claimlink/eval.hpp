#pragma once

// Pair Success@k and MRR@k over runs.
//
// The evaluation unit is a gold pair: a post with m gold claims contributes m
// units, and its other gold claims stay in the ranking. A per-post variant
// (best gold per post) is available for sensitivity checks. Pairs whose gold
// claim cannot be in the candidate pool score zero and are counted
// separately as gold_unreachable.

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "records.hpp"
#include "retrieval.hpp"

namespace claimlink {

inline void check_depth(std::size_t k) {
  if (k < 1) throw ValidationError("metric depth k must be >= 1");
}

inline int pair_success_at_k(const RankedList& ranked, std::string_view gold_claim_id, std::size_t k = 10) {
  check_depth(k);
  auto rank = ranked.rank_of(gold_claim_id);
  return rank && *rank <= k ? 1 : 0;
}

inline double reciprocal_rank_at_k(const RankedList& ranked, std::string_view gold_claim_id, std::size_t k = 10) {
  check_depth(k);
  auto rank = ranked.rank_of(gold_claim_id);
  return rank && *rank <= k ? 1.0 / static_cast<double>(*rank) : 0.0;
}

// Without a pool, a gold is provably unreachable only when the list is
// shorter than its requested depth (it then covers the whole pool).
inline bool gold_unreachable(const RankedList& ranked, std::string_view gold_claim_id,
                             const CandidatePool* pool = nullptr) {
  if (pool) return !std::binary_search(pool->claim_ids.begin(), pool->claim_ids.end(), gold_claim_id);
  return !ranked.rank_of(gold_claim_id) && ranked.entries.size() < ranked.k;
}

struct LanguagePairMetrics {
  double s_at_k = 0.0;
  double mrr_at_k = 0.0;
  std::size_t n_pairs = 0;
};

struct MetricsReport {
  std::string label;
  Setting setting = Setting::multilingual;
  Scope scope = Scope::test;
  std::size_t k = 10;
  double s_at_k = 0.0;
  double mrr_at_k = 0.0;
  std::size_t n_pairs = 0;
  std::size_t gold_unreachable = 0;
  bool per_post_best = false;
  std::map<std::pair<std::string, std::string>, LanguagePairMetrics> by_language_pair;

  json to_json() const {
    json langs = json::array();
    for (const auto& [key, m] : by_language_pair) {
      langs.push_back({{"post_lang", key.first},
                       {"claim_lang", key.second},
                       {"s_at_k", m.s_at_k},
                       {"mrr_at_k", m.mrr_at_k},
                       {"n_pairs", m.n_pairs}});
    }
    return {{"label", label},
            {"setting", to_string(setting)},
            {"scope", to_string(scope)},
            {"k", k},
            {"s_at_k", s_at_k},
            {"mrr_at_k", mrr_at_k},
            {"n_pairs", n_pairs},
            {"gold_unreachable", gold_unreachable},
            {"unit", per_post_best ? "post" : "pair"},
            {"by_language_pair", std::move(langs)}};
  }

  static MetricsReport from_json(const json& j) {
    MetricsReport r;
    try {
      r.label = j.value("label", std::string{});
      r.setting = parse_setting(j.at("setting").get<std::string>());
      r.scope = parse_scope(j.at("scope").get<std::string>());
      r.k = j.at("k").get<std::size_t>();
      r.s_at_k = j.at("s_at_k").get<double>();
      r.mrr_at_k = j.at("mrr_at_k").get<double>();
      r.n_pairs = j.at("n_pairs").get<std::size_t>();
      r.gold_unreachable = j.value("gold_unreachable", std::size_t{0});
      r.per_post_best = j.value("unit", std::string("pair")) == "post";
      if (j.contains("by_language_pair")) {
        for (const auto& e : j.at("by_language_pair")) {
          r.by_language_pair[{e.at("post_lang").get<std::string>(), e.at("claim_lang").get<std::string>()}] = {
              e.at("s_at_k").get<double>(), e.at("mrr_at_k").get<double>(), e.at("n_pairs").get<std::size_t>()};
        }
      }
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed metrics report: ") + e.what());
    }
    return r;
  }
};

struct EvalOptions {
  bool per_post_best = false;
  const CandidatePool* pool = nullptr;  // enables exact gold_unreachable accounting
  const Corpus* languages = nullptr;    // post/claim languages for the breakdown
  std::string label;
};

inline MetricsReport evaluate_run(const std::vector<RankedList>& run, const std::vector<PairLink>& pairs,
                                  Setting setting, Scope scope, std::size_t k = 10, const EvalOptions& opts = {}) {
  check_depth(k);
  std::unordered_map<std::string_view, const RankedList*> by_post;
  for (const auto& l : run) {
    if (!by_post.emplace(l.post_id, &l).second) {
      throw FormatError("run contains post '" + l.post_id + "' more than once");
    }
  }

  auto sorted = pairs;
  std::sort(sorted.begin(), sorted.end(), [](const PairLink& a, const PairLink& b) {
    return std::tie(a.post_id, a.claim_id) < std::tie(b.post_id, b.claim_id);
  });
  sorted.erase(std::unique(sorted.begin(), sorted.end(),
                           [](const PairLink& a, const PairLink& b) {
                             return a.post_id == b.post_id && a.claim_id == b.claim_id;
                           }),
               sorted.end());

  std::vector<std::string> missing;
  for (const auto& p : sorted) {
    if (!by_post.count(p.post_id) && (missing.empty() || missing.back() != p.post_id)) missing.push_back(p.post_id);
  }
  if (!missing.empty()) {
    std::string msg = "run is missing " + std::to_string(missing.size()) + " evaluated post(s):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw Error(msg);
  }

  auto lang_of_post = [&](const std::string& id) -> std::string {
    if (!opts.languages) return std::string(kUndetermined);
    const Post* p = opts.languages->find_post(id);
    return p ? p->language : std::string(kUndetermined);
  };
  auto lang_of_claim = [&](const std::string& id) -> std::string {
    if (!opts.languages) return std::string(kUndetermined);
    const FactCheck* c = opts.languages->find_claim(id);
    return c ? c->language : std::string(kUndetermined);
  };

  struct Unit {
    std::string post_id;
    std::string claim_id;
    int success;
    double rr;
    bool unreachable;
  };
  std::vector<Unit> units;
  for (const auto& p : sorted) {
    const RankedList& list = *by_post.at(p.post_id);
    Unit u{p.post_id, p.claim_id, pair_success_at_k(list, p.claim_id, k), reciprocal_rank_at_k(list, p.claim_id, k),
           false};
    u.unreachable = u.success == 0 && gold_unreachable(list, p.claim_id, opts.pool);
    if (opts.per_post_best && !units.empty() && units.back().post_id == p.post_id) {
      auto& prev = units.back();
      if (u.rr > prev.rr) {
        prev.claim_id = u.claim_id;
        prev.rr = u.rr;
      }
      prev.success = std::max(prev.success, u.success);
      prev.unreachable = prev.unreachable && u.unreachable;
      continue;
    }
    units.push_back(std::move(u));
  }

  MetricsReport r;
  r.label = opts.label;
  r.setting = setting;
  r.scope = scope;
  r.k = k;
  r.per_post_best = opts.per_post_best;
  r.n_pairs = units.size();
  double s_sum = 0.0, rr_sum = 0.0;
  std::map<std::pair<std::string, std::string>, std::pair<double, double>> sums;
  for (const auto& u : units) {
    s_sum += u.success;
    rr_sum += u.rr;
    if (u.unreachable) ++r.gold_unreachable;
    auto key = std::pair{lang_of_post(u.post_id), lang_of_claim(u.claim_id)};
    auto& s = sums[key];
    s.first += u.success;
    s.second += u.rr;
    ++r.by_language_pair[key].n_pairs;
  }
  if (r.n_pairs > 0) {
    r.s_at_k = s_sum / static_cast<double>(r.n_pairs);
    r.mrr_at_k = rr_sum / static_cast<double>(r.n_pairs);
  }
  for (auto& [key, m] : r.by_language_pair) {
    m.s_at_k = sums[key].first / static_cast<double>(m.n_pairs);
    m.mrr_at_k = sums[key].second / static_cast<double>(m.n_pairs);
  }
  return r;
}

struct ComparisonRow {
  std::string label;
  double s_at_k = 0.0;
  double mrr_at_k = 0.0;
  std::size_t n_pairs = 0;
  double delta_s = 0.0;    // against the first report
  double delta_mrr = 0.0;
};

struct ComparisonTable {
  Setting setting = Setting::multilingual;
  Scope scope = Scope::test;
  std::size_t k = 10;
  std::vector<ComparisonRow> rows;
};

inline ComparisonTable compare_runs(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ValidationError("no reports to compare");
  ComparisonTable t;
  const auto& base = reports.front();
  t.setting = base.setting;
  t.scope = base.scope;
  t.k = base.k;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    if (r.setting != base.setting || r.scope != base.scope || r.k != base.k) {
      throw ValidationError("report '" + r.label + "' has a different setting/scope/k than '" + base.label + "'");
    }
    t.rows.push_back({r.label.empty() ? "run" + std::to_string(i + 1) : r.label, r.s_at_k, r.mrr_at_k, r.n_pairs,
                      r.s_at_k - base.s_at_k, r.mrr_at_k - base.mrr_at_k});
  }
  return t;
}

inline std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::string format_delta(double v) {
  char buf[32];
  if (std::abs(v) < 5e-5) v = 0.0;
  std::snprintf(buf, sizeof buf, "%+.4f", v);
  return buf;
}

inline std::string render_text(const ComparisonTable& t) {
  const std::string s_col = "S@" + std::to_string(t.k);
  const std::string m_col = "MRR@" + std::to_string(t.k);
  std::size_t label_w = 5;
  for (const auto& r : t.rows) label_w = std::max(label_w, r.label.size());
  std::ostringstream out;
  out << to_string(t.setting) << " / " << to_string(t.scope) << "\n";
  out << std::left << std::setw(static_cast<int>(label_w)) << "run" << "  " << std::right << std::setw(8) << s_col
      << "  " << std::setw(8) << "delta" << "  " << std::setw(8) << m_col << "  " << std::setw(8) << "delta" << "  "
      << std::setw(7) << "pairs" << "\n";
  for (const auto& r : t.rows) {
    out << std::left << std::setw(static_cast<int>(label_w)) << r.label << "  " << std::right << std::setw(8)
        << format_metric(r.s_at_k) << "  " << std::setw(8) << format_delta(r.delta_s) << "  " << std::setw(8)
        << format_metric(r.mrr_at_k) << "  " << std::setw(8) << format_delta(r.delta_mrr) << "  " << std::setw(7)
        << r.n_pairs << "\n";
  }
  return out.str();
}

inline std::string render_csv(const ComparisonTable& t) {
  std::ostringstream out;
  out << "run,setting,scope,k,s_at_k,delta_s_at_k,mrr_at_k,delta_mrr_at_k,n_pairs\n";
  for (const auto& r : t.rows) {
    std::string label = r.label;
    if (label.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : label) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      label = q + "\"";
    }
    out << label << "," << to_string(t.setting) << "," << to_string(t.scope) << "," << t.k << ","
        << format_metric(r.s_at_k) << "," << format_delta(r.delta_s) << "," << format_metric(r.mrr_at_k) << ","
        << format_delta(r.delta_mrr) << "," << r.n_pairs << "\n";
  }
  return out.str();
}

inline void save_report(const std::filesystem::path& path, const MetricsReport& r) {
  write_file(path, r.to_json().dump(2) + "\n");
}

inline MetricsReport load_report(const std::filesystem::path& path) {
  try {
    auto r = MetricsReport::from_json(json::parse(read_file(path)));
    if (r.label.empty()) r.label = path.stem().string();
    return r;
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace claimlink
