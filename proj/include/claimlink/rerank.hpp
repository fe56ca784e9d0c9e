#pragma once

// Second-stage re-ranking of the head of a retrieved list, either by a
// pair-scoring cross-encoder or by a generation model emitting permutations
// over sliding windows. Both only reorder the first top_n entries; everything
// below is left bit-identical.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "records.hpp"
#include "retrieval.hpp"
#include "retry.hpp"

namespace claimlink {

enum class RerankMode { cross_encoder, llm_listwise };

inline RerankMode parse_rerank_mode(std::string_view s) {
  if (s == "ce" || s == "cross_encoder") return RerankMode::cross_encoder;
  if (s == "llm" || s == "llm_listwise") return RerankMode::llm_listwise;
  throw ValidationError("unknown rerank mode '" + std::string(s) + "' (expected ce|llm)");
}

inline const char* to_string(RerankMode m) { return m == RerankMode::cross_encoder ? "cross_encoder" : "llm_listwise"; }

struct RerankConfig {
  std::size_t top_n = 30;
  RerankMode mode = RerankMode::cross_encoder;
  std::size_t window_size = 20;
  std::size_t window_stride = 10;
  std::size_t max_retries = 2;
  std::size_t max_tokens = 256;

  void validate() const {
    if (top_n < 1) throw ValidationError("top_n must be >= 1");
    if (mode == RerankMode::llm_listwise) {
      if (window_stride < 1 || window_stride > window_size || window_size > top_n) {
        throw ValidationError("sliding window requires 1 <= window_stride <= window_size <= top_n");
      }
    }
  }
};

class PairScorer {
public:
  virtual ~PairScorer() = default;
  // One finite score per (query, passage) pair, in order.
  virtual std::vector<double> score(const std::vector<std::pair<std::string, std::string>>& pairs) = 0;
};

class TextGenerator {
public:
  virtual ~TextGenerator() = default;
  virtual std::string generate(const std::string& prompt, std::size_t max_tokens) = 0;
};

class CallbackScorer final : public PairScorer {
public:
  using Fn = std::function<std::vector<double>(const std::vector<std::pair<std::string, std::string>>&)>;
  explicit CallbackScorer(Fn fn) : fn_(std::move(fn)) {}
  std::vector<double> score(const std::vector<std::pair<std::string, std::string>>& pairs) override { return fn_(pairs); }

private:
  Fn fn_;
};

class CallbackGenerator final : public TextGenerator {
public:
  using Fn = std::function<std::string(const std::string&, std::size_t)>;
  explicit CallbackGenerator(Fn fn) : fn_(std::move(fn)) {}
  std::string generate(const std::string& prompt, std::size_t max_tokens) override { return fn_(prompt, max_tokens); }

private:
  Fn fn_;
};

// Prompt with {query} and {passages} slots (each exactly once) and an
// optional {count} slot. Passages are rendered as "[i] text" lines.
class PromptTemplate {
public:
  static constexpr std::string_view kDefault =
      "Below is a social media post followed by {count} fact-checked claims, each marked with an "
      "identifier in square brackets.\n\n"
      "Post: {query}\n\n"
      "Claims:\n{passages}\n"
      "Order all {count} claims from the one that best matches the post to the one that matches it "
      "least. Reply only with the identifiers, for example [2] > [1] > [3].";

  PromptTemplate() : text_(kDefault) {}
  explicit PromptTemplate(std::string text) : text_(std::move(text)) {
    for (std::string_view slot : {"{query}", "{passages}"}) {
      const auto first = text_.find(slot);
      if (first == std::string::npos || text_.find(slot, first + 1) != std::string::npos) {
        throw ValidationError("prompt template must contain " + std::string(slot) + " exactly once");
      }
    }
  }

  static PromptTemplate from_file(const std::filesystem::path& path) { return PromptTemplate(read_file(path)); }

  const std::string& text() const { return text_; }

  std::string render(const std::string& query, const std::vector<std::string>& passages) const {
    std::string block;
    for (std::size_t i = 0; i < passages.size(); ++i) {
      std::string p = passages[i];
      std::replace(p.begin(), p.end(), '\n', ' ');
      block += "[" + std::to_string(i + 1) + "] " + p + "\n";
    }
    std::string out = text_;
    replace_all(out, "{count}", std::to_string(passages.size()));
    replace_one(out, "{query}", query);
    replace_one(out, "{passages}", block);
    return out;
  }

private:
  static void replace_one(std::string& s, std::string_view slot, const std::string& value) {
    auto pos = s.find(slot);
    if (pos != std::string::npos) s.replace(pos, slot.size(), value);
  }
  static void replace_all(std::string& s, std::string_view slot, const std::string& value) {
    for (auto pos = s.find(slot); pos != std::string::npos; pos = s.find(slot, pos + value.size())) {
      s.replace(pos, slot.size(), value);
    }
  }

  std::string text_;
};

// Integer tokens in order of appearance, out-of-range and repeated values
// dropped, missing indices appended ascending. Always a permutation of
// 1..window_size.
inline std::vector<std::size_t> parse_permutation(std::string_view raw, std::size_t window_size) {
  if (window_size < 1) throw ValidationError("window_size must be >= 1");
  std::vector<std::size_t> out;
  out.reserve(window_size);
  std::vector<char> used(window_size + 1, 0);
  std::size_t i = 0;
  while (i < raw.size()) {
    if (raw[i] < '0' || raw[i] > '9') {
      ++i;
      continue;
    }
    std::size_t value = 0;
    bool overflow = false;
    while (i < raw.size() && raw[i] >= '0' && raw[i] <= '9') {
      if (!overflow) {
        value = value * 10 + static_cast<std::size_t>(raw[i] - '0');
        if (value > window_size) overflow = true;
      }
      ++i;
    }
    if (!overflow && value >= 1 && !used[value]) {
      used[value] = 1;
      out.push_back(value);
    }
  }
  for (std::size_t v = 1; v <= window_size; ++v) {
    if (!used[v]) out.push_back(v);
  }
  return out;
}

struct RerankStats {
  std::size_t calls = 0;
  std::size_t failures = 0;
  std::size_t prompt_chars = 0;
  std::size_t response_chars = 0;
  double latency_ms = 0.0;

  json to_json() const {
    return {{"calls", calls},
            {"failures", failures},
            {"prompt_chars", prompt_chars},
            {"response_chars", response_chars},
            {"latency_ms", latency_ms}};
  }
};

struct RerankOutcome {
  RankedList list;
  RerankStats stats;
};

using ClaimTextLookup = std::function<std::string(const std::string&)>;

namespace detail {

inline void require_retrieved(const RankedList& list) {
  if (list.stage != Stage::retrieved) {
    throw ValidationError("list for post '" + list.post_id + "' is already re-ranked");
  }
  if (list.entries.empty()) throw ValidationError("list for post '" + list.post_id + "' is empty");
}

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace detail

inline RerankOutcome rerank_cross_encoder(const RankedList& list, const RerankConfig& cfg, PairScorer& scorer,
                                          const std::string& query_text, const ClaimTextLookup& claim_text) {
  cfg.validate();
  detail::require_retrieved(list);
  RerankOutcome out{list, {}};
  const std::size_t n = std::min(cfg.top_n, list.entries.size());

  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    pairs.emplace_back(query_text, claim_text(list.entries[i].claim_id));
    out.stats.prompt_chars += query_text.size() + pairs.back().second.size();
  }

  const auto start = std::chrono::steady_clock::now();
  std::vector<double> scores;
  try {
    scores = with_retries<std::exception>(cfg.max_retries, [&] {
      ++out.stats.calls;
      auto s = scorer.score(pairs);
      if (s.size() != pairs.size()) {
        throw RemoteError("scorer returned " + std::to_string(s.size()) + " scores for " +
                          std::to_string(pairs.size()) + " pairs");
      }
      for (double v : s) {
        if (!std::isfinite(v)) throw RemoteError("scorer returned a non-finite score");
      }
      return s;
    });
  } catch (const std::exception& e) {
    out.stats.latency_ms = detail::elapsed_ms(start);
    ++out.stats.failures;
    out.list.annotations.push_back(std::string("ce_rerank_failed: ") + e.what());
    return out;
  }
  out.stats.latency_ms = detail::elapsed_ms(start);

  std::vector<RankedEntry> head;
  head.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.list.retrieval_scores[list.entries[i].claim_id] = list.entries[i].score;
    head.push_back({list.entries[i].claim_id, scores[i]});
  }
  std::sort(head.begin(), head.end(),
            [](const RankedEntry& a, const RankedEntry& b) { return ranks_before(a.score, a.claim_id, b.score, b.claim_id); });
  std::copy(head.begin(), head.end(), out.list.entries.begin());
  out.list.stage = Stage::ce_reranked;
  return out;
}

// Sliding windows over positions 1..n (n = min(top_n, len)), starting at the
// bottom and moving up by window_stride. Each window is reordered by the
// model's permutation; a window whose generation fails keeps its order.
// Head entries end with rank-derived scores n, n-1, ..., 1.
inline RerankOutcome rerank_llm(const RankedList& list, const RerankConfig& cfg, TextGenerator& llm,
                                const PromptTemplate& prompt, const std::string& query_text,
                                const ClaimTextLookup& claim_text) {
  cfg.validate();
  if (cfg.mode != RerankMode::llm_listwise) throw ValidationError("rerank_llm requires llm_listwise mode");
  detail::require_retrieved(list);
  RerankOutcome out{list, {}};
  const std::size_t n = std::min(cfg.top_n, list.entries.size());
  const std::size_t w = std::min(cfg.window_size, n);
  const std::size_t stride = std::min(cfg.window_stride, w);

  std::vector<RankedEntry> head(list.entries.begin(), list.entries.begin() + static_cast<std::ptrdiff_t>(n));
  const auto start_time = std::chrono::steady_clock::now();
  std::size_t end = n;
  while (true) {
    const std::size_t begin = end > w ? end - w : 0;
    std::vector<std::string> passages;
    for (std::size_t i = begin; i < end; ++i) passages.push_back(claim_text(head[i].claim_id));
    const std::string rendered = prompt.render(query_text, passages);
    try {
      const std::string reply = with_retries<std::exception>(cfg.max_retries, [&] {
        ++out.stats.calls;
        out.stats.prompt_chars += rendered.size();
        return llm.generate(rendered, cfg.max_tokens);
      });
      out.stats.response_chars += reply.size();
      const auto perm = parse_permutation(reply, end - begin);
      std::vector<RankedEntry> window(head.begin() + static_cast<std::ptrdiff_t>(begin),
                                      head.begin() + static_cast<std::ptrdiff_t>(end));
      for (std::size_t i = 0; i < perm.size(); ++i) head[begin + i] = window[perm[i] - 1];
    } catch (const std::exception& e) {
      ++out.stats.failures;
      out.list.annotations.push_back("llm_window_failed[" + std::to_string(begin + 1) + ".." + std::to_string(end) +
                                     "]: " + e.what());
    }
    if (begin == 0) break;
    end -= stride;
  }
  out.stats.latency_ms = detail::elapsed_ms(start_time);

  for (std::size_t i = 0; i < n; ++i) {
    out.list.retrieval_scores[list.entries[i].claim_id] = list.entries[i].score;
    out.list.entries[i] = {head[i].claim_id, static_cast<double>(n - i)};
  }
  out.list.stage = Stage::llm_reranked;
  return out;
}

}  // namespace claimlink
