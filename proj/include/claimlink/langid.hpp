#pragma once

// Language identification by fusing several detectors' votes.
//
// Scores are normalized per detector by dividing by that detector's largest
// raw score for the text (unless the detector already reports values in
// [0, 1]). Fusion keeps languages voted for by at least `min_vote_count`
// detectors, averages their scores over the voting detectors, drops averages
// below `min_avg_score` and returns the best average, ties going to the
// lexicographically smaller code.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "error.hpp"
#include "hash.hpp"
#include "languages.hpp"
#include "records.hpp"

namespace claimlink {

inline constexpr std::string_view kVoteNormalizer = "per-detector-max-division";

struct RawVote {
  std::string detector;
  std::string language;
  double raw_score = 0.0;
};

struct DetectorVote {
  std::string detector;
  std::string language;
  double score = 0.0;  // in [0, 1]

  friend bool operator==(const DetectorVote&, const DetectorVote&) = default;
};

struct FusionConfig {
  double min_avg_score = 0.5;
  std::size_t min_vote_count = 2;

  void validate() const {
    if (!(min_avg_score >= 0.0 && min_avg_score <= 1.0)) {
      throw ValidationError("min_avg_score must be in [0, 1]");
    }
    if (min_vote_count < 1) throw ValidationError("min_vote_count must be >= 1");
  }
};

// Output is sorted by (detector, language). A repeated (detector, language)
// keeps its largest raw score.
inline std::vector<DetectorVote> normalize_votes(const std::vector<RawVote>& raw) {
  std::map<std::string, std::map<std::string, double>> by_detector;
  for (const auto& v : raw) {
    if (!std::isfinite(v.raw_score) || v.raw_score < 0.0) {
      throw ValidationError("detector '" + v.detector + "' returned invalid score for '" +
                            v.language + "'");
    }
    auto& slot = by_detector[v.detector][v.language];
    slot = std::max(slot, v.raw_score);
  }
  std::vector<DetectorVote> out;
  for (const auto& [detector, langs] : by_detector) {
    double max_score = 0.0;
    for (const auto& [lang, s] : langs) max_score = std::max(max_score, s);
    if (max_score <= 0.0) continue;
    const double divisor = max_score > 1.0 ? max_score : 1.0;
    for (const auto& [lang, s] : langs) out.push_back({detector, lang, s / divisor});
  }
  return out;
}

inline std::optional<std::string> fuse(const std::vector<DetectorVote>& votes,
                                       const FusionConfig& cfg = {}) {
  cfg.validate();
  struct Tally {
    double sum = 0.0;
    std::size_t count = 0;
  };
  // Ordered map: iteration in code order gives the lexicographic tie-break.
  std::map<std::string, Tally> tallies;
  for (const auto& v : votes) {
    auto& t = tallies[v.language];
    t.sum += v.score;
    ++t.count;
  }
  std::optional<std::string> best;
  double best_avg = 0.0;
  for (const auto& [lang, t] : tallies) {
    if (t.count < cfg.min_vote_count) continue;
    const double avg = t.sum / static_cast<double>(t.count);
    if (avg < cfg.min_avg_score) continue;
    if (!best || avg > best_avg) {
      best = lang;
      best_avg = avg;
    }
  }
  return best;
}

struct OutlierResolution {
  std::map<std::string, std::string> assignments;
  std::map<std::string, std::size_t> rare_languages;  // code -> frequency
  std::vector<std::string> review_ids;               // texts carrying a rare code
  std::size_t overrides_applied = 0;

  json to_json() const {
    return {{"rare_languages", rare_languages},
            {"review_ids", review_ids},
            {"overrides_applied", overrides_applied}};
  }
};

// Lists languages seen fewer than `rare_threshold` times for manual review and
// applies the reviewer's overrides verbatim.
inline OutlierResolution resolve_outliers(const std::map<std::string, std::string>& assignments,
                                          std::size_t rare_threshold = 10,
                                          const std::map<std::string, std::string>& overrides = {}) {
  for (const auto& [id, code] : overrides) {
    if (!assignments.count(id)) {
      throw ValidationError("override for unknown text id '" + id + "'");
    }
    if (!in_language_registry(code)) {
      throw ValidationError("override for '" + id + "' uses code '" + code +
                            "' outside the language registry");
    }
  }
  OutlierResolution out;
  std::map<std::string, std::size_t> freq;
  for (const auto& [id, code] : assignments) ++freq[code];
  for (const auto& [code, n] : freq) {
    if (code != kUndetermined && n < rare_threshold) out.rare_languages.emplace(code, n);
  }
  for (const auto& [id, code] : assignments) {
    if (out.rare_languages.count(code)) out.review_ids.push_back(id);
  }
  out.assignments = assignments;
  for (const auto& [id, code] : overrides) {
    out.assignments[id] = code;
    ++out.overrides_applied;
  }
  return out;
}

struct RawScore {
  std::string language;
  double raw_score = 0.0;
};

// A language detector: text -> raw (language, score) list.
class LanguageDetector {
public:
  virtual ~LanguageDetector() = default;
  virtual const std::string& name() const = 0;
  virtual std::vector<std::vector<RawScore>> detect(const std::vector<std::string>& texts) = 0;
};

class CallbackDetector final : public LanguageDetector {
public:
  using Fn = std::function<std::vector<RawScore>(const std::string&)>;
  CallbackDetector(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  const std::string& name() const override { return name_; }
  std::vector<std::vector<RawScore>> detect(const std::vector<std::string>& texts) override {
    std::vector<std::vector<RawScore>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(fn_(t));
    return out;
  }

private:
  std::string name_;
  Fn fn_;
};

inline std::vector<RawScore> parse_detector_line(const std::string& line) {
  std::vector<RawScore> out;
  json j = json::parse(line);
  if (!j.is_array()) throw FormatError("detector output line is not a JSON array");
  for (const auto& v : j) {
    out.push_back({v.at("language").get<std::string>(), v.at("raw_score").get<double>()});
  }
  return out;
}

// External detector speaking the line protocol: one {"text": ...} object per
// stdin line, one [{"language", "raw_score"}] array per stdout line.
class CommandDetector final : public LanguageDetector {
public:
  CommandDetector(std::string name, std::string command)
      : name_(std::move(name)), command_(std::move(command)) {}

  const std::string& name() const override { return name_; }

  std::vector<std::vector<RawScore>> detect(const std::vector<std::string>& texts) override {
    namespace fs = std::filesystem;
    static std::atomic<std::uint64_t> counter{0};
    const auto tag = hex64(fnv1a64(name_, (std::uint64_t{std::random_device{}()} << 32) ^ counter++));
    const fs::path dir = fs::temp_directory_path();
    const fs::path in_path = dir / ("claimlink-langid-" + tag + ".in");
    const fs::path out_path = dir / ("claimlink-langid-" + tag + ".out");
    {
      std::vector<json> rows;
      rows.reserve(texts.size());
      for (const auto& t : texts) rows.push_back({{"text", t}});
      write_jsonl(in_path, rows);
    }
    const std::string cmd = command_ + " < '" + in_path.string() + "' > '" + out_path.string() + "'";
    const int rc = std::system(cmd.c_str());
    std::vector<std::vector<RawScore>> out;
    try {
      if (rc != 0) throw RemoteError("detector '" + name_ + "' exited with status " + std::to_string(rc));
      auto in = open_input(out_path);
      std::string line;
      while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        out.push_back(parse_detector_line(line));
      }
    } catch (...) {
      fs::remove(in_path);
      fs::remove(out_path);
      throw;
    }
    fs::remove(in_path);
    fs::remove(out_path);
    if (out.size() != texts.size()) {
      throw FormatError("detector '" + name_ + "' returned " + std::to_string(out.size()) +
                        " lines for " + std::to_string(texts.size()) + " texts");
    }
    return out;
  }

private:
  std::string name_;
  std::string command_;
};

struct LanguageDecision {
  std::optional<std::string> language;
  std::vector<DetectorVote> votes;
};

// Runs every detector over all texts (detectors in parallel), then normalizes
// and fuses per text.
inline std::vector<LanguageDecision> detect_languages(
    const std::vector<std::string>& texts,
    const std::vector<std::shared_ptr<LanguageDetector>>& detectors,
    const FusionConfig& cfg = {}) {
  cfg.validate();
  std::vector<std::future<std::vector<std::vector<RawScore>>>> jobs;
  for (const auto& d : detectors) {
    jobs.push_back(std::async(std::launch::async, [&d, &texts] { return d->detect(texts); }));
  }
  std::vector<std::vector<std::vector<RawScore>>> results;
  for (auto& j : jobs) results.push_back(j.get());

  std::vector<LanguageDecision> out(texts.size());
  for (std::size_t t = 0; t < texts.size(); ++t) {
    std::vector<RawVote> raw;
    for (std::size_t d = 0; d < detectors.size(); ++d) {
      if (results[d].size() != texts.size()) {
        throw FormatError("detector '" + detectors[d]->name() + "' returned a short result");
      }
      for (const auto& r : results[d][t]) {
        raw.push_back({detectors[d]->name(), to_lower_ascii(r.language), r.raw_score});
      }
    }
    out[t].votes = normalize_votes(raw);
    out[t].language = fuse(out[t].votes, cfg);
  }
  return out;
}

}  // namespace claimlink
