#pragma once

// Experiment configuration: a small TOML subset plus environment overrides.
//
// Supported syntax: [section] headers, key = value lines, # comments, basic
// "strings" with \" \\ \n \t escapes, 'literal strings', integers, floats,
// booleans and single-line arrays of those. Every key is namespaced by its
// section; keys outside a section are rejected.
//
// Any key can be overridden with CLAIMLINK_<SECTION>_<KEY> (upper case), for
// example CLAIMLINK_RERANK_ENDPOINT=http://localhost:8080/generate. Override
// values are parsed as TOML values when they look like one and taken as plain
// strings otherwise.

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <functional>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embed.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "langid.hpp"
#include "negatives.hpp"
#include "records.hpp"
#include "rerank.hpp"
#include "retrieval.hpp"
#include "split.hpp"
#include "text.hpp"
#include "url.hpp"

namespace claimlink {

inline constexpr std::string_view kEnvPrefix = "CLAIMLINK_";

namespace toml_detail {

class ValueParser {
public:
  ValueParser(std::string_view s, std::string where) : s_(s), where_(std::move(where)) {}

  json parse_all() {
    json v = value();
    skip_space();
    if (pos_ < s_.size() && s_[pos_] != '#') fail("unexpected trailing characters");
    return v;
  }

private:
  [[noreturn]] void fail(const std::string& why) const { throw FormatError(where_ + ": " + why); }

  void skip_space() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  json value() {
    skip_space();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    return scalar();
  }

  json basic_string() {
    std::string out;
    ++pos_;
    while (pos_ < s_.size()) {
      const char c = s_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (pos_ >= s_.size()) break;
      switch (s_[pos_++]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: fail("unsupported escape sequence");
      }
    }
    fail("unterminated string");
  }

  json literal_string() {
    const auto end = s_.find('\'', pos_ + 1);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string out(s_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return out;
  }

  json array() {
    json out = json::array();
    ++pos_;
    skip_space();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    while (true) {
      out.push_back(value());
      skip_space();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_space();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return out;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      fail("expected ',' or ']' in array");
    }
  }

  json scalar() {
    auto end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && s_[end] != '#' && s_[end] != ' ' &&
           s_[end] != '\t') {
      ++end;
    }
    std::string tok(s_.substr(pos_, end - pos_));
    pos_ = end;
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char c : tok) {
      if (c != '_') digits += c;
    }
    if (!digits.empty()) {
      char* stop = nullptr;
      errno = 0;
      const long long i = std::strtoll(digits.c_str(), &stop, 10);
      if (*stop == '\0' && errno == 0) return i;
      errno = 0;
      const double d = std::strtod(digits.c_str(), &stop);
      if (*stop == '\0' && errno == 0 && digits.find_first_of("0123456789") != std::string::npos) return d;
    }
    fail("cannot parse value '" + tok + "'");
  }

  std::string_view s_;
  std::string where_;
  std::size_t pos_ = 0;
};

inline bool is_bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

}  // namespace toml_detail

// Returns {section: {key: value}}.
inline json parse_toml_subset(std::string_view text, const std::string& source = "config") {
  json root = json::object();
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos) throw FormatError(where + ": unterminated section header");
      const auto rest = trim(line.substr(close + 1));
      if (!rest.empty() && rest.front() != '#') throw FormatError(where + ": text after section header");
      section = std::string(trim(line.substr(1, close - 1)));
      if (!toml_detail::is_bare_key(section)) throw FormatError(where + ": invalid section name");
      if (root.contains(section)) throw FormatError(where + ": section [" + section + "] defined twice");
      root[section] = json::object();
    } else {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw FormatError(where + ": expected key = value");
      const std::string key(trim(line.substr(0, eq)));
      if (!toml_detail::is_bare_key(key)) throw FormatError(where + ": invalid key '" + key + "'");
      if (section.empty()) throw FormatError(where + ": key '" + key + "' outside of a section");
      if (root[section].contains(key)) throw FormatError(where + ": duplicate key " + section + "." + key);
      root[section][key] = toml_detail::ValueParser(line.substr(eq + 1), where).parse_all();
    }
    if (end == text.size()) break;
  }
  return root;
}

struct CorpusConfig {
  std::filesystem::path posts, claims, pairs;
  std::size_t min_posts = 180;
};

struct LangidConfig {
  // Each entry is "name=shell command" speaking the detector line protocol.
  // With no detectors the language fields of the input records are used.
  std::vector<std::pair<std::string, std::string>> detectors;
  FusionConfig fusion;
  std::size_t rare_threshold = 10;
  std::filesystem::path overrides;  // optional JSON object {"post:<id>"|"claim:<id>": code}
};

struct SplitConfig {
  SplitRatios ratios = {0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
};

struct RetrieveConfig {
  Setting setting = Setting::multilingual;
  Scope scope = Scope::test;
  std::size_t k = 100;
  std::size_t threads = 0;
};

struct RerankSection {
  bool enabled = false;
  RerankConfig cfg;
  std::string endpoint;
  std::string api = "generate";  // generate | chat
  std::string model;
  std::string system_message;
  std::filesystem::path prompt;
  std::size_t max_parallel_requests = 4;
  int timeout_seconds = 120;
};

struct NegativesSection {
  bool enabled = false;
  NegativeConfig cfg;
  std::size_t num_clusters = 50;
  double tau = 0.5;
};

struct EvalConfig {
  std::size_t k = 10;
  bool per_post_best = false;
};

struct ExperimentConfig {
  CorpusConfig corpus;
  LangidConfig langid;
  SplitConfig split;
  ProviderSpec embed;
  RetrieveConfig retrieve;
  RerankSection rerank;
  NegativesSection negatives;
  EvalConfig eval;
  std::filesystem::path output_dir = "out";

  void validate() const;
  json to_json() const;
};

namespace config_detail {

// section -> allowed keys; anything else is a typo and rejected.
inline const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s = {
      {"corpus", {"posts", "claims", "pairs", "min_posts"}},
      {"langid", {"detectors", "min_avg", "min_detectors", "rare_threshold", "overrides"}},
      {"split", {"ratios", "seed"}},
      {"embed",
       {"provider", "query_template", "passage_template", "batch_size", "max_parallel_requests", "max_retries",
        "timeout_seconds", "tag"}},
      {"retrieve", {"setting", "scope", "k", "threads"}},
      {"rerank",
       {"mode", "endpoint", "api", "model", "system_message", "prompt", "top_n", "window_size", "window_stride",
        "max_retries", "max_tokens", "max_parallel_requests", "timeout_seconds"}},
      {"negatives", {"enabled", "strategy", "k", "seed", "num_clusters", "tau"}},
      {"eval", {"k", "unit"}},
      {"output", {"dir"}},
  };
  return s;
}

inline std::string env_name(const std::string& section, const std::string& key) {
  std::string out(kEnvPrefix);
  for (char c : section + "_" + key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

class Reader {
public:
  explicit Reader(const json& root) : root_(root) {}

  const json* find(const std::string& section, const std::string& key) const {
    auto s = root_.find(section);
    if (s == root_.end()) return nullptr;
    auto k = s->find(key);
    return k == s->end() ? nullptr : &*k;
  }

  std::string str(const std::string& section, const std::string& key, std::string fallback = {}) const {
    const json* v = find(section, key);
    if (!v) return fallback;
    if (!v->is_string()) type_error(section, key, "a string");
    return v->get<std::string>();
  }

  std::uint64_t uint(const std::string& section, const std::string& key, std::uint64_t fallback) const {
    const json* v = find(section, key);
    if (!v) return fallback;
    if (!v->is_number_integer() || v->get<long long>() < 0) type_error(section, key, "a non-negative integer");
    return v->get<std::uint64_t>();
  }

  double real(const std::string& section, const std::string& key, double fallback) const {
    const json* v = find(section, key);
    if (!v) return fallback;
    if (!v->is_number()) type_error(section, key, "a number");
    return v->get<double>();
  }

  bool boolean(const std::string& section, const std::string& key, bool fallback) const {
    const json* v = find(section, key);
    if (!v) return fallback;
    if (!v->is_boolean()) type_error(section, key, "true or false");
    return v->get<bool>();
  }

  std::vector<std::string> strings(const std::string& section, const std::string& key) const {
    const json* v = find(section, key);
    if (!v) return {};
    if (v->is_string()) return split_list(v->get<std::string>());
    if (!v->is_array()) type_error(section, key, "an array of strings");
    std::vector<std::string> out;
    for (const auto& e : *v) {
      if (!e.is_string()) type_error(section, key, "an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  [[noreturn]] static void type_error(const std::string& section, const std::string& key, const char* want) {
    throw ValidationError(section + "." + key + " must be " + want);
  }

private:
  const json& root_;
};

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace config_detail

// Applies CLAIMLINK_<SECTION>_<KEY> variables on top of a parsed document.
// `getenv` is injectable for tests.
inline void apply_env_overrides(json& root, const std::function<const char*(const char*)>& getenv_fn =
                                                [](const char* n) { return std::getenv(n); }) {
  for (const auto& [section, keys] : config_detail::schema()) {
    for (const auto& key : keys) {
      const std::string name = config_detail::env_name(section, key);
      const char* raw = getenv_fn(name.c_str());
      if (!raw) continue;
      json value;
      try {
        value = toml_detail::ValueParser(raw, name).parse_all();
      } catch (const FormatError&) {
        value = std::string(raw);
      }
      root[section][key] = std::move(value);
    }
  }
}

// Builds a config from a parsed document. Relative paths resolve against
// `base_dir` (normally the directory holding the config file).
inline ExperimentConfig config_from_json(const json& root, const std::filesystem::path& base_dir = {}) {
  using config_detail::resolve;
  for (const auto& [section, body] : root.items()) {
    auto known = config_detail::schema().find(section);
    if (known == config_detail::schema().end()) throw ValidationError("unknown config section [" + section + "]");
    for (const auto& [key, _] : body.items()) {
      if (std::find(known->second.begin(), known->second.end(), key) == known->second.end()) {
        throw ValidationError("unknown config key " + section + "." + key);
      }
    }
  }
  const config_detail::Reader r(root);
  ExperimentConfig c;

  c.corpus.posts = resolve(base_dir, r.str("corpus", "posts"));
  c.corpus.claims = resolve(base_dir, r.str("corpus", "claims"));
  c.corpus.pairs = resolve(base_dir, r.str("corpus", "pairs"));
  c.corpus.min_posts = r.uint("corpus", "min_posts", c.corpus.min_posts);

  for (const auto& d : r.strings("langid", "detectors")) {
    const auto eq = d.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == d.size()) {
      throw ValidationError("langid.detectors entries must look like name=command, got '" + d + "'");
    }
    c.langid.detectors.emplace_back(std::string(trim(d.substr(0, eq))), std::string(trim(d.substr(eq + 1))));
  }
  c.langid.fusion.min_avg_score = r.real("langid", "min_avg", c.langid.fusion.min_avg_score);
  c.langid.fusion.min_vote_count = r.uint("langid", "min_detectors", c.langid.fusion.min_vote_count);
  c.langid.rare_threshold = r.uint("langid", "rare_threshold", c.langid.rare_threshold);
  c.langid.overrides = resolve(base_dir, r.str("langid", "overrides"));

  if (const json* ratios = r.find("split", "ratios")) {
    if (ratios->is_string()) {
      c.split.ratios = parse_ratios(ratios->get<std::string>());
    } else if (ratios->is_array() && ratios->size() == 3 &&
               std::all_of(ratios->begin(), ratios->end(), [](const json& v) { return v.is_number(); })) {
      for (std::size_t i = 0; i < 3; ++i) c.split.ratios[i] = (*ratios)[i].get<double>();
    } else {
      config_detail::Reader::type_error("split", "ratios", "three numbers");
    }
  }
  c.split.seed = r.uint("split", "seed", c.split.seed);

  const std::string provider = r.str("embed", "provider");
  c.embed = ProviderSpec::from_location(provider);
  if (c.embed.kind == ProviderKind::precomputed_file) c.embed.location = resolve(base_dir, provider).string();
  c.embed.query_template = r.str("embed", "query_template", c.embed.query_template);
  c.embed.passage_template = r.str("embed", "passage_template", c.embed.passage_template);
  c.embed.batch_size = r.uint("embed", "batch_size", c.embed.batch_size);
  c.embed.max_parallel_requests = r.uint("embed", "max_parallel_requests", c.embed.max_parallel_requests);
  c.embed.max_retries = r.uint("embed", "max_retries", c.embed.max_retries);
  c.embed.timeout_seconds = static_cast<int>(r.uint("embed", "timeout_seconds", 60));
  c.embed.tag = r.str("embed", "tag");

  try {
    c.retrieve.setting = parse_setting(r.str("retrieve", "setting", "multi"));
    c.retrieve.scope = parse_scope(r.str("retrieve", "scope", "test"));
  } catch (const Error& e) {
    throw ValidationError(std::string("retrieve: ") + e.what());
  }
  c.retrieve.k = r.uint("retrieve", "k", c.retrieve.k);
  c.retrieve.threads = r.uint("retrieve", "threads", c.retrieve.threads);

  const std::string mode = r.str("rerank", "mode", "none");
  if (mode != "none") {
    c.rerank.enabled = true;
    try {
      c.rerank.cfg.mode = parse_rerank_mode(mode);
    } catch (const Error&) {
      throw ValidationError("rerank.mode must be none, ce or llm, got '" + mode + "'");
    }
  }
  c.rerank.endpoint = r.str("rerank", "endpoint");
  c.rerank.api = r.str("rerank", "api", c.rerank.api);
  c.rerank.model = r.str("rerank", "model");
  c.rerank.system_message = r.str("rerank", "system_message");
  c.rerank.prompt = resolve(base_dir, r.str("rerank", "prompt"));
  c.rerank.cfg.top_n = r.uint("rerank", "top_n", c.rerank.cfg.top_n);
  c.rerank.cfg.window_size = r.uint("rerank", "window_size", c.rerank.cfg.window_size);
  c.rerank.cfg.window_stride = r.uint("rerank", "window_stride", c.rerank.cfg.window_stride);
  c.rerank.cfg.max_retries = r.uint("rerank", "max_retries", c.rerank.cfg.max_retries);
  c.rerank.cfg.max_tokens = r.uint("rerank", "max_tokens", c.rerank.cfg.max_tokens);
  c.rerank.max_parallel_requests = r.uint("rerank", "max_parallel_requests", c.rerank.max_parallel_requests);
  c.rerank.timeout_seconds = static_cast<int>(r.uint("rerank", "timeout_seconds", 120));

  c.negatives.enabled = r.boolean("negatives", "enabled", false);
  try {
    c.negatives.cfg.strategy = parse_negative_strategy(r.str("negatives", "strategy", "similarity"));
  } catch (const Error& e) {
    throw ValidationError(std::string("negatives.strategy: ") + e.what());
  }
  c.negatives.cfg.k = r.uint("negatives", "k", c.negatives.cfg.k);
  c.negatives.cfg.seed = r.uint("negatives", "seed", c.split.seed);
  c.negatives.num_clusters = r.uint("negatives", "num_clusters", c.negatives.num_clusters);
  c.negatives.tau = r.real("negatives", "tau", c.negatives.tau);

  c.eval.k = r.uint("eval", "k", c.eval.k);
  const std::string unit = r.str("eval", "unit", "pair");
  if (unit != "pair" && unit != "post") throw ValidationError("eval.unit must be pair or post");
  c.eval.per_post_best = unit == "post";

  c.output_dir = resolve(base_dir, r.str("output", "dir", "out"));
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, bool use_env = true) {
  json root = parse_toml_subset(read_file(path), path.string());
  if (use_env) apply_env_overrides(root);
  return config_from_json(root, path.parent_path());
}

inline void ExperimentConfig::validate() const {
  namespace fs = std::filesystem;
  auto require_file = [](const fs::path& p, const char* field) {
    if (p.empty()) throw ValidationError(std::string(field) + " is required");
    if (!fs::is_regular_file(p)) throw ValidationError(std::string(field) + ": file not found: " + p.string());
  };
  require_file(corpus.posts, "corpus.posts");
  require_file(corpus.claims, "corpus.claims");
  require_file(corpus.pairs, "corpus.pairs");
  if (!langid.overrides.empty()) require_file(langid.overrides, "langid.overrides");
  try {
    langid.fusion.validate();
  } catch (const Error& e) {
    throw ValidationError(std::string("langid: ") + e.what());
  }
  try {
    validate_ratios(split.ratios);
  } catch (const Error& e) {
    throw ValidationError(std::string("split.ratios: ") + e.what());
  }
  if (embed.location.empty()) throw ValidationError("embed.provider is required");
  try {
    embed.validate();
  } catch (const Error& e) {
    throw ValidationError(std::string("embed: ") + e.what());
  }
  if (embed.kind == ProviderKind::precomputed_file) require_file(embed.location, "embed.provider");
  if (retrieve.k < 1) throw ValidationError("retrieve.k must be >= 1");
  if (eval.k < 1) throw ValidationError("eval.k must be >= 1");
  if (eval.k > retrieve.k) throw ValidationError("eval.k must not exceed retrieve.k");
  if (rerank.enabled) {
    const char* mode = rerank.cfg.mode == RerankMode::llm_listwise ? "llm" : "ce";
    if (rerank.endpoint.empty()) {
      throw ValidationError(std::string("rerank.endpoint is required when rerank.mode = ") + mode);
    }
    try {
      parse_url(rerank.endpoint);
      rerank.cfg.validate();
    } catch (const Error& e) {
      throw ValidationError(std::string("rerank: ") + e.what());
    }
    if (rerank.api != "generate" && rerank.api != "chat") throw ValidationError("rerank.api must be generate or chat");
    if (!rerank.prompt.empty()) require_file(rerank.prompt, "rerank.prompt");
    if (rerank.max_parallel_requests < 1) throw ValidationError("rerank.max_parallel_requests must be >= 1");
  }
  if (negatives.enabled) {
    negatives.cfg.validate();
    if (negatives.cfg.strategy == NegativeStrategy::topic && negatives.num_clusters < 1) {
      throw ValidationError("negatives.num_clusters must be >= 1");
    }
  }
}

inline json ExperimentConfig::to_json() const {
  json detectors = json::array();
  for (const auto& [name, cmd] : langid.detectors) detectors.push_back(name + "=" + cmd);
  return {
      {"corpus",
       {{"posts", corpus.posts.string()},
        {"claims", corpus.claims.string()},
        {"pairs", corpus.pairs.string()},
        {"min_posts", corpus.min_posts}}},
      {"langid",
       {{"detectors", detectors},
        {"min_avg", langid.fusion.min_avg_score},
        {"min_detectors", langid.fusion.min_vote_count},
        {"rare_threshold", langid.rare_threshold},
        {"overrides", langid.overrides.string()}}},
      {"split", {{"ratios", split.ratios}, {"seed", split.seed}}},
      {"embed",
       {{"provider", embed.location},
        {"query_template", embed.query_template},
        {"passage_template", embed.passage_template},
        {"batch_size", embed.batch_size},
        {"tag", embed.tag}}},
      {"retrieve", {{"setting", to_string(retrieve.setting)}, {"scope", to_string(retrieve.scope)}, {"k", retrieve.k}}},
      {"rerank",
       {{"mode", rerank.enabled ? to_string(rerank.cfg.mode) : "none"},
        {"endpoint", rerank.endpoint},
        {"api", rerank.api},
        {"model", rerank.model},
        {"prompt", rerank.prompt.string()},
        {"top_n", rerank.cfg.top_n},
        {"window_size", rerank.cfg.window_size},
        {"window_stride", rerank.cfg.window_stride},
        {"max_retries", rerank.cfg.max_retries},
        {"max_tokens", rerank.cfg.max_tokens}}},
      {"negatives",
       {{"enabled", negatives.enabled},
        {"strategy", to_string(negatives.cfg.strategy)},
        {"k", negatives.cfg.k},
        {"seed", negatives.cfg.seed},
        {"num_clusters", negatives.num_clusters},
        {"tau", negatives.tau}}},
      {"eval", {{"k", eval.k}, {"unit", eval.per_post_best ? "post" : "pair"}}},
      {"output", {{"dir", output_dir.string()}}},
  };
}

}  // namespace claimlink
