#include <gtest/gtest.h>

#include <sstream>

#include "claimlink.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace claimlink;
using testkit::TempDir;

namespace {

Record rec(json j, std::size_t line = 1) { return Record{line, std::move(j)}; }

RecordSources three_by_three() {
  RecordSources s;
  for (int i = 1; i <= 3; ++i) {
    s.posts.push_back(rec({{"id", "p" + std::to_string(i)}, {"text", "post " + std::to_string(i)}, {"language", "en"}}));
    s.claims.push_back(rec({{"id", "c" + std::to_string(i)}, {"claim", "claim " + std::to_string(i)}, {"language", "en"}}));
  }
  s.pairs.push_back(rec({{"post_id", "p1"}, {"claim_id", "c1"}, {"relationship", "claim_review"}}));
  s.pairs.push_back(rec({{"post_id", "p2"}, {"claim_id", "c2"}, {"relationship", "backlink"}}));
  s.pairs.push_back(rec({{"post_id", "p3"}, {"claim_id", "c9"}, {"relationship", "claim_review"}}));
  return s;
}

}  // namespace

// ---------------------------------------------------------------- text/records

TEST(Text, Utf8Validation) {
  EXPECT_TRUE(is_valid_utf8("plain ascii"));
  EXPECT_TRUE(is_valid_utf8("\xC3\xA9t\xC3\xA9"));
  EXPECT_TRUE(is_valid_utf8("\xF0\x9F\x98\x80"));
  EXPECT_FALSE(is_valid_utf8("\xC3"));
  EXPECT_FALSE(is_valid_utf8("\xC0\xAF"));        // overlong
  EXPECT_FALSE(is_valid_utf8("\xED\xA0\x80"));    // surrogate
  EXPECT_FALSE(is_valid_utf8("\xF4\x90\x80\x80"));  // above U+10FFFF
}

TEST(Text, TrimAndSplit) {
  EXPECT_EQ(trim("  a b \t\n"), "a b");
  EXPECT_EQ(trim(" \t "), "");
  EXPECT_EQ(split_list("a, b,,c"), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Records, JsonlReportsLineOfMalformedRecord) {
  std::istringstream in("{\"id\": 1}\n\n{broken\n");
  try {
    parse_jsonl(in, "f.jsonl");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("f.jsonl:3"), std::string::npos) << e.what();
  }
}

TEST(Records, CsvQuotedFields) {
  std::istringstream in("id,text\n1,\"hello, \"\"world\"\"\"\n2,\"multi\nline\"\n");
  auto rows = parse_csv(in, "f.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].fields["text"], "hello, \"world\"");
  EXPECT_EQ(rows[1].fields["text"], "multi\nline");
  EXPECT_EQ(field_as_id(rows[0], "id", "f.csv"), "1");
}

TEST(Records, IntegerIdsAccepted) {
  auto r = rec({{"id", 42}});
  EXPECT_EQ(field_as_id(r, "id", "x"), "42");
}

// ---------------------------------------------------------------------- ingest

TEST(Ingest, UnknownClaimAndOrphanDropped) {
  auto res = ingest(three_by_three());
  const auto& c = res.corpus;
  ASSERT_EQ(c.pairs.size(), 2u);
  EXPECT_EQ(c.pairs[0].post_id, "p1");
  EXPECT_EQ(c.pairs[1].post_id, "p2");
  EXPECT_EQ(res.report.dropped.at("unknown_claim"), 1u);
  EXPECT_EQ(res.report.dropped.at("orphan_claim"), 1u);
  EXPECT_EQ(c.find_claim("c3"), nullptr);
  EXPECT_EQ(c.find_post("p3"), nullptr);
}

TEST(Ingest, BadRelationshipCounted) {
  auto s = three_by_three();
  s.pairs.push_back(rec({{"post_id", "p3"}, {"claim_id", "c3"}, {"relationship", "manual"}}));
  auto res = ingest(s);
  EXPECT_EQ(res.report.dropped.at("bad_relationship"), 1u);
  EXPECT_EQ(res.corpus.pairs.size(), 2u);
}

TEST(Ingest, DuplicatePairPrefersClaimReview) {
  auto s = three_by_three();
  s.pairs.push_back(rec({{"post_id", "p2"}, {"claim_id", "c2"}, {"relationship", "claim_review"}}));
  auto res = ingest(s);
  ASSERT_EQ(res.corpus.pairs.size(), 2u);
  EXPECT_EQ(res.corpus.pairs[1].relationship, Relationship::claim_review);
  EXPECT_EQ(res.report.dropped.at("duplicate_pair"), 1u);
}

TEST(Ingest, DuplicatePostIdFailsFast) {
  auto s = three_by_three();
  s.posts.push_back(rec({{"id", "p1"}, {"text", "again"}}, 4));
  EXPECT_THROW(ingest(s), FormatError);
}

TEST(Ingest, TextIsTrimmedAndEmptyDropped) {
  auto s = three_by_three();
  s.posts[0].fields["text"] = "   padded  ";
  s.posts[1].fields["text"] = " \t ";
  auto res = ingest(s);
  EXPECT_EQ(res.corpus.find_post("p1")->text, "padded");
  EXPECT_EQ(res.report.dropped.at("empty_post_text"), 1u);
}

TEST(Ingest, InvalidUtf8Rejected) {
  auto s = three_by_three();
  s.posts[0].fields["text"] = std::string("bad \xC3");
  EXPECT_THROW(ingest(s), FormatError);
}

TEST(Ingest, EmptyCorpusIsAnError) {
  RecordSources s;
  s.posts.push_back(rec({{"id", "p1"}, {"text", "x"}}));
  EXPECT_THROW(ingest(s), Error);
}

TEST(Ingest, FilesAndCorpusRoundTrip) {
  TempDir dir;
  testkit::write_lines(dir / "posts.jsonl", {{{"id", "p1"}, {"text", "hello"}, {"language", "en"}}});
  write_file(dir / "claims.csv", "id,claim,language\nc1,\"a, claim\",pt\n");
  testkit::write_lines(dir / "pairs.jsonl", {{{"post_id", "p1"}, {"claim_id", "c1"}, {"relationship", "backlink"}}});
  auto res = ingest_files(dir / "posts.jsonl", dir / "claims.csv", dir / "pairs.jsonl");
  ASSERT_EQ(res.corpus.claims.size(), 1u);
  EXPECT_EQ(res.corpus.claims[0].claim_text, "a, claim");
  save_corpus(dir / "out", res.corpus);
  auto back = load_corpus(dir / "out");
  EXPECT_EQ(back.posts[0].text, "hello");
  EXPECT_EQ(back.claims[0].language, "pt");
  EXPECT_EQ(back.pairs[0].relationship, Relationship::backlink);
}

// ------------------------------------------------------------ language filter

TEST(LanguageFilter, SmallLanguageRemoved) {
  std::vector<std::pair<std::string, std::string>> posts, claims, pairs;
  for (int i = 0; i < 200; ++i) posts.push_back({"en" + std::to_string(i), "en"});
  for (int i = 0; i < 5; ++i) posts.push_back({"xx" + std::to_string(i), "xx"});
  for (const auto& [id, lang] : posts) {
    claims.push_back({"c" + id, lang});
    pairs.push_back({id, "c" + id});
  }
  auto res = filter_language_threshold(testkit::make_corpus(posts, claims, pairs), 180);
  EXPECT_EQ(res.corpus.posts.size(), 200u);
  EXPECT_EQ(res.report.removed_languages.at("xx"), 5u);
  for (const auto& p : res.corpus.posts) EXPECT_EQ(p.language, "en");
  EXPECT_EQ(res.corpus.claims.size(), 200u);
}

TEST(LanguageFilter, MinPostsOneIsIdentity) {
  auto c = testkit::make_corpus({{"p1", "en"}, {"p2", "de"}}, {{"c1", "en"}, {"c2", "fr"}}, {{"p1", "c1"}, {"p2", "c2"}});
  auto res = filter_language_threshold(c, 1);
  EXPECT_EQ(res.corpus.posts.size(), 2u);
  EXPECT_EQ(res.corpus.pairs.size(), 2u);
}

TEST(LanguageFilter, ClaimLanguagesSurviveWhenPaired) {
  // 46 claim languages, posts only in 30 of them.
  std::vector<std::pair<std::string, std::string>> posts, claims, pairs;
  for (std::size_t i = 0; i < 46; ++i) {
    const std::string claim_lang = std::string(kLanguageRegistry[i]);
    const std::string post_lang = std::string(kLanguageRegistry[i % 30]);
    const std::string cid = "c" + std::to_string(i);
    claims.push_back({cid, claim_lang});
    for (int j = 0; j < 3; ++j) {
      const std::string pid = "p" + std::to_string(i) + "_" + std::to_string(j);
      posts.push_back({pid, post_lang});
      pairs.push_back({pid, cid});
    }
  }
  auto res = filter_language_threshold(testkit::make_corpus(posts, claims, pairs), 3);
  std::set<std::string> claim_langs, post_langs;
  for (const auto& f : res.corpus.claims) claim_langs.insert(f.language);
  for (const auto& p : res.corpus.posts) post_langs.insert(p.language);
  EXPECT_EQ(claim_langs.size(), 46u);
  EXPECT_EQ(post_langs.size(), 30u);
}

TEST(LanguageFilter, UndeterminedDroppedFirst) {
  auto c = testkit::make_corpus({{"p1", "en"}, {"p2", "und"}}, {{"c1", "en"}, {"c2", "en"}}, {{"p1", "c1"}, {"p2", "c2"}});
  auto res = filter_language_threshold(c, 1);
  EXPECT_EQ(res.report.undetermined_posts_dropped, 1u);
  EXPECT_EQ(res.corpus.posts.size(), 1u);
}

TEST(LanguageFilter, EveryStratumMeetsThresholdProperty) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<std::string, std::string>> posts, claims, pairs;
    const std::size_t n = 50 + rng() % 300;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string lang(kLanguageRegistry[rng() % 8]);
      posts.push_back({"p" + std::to_string(i), lang});
      claims.push_back({"c" + std::to_string(i), lang});
      pairs.push_back({"p" + std::to_string(i), "c" + std::to_string(i)});
    }
    const std::size_t min_posts = 1 + rng() % 60;
    auto res = filter_language_threshold(testkit::make_corpus(posts, claims, pairs), min_posts);
    std::map<std::string, std::size_t> counts;
    for (const auto& p : res.corpus.posts) ++counts[p.language];
    for (const auto& [lang, count] : counts) EXPECT_GE(count, min_posts) << lang;
  }
}

// --------------------------------------------------------------- crosslingual

TEST(Crosslingual, KeepsOnlyDifferingLanguages) {
  auto c = testkit::make_corpus({{"p1", "en"}}, {{"c1", "pt"}, {"c2", "en"}}, {{"p1", "c1"}, {"p1", "c2"}});
  auto v = crosslingual_view(c);
  ASSERT_EQ(v.pairs.size(), 1u);
  EXPECT_EQ(v.pairs[0].claim_id, "c1");
  EXPECT_EQ(v.claims.size(), 1u);
}

TEST(Crosslingual, MonolingualCorpusGivesEmptyView) {
  auto c = testkit::make_corpus({{"p1", "en"}, {"p2", "de"}}, {{"c1", "en"}, {"c2", "de"}}, {{"p1", "c1"}, {"p2", "c2"}});
  EXPECT_TRUE(crosslingual_view(c).empty());
}

TEST(Crosslingual, Idempotent) {
  std::mt19937_64 rng(3);
  std::vector<std::pair<std::string, std::string>> posts, claims, pairs;
  for (int i = 0; i < 60; ++i) posts.push_back({"p" + std::to_string(i), std::string(kLanguageRegistry[rng() % 3])});
  for (int i = 0; i < 40; ++i) claims.push_back({"c" + std::to_string(i), std::string(kLanguageRegistry[rng() % 3])});
  for (int i = 0; i < 60; ++i) pairs.push_back({"p" + std::to_string(i), "c" + std::to_string(rng() % 40)});
  auto c = testkit::make_corpus(posts, claims, pairs);
  prune_to_pairs(c);
  auto once = crosslingual_view(c);
  auto twice = crosslingual_view(once);
  EXPECT_EQ(once.pairs.size(), twice.pairs.size());
  EXPECT_EQ(once.posts.size(), twice.posts.size());
  EXPECT_EQ(once.claims.size(), twice.claims.size());
}

// ---------------------------------------------------------------------- splits

TEST(Splits, TenSingletonsGive811) {
  std::vector<std::pair<std::string, std::string>> posts, claims, pairs;
  for (int i = 0; i < 10; ++i) {
    posts.push_back({"p" + std::to_string(i), "en"});
    claims.push_back({"c" + std::to_string(i), "en"});
    pairs.push_back({"p" + std::to_string(i), "c" + std::to_string(i)});
  }
  auto m = build_splits(testkit::make_corpus(posts, claims, pairs), {0.8, 0.1, 0.1}, 11);
  const auto& st = m.strata.at("en");
  EXPECT_EQ(st.achieved_posts, (std::array<std::size_t, 3>{8, 1, 1}));
  EXPECT_TRUE(m.warnings.empty());
}

TEST(Splits, GiantComponentUndershootsDevAndTest) {
  std::vector<std::pair<std::string, std::string>> posts, claims, pairs;
  for (int i = 0; i < 60; ++i) {
    posts.push_back({"g" + std::to_string(i), "en"});
    pairs.push_back({"g" + std::to_string(i), "hub"});
  }
  claims.push_back({"hub", "en"});
  for (int i = 0; i < 40; ++i) {
    posts.push_back({"p" + std::to_string(i), "en"});
    claims.push_back({"c" + std::to_string(i), "en"});
    pairs.push_back({"p" + std::to_string(i), "c" + std::to_string(i)});
  }
  auto m = build_splits(testkit::make_corpus(posts, claims, pairs), {0.8, 0.1, 0.1}, 5);
  const auto& st = m.strata.at("en");
  EXPECT_EQ(st.max_component_posts, 60u);
  EXPECT_EQ(m.post_split("g0"), Split::train);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_LE(std::abs(static_cast<double>(st.achieved_posts[s]) - st.target_posts[s]), 60.0);
  }
  // Achieved fractions are recorded in the serialized manifest.
  auto j = m.to_json();
  EXPECT_TRUE(j["strata"]["en"].contains("achieved_fractions"));
}

TEST(Splits, TooSmallStratumGoesToTrainWithWarning) {
  auto c = testkit::make_corpus({{"p1", "en"}, {"p2", "en"}}, {{"c1", "en"}, {"c2", "en"}}, {{"p1", "c1"}, {"p2", "c2"}});
  auto m = build_splits(c, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(m.post_split("p1"), Split::train);
  EXPECT_EQ(m.post_split("p2"), Split::train);
  ASSERT_EQ(m.warnings.size(), 1u);
}

TEST(Splits, ManifestJsonRoundTripAndDeterminism) {
  std::mt19937_64 rng(99);
  std::vector<std::pair<std::string, std::string>> posts, claims, pairs;
  for (int i = 0; i < 200; ++i) posts.push_back({"p" + std::to_string(i), std::string(kLanguageRegistry[rng() % 4])});
  for (int i = 0; i < 150; ++i) claims.push_back({"c" + std::to_string(i), "en"});
  for (int i = 0; i < 200; ++i) pairs.push_back({"p" + std::to_string(i), "c" + std::to_string(rng() % 150)});
  auto c = testkit::make_corpus(posts, claims, pairs);
  prune_to_pairs(c);
  auto a = build_splits(c, {0.8, 0.1, 0.1}, 42);
  auto b = build_splits(c, {0.8, 0.1, 0.1}, 42);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_TRUE(check_manifest(c, a).empty());
  TempDir dir;
  save_manifest(dir / "m.json", a);
  auto back = load_manifest(dir / "m.json");
  EXPECT_EQ(back.split_of_post, a.split_of_post);
  EXPECT_EQ(back.split_of_claim, a.split_of_claim);
  EXPECT_EQ(back.seed, 42u);
  std::size_t total = 0;
  for (auto s : kSplits) total += split_subset(apply_manifest(c, a), s).posts.size();
  EXPECT_EQ(total, c.posts.size());
}

TEST(Splits, RatiosValidated) {
  EXPECT_THROW(validate_ratios({0.8, 0.1, 0.2}), ValidationError);
  EXPECT_NO_THROW(validate_ratios(parse_ratios("0.7,0.15,0.15")));
}

TEST(Splits, CheckManifestFindsLeak) {
  auto c = testkit::make_corpus({{"p1", "en"}, {"p2", "en"}}, {{"c1", "en"}}, {{"p1", "c1"}, {"p2", "c1"}});
  SplitManifest m;
  m.split_of_post = {{"p1", Split::train}, {"p2", Split::test}};
  m.split_of_claim = {{"c1", Split::train}};
  EXPECT_FALSE(check_manifest(c, m).empty());
}

// ---------------------------------------------------------------------- langid

TEST(Langid, NormalizeExamples) {
  auto v = normalize_votes({{"ft", "en", 0.9}});
  ASSERT_EQ(v.size(), 1u);
  EXPECT_DOUBLE_EQ(v[0].score, 0.9);

  v = normalize_votes({{"d", "en", 4.0}, {"d", "de", 2.0}});
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].language, "de");
  EXPECT_DOUBLE_EQ(v[0].score, 0.5);
  EXPECT_DOUBLE_EQ(v[1].score, 1.0);

  EXPECT_TRUE(normalize_votes({{"d", "en", 0.0}}).empty());
}

TEST(Langid, ScalingInvarianceAboveOne) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<RawVote> raw;
    for (const char* l : {"en", "de", "fr"}) raw.push_back({"d", l, u(rng)});
    raw.push_back({"d", "pt", 10.5});  // keeps the max above 1 under scaling
    const double c = 1.0 + u(rng);
    auto scaled = raw;
    for (auto& r : scaled) r.raw_score *= c;
    auto a = normalize_votes(raw), b = normalize_votes(scaled);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i].score, b[i].score, 1e-12);
  }
}

TEST(Langid, FuseExamples) {
  std::vector<DetectorVote> v = {{"fasttext", "en", 0.9}, {"cld3", "en", 0.8}, {"polyglot", "en", 0.7}, {"langdetect", "es", 0.6}};
  EXPECT_EQ(fuse(v), "en");
  EXPECT_EQ(fuse({{"a", "en", 0.9}, {"b", "de", 0.9}, {"c", "fr", 0.9}, {"d", "es", 0.9}}), std::nullopt);
  EXPECT_EQ(fuse({{"d1", "fr", 0.5}, {"d2", "fr", 0.45}}), std::nullopt);
}

TEST(Langid, FuseTieBreakIsLexicographic) {
  EXPECT_EQ(fuse({{"a", "pt", 0.8}, {"b", "pt", 0.8}, {"c", "es", 0.8}, {"d", "es", 0.8}}), "es");
}

TEST(Langid, FusePermutationInvariantAndReduction) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    std::vector<DetectorVote> votes;
    for (const char* d : {"a", "b", "c", "d"}) {
      for (const char* l : {"en", "de", "fr"}) {
        if (rng() % 2) votes.push_back({d, l, u(rng)});
      }
    }
    auto shuffled = votes;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(fuse(votes), fuse(shuffled));
    // min_vote_count 1, threshold 0: the best average wins.
    EXPECT_EQ(fuse(votes, {0.0, 1}), oracle::fuse(votes, 0.0, 1));
  }
}

TEST(Langid, ResolveOutliersOverride) {
  std::map<std::string, std::string> a;
  for (int i = 0; i < 20; ++i) a["t" + std::to_string(i)] = "en";
  for (int i = 0; i < 3; ++i) a["la" + std::to_string(i)] = "la";
  std::map<std::string, std::string> overrides = {{"la0", "en"}, {"la1", "en"}, {"la2", "en"}};
  auto r = resolve_outliers(a, 10, overrides);
  EXPECT_EQ(r.rare_languages.at("la"), 3u);
  EXPECT_EQ(r.review_ids.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(r.assignments.at("la" + std::to_string(i)), "en");
}

TEST(Langid, ResolveOutliersIdentityAndRegistry) {
  std::map<std::string, std::string> a;
  for (int i = 0; i < 12; ++i) a["t" + std::to_string(i)] = "de";
  auto r = resolve_outliers(a);
  EXPECT_EQ(r.assignments, a);
  EXPECT_TRUE(r.rare_languages.empty());
  EXPECT_THROW(resolve_outliers(a, 10, {{"t1", "xx"}}), ValidationError);
  EXPECT_THROW(resolve_outliers(a, 10, {{"nope", "en"}}), ValidationError);
}

TEST(Langid, RegistryHas47CodesIncludingUrdu) {
  EXPECT_EQ(kLanguageRegistry.size(), 47u);
  EXPECT_TRUE(in_language_registry("ur"));
  EXPECT_TRUE(std::is_sorted(kLanguageRegistry.begin(), kLanguageRegistry.end()));
}

TEST(Langid, DetectWithCallbacksAndCommand) {
  auto a = std::make_shared<CallbackDetector>("a", [](const std::string& t) {
    return std::vector<RawScore>{{t.find("ola") != std::string::npos ? "pt" : "en", 0.9}};
  });
  auto b = std::make_shared<CallbackDetector>("b", [](const std::string& t) {
    return std::vector<RawScore>{{t.find("ola") != std::string::npos ? "PT" : "en", 3.0}, {"fr", 1.0}};
  });
  // Line-protocol detector: a shell one-liner that votes "en" for every line.
  auto c = std::make_shared<CommandDetector>("sh", "sed 's/.*/[{\"language\":\"en\",\"raw_score\":0.7}]/'");
  auto out = detect_languages({"hello there", "ola amigo"}, {a, b, c});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].language, "en");
  EXPECT_EQ(out[1].language, "pt");
}

// ---------------------------------------------------------------------- config

TEST(Config, ParsesTomlSubset) {
  auto j = parse_toml_subset(R"(
# comment
[corpus]
posts = "a.jsonl"   # trailing comment
min_posts = 1_000
[split]
ratios = [0.8, 0.1, 0.1]
[rerank]
mode = 'llm'
flag = true
)");
  EXPECT_EQ(j["corpus"]["posts"], "a.jsonl");
  EXPECT_EQ(j["corpus"]["min_posts"], 1000);
  EXPECT_EQ(j["split"]["ratios"].size(), 3u);
  EXPECT_EQ(j["rerank"]["mode"], "llm");
  EXPECT_EQ(j["rerank"]["flag"], true);
  EXPECT_THROW(parse_toml_subset("x = 1\n"), FormatError);
  EXPECT_THROW(parse_toml_subset("[a]\nx = \"open\n"), FormatError);
  EXPECT_THROW(parse_toml_subset("[a]\nx = 1\nx = 2\n"), FormatError);
}

namespace {

struct ConfigFixture {
  TempDir dir;
  std::string text;

  ConfigFixture() {
    for (const char* f : {"posts.jsonl", "claims.jsonl", "pairs.jsonl", "vectors.jsonl"}) write_file(dir / f, "");
    text =
        "[corpus]\nposts = \"posts.jsonl\"\nclaims = \"claims.jsonl\"\npairs = \"pairs.jsonl\"\n"
        "[embed]\nprovider = \"vectors.jsonl\"\n";
  }

  ExperimentConfig load(const std::string& extra, std::map<std::string, std::string> env = {}) {
    write_file(dir / "exp.toml", text + extra);
    json root = parse_toml_subset(read_file(dir / "exp.toml"));
    apply_env_overrides(root, [&](const char* name) -> const char* {
      auto it = env.find(name);
      return it == env.end() ? nullptr : it->second.c_str();
    });
    return config_from_json(root, dir.path());
  }
};

}  // namespace

TEST(Config, DefaultsFollowTheExperimentalSetup) {
  ConfigFixture f;
  auto c = f.load("");
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.eval.k, 10u);
  EXPECT_EQ(c.rerank.cfg.top_n, 30u);
  EXPECT_EQ(c.corpus.min_posts, 180u);
  EXPECT_EQ(c.negatives.cfg.k, 10u);
  EXPECT_EQ(c.split.ratios, (SplitRatios{0.8, 0.1, 0.1}));
  EXPECT_EQ(c.corpus.posts, f.dir / "posts.jsonl");
}

TEST(Config, LlmModeWithoutEndpointNamesTheField) {
  ConfigFixture f;
  auto c = f.load("[rerank]\nmode = \"llm\"\n");
  try {
    c.validate();
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("rerank.endpoint"), std::string::npos) << e.what();
  }
}

TEST(Config, EnvironmentOverridesWin) {
  ConfigFixture f;
  auto c = f.load("[rerank]\nmode = \"llm\"\n", {{"CLAIMLINK_RERANK_ENDPOINT", "http://localhost:9/generate"},
                                                 {"CLAIMLINK_EVAL_K", "5"}});
  EXPECT_EQ(c.rerank.endpoint, "http://localhost:9/generate");
  EXPECT_EQ(c.eval.k, 5u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, UnknownKeysAndMissingFilesRejected) {
  ConfigFixture f;
  EXPECT_THROW(f.load("[eval]\ndepth = 3\n"), ValidationError);
  EXPECT_THROW(f.load("[bogus]\nx = 1\n"), ValidationError);
  auto c = f.load("");
  c.corpus.posts = f.dir / "missing.jsonl";
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_THROW(f.load("[retrieve]\nk = \"many\"\n"), ValidationError);
}
