#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "generators.hpp"
#include "peripatos/corpus.hpp"

namespace peripatos {
namespace {

Post make_post(std::string id, std::string author, std::string community, Timestamp t,
               PostKind kind = PostKind::comment, std::string text = "text") {
  Post p;
  p.post_id = std::move(id);
  p.author = std::move(author);
  p.community = std::move(community);
  p.timestamp = t;
  p.kind = kind;
  p.text = std::move(text);
  return p;
}

TEST(Ingest, MapsDefaultFields) {
  const auto r = ingest_events_from_string(
      R"({"id":"c1","author":"alice","subreddit":"s1","created_utc":100,"body":"hi"})");
  ASSERT_EQ(r.corpus.size(), 1u);
  const Post& p = r.corpus.posts()[0];
  EXPECT_EQ(p.post_id, "c1");
  EXPECT_EQ(p.author, "alice");
  EXPECT_EQ(p.community, "s1");
  EXPECT_EQ(p.timestamp, 100);
  EXPECT_EQ(p.kind, PostKind::comment);
  EXPECT_EQ(p.text, "hi");
  EXPECT_EQ(r.report.malformed, 0u);
}

TEST(Ingest, SubmissionTextJoinsTitleAndSelftext) {
  const auto r = ingest_events_from_string(
      R"({"id":"s1","author":"bob","subreddit":"x","created_utc":5,"title":"Hello","selftext":"world","parent_id":"t3_zz"})");
  ASSERT_EQ(r.corpus.size(), 1u);
  EXPECT_EQ(r.corpus.posts()[0].kind, PostKind::submission);
  EXPECT_EQ(r.corpus.posts()[0].text, "Hello world");
  EXPECT_FALSE(r.corpus.posts()[0].parent_id.has_value());
}

TEST(Ingest, EmptyInputGivesEmptyCorpus) {
  const auto dir = std::filesystem::temp_directory_path() / "peripatos_ingest_empty";
  std::filesystem::create_directories(dir);
  const auto path = dir / "events.jsonl";
  std::ofstream(path).close();
  const auto r = ingest_events(path);
  EXPECT_TRUE(r.corpus.empty());
  EXPECT_EQ(r.report.lines, 0u);
}

TEST(Ingest, MissingAuthorIsCountedAsMalformed) {
  std::string jsonl;
  for (int i = 0; i < 10; ++i)
    jsonl += fmt::format(
        R"({{"id":"c{}","author":"u{}","subreddit":"s","created_utc":{},"body":"x"}})"
        "\n",
        i, i, 100 + i);
  jsonl += R"({"id":"bad","subreddit":"s","created_utc":1,"body":"x"})";
  const auto r = ingest_events_from_string(jsonl);
  EXPECT_EQ(r.report.malformed, 1u);
  EXPECT_EQ(r.corpus.size(), 10u);
  ASSERT_FALSE(r.report.diagnostics.empty());
  EXPECT_NE(r.report.diagnostics[0].find("line 11"), std::string::npos);
}

TEST(Ingest, TooManyMalformedLinesAbort) {
  const std::string jsonl =
      "{\"id\":\"c1\",\"author\":\"a\",\"subreddit\":\"s\",\"created_utc\":1,\"body\":\"x\"}\n"
      "not json\n";
  EXPECT_THROW(ingest_events_from_string(jsonl), Error);
}

TEST(Ingest, UnreadableFileThrows) {
  EXPECT_THROW(ingest_events("/nonexistent/peripatos/events.jsonl"), Error);
}

TEST(Ingest, CustomSchema) {
  FieldSchema schema;
  schema.author = "user";
  schema.community = "forum";
  const auto r = ingest_events_from_string(
      R"({"id":"c1","user":"alice","forum":"f","created_utc":100,"body":"hi"})", schema);
  ASSERT_EQ(r.corpus.size(), 1u);
  EXPECT_EQ(r.corpus.posts()[0].community, "f");
}

TEST(Corpus, DuplicateIdsKeepLastOccurrence) {
  Corpus c({make_post("p1", "a", "s", 10, PostKind::comment, "first"),
            make_post("p1", "a", "s", 20, PostKind::comment, "second")});
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.find("p1")->text, "second");
  EXPECT_EQ(c.duplicates_dropped(), 1u);
}

TEST(Corpus, TimelinesAreOrderedWithIdTieBreak) {
  testgen::Rng rng(7);
  const Corpus c = testgen::random_corpus(rng, 400, 20, 5);
  for (const auto& [user, idx] : c.user_index()) {
    for (std::size_t i = 1; i < idx.size(); ++i) {
      const Post& a = c.posts()[idx[i - 1]];
      const Post& b = c.posts()[idx[i]];
      EXPECT_TRUE(a.timestamp < b.timestamp ||
                  (a.timestamp == b.timestamp && a.post_id < b.post_id))
          << user;
    }
  }
  Corpus tied({make_post("b", "u", "s", 5), make_post("a", "u", "s", 5)});
  EXPECT_EQ(tied.posts()[tied.timeline("u")[0]].post_id, "a");
}

TEST(Corpus, IndicesAreConsistent) {
  testgen::Rng rng(11);
  const Corpus c = testgen::random_corpus(rng, 300, 25, 4);
  std::size_t total = 0;
  for (const auto& [community, idx] : c.community_index()) {
    std::set<std::string> authors;
    for (std::size_t i : idx) {
      EXPECT_EQ(c.posts()[i].community, community);
      authors.insert(c.posts()[i].author);
    }
    EXPECT_EQ(c.distinct_authors(community), authors.size());
    total += idx.size();
  }
  EXPECT_EQ(total, c.size());
  const auto meta = community_meta(c, {"c0"});
  for (const auto& m : meta) {
    EXPECT_EQ(m.n_users, c.distinct_authors(m.community));
    EXPECT_EQ(m.is_hate_candidate, m.community == "c0");
  }
}

TEST(Corpus, SerializeThenIngestIsIdentity) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    testgen::Rng rng(seed);
    const Corpus c = testgen::random_corpus(rng, 200, 30, 6);
    std::stringstream out;
    serialize_jsonl(c, out);
    const auto back = ingest_events_from_string(out.str());
    EXPECT_EQ(back.report.malformed, 0u);
    EXPECT_EQ(back.corpus.posts(), c.posts()) << "seed " << seed;
  }
}

TEST(Bots, KeywordList) {
  EXPECT_TRUE(looks_like_bot("MusicBot"));
  EXPECT_TRUE(looks_like_bot("GifGrabber"));
  EXPECT_TRUE(looks_like_bot("AutoModerator"));
  EXPECT_TRUE(looks_like_bot("LinkFixer"));
  EXPECT_TRUE(looks_like_bot("TWITTER_mirror"));
  EXPECT_TRUE(looks_like_bot("transcriber_of_reddit"));
  EXPECT_FALSE(looks_like_bot("alice"));
}

TEST(Bots, FilterMatchesPredicateAndIsIdempotent) {
  testgen::Rng rng(5);
  const std::vector<std::string> fragments = {"bot", "Auto", "GIF", "link", "Twitter",
                                              "transcriber", "xo", "ab", "ut", "li"};
  std::vector<Post> posts;
  std::set<std::string> expected_removed;
  for (int i = 0; i < 300; ++i) {
    std::string name = testgen::random_word(rng);
    if (std::uniform_int_distribution<int>(0, 2)(rng) == 0)
      name += fragments[std::uniform_int_distribution<std::size_t>(0, fragments.size() - 1)(rng)];
    // Oracle: lowercase and search every keyword.
    std::string lower = name;
    for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    bool bot = false;
    for (const char* k : {"bot", "auto", "transcriber", "gif", "link", "twitter"})
      bot = bot || lower.find(k) != std::string::npos;
    if (bot) expected_removed.insert(name);
    posts.push_back(make_post(fmt::format("p{}", i), name, "s", 100 + i));
  }
  const Corpus c(std::move(posts));
  const Corpus once = filter_bots(c);
  std::set<std::string> removed;
  for (const auto& a : c.authors())
    if (once.timeline(a).empty()) removed.insert(a);
  EXPECT_EQ(removed, expected_removed);
  EXPECT_EQ(filter_bots(once).posts(), once.posts());
}

TEST(SmallCommunities, ThresholdIsInclusive) {
  std::vector<Post> posts;
  int id = 0;
  for (int u = 0; u < 999; ++u) posts.push_back(make_post(fmt::format("a{}", id++), fmt::format("u{}", u), "small", 10));
  for (int u = 0; u < 1000; ++u) posts.push_back(make_post(fmt::format("a{}", id++), fmt::format("u{}", u), "big", 10));
  const Corpus c(std::move(posts));
  const Corpus f = filter_small_communities(c, 1000);
  EXPECT_EQ(f.communities(), (std::vector<std::string>{"big"}));
  EXPECT_EQ(filter_small_communities(c, 1).posts(), c.posts());
  const std::set<std::string> scope = {"big"};
  EXPECT_EQ(filter_small_communities(c, 1000, &scope).size(), c.size());
}

TEST(CleanText, StripsUrlsAndMarkers) {
  EXPECT_EQ(clean_text("see https://x.co ok"), "see ok");
  EXPECT_FALSE(clean_text("[deleted]").has_value());
  EXPECT_FALSE(clean_text("[removed]  http://a.b/c").has_value());
  EXPECT_EQ(clean_text("plain text"), "plain text");
  EXPECT_EQ(clean_text("  many   spaces\n here "), "many spaces here");
}

TEST(SampleBatches, ReturnsEverythingWhenShort) {
  std::vector<Post> posts;
  for (int i = 0; i < 5; ++i) posts.push_back(make_post(fmt::format("c{}", i), "u", "s", 10 + i));
  posts.push_back(make_post("sub", "u", "s", 50, PostKind::submission));
  const Corpus c(std::move(posts));
  const auto ids = sample_batches(c, "s", 1000, 1000, 3);
  EXPECT_EQ(ids, (std::vector<std::string>{"c0", "c1", "c2", "c3", "c4", "sub"}));
  EXPECT_THROW(sample_batches(c, "nope", 1, 1, 0), Error);
}

TEST(SampleBatches, DeterministicAndHypergeometricOverlap) {
  constexpr int kPosts = 10000;
  constexpr std::size_t kTake = 1000;
  std::vector<Post> posts;
  for (int i = 0; i < kPosts; ++i) posts.push_back(make_post(fmt::format("c{:05}", i), "u", "s", 10 + i));
  const Corpus c(std::move(posts));
  EXPECT_EQ(sample_batches(c, "s", kTake, 0, 9), sample_batches(c, "s", kTake, 0, 9));

  // Two independent uniform samples of n from N share n^2 / N posts on average.
  const double expected = static_cast<double>(kTake * kTake) / kPosts;
  double total = 0;
  constexpr int kPairs = 20;
  for (int s = 0; s < kPairs; ++s) {
    const auto a = sample_batches(c, "s", kTake, 0, 1000 + 2 * s);
    const auto b = sample_batches(c, "s", kTake, 0, 1001 + 2 * s);
    ASSERT_EQ(a.size(), kTake);
    std::set<std::string> sa(a.begin(), a.end());
    ASSERT_EQ(sa.size(), kTake);
    int overlap = 0;
    for (const auto& id : b) overlap += static_cast<int>(sa.count(id));
    total += overlap;
  }
  // Per-pair sd is about 9, so the mean of 20 pairs has sd about 2.
  EXPECT_NEAR(total / kPairs, expected, 8.0);
}

TEST(CorpusStats, AveragesOverDistinctUsers) {
  Corpus c({make_post("1", "a", "s", 1), make_post("2", "a", "s", 2), make_post("3", "b", "s", 3),
            make_post("4", "b", "s", 4, PostKind::submission)});
  const auto rows = corpus_stats(c, {{"s", "racist"}, {"empty", "misogynistic"}});
  ASSERT_EQ(rows.size(), 2u);
  const auto& mis = rows[0];
  EXPECT_EQ(mis.cluster, "misogynistic");
  EXPECT_EQ(mis.n_users, 0u);
  EXPECT_EQ(mis.avg_comments_per_user, 0.0);
  const auto& rac = rows[1];
  EXPECT_EQ(rac.n_communities, 1u);
  EXPECT_EQ(rac.n_users, 2u);
  EXPECT_EQ(rac.n_comments, 3u);
  EXPECT_DOUBLE_EQ(rac.avg_comments_per_user, 1.5);
  EXPECT_DOUBLE_EQ(rac.avg_submissions_per_user, 0.5);
}

}  // namespace
}  // namespace peripatos
