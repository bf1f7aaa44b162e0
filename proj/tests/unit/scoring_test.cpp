#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "peripatos/scoring.hpp"

namespace peripatos {
namespace {

constexpr std::size_t idx(Identity id) { return static_cast<std::size_t>(id); }

std::string score_header_line() {
  std::string h;
  for (const auto& c : score_file_header()) h += (h.empty() ? "" : ",") + c;
  return h + "\n";
}

TEST(ScoreFile, HeaderIsPostIdThenIdentitiesThenAux) {
  EXPECT_EQ(score_file_header(),
            (std::vector<std::string>{"post_id", "antisemitism", "islamophobia", "ableism",
                                      "misogyny", "xenophobia", "racism", "homophobia",
                                      "transphobia", "negative", "disrespect", "insult",
                                      "attack", "hate_speech"}));
}

TEST(ScoreFile, ParsesRows) {
  std::istringstream in(score_header_line() +
                        "c1,0.9,0,0,0,0,0.8,0,0,0.7,0.1,0.2,0.3,0.4\n");
  const auto scores = load_scores(in);
  ASSERT_EQ(scores.size(), 1u);
  const auto& s = scores.at("c1");
  EXPECT_DOUBLE_EQ(s[Identity::antisemitism], 0.9);
  EXPECT_DOUBLE_EQ(s[Identity::racism], 0.8);
  EXPECT_DOUBLE_EQ(s[AuxLabel::negative], 0.7);
  EXPECT_DOUBLE_EQ(s[AuxLabel::hate_speech], 0.4);
}

TEST(ScoreFile, RejectsOutOfRangeDuplicatesAndBadHeaders) {
  std::istringstream high(score_header_line() + "c1,1.2,0,0,0,0,0,0,0,0,0,0,0,0\n");
  EXPECT_THROW(load_scores(high), Error);
  std::istringstream dup(score_header_line() + "c1,0,0,0,0,0,0,0,0,0,0,0,0,0\n" +
                         "c1,0,0,0,0,0,0,0,0,0,0,0,0,0\n");
  EXPECT_THROW(load_scores(dup), Error);
  std::istringstream word(score_header_line() + "c1,x,0,0,0,0,0,0,0,0,0,0,0,0\n");
  EXPECT_THROW(load_scores(word), Error);
  std::istringstream header("post_id,racism\nc1,0.5\n");
  EXPECT_THROW(load_scores(header), Error);
}

TEST(ScoreFile, EmptyInputGivesEmptyMap) {
  std::istringstream empty("");
  EXPECT_TRUE(load_scores(empty).empty());
}

TEST(ScoreFile, WriteThenLoadRoundTrips) {
  testgen::Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScoreMap scores;
  for (int i = 0; i < 50; ++i) {
    IdentityScores s;
    s.post_id = "p" + std::to_string(i);
    for (auto& v : s.identity) v = u(rng);
    for (auto& v : s.aux) v = u(rng);
    scores.emplace(s.post_id, s);
  }
  std::stringstream ss;
  write_scores(scores, ss);
  const auto back = load_scores(ss);
  ASSERT_EQ(back.size(), scores.size());
  for (const auto& [id, s] : scores) {
    EXPECT_EQ(back.at(id).identity, s.identity);
    EXPECT_EQ(back.at(id).aux, s.aux);
  }
}

TEST(ScoreFile, MissingScoresAreReported) {
  Post p;
  p.post_id = "a";
  p.author = "u";
  p.community = "s";
  p.timestamp = 1;
  Post q = p;
  q.post_id = "b";
  const Corpus corpus({p, q});
  ScoreMap scores;
  scores["a"].post_id = "a";
  EXPECT_EQ(missing_scores(corpus, scores), (std::vector<std::string>{"b"}));
}

SeedLexicons toy_lexicons() {
  SeedLexicons lex;
  lex.identity[idx(Identity::racism)] = {"slurone", "slurtwo"};
  lex.identity[idx(Identity::misogyny)] = {"femslur"};
  lex.negative = {"hate", "awful"};
  return lex;
}

TEST(FallbackScorer, SquashesMatchCounts) {
  const auto lex = toy_lexicons();
  const auto none = fallback_score("p", "nothing to see", lex);
  EXPECT_EQ(none[Identity::racism], 0.0);
  EXPECT_EQ(none[AuxLabel::negative], 0.0);
  const auto one = fallback_score("p", "a slurone here", lex);
  EXPECT_NEAR(one[Identity::racism], 1.0 - std::exp(-1.0), 1e-12);
  EXPECT_NEAR(one[Identity::racism], 0.632, 1e-3);
  const auto two = fallback_score("p", "slurone slurtwo", lex);
  const auto three = fallback_score("p", "slurone slurtwo SLURONE", lex);
  EXPECT_GT(three[Identity::racism], two[Identity::racism]);
  const auto mixed = fallback_score("p", "awful femslur", lex);
  EXPECT_NEAR(mixed[AuxLabel::hate_speech],
              mixed[AuxLabel::negative] * mixed[Identity::misogyny], 1e-15);
  EXPECT_EQ(mixed[AuxLabel::insult], mixed[AuxLabel::negative]);
}

TEST(FallbackScorer, CoversEveryPost) {
  testgen::Rng rng(2);
  const Corpus c = testgen::random_corpus(rng, 60, 5, 2);
  const auto scores = fallback_scorer(c, toy_lexicons());
  EXPECT_EQ(scores.size(), c.size());
  EXPECT_TRUE(missing_scores(c, scores).empty());
}

IdentityScores with(double neg, std::map<Identity, double> ids) {
  IdentityScores s;
  s.aux[static_cast<std::size_t>(AuxLabel::negative)] = neg;
  for (auto [id, v] : ids) s.identity[idx(id)] = v;
  return s;
}

TEST(HateLabels, RequireNegativeAndIdentity) {
  const ThresholdSet t;
  auto l = assign_hate_labels(with(0.9, {{Identity::racism, 0.8}}), t);
  EXPECT_EQ(l.count(), 1u);
  EXPECT_TRUE(l.test(idx(Identity::racism)));
  EXPECT_TRUE(assign_hate_labels(with(0.3, {{Identity::racism, 0.9}}), t).none());
  l = assign_hate_labels(with(0.9, {{Identity::racism, 0.8}, {Identity::misogyny, 0.7}}), t);
  EXPECT_EQ(l.count(), 2u);
  EXPECT_TRUE(l.test(idx(Identity::misogyny)));
}

TEST(HateLabels, MonotoneInEveryProbability) {
  testgen::Rng rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    ThresholdSet t;
    t.negative = u(rng);
    for (auto& v : t.identity) v = u(rng);
    IdentityScores s;
    for (auto& v : s.identity) v = u(rng);
    s.aux[0] = u(rng);
    const auto before = assign_hate_labels(s, t);
    IdentityScores raised = s;
    const std::size_t which = std::uniform_int_distribution<std::size_t>(0, kNumIdentities)(rng);
    if (which == kNumIdentities) raised.aux[0] = std::min(1.0, s.aux[0] + u(rng));
    else raised.identity[which] = std::min(1.0, s.identity[which] + u(rng));
    const auto after = assign_hate_labels(raised, t);
    EXPECT_EQ((before & ~after).none(), true);
  }
}

TEST(Calibration, PerfectScoresTieToMidpoint) {
  std::vector<LabeledScores> v;
  for (int i = 0; i < 20; ++i) {
    LabeledScores l;
    const bool pos = i % 2 == 0;
    l.scores = with(1.0, {{Identity::racism, pos ? 1.0 : 0.0}});
    l.truth.set(idx(Identity::racism), pos);
    v.push_back(l);
  }
  const auto r = calibrate_thresholds(v);
  EXPECT_DOUBLE_EQ(r.thresholds.identity[idx(Identity::racism)], 0.5);
  EXPECT_DOUBLE_EQ(r.thresholds.negative, 0.5);
  ASSERT_TRUE(r.objective[idx(Identity::racism)].has_value());
  EXPECT_DOUBLE_EQ(*r.objective[idx(Identity::racism)], 1.0);
  // Categories without positives default to 0.5 and warn.
  EXPECT_DOUBLE_EQ(r.thresholds.identity[idx(Identity::ableism)], 0.5);
  EXPECT_FALSE(r.objective[idx(Identity::ableism)].has_value());
  EXPECT_EQ(r.warnings.size(), kNumIdentities - 1);
}

TEST(Calibration, PlantedGapIsFound) {
  testgen::Rng rng(4);
  std::uniform_real_distribution<double> hi(0.7, 1.0), lo(0.0, 0.6);
  std::vector<LabeledScores> v;
  for (int i = 0; i < 100; ++i) {
    LabeledScores l;
    const bool pos = i % 3 == 0;
    // Include both edges so that 0.6 and 0.7 are the binding grid points.
    const double score = i == 0 ? 0.7 : i == 1 ? 0.6 : pos ? hi(rng) : lo(rng);
    l.scores = with(0.9, {{Identity::racism, score}});
    l.truth.set(idx(Identity::racism), pos);
    v.push_back(l);
  }
  const auto r = calibrate_thresholds(v);
  const double tau = r.thresholds.identity[idx(Identity::racism)];
  EXPECT_GT(tau, 0.6);
  EXPECT_LE(tau, 0.7);
  EXPECT_DOUBLE_EQ(*r.objective[idx(Identity::racism)], 1.0);
}

TEST(Calibration, ChosenPairIsGridOptimal) {
  const auto grid = threshold_grid();
  ASSERT_EQ(grid.size(), 19u);
  EXPECT_DOUBLE_EQ(grid.front(), 0.05);
  EXPECT_DOUBLE_EQ(grid.back(), 0.95);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    testgen::Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::bernoulli_distribution coin(0.3);
    std::vector<LabeledScores> v;
    for (int i = 0; i < 200; ++i) {
      LabeledScores l;
      const bool pos = coin(rng);
      l.scores = with(std::min(1.0, u(rng) + (pos ? 0.3 : 0.0)),
                      {{Identity::racism, std::min(1.0, 0.7 * u(rng) + (pos ? 0.3 : 0.0))}});
      l.truth.set(idx(Identity::racism), pos);
      v.push_back(l);
    }
    const auto r = calibrate_thresholds(v);
    const double chosen =
        f1_at(v, Identity::racism, r.thresholds.negative, r.thresholds.identity[idx(Identity::racism)]);
    double best = 0.0;
    for (double tn : grid)
      for (double tc : grid) best = std::max(best, f1_at(v, Identity::racism, tn, tc));
    EXPECT_NEAR(chosen, best, 1e-12) << "seed " << seed;
  }
}

TEST(R2, PerfectAndReversedCounts) {
  const CategoryCounts truth = {{"a", {0, 0, 0, 0, 0, 1, 0, 0}},
                                {"b", {0, 0, 0, 0, 0, 2, 0, 0}},
                                {"c", {0, 0, 0, 0, 0, 3, 0, 0}}};
  auto r = validate_r2(truth, truth);
  ASSERT_TRUE(r[idx(Identity::racism)].has_value());
  EXPECT_DOUBLE_EQ(*r[idx(Identity::racism)], 1.0);
  EXPECT_FALSE(r[idx(Identity::misogyny)].has_value());

  CategoryCounts reversed = truth;
  reversed["a"][idx(Identity::racism)] = 3;
  reversed["c"][idx(Identity::racism)] = 1;
  r = validate_r2(reversed, truth);
  EXPECT_DOUBLE_EQ(*r[idx(Identity::racism)], -3.0);

  EXPECT_THROW(validate_r2({{"a", {}}}, {{"a", {}}}), Error);
}

TEST(R2, CalibrationMatchesAnnotatedCounts) {
  // Community i has i posts scored 0.8 on racism and the rest 0.2; annotators
  // counted i. Any identity threshold in (0.2, 0.8] reproduces the counts.
  std::map<std::string, std::vector<IdentityScores>> samples;
  CategoryCounts means;
  for (int i = 1; i <= 4; ++i) {
    const std::string k = "s" + std::to_string(i);
    for (int j = 0; j < 10; ++j)
      samples[k].push_back(with(0.9, {{Identity::racism, j < i ? 0.8 : 0.2}}));
    means[k] = {};
    means[k][idx(Identity::racism)] = i;
  }
  const auto r = calibrate_thresholds_r2(samples, means);
  const double tau = r.thresholds.identity[idx(Identity::racism)];
  EXPECT_GT(tau, 0.2);
  EXPECT_LE(tau, 0.8);
  EXPECT_DOUBLE_EQ(*r.objective[idx(Identity::racism)], 1.0);
}

// Nominal alpha from the coincidence matrix, written independently.
double alpha_oracle(const std::vector<std::vector<std::optional<int>>>& ratings) {
  std::map<std::pair<int, int>, double> o;
  const std::size_t items = ratings[0].size();
  for (std::size_t u = 0; u < items; ++u) {
    std::vector<int> vals;
    for (const auto& a : ratings)
      if (a[u]) vals.push_back(*a[u]);
    const double m = static_cast<double>(vals.size());
    if (m < 2) continue;
    for (std::size_t i = 0; i < vals.size(); ++i)
      for (std::size_t j = 0; j < vals.size(); ++j)
        if (i != j) o[{vals[i], vals[j]}] += 1.0 / (m - 1);
  }
  std::map<int, double> nc;
  double n = 0;
  for (const auto& [cell, w] : o) {
    nc[cell.first] += w;
    n += w;
  }
  double observed = 0, expected = 0;
  for (const auto& [cell, w] : o)
    if (cell.first != cell.second) observed += w;
  for (const auto& [c, a] : nc)
    for (const auto& [k, b] : nc)
      if (c != k) expected += a * b;
  return 1.0 - (n - 1) * observed / expected;
}

TEST(Krippendorff, IdenticalAnnotatorsGiveOne) {
  const std::vector<std::vector<std::optional<int>>> r = {{1, 0, 2, 1}, {1, 0, 2, 1}, {1, 0, 2, 1}};
  EXPECT_DOUBLE_EQ(krippendorff_alpha(r), 1.0);
}

TEST(Krippendorff, CheckerboardIsNegative) {
  const std::vector<std::vector<std::optional<int>>> r = {{0, 1, 0, 1}, {1, 0, 1, 0}};
  const double alpha = krippendorff_alpha(r);
  EXPECT_LT(alpha, 0.0);
  EXPECT_NEAR(alpha, alpha_oracle(r), 1e-12);
  EXPECT_NEAR(alpha, -0.75, 1e-12);
}

TEST(Krippendorff, SinglePairableItem) {
  const std::vector<std::vector<std::optional<int>>> agree = {{1, std::nullopt}, {1, 0}};
  EXPECT_DOUBLE_EQ(krippendorff_alpha(agree), 1.0);
  const std::vector<std::vector<std::optional<int>>> none = {{1, std::nullopt},
                                                             {std::nullopt, 0}};
  EXPECT_THROW(krippendorff_alpha(none), Error);
}

TEST(Krippendorff, MatchesOracleAndIgnoresRelabeling) {
  testgen::Rng rng(21);
  std::uniform_int_distribution<int> value(0, 3);
  std::bernoulli_distribution missing(0.15);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<std::optional<int>>> r(3, std::vector<std::optional<int>>(12));
    for (auto& a : r)
      for (auto& v : a)
        if (!missing(rng)) v = value(rng);
    double alpha = 0;
    try {
      alpha = krippendorff_alpha(r);
    } catch (const Error&) {
      continue;
    }
    EXPECT_NEAR(alpha, alpha_oracle(r), 1e-10);
    auto relabeled = r;
    for (auto& a : relabeled)
      for (auto& v : a)
        if (v) v = 10 - 3 * *v;
    EXPECT_NEAR(krippendorff_alpha(relabeled), alpha, 1e-12);
  }
}

TEST(Spearman, ExtremesAndConstants) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const std::vector<double> rev = {50, 40, 30, 20, 10};
  EXPECT_DOUBLE_EQ(*spearman(x, x), 1.0);
  EXPECT_DOUBLE_EQ(*spearman(x, rev), -1.0);
  EXPECT_FALSE(spearman(x, {2, 2, 2, 2, 2}).has_value());
}

TEST(Spearman, LabelMatrixIsSymmetricWithUnitDiagonal) {
  testgen::Rng rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<IdentityScores> s(40);
  for (auto& x : s)
    for (auto& v : x.aux) v = u(rng);
  const auto m = spearman_label_correlations(s);
  for (std::size_t i = 0; i < kNumAux; ++i) {
    EXPECT_DOUBLE_EQ(*m[i][i], 1.0);
    for (std::size_t j = 0; j < kNumAux; ++j) EXPECT_DOUBLE_EQ(*m[i][j], *m[j][i]);
  }
}

TEST(Prompts, BatchTemplateSubstitutes) {
  std::vector<std::string> posts;
  for (int i = 1; i <= 10; ++i) posts.push_back("post " + std::to_string(i));
  const auto p = llm_count_prompt(posts, "race", "racist");
  EXPECT_EQ(p.rfind("Below is a collection of 10 Reddit posts that may or may not be attacking "
                    "someone because of their race. Please respond with the number of these "
                    "posts that are very clearly racist. Do not include anything else in your "
                    "response:",
                    0),
            0u);
  EXPECT_NE(p.find("1. post 1\n"), std::string::npos);
  EXPECT_NE(p.find("10. post 10"), std::string::npos);
  posts.pop_back();
  EXPECT_THROW(llm_count_prompt(posts, "race", "racist"), Error);
}

TEST(Prompts, SingleTemplateSubstitutes) {
  const auto p = llm_single_prompt("hello", "gender", "misogynistic");
  EXPECT_NE(p.find("because of their gender. Please respond with \"Yes\" or \"No.\" Is this post "
                   "very clearly misogynistic?"),
            std::string::npos);
  EXPECT_EQ(p.substr(p.size() - 5), "hello");
}

TEST(Prompts, StrictReplyParsing) {
  EXPECT_EQ(parse_count("3"), 3);
  EXPECT_EQ(parse_count(" 10\n"), 10);
  EXPECT_THROW(parse_count("three"), Error);
  EXPECT_THROW(parse_count("11"), Error);
  EXPECT_THROW(parse_count("3 posts"), Error);
  EXPECT_TRUE(parse_yesno("Yes"));
  EXPECT_FALSE(parse_yesno("No."));
  EXPECT_THROW(parse_yesno("maybe"), Error);
}

}  // namespace
}  // namespace peripatos
