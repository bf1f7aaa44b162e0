#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <gtest/gtest.h>
#include <unistd.h>

#include "generators.hpp"
#include "peripatos/log.hpp"
#include "peripatos/predictor.hpp"

namespace peripatos {
namespace {

namespace fs = std::filesystem;

// Probability that a random positive outscores a random negative.
double auc_oracle(const std::vector<double>& s, const std::vector<int>& l) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (l[i] == 1 && l[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

class PredictorQuiet : public ::testing::Test {
 protected:
  void SetUp() override {
    previous_ = log::level();
    log::set_level(log::Level::silent);
  }
  void TearDown() override { log::set_level(previous_); }
  log::Level previous_ = log::Level::warning;
};

TEST(RocAuc, WorkedExamples) {
  const std::vector<double> s = {0.9, 0.8, 0.3};
  const std::vector<int> l = {1, 0, 1};
  EXPECT_DOUBLE_EQ(roc_auc(s, l), 0.5);
  const std::vector<double> perfect = {0.1, 0.2, 0.8, 0.9};
  const std::vector<int> pl = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(roc_auc(perfect, pl), 1.0);
  const std::vector<double> tied = {0.5, 0.5};
  const std::vector<int> tl = {1, 0};
  EXPECT_DOUBLE_EQ(roc_auc(tied, tl), 0.5);
  const std::vector<int> one_class = {1, 1, 1};
  EXPECT_THROW(roc_auc(s, one_class), Error);
}

TEST(RocAuc, MatchesPairCounting) {
  testgen::Rng rng(31);
  std::uniform_int_distribution<int> level(0, 4);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 11);
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = level(rng) / 4.0;
      l[i] = static_cast<int>(rng() % 2);
    }
    l[0] = 1;
    l[1] = 0;
    EXPECT_NEAR(roc_auc(s, l), auc_oracle(s, l), 1e-12);
  }
}

struct Batch {
  Eigen::MatrixXd x, onehot, y;
};

Batch random_batch(testgen::Rng& rng, Eigen::Index n, Eigen::Index width) {
  std::normal_distribution<double> g;
  Batch b{Eigen::MatrixXd(n, width), Eigen::MatrixXd::Zero(n, kOneHotWidth),
          Eigen::MatrixXd(n, kNumTargets)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < width; ++k) b.x(i, k) = g(rng);
    b.onehot(i, static_cast<Eigen::Index>(rng() % kOneHotWidth)) = 1.0;
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(kNumTargets); ++c)
      b.y(i, c) = static_cast<double>(rng() % 2);
  }
  return b;
}

TEST(Mlp, ShapeAndParameterCount) {
  const auto s = MlpShape::for_text_width(1536);
  EXPECT_EQ(s.input, 1536u);
  EXPECT_EQ(s.hidden1, 768u);
  EXPECT_EQ(s.hidden2, 384u);
  EXPECT_EQ(s.parameter_count(),
            768u * 1536 + 768 + 384u * (768 + 12) + 384 + 6u * 384 + 6);
  EXPECT_EQ(MlpShape::for_text_width(16, 4).input, 20u);
  EXPECT_THROW(MlpShape::for_text_width(3), Error);
  const Mlp m(MlpShape::for_text_width(16), 1);
  EXPECT_EQ(static_cast<std::size_t>(m.parameters().size()), m.shape().parameter_count());
}

TEST(Mlp, AnalyticGradientMatchesFiniteDifferences) {
  testgen::Rng rng(32);
  const auto b = random_batch(rng, 12, 16);
  const Mlp m(MlpShape::for_text_width(16), 7);
  EXPECT_LT(gradient_check(m, b.x, b.onehot, b.y), 1e-4);

  Eigen::VectorXd grad;
  m.loss_and_gradient(b.x, b.onehot, b.y, &grad);
  const auto numeric = numeric_gradient(m, b.x, b.onehot, b.y);
  Eigen::VectorXd corrupted = grad;
  corrupted(3) += 0.1 * (std::abs(corrupted(3)) + 1.0);
  EXPECT_GT(max_relative_error(corrupted, numeric), 1e-2);
}

TEST(Mlp, PredictionsAreProbabilitiesAndLossIsBce) {
  testgen::Rng rng(33);
  const auto b = random_batch(rng, 20, 8);
  const Mlp m(MlpShape::for_text_width(8), 3);
  const Eigen::MatrixXd p = m.predict(b.x, b.onehot);
  ASSERT_EQ(p.rows(), 20);
  ASSERT_EQ(p.cols(), static_cast<Eigen::Index>(kNumTargets));
  EXPECT_GT(p.minCoeff(), 0.0);
  EXPECT_LT(p.maxCoeff(), 1.0);
  EXPECT_NEAR(m.loss_and_gradient(b.x, b.onehot, b.y, nullptr), bce(p, b.y), 1e-12);
  // Mean over entries of -[y ln p + (1 - y) ln(1 - p)].
  double oracle = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      oracle -= b.y(i, j) * std::log(p(i, j)) + (1 - b.y(i, j)) * std::log(1 - p(i, j));
  EXPECT_NEAR(bce(p, b.y), oracle / static_cast<double>(p.size()), 1e-12);
}

TEST(Mlp, SaveLoadRoundTrip) {
  const Mlp m(MlpShape::for_text_width(12, 2), 9);
  const auto path = fs::temp_directory_path() / fmt::format("peripatos_mlp_{}.bin", ::getpid());
  m.save(path);
  const auto loaded = Mlp::load(path);
  EXPECT_EQ(loaded.shape().input, m.shape().input);
  EXPECT_EQ(loaded.parameters(), m.parameters());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "nope";
  }
  EXPECT_THROW(Mlp::load(path), Error);
  fs::remove(path);
  EXPECT_THROW(Mlp::load(path), Error);
}

TEST(Train, OverfitsSmallSet) {
  testgen::Rng rng(34);
  const auto data = testgen::planted_dataset(rng, 200, 16);
  const auto m = design(data, Arm::all);
  TrainConfig cfg;
  cfg.max_epochs = 400;
  cfg.lr = 1e-2;
  cfg.batch = 32;
  cfg.dropout = 0.0;
  cfg.patience = 1000;
  cfg.seed = 1;
  const auto result = train(m, m, cfg);
  EXPECT_LT(bce(result.model.predict(m.x, m.onehot), m.y), 0.05);
  EXPECT_EQ(result.train_loss.size(), result.val_loss.size());
}

TEST(Train, DeterministicGivenSeed) {
  testgen::Rng rng(35);
  const auto data = testgen::planted_dataset(rng, 150, 8);
  const auto m = design(data, Arm::target);
  TrainConfig cfg;
  cfg.max_epochs = 5;
  cfg.seed = 3;
  EXPECT_EQ(train(m, m, cfg).model.parameters(), train(m, m, cfg).model.parameters());
}

TEST(Design, ArmsAndPadding) {
  testgen::Rng rng(36);
  const auto data = testgen::planted_dataset(rng, 5, 4);
  const auto all = design(data, Arm::all, 3);
  EXPECT_EQ(all.x.cols(), 11);
  EXPECT_EQ(all.x.row(2).head(4), data.examples[2].author.transpose());
  EXPECT_EQ(all.x.row(2).segment(4, 4), data.examples[2].context.transpose());
  EXPECT_EQ(all.x.rightCols(3).norm(), 0.0);
  EXPECT_EQ(design(data, Arm::context).x.row(1), data.examples[1].context.transpose());
  EXPECT_EQ(design(data, Arm::target).x.row(1), data.examples[1].author.transpose());
  const std::vector<std::size_t> rows = {4, 0};
  const auto sub = subset(all, rows);
  EXPECT_EQ(sub.x.row(0), all.x.row(4));
  EXPECT_EQ(sub.origin[1], all.origin[0]);
  EXPECT_EQ(parse_arm("context"), Arm::context);
  EXPECT_EQ(arm_name(Arm::target), "target");
  EXPECT_THROW(parse_arm("both"), Error);
}

Post post(std::string id, std::string author, std::string community, Timestamp t,
          std::string text, std::optional<std::string> parent = std::nullopt) {
  Post p;
  p.post_id = std::move(id);
  p.author = std::move(author);
  p.community = std::move(community);
  p.timestamp = t;
  p.text = std::move(text);
  p.parent_id = std::move(parent);
  return p;
}

TEST_F(PredictorQuiet, BuildExamplesLabelsAndText) {
  constexpr Timestamp kHour = 3600;
  const CategoryMap cats = {{"r1", "racist"}, {"m1", "misogynistic"}, {"x1", "xenophobic"}};
  const Corpus c({
      post("a0", "other", "m1", 0, "earlier misogynist post"),
      post("a1", "mover", "r1", 100 * kHour, "first words here"),
      post("a2", "mover", "general", 101 * kHour, "reply text", std::string("a0")),
      post("a3", "mover", "m1", 110 * kHour, "after move"),
      post("a4", "stayer", "r1", 100 * kHour, "staying put"),
      post("a5", "stayer", "r1", 300 * kHour, "too late to count"),
      post("a6", "rejoin", "x1", 50 * kHour, "[deleted]"),
  });
  const auto labels = label_peripatetic(first_hate_events(c, cats), Window::six_weeks());
  ExampleOptions opt;
  opt.dim = 16;
  const auto data = build_examples(c, cats, labels, opt);
  // "other" and "rejoin" have no usable text within the span.
  EXPECT_EQ(data.excluded, 1u);
  ASSERT_EQ(data.examples.size(), 3u);
  const auto& mover = data.examples[0];
  EXPECT_EQ(mover.user, "mover");
  EXPECT_EQ(data.examples[1].user, "other");
  EXPECT_EQ(mover.labels[*target_index("misogynistic")], 1.0);
  EXPECT_EQ(mover.labels[*target_index("racist")], 0.0);
  EXPECT_EQ(mover.onehot[*target_index("racist")], 1.0);
  EXPECT_EQ(mover.onehot[kNumTargets + *target_index("misogynistic")], 1.0);
  EXPECT_EQ(mover.author,
            fallback_embed(*clean_text("first words here") + " [SEP] " + *clean_text("reply text"), 16));
  EXPECT_EQ(mover.context, fallback_embed(*clean_text("earlier misogynist post"), 16));
  const auto& stayer = data.examples[2];
  for (double y : stayer.labels) EXPECT_EQ(y, 0.0);
  EXPECT_EQ(stayer.author, fallback_embed(*clean_text("staying put"), 16));
  EXPECT_EQ(stayer.context, fallback_embed("UNK", 16));

  EmbeddingStore store(16);
  store.add("author:stayer", fallback_embed("custom", 16));
  const auto with_store = build_examples(c, cats, labels, opt, &store);
  EXPECT_EQ(with_store.examples[2].author, fallback_embed("custom", 16));
  EmbeddingStore wrong(8);
  EXPECT_THROW(build_examples(c, cats, labels, opt, &wrong), Error);
}

TEST_F(PredictorQuiet, RepeatedSplitsReproducibleAndExcludeOrigin) {
  testgen::Rng rng(37);
  const auto data = testgen::planted_dataset(rng, 600, 8);
  SplitConfig split;
  split.runs = 3;
  split.seed = 5;
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.lr = 1e-2;
  cfg.dropout = 0.0;
  const auto a = repeated_splits(data, Arm::all, split, cfg);
  const auto b = repeated_splits(data, Arm::all, split, cfg);
  ASSERT_EQ(a.categories.size(), kNumTargets);
  double pooled = 0;
  for (std::size_t c = 0; c < kNumTargets; ++c) {
    EXPECT_EQ(a.categories[c].aucs, b.categories[c].aucs);
    EXPECT_EQ(a.categories[c].aucs.size(), 3u);
    pooled += a.categories[c].mean / kNumTargets;
  }
  EXPECT_GT(pooled, 0.7);
  const auto small = testgen::planted_dataset(rng, 99, 8);
  EXPECT_THROW(repeated_splits(small, Arm::all, split, cfg), Error);
}

}  // namespace
}  // namespace peripatos
