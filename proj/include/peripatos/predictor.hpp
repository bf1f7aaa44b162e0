#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "peripatos/corpus.hpp"
#include "peripatos/topics.hpp"
#include "peripatos/trajectories.hpp"

namespace peripatos {

inline constexpr std::size_t kNumTargets = 6;
inline constexpr std::size_t kOneHotWidth = 2 * kNumTargets;

/// The predicted categories, in output order.
const std::array<std::string, kNumTargets>& target_categories();
/// Index into target_categories(), or nullopt.
std::optional<std::size_t> target_index(const std::string& category);

struct PredictionExample {
  std::string user;
  std::string origin_category;
  Eigen::VectorXd author;
  Eigen::VectorXd context;
  /// Origin-category bits, then categories the replied-to users had posted in.
  std::array<double, kOneHotWidth> onehot{};
  std::array<double, kNumTargets> labels{};
};

struct Dataset {
  std::vector<PredictionExample> examples;
  std::size_t dim = 0;
  /// Users dropped for lack of usable text.
  std::size_t excluded = 0;
};

struct ExampleOptions {
  /// Span after the first hate post whose text is used.
  Window text_span = Window::hours(72);
  std::size_t dim = 768;
  std::uint64_t embed_seed = 0;
  std::string separator = " [SEP] ";
  std::string placeholder = "UNK";
};

/// One example per labeled user. Author text is the user's posts in any
/// community within the text span and before any other-category entry;
/// context text is the resolvable parents of those posts. Labels are the
/// target categories entered within the label window, never the origin.
/// Embeddings come from `store` (ids "author:<user>" / "context:<user>")
/// when given, otherwise from fallback_embed.
Dataset build_examples(const Corpus& corpus, const CategoryMap& category_of,
                       const std::vector<PeripateticLabel>& labels,
                       const ExampleOptions& options = {},
                       const EmbeddingStore* store = nullptr);

enum class Arm { all, target, context };
std::string_view arm_name(Arm arm);
Arm parse_arm(std::string_view name);

/// Design matrices for one arm.
struct DesignMatrices {
  Eigen::MatrixXd x;       ///< text features
  Eigen::MatrixXd onehot;  ///< n x 12
  Eigen::MatrixXd y;       ///< n x 6
  std::vector<int> origin;  ///< target index of the origin, or -1
  std::size_t padding = 0;  ///< trailing zero columns of x
};

/// `padding` zero columns are appended to the text features.
DesignMatrices design(const Dataset& data, Arm arm, std::size_t padding = 0);
DesignMatrices subset(const DesignMatrices& m, std::span<const std::size_t> rows);

struct MlpShape {
  std::size_t input = 0;
  std::size_t hidden1 = 0;
  std::size_t onehot = kOneHotWidth;
  std::size_t hidden2 = 0;
  std::size_t output = kNumTargets;

  /// Hidden widths halve the text width at each layer.
  static MlpShape for_text_width(std::size_t text_width, std::size_t padding = 0);
  std::size_t parameter_count() const;
};

/// input -> hidden1 (leaky ReLU, dropout), concatenated with the one-hot
/// block -> hidden2 (leaky ReLU, dropout) -> sigmoid outputs. Parameters
/// live in one flat vector.
class Mlp {
 public:
  static constexpr double kLeak = 0.01;
  static constexpr double kClamp = 1e-7;

  Mlp() = default;
  Mlp(const MlpShape& shape, std::uint64_t seed);

  const MlpShape& shape() const { return shape_; }
  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  /// Probabilities, dropout off.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x, const Eigen::MatrixXd& onehot) const;

  /// Mean clamped binary cross-entropy and its gradient with respect to the
  /// parameters. With `dropout_rng` set, dropout at `dropout` is applied.
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& onehot,
                           const Eigen::MatrixXd& y, Eigen::VectorXd* gradient,
                           double dropout = 0.0, std::mt19937_64* dropout_rng = nullptr) const;

  void save(const std::filesystem::path& path) const;
  static Mlp load(const std::filesystem::path& path);

 private:
  struct Views;
  Views views() const;

  MlpShape shape_;
  Eigen::VectorXd params_;
};

/// Mean clamped binary cross-entropy of probabilities.
double bce(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& y);

struct TrainConfig {
  int max_epochs = 100;
  double lr = 1e-3;
  std::size_t batch = 128;
  double dropout = 0.6;
  int patience = 5;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct TrainResult {
  Mlp model;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = 0;
};

/// Adam on shuffled mini-batches with early stopping on validation loss;
/// the best weights are restored. Throws on a non-finite loss.
TrainResult train(const DesignMatrices& train_set, const DesignMatrices& val_set,
                  const TrainConfig& config);

/// Central finite differences of the dropout-free loss for every parameter.
Eigen::VectorXd numeric_gradient(const Mlp& model, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& onehot, const Eigen::MatrixXd& y,
                                 double eps = 1e-5);
/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                          double floor = 1e-6);
/// Analytic vs numeric gradient, dropout off.
double gradient_check(const Mlp& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& onehot,
                      const Eigen::MatrixXd& y, double eps = 1e-5);

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Throws unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct CategoryEval {
  std::string category;
  std::vector<double> aucs;  ///< one per run where the test set had both classes
  double mean = 0.0;
  double standard_error = 0.0;
};

struct EvalReport {
  Arm arm = Arm::all;
  std::size_t runs = 0;
  std::vector<CategoryEval> categories;
};

struct SplitConfig {
  std::size_t runs = 50;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  std::uint64_t seed = 0;
  std::size_t padding = 0;
};

/// Fresh seeded 70/15/15 split per run, retrain, and test-set AUC per
/// category over users who did not originate in it. Throws below 100
/// examples.
EvalReport repeated_splits(const Dataset& data, Arm arm, const SplitConfig& split,
                           const TrainConfig& train_config);

/// The three arms (all, target, context) under the same splits.
std::vector<EvalReport> ablation(const Dataset& data, const SplitConfig& split,
                                 const TrainConfig& train_config);

}  // namespace peripatos
