#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "peripatos/corpus.hpp"

namespace peripatos {

/// Identity targets, in score-file column order.
enum class Identity : std::size_t {
  antisemitism,
  islamophobia,
  ableism,
  misogyny,
  xenophobia,
  racism,
  homophobia,
  transphobia,
};
inline constexpr std::size_t kNumIdentities = 8;

enum class AuxLabel : std::size_t { negative, disrespect, insult, attack, hate_speech };
inline constexpr std::size_t kNumAux = 5;

inline constexpr std::array<Identity, kNumIdentities> kIdentities = {
    Identity::antisemitism, Identity::islamophobia, Identity::ableism,
    Identity::misogyny,     Identity::xenophobia,   Identity::racism,
    Identity::homophobia,   Identity::transphobia};

/// Column name, e.g. "racism".
std::string_view identity_name(Identity id);
/// Category name used for a community cluster dominated by `id`, e.g. "racist".
std::string_view identity_category_name(Identity id);
std::optional<Identity> parse_identity(std::string_view name);
std::string_view aux_name(AuxLabel label);

using HateLabels = std::bitset<kNumIdentities>;

struct IdentityScores {
  std::string post_id;
  std::array<double, kNumIdentities> identity{};
  std::array<double, kNumAux> aux{};

  double operator[](Identity id) const { return identity[static_cast<std::size_t>(id)]; }
  double operator[](AuxLabel a) const { return aux[static_cast<std::size_t>(a)]; }
};

using ScoreMap = std::map<std::string, IdentityScores>;

/// Header of the shared score file: post_id, 8 identity columns, 5 aux columns.
const std::vector<std::string>& score_file_header();

/// Throws Error on a malformed header, non-numeric or out-of-range
/// probability, or a duplicate post id.
ScoreMap load_scores(const std::filesystem::path& path);
ScoreMap load_scores(std::istream& in);
void write_scores(const ScoreMap& scores, std::ostream& out);
void write_scores(const ScoreMap& scores, const std::filesystem::path& path);

/// Post ids of the corpus with no entry in `scores`.
std::vector<std::string> missing_scores(const Corpus& corpus, const ScoreMap& scores);

struct SeedLexicons {
  std::array<std::vector<std::string>, kNumIdentities> identity;
  std::vector<std::string> negative;
};

/// Deterministic lexicon-matching stand-in for a trained scorer. Each
/// probability is 1 - exp(-matches) over the post's tokens. Disrespect,
/// insult and attack mirror the negative score; hate_speech is the negative
/// score times the largest identity score.
ScoreMap fallback_scorer(const Corpus& corpus, const SeedLexicons& lexicons);
IdentityScores fallback_score(std::string_view post_id, std::string_view text,
                              const SeedLexicons& lexicons);

struct ThresholdSet {
  double negative = 0.5;
  std::array<double, kNumIdentities> identity = {0.5, 0.5, 0.5, 0.5,
                                                 0.5, 0.5, 0.5, 0.5};
};

/// Category c is present iff negative >= tau_negative and identity[c] >= tau_c.
HateLabels assign_hate_labels(const IdentityScores& scores, const ThresholdSet& thresholds);

struct LabeledScores {
  IdentityScores scores;
  HateLabels truth;
};

struct CalibrationResult {
  ThresholdSet thresholds;
  /// Objective per category at the chosen thresholds (F1 or R-squared);
  /// nullopt for categories that could not be calibrated.
  std::array<std::optional<double>, kNumIdentities> objective{};
  std::vector<std::string> warnings;
};

/// The threshold grid: step, 2*step, ... up to 1 - step.
std::vector<double> threshold_grid(double step = 0.05);

/// F1 of the label-assignment rule for a single category.
double f1_at(const std::vector<LabeledScores>& validation, Identity id,
             double tau_negative, double tau_identity);

/// Grid search over the shared negative threshold and per-category identity
/// thresholds maximising mean F1 across categories with positives. Ties go
/// to the value closest to 0.5, then the lower value.
CalibrationResult calibrate_thresholds(const std::vector<LabeledScores>& validation,
                                       double step = 0.05);

/// Per-community hand annotations: annotator counts of hateful posts per
/// category out of a fixed sample.
struct AnnotationSet {
  std::size_t sample_size = 20;
  /// community -> category -> one count per annotator.
  std::map<std::string, std::array<std::vector<int>, kNumIdentities>> counts;

  std::map<std::string, std::array<double, kNumIdentities>> mean_counts() const;
};

/// CSV with columns community,category,annotator,count.
AnnotationSet load_annotations(const std::filesystem::path& path,
                               std::size_t sample_size);

using CategoryCounts = std::map<std::string, std::array<double, kNumIdentities>>;

/// R-squared = 1 - SS_res/SS_tot per category over communities present in
/// both inputs. Zero-variance annotations give nullopt. Throws with fewer
/// than two shared communities.
std::array<std::optional<double>, kNumIdentities> validate_r2(
    const CategoryCounts& predicted, const CategoryCounts& annotated);

/// Grid search maximising mean R-squared between per-community labeled
/// counts on the annotated samples and the annotators' mean counts.
CalibrationResult calibrate_thresholds_r2(
    const std::map<std::string, std::vector<IdentityScores>>& annotated_samples,
    const CategoryCounts& annotated_means, double step = 0.05);

enum class AlphaMetric { nominal, interval };

/// Krippendorff's alpha. `ratings[a][u]` is annotator a's value for item u,
/// or nullopt when missing. Throws when no item has two or more ratings.
double krippendorff_alpha(const std::vector<std::vector<std::optional<int>>>& ratings,
                          AlphaMetric metric = AlphaMetric::nominal);

using AuxCorrelation = std::array<std::array<std::optional<double>, kNumAux>, kNumAux>;

/// Spearman rank correlation (average ranks for ties) between every pair of
/// auxiliary label columns. Constant columns yield nullopt entries.
AuxCorrelation spearman_label_correlations(const std::vector<IdentityScores>& scores);

/// Spearman correlation of two equally sized samples; nullopt when either
/// is constant.
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

// Prompts for counting hateful posts with a chat model.

/// Batch prompt over exactly ten posts, numbered "1." to "10.".
std::string llm_count_prompt(const std::vector<std::string>& posts,
                             std::string_view bias_category, std::string_view hate_type);
/// Integer 0..10 with optional surrounding whitespace; throws otherwise.
int parse_count(std::string_view reply);

std::string llm_single_prompt(std::string_view post, std::string_view bias_category,
                              std::string_view hate_type);
/// "Yes" or "No", trailing punctuation and whitespace ignored; throws otherwise.
bool parse_yesno(std::string_view reply);

}  // namespace peripatos
