#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "peripatos/common.hpp"
#include "peripatos/corpus.hpp"
#include "peripatos/trajectories.hpp"

namespace peripatos {

using TermCounts = std::map<std::string, double>;

/// Token counts over cleaned texts.
TermCounts count_terms(const std::vector<std::string>& texts);

struct SageOptions {
  double lambda = 5.0;
  int max_iter = 500;
  double tol = 1e-6;
  /// Pseudo-count given to terms the background lacks, so it covers the
  /// target vocabulary without shifting observed frequencies.
  double smoothing = 0.1;
};

/// L1-penalised additive deviation model: the target distribution is
/// softmax(m + eta) with m the background log-distribution over the joint
/// vocabulary.
struct SageModel {
  std::vector<std::string> vocab;
  std::vector<double> m;
  std::vector<double> eta;
  double lambda = 0.0;
  bool converged = false;
  int iterations = 0;
  /// Penalised negative log-likelihood after each accepted step, starting
  /// with eta = 0.
  std::vector<double> objective;

  /// Terms with positive eta, highest first (ties by term).
  std::vector<std::pair<std::string, double>> top_terms(std::size_t n) const;
};

/// Fits eta by proximal gradient descent with backtracking. Convergence is a
/// relative objective change below tol; hitting max_iter leaves
/// `converged` false and logs a warning.
SageModel fit_sage(const TermCounts& target, const TermCounts& background,
                   const SageOptions& options = {});

struct LexiconTerm {
  std::string term;
  double eta = 0.0;
  std::size_t rank = 0;  ///< 1-based
};

struct LexiconSet {
  std::map<std::string, std::vector<LexiconTerm>> terms;
  /// Categories whose fit found no meaningful deviation.
  std::vector<std::string> degenerate;
  std::vector<std::string> warnings;
};

/// Fits each category against the union of the others and keeps its top_n
/// positive-eta terms. Throws with fewer than two categories.
LexiconSet build_lexicons(const std::map<std::string, TermCounts>& corpora,
                          const SageOptions& options = {}, std::size_t top_n = 300);

/// term -> owning category. A term in several lexicons goes to the one with
/// the largest eta (ties to the smaller category name).
using LexiconOwners = std::map<std::string, std::string>;
LexiconOwners disjointify(const LexiconSet& lexicons);

struct ContingencyTable {
  std::int64_t a = 0, b = 0, c = 0, d = 0;
  friend bool operator==(const ContingencyTable&, const ContingencyTable&) = default;
};

/// One entry per user: that user's tokens.
using TokenGroups = std::vector<std::vector<std::string>>;

/// a / b: group-1 tokens owned by `destination` / by any other category; c /
/// d likewise for group 2. With `distinct_types` each user contributes each
/// term at most once.
ContingencyTable usage_table(const TokenGroups& group1, const TokenGroups& group2,
                             const std::string& destination, const LexiconOwners& owners,
                             bool distinct_types = false);

/// (a/b)/(c/d); when any cell is zero, 0.5 is added to every cell.
double odds_ratio(const ContingencyTable& t);

/// Exact two-sided p: total probability of tables with the observed margins
/// that are no more likely than the observed one.
double fisher_exact(const ContingencyTable& t);

struct DiffusionOptions {
  /// Span after the first origin post; unbounded uses all prior posts.
  Window early_window = Window::hours(72);
  /// Cells with at most this many movers are suppressed.
  std::size_t min_movers = 20;
  bool distinct_types = false;
  double alpha = 0.05;
};

struct DiffusionCell {
  ContingencyTable table;
  double odds_ratio = 1.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool suppressed = false;
  bool significant = false;
};

struct DiffusionMatrix {
  std::vector<std::string> categories;
  /// cells[o][d]; the diagonal stays empty.
  std::vector<std::vector<std::optional<DiffusionCell>>> cells;
};

/// Early origin-category language of users who move o -> d against users of
/// origin o who never moved within the label window.
DiffusionMatrix diffusion_matrix(const Corpus& corpus, const CategoryMap& category_of,
                                 const std::vector<PeripateticLabel>& labels,
                                 const LexiconOwners& owners,
                                 const std::vector<std::string>& categories,
                                 const DiffusionOptions& options = {});

/// Destination-lexicon usage after vs before each mover's entry into d, over
/// symmetric spans of length (entry - origin time). Users with no tokens on
/// either side are left out.
DiffusionMatrix before_after_shift(const Corpus& corpus,
                                   const std::vector<PeripateticLabel>& labels,
                                   const LexiconOwners& owners,
                                   const std::vector<std::string>& categories,
                                   const DiffusionOptions& options = {});

/// Benjamini-Hochberg step-up adjustment, in input order.
std::vector<double> bh_adjust(const std::vector<double>& p_values);

}  // namespace peripatos
