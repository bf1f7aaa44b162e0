#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "peripatos/common.hpp"
#include "peripatos/corpus.hpp"
#include "peripatos/trajectories.hpp"

namespace peripatos {

struct PoolOptions {
  std::size_t top_k = 50;
  /// 0 keeps every eligible user.
  std::size_t max_candidates = 0;
  std::uint64_t seed = 0;
};

struct CandidatePool {
  std::string hate_community;
  /// Non-hate communities with their activity ratio, best first.
  std::vector<std::pair<std::string, double>> ranked;
  /// The first top_k of `ranked`.
  std::vector<std::string> top_communities;
  /// Users of the top communities who never posted in the hate community,
  /// sorted.
  std::vector<std::string> candidates;
};

/// Ranks non-hate communities by (posts from the hate community's members)
/// / (distinct users) and samples candidates from the top ones. Throws when
/// no candidate remains.
CandidatePool candidate_pool(const Corpus& corpus, const std::string& hate_community,
                             const std::set<std::string>& hate_communities,
                             const PoolOptions& options = {});

/// First instant of the UTC calendar month containing `t`.
Timestamp month_start(Timestamp t);

struct FeatureVector {
  std::int64_t karma_total = 0;
  std::int64_t n_submissions = 0;
  std::int64_t n_comments = 0;
  /// Days since the epoch of the user's first post in the corpus, standing in
  /// for the account creation date.
  double account_created = 0.0;
  std::vector<double> activity_counts;

  Eigen::VectorXd to_vector() const;
};

/// Sums over posts strictly before `cutoff`. With `collapse_activity` the
/// per-community counts become a single total.
FeatureVector user_features(const Corpus& corpus, const std::string& user, Timestamp cutoff,
                            const std::vector<std::string>& top_communities,
                            bool collapse_activity = false);

struct MatchOptions {
  double ridge = 1e-6;
  /// Use this covariance instead of estimating one.
  std::optional<Eigen::MatrixXd> covariance;
};

/// Pooled sample covariance of the rows of a and b, plus
/// ridge * trace / dim on the diagonal.
Eigen::MatrixXd pooled_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  double ridge);

struct IndexPair {
  std::size_t joiner = 0;
  std::size_t candidate = 0;
  double distance = 0.0;
};

struct IndexMatch {
  std::vector<IndexPair> pairs;
  std::vector<std::size_t> unmatched;
  Eigen::MatrixXd covariance;
};

/// Greedy nearest-neighbour matching without replacement; joiners are taken
/// in row order. Ties go to the lowest candidate index. `eligible(j, c)`
/// may veto a candidate for a joiner.
IndexMatch mahalanobis_match(const Eigen::MatrixXd& joiners, const Eigen::MatrixXd& candidates,
                             const MatchOptions& options = {},
                             const std::function<bool(std::size_t, std::size_t)>& eligible = {});

struct MatchedPair {
  std::string joiner;
  std::string counterpart;
  double distance = 0.0;
  Timestamp anchor_time = 0;
};

struct CommunityMatch {
  std::string hate_community;
  std::vector<MatchedPair> pairs;
  std::vector<std::string> unmatched;
  /// Features of the matched joiners and counterparts, row-aligned with
  /// `pairs`, plus the joiner and candidate-pool features before matching.
  Eigen::MatrixXd joiner_features, counterpart_features;
  Eigen::MatrixXd pre_joiner_features, pre_candidate_features;
};

struct MatchRequest {
  std::string hate_community;
  /// (user, anchor) for users whose first hate community this is.
  std::vector<std::pair<std::string, Timestamp>> joiners;
  std::set<std::string> hate_communities;
  bool collapse_activity = false;
};

/// Computes features at each joiner's month cutoff and matches. Counterparts
/// already in `used` are skipped and matched ones are added, so a counterpart
/// is used at most once across calls sharing the set. A counterpart must have
/// no hate-community post before its joiner's anchor.
CommunityMatch match_community(const Corpus& corpus, const MatchRequest& request,
                               const CandidatePool& pool, const MatchOptions& options,
                               std::set<std::string>& used);

/// |mean_a - mean_b| / sqrt((var_a + var_b) / 2) per column.
Eigen::VectorXd standardized_mean_differences(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct ZTest {
  double z = 0.0;
  double p_value = 1.0;
};

/// Pooled two-proportion Z test, two-sided.
ZTest two_proportion_z(std::int64_t x1, std::int64_t n1, std::int64_t x2, std::int64_t n2);

struct PairTimeline {
  std::string joiner;
  std::string counterpart;
  std::string origin_category;
  Timestamp anchor_time = 0;
  /// Delay from the anchor to the first post in a hate community of another
  /// category; nullopt if never.
  std::optional<std::int64_t> joiner_move_delay;
  std::optional<std::int64_t> counterpart_move_delay;
};

std::vector<PairTimeline> pair_timelines(const Corpus& corpus, const CategoryMap& category_of,
                                         const std::vector<MatchedPair>& pairs);

struct EffectRow {
  /// Origin category, or "all" for the pooled row.
  std::string category;
  std::int64_t n = 0;
  std::int64_t moved_treat = 0;
  std::int64_t moved_counter = 0;
  double p_treat = 0.0;
  double p_counter = 0.0;
  /// Infinite when p_counter is 0 and p_treat is not; NaN when both are 0.
  double ratio = 0.0;
  double z = 0.0;
  double p_value = 1.0;
};

/// One row per origin category (sorted) followed by the pooled row.
std::vector<EffectRow> treatment_effect(const std::vector<PairTimeline>& timelines,
                                        const Window& window);

struct CurvePoint {
  Window window = Window::six_weeks();
  double mean_ratio = 0.0;
  double standard_error = 0.0;
  std::size_t n_categories = 0;
};

/// Mean and standard error across categories of the finite per-category
/// ratios, one point per window.
std::vector<CurvePoint> effect_size_curve(const std::vector<PairTimeline>& timelines,
                                          const std::vector<Window>& windows);

}  // namespace peripatos
