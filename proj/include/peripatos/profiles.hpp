#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "peripatos/corpus.hpp"
#include "peripatos/scoring.hpp"

namespace peripatos {

struct CommunityProfile {
  std::string community;
  /// Fraction of sampled, scored posts labeled hateful per identity.
  std::array<double, kNumIdentities> proportions{};
  /// Per-identity standardisation across all profiles of a run.
  std::array<double, kNumIdentities> z{};
  std::size_t n_sampled = 0;
};

struct SampleSpec {
  std::size_t n_comments = 1000;
  std::size_t n_submissions = 1000;
  std::uint64_t seed = 0;
};

struct ProfileBuild {
  std::vector<CommunityProfile> profiles;
  std::vector<std::string> warnings;
};

/// Samples each community's posts (comments and submissions pooled) and
/// records the labeled fraction per identity. Sampled posts without scores
/// are skipped; communities with none scored are excluded with a warning.
ProfileBuild build_profiles(const Corpus& corpus, const ScoreMap& scores,
                            const ThresholdSet& thresholds,
                            const std::vector<std::string>& communities,
                            const SampleSpec& sample);

/// Fills `z` per identity as (p - mean) / sd with the sample sd. Constant
/// columns become all zeros; their warnings are returned. Throws with fewer
/// than two profiles.
std::vector<std::string> zscore_transform(std::vector<CommunityProfile>& profiles);

/// Rows are profiles, columns the 8 identities.
Eigen::MatrixXd z_matrix(const std::vector<CommunityProfile>& profiles);

struct KMeansOptions {
  int restarts = 10;
  int max_iter = 300;
  double tol = 1e-9;
};

struct KMeansResult {
  std::vector<int> assignment;
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
  /// Inertia after each assignment step of the winning restart.
  std::vector<double> inertia_trace;
  int restart = 0;
};

/// Seeded k-means++ initialisation followed by Lloyd iterations; the best
/// of `restarts` runs by (inertia, restart index). Throws when k exceeds the
/// number of points or is below 1.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    const KMeansOptions& options = {});

/// Mean Euclidean silhouette. Points in singleton clusters score 0.
double silhouette_score(const Eigen::MatrixXd& points, std::span<const int> assignment);

struct Clustering {
  std::vector<std::string> communities;
  std::vector<int> assignment;
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
  double silhouette = 0.0;
  std::vector<std::string> names;

  int k() const { return static_cast<int>(centroids.rows()); }
  /// community -> cluster name.
  std::map<std::string, std::string> category_of() const;
};

struct KSelection {
  Clustering clustering;
  /// (k, silhouette) for every k tried.
  std::vector<std::pair<int, double>> scores;
};

/// Runs kmeans for each k in [k_min, min(k_max, n - 1)] and keeps the
/// highest silhouette, ties to the smaller k. Names are left empty.
KSelection select_k(const Eigen::MatrixXd& points, const std::vector<std::string>& communities,
                    int k_min, int k_max, std::uint64_t seed, const KMeansOptions& options = {});

struct NamingRules {
  double theta_general = 0.5;
  double lgbtq_delta = 0.5;
};

/// Names each centroid after its highest-z identity. Flat centroids (max z
/// below theta_general) are "general hate"; centroids where homophobia and
/// transphobia are both within lgbtq_delta of the max are "anti-LGBTQ".
/// Repeated names get a numeric suffix in cluster order.
std::vector<std::string> name_clusters(const Eigen::MatrixXd& centroids,
                                       const NamingRules& rules = {});

/// Chance-adjusted mutual information with arithmetic-mean normalisation.
double adjusted_mutual_information(std::span<const int> a, std::span<const int> b);
/// Aligns both clusterings on their shared community set; throws if the
/// sets differ.
double adjusted_mutual_information(const Clustering& a, const Clustering& b);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Top-two principal component scores per row. Each component's sign makes
/// its largest-magnitude loading positive. Throws with fewer than 3 rows.
Eigen::MatrixXd project_2d(const Eigen::MatrixXd& points);

}  // namespace peripatos
