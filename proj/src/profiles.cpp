#include "peripatos/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "peripatos/log.hpp"
#include "peripatos/stats.hpp"

namespace peripatos {

ProfileBuild build_profiles(const Corpus& corpus, const ScoreMap& scores,
                            const ThresholdSet& thresholds,
                            const std::vector<std::string>& communities,
                            const SampleSpec& sample) {
  ProfileBuild out;
  for (std::size_t ci = 0; ci < communities.size(); ++ci) {
    const auto& community = communities[ci];
    if (corpus.community_posts(community).empty()) {
      out.warnings.push_back(fmt::format("community '{}' has no posts; excluded", community));
      continue;
    }
    const auto ids = sample_batches(corpus, community, sample.n_comments, sample.n_submissions,
                                    stats::derive_seed(sample.seed, ci));
    CommunityProfile profile;
    profile.community = community;
    std::array<std::size_t, kNumIdentities> hits{};
    std::size_t unscored = 0;
    for (const auto& id : ids) {
      auto it = scores.find(id);
      if (it == scores.end()) {
        ++unscored;
        continue;
      }
      ++profile.n_sampled;
      const auto labels = assign_hate_labels(it->second, thresholds);
      for (std::size_t c = 0; c < kNumIdentities; ++c) hits[c] += labels.test(c);
    }
    if (unscored > 0)
      out.warnings.push_back(
          fmt::format("community '{}': {} sampled posts had no scores", community, unscored));
    if (profile.n_sampled == 0) {
      out.warnings.push_back(
          fmt::format("community '{}' has no scorable posts; excluded", community));
      continue;
    }
    for (std::size_t c = 0; c < kNumIdentities; ++c)
      profile.proportions[c] =
          static_cast<double>(hits[c]) / static_cast<double>(profile.n_sampled);
    out.profiles.push_back(std::move(profile));
  }
  for (const auto& w : out.warnings) log::warning(w);
  return out;
}

std::vector<std::string> zscore_transform(std::vector<CommunityProfile>& profiles) {
  if (profiles.size() < 2) throw Error("z-scores need at least two profiles");
  std::vector<std::string> warnings;
  for (std::size_t c = 0; c < kNumIdentities; ++c) {
    std::vector<double> col;
    col.reserve(profiles.size());
    for (const auto& p : profiles) col.push_back(p.proportions[c]);
    const double m = stats::mean(col);
    const double sd = stats::sample_sd(col);
    if (!(sd > 0.0)) {
      warnings.push_back(fmt::format("{} proportions are constant across communities; z = 0",
                                     identity_name(static_cast<Identity>(c))));
      for (auto& p : profiles) p.z[c] = 0.0;
      continue;
    }
    for (auto& p : profiles) p.z[c] = (p.proportions[c] - m) / sd;
  }
  for (const auto& w : warnings) log::warning(w);
  return warnings;
}

Eigen::MatrixXd z_matrix(const std::vector<CommunityProfile>& profiles) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(profiles.size()), kNumIdentities);
  for (std::size_t i = 0; i < profiles.size(); ++i)
    for (std::size_t c = 0; c < kNumIdentities; ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = profiles[i].z[c];
  return m;
}

// ---------------------------------------------------------------------------
// k-means

namespace {

using Eigen::Index;

Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng) {
  const Index n = x.rows();
  Eigen::MatrixXd centers(k, x.cols());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  std::uniform_int_distribution<Index> first(0, n - 1);
  Index pick = first(rng);
  centers.row(0) = x.row(pick);
  chosen[static_cast<std::size_t>(pick)] = 1;
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        r -= d2(i);
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      // Every point coincides with a chosen center: take the first unused row.
      pick = 0;
      while (pick < n && chosen[static_cast<std::size_t>(pick)]) ++pick;
      if (pick == n) pick = 0;
    }
    chosen[static_cast<std::size_t>(pick)] = 1;
    centers.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

KMeansResult lloyd(const Eigen::MatrixXd& x, Eigen::MatrixXd centers,
                   const KMeansOptions& options) {
  const Index n = x.rows();
  const int k = static_cast<int>(centers.rows());
  KMeansResult r;
  r.assignment.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < options.max_iter; ++iter) {
    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      r.assignment[static_cast<std::size_t>(i)] = best;
      inertia += best_d;
    }
    r.inertia_trace.push_back(inertia);
    r.inertia = inertia;

    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      const int c = r.assignment[static_cast<std::size_t>(i)];
      next.row(c) += x.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) {
        next.row(c) = centers.row(c);  // empty cluster keeps its center
      } else {
        next.row(c) /= counts[static_cast<std::size_t>(c)];
      }
      shift = std::max(shift, (next.row(c) - centers.row(c)).norm());
    }
    centers = std::move(next);
    if (shift < options.tol) break;
  }
  // Final inertia against the converged centers.
  double inertia = 0.0;
  for (Index i = 0; i < n; ++i)
    inertia += (x.row(i) - centers.row(r.assignment[static_cast<std::size_t>(i)])).squaredNorm();
  r.inertia = inertia;
  r.centroids = std::move(centers);
  return r;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    const KMeansOptions& options) {
  if (k < 1) throw Error("k must be at least 1");
  if (k > points.rows())
    throw Error(fmt::format("k = {} exceeds the number of points ({})", k, points.rows()));
  const int restarts = std::max(1, options.restarts);
  std::vector<std::future<KMeansResult>> runs;
  runs.reserve(static_cast<std::size_t>(restarts));
  for (int r = 0; r < restarts; ++r) {
    runs.push_back(std::async(std::launch::deferred, [&, r] {
      std::mt19937_64 rng(stats::derive_seed(seed, static_cast<std::uint64_t>(r)));
      auto result = lloyd(points, kmeanspp_init(points, k, rng), options);
      result.restart = r;
      return result;
    }));
  }
  KMeansResult best;
  bool have = false;
  for (auto& f : runs) {
    auto r = f.get();
    if (!have || r.inertia < best.inertia) {
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

double silhouette_score(const Eigen::MatrixXd& points, std::span<const int> assignment) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (assignment.size() != n) throw Error("silhouette: assignment length mismatch");
  const int k = n ? *std::max_element(assignment.begin(), assignment.end()) + 1 : 0;
  std::vector<std::size_t> size(static_cast<std::size_t>(k), 0);
  for (int a : assignment) ++size[static_cast<std::size_t>(a)];
  double total = 0.0;
  std::vector<double> sum(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(assignment[i]);
    if (size[own] <= 1) continue;  // singleton: s = 0
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sum[static_cast<std::size_t>(assignment[j])] +=
          (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j)))
              .norm();
    }
    const double a = sum[own] / static_cast<double>(size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sum.size(); ++c)
      if (c != own && size[c] > 0) b = std::min(b, sum[c] / static_cast<double>(size[c]));
    if (!std::isfinite(b)) continue;
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

std::map<std::string, std::string> Clustering::category_of() const {
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < communities.size(); ++i) {
    const auto c = static_cast<std::size_t>(assignment[i]);
    out[communities[i]] = c < names.size() ? names[c] : fmt::format("cluster {}", c);
  }
  return out;
}

KSelection select_k(const Eigen::MatrixXd& points, const std::vector<std::string>& communities,
                    int k_min, int k_max, std::uint64_t seed, const KMeansOptions& options) {
  const int n = static_cast<int>(points.rows());
  if (static_cast<std::size_t>(n) != communities.size())
    throw Error("select_k: one community name per row required");
  k_max = std::min(k_max, n - 1);
  k_min = std::max(k_min, 2);
  if (k_min > k_max)
    throw Error(fmt::format("select_k: no admissible k for {} points", n));
  KSelection sel;
  double best = -std::numeric_limits<double>::infinity();
  for (int k = k_min; k <= k_max; ++k) {
    auto km = kmeans(points, k, stats::derive_seed(seed, static_cast<std::uint64_t>(k)), options);
    const double s = silhouette_score(points, km.assignment);
    sel.scores.emplace_back(k, s);
    if (s > best + 1e-12) {
      best = s;
      sel.clustering.communities = communities;
      sel.clustering.assignment = std::move(km.assignment);
      sel.clustering.centroids = std::move(km.centroids);
      sel.clustering.inertia = km.inertia;
      sel.clustering.silhouette = s;
    }
  }
  return sel;
}

std::vector<std::string> name_clusters(const Eigen::MatrixXd& centroids, const NamingRules& rules) {
  if (centroids.cols() != static_cast<Eigen::Index>(kNumIdentities))
    throw Error("cluster naming expects 8 identity columns");
  const auto homo = static_cast<Eigen::Index>(Identity::homophobia);
  const auto trans = static_cast<Eigen::Index>(Identity::transphobia);
  std::vector<std::string> names;
  std::map<std::string, int> seen;
  for (Eigen::Index r = 0; r < centroids.rows(); ++r) {
    Eigen::Index arg = 0;
    const double max = centroids.row(r).maxCoeff(&arg);
    std::string name;
    if (max < rules.theta_general) {
      name = "general hate";
    } else if (max - centroids(r, homo) <= rules.lgbtq_delta &&
               max - centroids(r, trans) <= rules.lgbtq_delta) {
      name = "anti-LGBTQ";
    } else {
      name = std::string(identity_category_name(static_cast<Identity>(arg)));
    }
    const int count = ++seen[name];
    names.push_back(count == 1 ? name : fmt::format("{} {}", name, count));
  }
  return names;
}

// ---------------------------------------------------------------------------
// Clustering agreement

namespace {

struct Contingency {
  std::vector<std::vector<double>> table;
  std::vector<double> rows, cols;
  double n = 0.0;
};

Contingency contingency(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error("label vectors differ in length");
  std::map<int, std::size_t> ia, ib;
  for (int v : a) ia.emplace(v, 0);
  for (int v : b) ib.emplace(v, 0);
  std::size_t k = 0;
  for (auto& [_, i] : ia) i = k++;
  k = 0;
  for (auto& [_, i] : ib) i = k++;
  Contingency c;
  c.table.assign(ia.size(), std::vector<double>(ib.size(), 0.0));
  c.rows.assign(ia.size(), 0.0);
  c.cols.assign(ib.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto r = ia[a[i]], s = ib[b[i]];
    c.table[r][s] += 1.0;
    c.rows[r] += 1.0;
    c.cols[s] += 1.0;
  }
  c.n = static_cast<double>(a.size());
  return c;
}

double entropy(const std::vector<double>& counts, double n) {
  double h = 0.0;
  for (double c : counts)
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  return h;
}

bool same_partition(std::span<const int> a, std::span<const int> b) {
  std::map<int, int> fwd, back;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [f, fi] = fwd.emplace(a[i], b[i]);
    auto [g, gi] = back.emplace(b[i], a[i]);
    if (f->second != b[i] || g->second != a[i]) return false;
  }
  return true;
}

}  // namespace

double adjusted_mutual_information(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error("label vectors differ in length");
  if (a.empty() || same_partition(a, b)) return 1.0;
  const auto c = contingency(a, b);
  const double n = c.n;
  double mi = 0.0;
  for (std::size_t i = 0; i < c.rows.size(); ++i)
    for (std::size_t j = 0; j < c.cols.size(); ++j) {
      const double nij = c.table[i][j];
      if (nij > 0.0) mi += (nij / n) * std::log(n * nij / (c.rows[i] * c.cols[j]));
    }
  // Expected MI under the hypergeometric permutation model.
  double emi = 0.0;
  const double lg_n = std::lgamma(n + 1.0);
  for (double ai : c.rows)
    for (double bj : c.cols) {
      const double lo = std::max(1.0, ai + bj - n);
      const double hi = std::min(ai, bj);
      const double base = std::lgamma(ai + 1.0) + std::lgamma(bj + 1.0) +
                          std::lgamma(n - ai + 1.0) + std::lgamma(n - bj + 1.0) - lg_n;
      for (double nij = lo; nij <= hi; nij += 1.0) {
        const double lp = base - std::lgamma(nij + 1.0) - std::lgamma(ai - nij + 1.0) -
                          std::lgamma(bj - nij + 1.0) - std::lgamma(n - ai - bj + nij + 1.0);
        emi += (nij / n) * std::log(n * nij / (ai * bj)) * std::exp(lp);
      }
    }
  const double norm = 0.5 * (entropy(c.rows, n) + entropy(c.cols, n));
  double denom = norm - emi;
  const double eps = std::numeric_limits<double>::epsilon();
  denom = denom < 0.0 ? std::min(denom, -eps) : std::max(denom, eps);
  return (mi - emi) / denom;
}

double adjusted_mutual_information(const Clustering& a, const Clustering& b) {
  std::map<std::string, int> lb;
  for (std::size_t i = 0; i < b.communities.size(); ++i) lb[b.communities[i]] = b.assignment[i];
  if (lb.size() != a.communities.size()) throw Error("clusterings cover different communities");
  std::vector<int> xa, xb;
  for (std::size_t i = 0; i < a.communities.size(); ++i) {
    auto it = lb.find(a.communities[i]);
    if (it == lb.end()) throw Error("clusterings cover different communities");
    xa.push_back(a.assignment[i]);
    xb.push_back(it->second);
  }
  return adjusted_mutual_information(xa, xb);
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  const auto c = contingency(a, b);
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& row : c.table)
    for (double v : row) sum_ij += choose2(v);
  for (double v : c.rows) sum_a += choose2(v);
  for (double v : c.cols) sum_b += choose2(v);
  const double expected = sum_a * sum_b / choose2(c.n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

Eigen::MatrixXd project_2d(const Eigen::MatrixXd& points) {
  if (points.rows() < 3) throw Error("projection needs at least three rows");
  const Eigen::MatrixXd centered = points.rowwise() - points.colwise().mean();
  const Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(points.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::Index d = cov.rows();
  Eigen::MatrixXd components(d, 2);
  for (int j = 0; j < 2; ++j) {
    const Eigen::Index col = d - 1 - j;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
    if (col >= 0) v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    components.col(j) = v;
  }
  return centered * components;
}

}  // namespace peripatos
