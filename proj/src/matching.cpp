#include "peripatos/matching.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_map>

#include <fmt/format.h>

#include "peripatos/log.hpp"
#include "peripatos/stats.hpp"

namespace peripatos {

CandidatePool candidate_pool(const Corpus& corpus, const std::string& hate_community,
                             const std::set<std::string>& hate_communities,
                             const PoolOptions& options) {
  const auto& hate_posts = corpus.community_posts(hate_community);
  if (hate_posts.empty())
    throw Error(fmt::format("hate community '{}' has no posts", hate_community));
  std::set<std::string> members;
  for (auto pos : hate_posts) members.insert(corpus.posts()[pos].author);

  CandidatePool pool;
  pool.hate_community = hate_community;
  for (const auto& [community, positions] : corpus.community_index()) {
    if (hate_communities.count(community) || community == hate_community) continue;
    std::set<std::string> users;
    std::size_t member_posts = 0;
    for (auto pos : positions) {
      const auto& author = corpus.posts()[pos].author;
      users.insert(author);
      member_posts += members.count(author);
    }
    if (member_posts == 0) continue;
    pool.ranked.emplace_back(community,
                             static_cast<double>(member_posts) / static_cast<double>(users.size()));
  }
  std::stable_sort(pool.ranked.begin(), pool.ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (std::size_t i = 0; i < pool.ranked.size() && i < options.top_k; ++i)
    pool.top_communities.push_back(pool.ranked[i].first);

  std::set<std::string> candidates;
  for (const auto& community : pool.top_communities)
    for (auto pos : corpus.community_posts(community)) {
      const auto& author = corpus.posts()[pos].author;
      if (!members.count(author)) candidates.insert(author);
    }
  pool.candidates.assign(candidates.begin(), candidates.end());
  if (options.max_candidates > 0 && pool.candidates.size() > options.max_candidates) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(pool.candidates.begin(), pool.candidates.end(), rng);
    pool.candidates.resize(options.max_candidates);
    std::sort(pool.candidates.begin(), pool.candidates.end());
  }
  if (pool.candidates.empty())
    throw Error(fmt::format("no counterpart candidates for '{}'", hate_community));
  return pool;
}

Timestamp month_start(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(sys_seconds{seconds{t}});
  const year_month_day ymd{day};
  const sys_days first{ymd.year() / ymd.month() / 1};
  return duration_cast<seconds>(first.time_since_epoch()).count();
}

Eigen::VectorXd FeatureVector::to_vector() const {
  Eigen::VectorXd v(4 + static_cast<Eigen::Index>(activity_counts.size()));
  v(0) = static_cast<double>(karma_total);
  v(1) = static_cast<double>(n_submissions);
  v(2) = static_cast<double>(n_comments);
  v(3) = account_created;
  for (std::size_t i = 0; i < activity_counts.size(); ++i)
    v(4 + static_cast<Eigen::Index>(i)) = activity_counts[i];
  return v;
}

FeatureVector user_features(const Corpus& corpus, const std::string& user, Timestamp cutoff,
                            const std::vector<std::string>& top_communities,
                            bool collapse_activity) {
  FeatureVector f;
  f.activity_counts.assign(collapse_activity ? 1 : top_communities.size(), 0.0);
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < top_communities.size(); ++i)
    slot.emplace(top_communities[i], collapse_activity ? 0 : i);
  const auto& timeline = corpus.timeline(user);
  if (timeline.empty()) return f;
  f.account_created = std::floor(static_cast<double>(corpus.posts()[timeline.front()].timestamp) /
                                 static_cast<double>(kSecondsPerDay));
  for (auto pos : timeline) {
    const auto& post = corpus.posts()[pos];
    if (post.timestamp >= cutoff) break;
    f.karma_total += post.karma;
    if (post.kind == PostKind::submission) ++f.n_submissions;
    else ++f.n_comments;
    if (auto it = slot.find(post.community); it != slot.end()) f.activity_counts[it->second] += 1.0;
  }
  return f;
}

Eigen::MatrixXd pooled_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  double ridge) {
  if (a.cols() != b.cols() && a.rows() > 0 && b.rows() > 0)
    throw Error("feature dimensions differ");
  const Eigen::Index dim = a.rows() > 0 ? a.cols() : b.cols();
  const Eigen::Index n = a.rows() + b.rows();
  if (n < 2) throw Error("covariance needs at least two observations");
  Eigen::MatrixXd x(n, dim);
  if (a.rows() > 0) x.topRows(a.rows()) = a;
  if (b.rows() > 0) x.bottomRows(b.rows()) = b;
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  const double trace = cov.trace();
  const double scale = trace > 0.0 ? trace / static_cast<double>(dim) : 1.0;
  cov.diagonal().array() += ridge * scale;
  return cov;
}

namespace {

Eigen::MatrixXd precision_of(const Eigen::MatrixXd& cov) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw Error("covariance is not positive definite");
  return ldlt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
}

template <typename Dist2, typename Eligible>
IndexMatch greedy_match(std::size_t n_joiners, std::size_t n_candidates, Dist2&& dist2,
                        Eligible&& eligible) {
  IndexMatch out;
  std::vector<char> taken(n_candidates, 0);
  for (std::size_t j = 0; j < n_joiners; ++j) {
    std::size_t best = n_candidates;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n_candidates; ++c) {
      if (taken[c] || !eligible(j, c)) continue;
      const double d = dist2(j, c);
      if (best == n_candidates || d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (best == n_candidates) {
      out.unmatched.push_back(j);
      continue;
    }
    taken[best] = 1;
    out.pairs.push_back({j, best, std::sqrt(std::max(0.0, best_d))});
  }
  return out;
}

}  // namespace

IndexMatch mahalanobis_match(const Eigen::MatrixXd& joiners, const Eigen::MatrixXd& candidates,
                             const MatchOptions& options,
                             const std::function<bool(std::size_t, std::size_t)>& eligible) {
  if (joiners.rows() > 0 && candidates.rows() > 0 && joiners.cols() != candidates.cols())
    throw Error("joiner and candidate feature dimensions differ");
  Eigen::MatrixXd cov = options.covariance
                            ? *options.covariance
                            : pooled_covariance(joiners, candidates, options.ridge);
  const Eigen::MatrixXd precision = precision_of(cov);
  auto dist2 = [&](std::size_t j, std::size_t c) {
    const Eigen::VectorXd v = (joiners.row(static_cast<Eigen::Index>(j)) -
                               candidates.row(static_cast<Eigen::Index>(c)))
                                  .transpose();
    return v.dot(precision * v);
  };
  auto ok = [&](std::size_t j, std::size_t c) { return !eligible || eligible(j, c); };
  auto out = greedy_match(static_cast<std::size_t>(joiners.rows()),
                          static_cast<std::size_t>(candidates.rows()), dist2, ok);
  out.covariance = std::move(cov);
  return out;
}

namespace {

Eigen::MatrixXd stack_rows(const std::vector<Eigen::VectorXd>& rows, Eigen::Index dim) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

}  // namespace

CommunityMatch match_community(const Corpus& corpus, const MatchRequest& request,
                               const CandidatePool& pool, const MatchOptions& options,
                               std::set<std::string>& used) {
  CommunityMatch out;
  out.hate_community = request.hate_community;
  auto joiners = request.joiners;
  std::sort(joiners.begin(), joiners.end(),
            [](const auto& a, const auto& b) { return std::tie(a.second, a.first) < std::tie(b.second, b.first); });
  const auto& candidates = pool.candidates;
  const Eigen::Index dim =
      4 + static_cast<Eigen::Index>(request.collapse_activity ? 1 : pool.top_communities.size());

  auto features = [&](const std::string& user, Timestamp cutoff) {
    return user_features(corpus, user, cutoff, pool.top_communities, request.collapse_activity)
        .to_vector();
  };

  std::vector<Eigen::VectorXd> joiner_rows;
  std::vector<Timestamp> joiner_cutoff;
  std::map<Timestamp, Eigen::MatrixXd> candidate_at;
  for (const auto& [user, anchor] : joiners) {
    const auto cutoff = month_start(anchor);
    joiner_rows.push_back(features(user, cutoff));
    joiner_cutoff.push_back(cutoff);
    if (!candidate_at.count(cutoff)) {
      std::vector<Eigen::VectorXd> rows;
      rows.reserve(candidates.size());
      for (const auto& c : candidates) rows.push_back(features(c, cutoff));
      candidate_at.emplace(cutoff, stack_rows(rows, dim));
    }
  }
  out.pre_joiner_features = stack_rows(joiner_rows, dim);
  {
    Eigen::Index total = 0;
    for (const auto& [_, m] : candidate_at) total += m.rows();
    out.pre_candidate_features.resize(total, dim);
    Eigen::Index at = 0;
    for (const auto& [_, m] : candidate_at) {
      out.pre_candidate_features.middleRows(at, m.rows()) = m;
      at += m.rows();
    }
  }
  if (joiners.empty()) return out;

  const Eigen::MatrixXd cov =
      options.covariance
          ? *options.covariance
          : pooled_covariance(out.pre_joiner_features, out.pre_candidate_features, options.ridge);
  const Eigen::MatrixXd precision = precision_of(cov);

  // Earliest hate-community post per candidate.
  std::vector<std::optional<Timestamp>> first_hate(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c)
    for (auto pos : corpus.timeline(candidates[c]))
      if (request.hate_communities.count(corpus.posts()[pos].community)) {
        first_hate[c] = corpus.posts()[pos].timestamp;
        break;
      }

  auto dist2 = [&](std::size_t j, std::size_t c) {
    const auto& cand = candidate_at.at(joiner_cutoff[j]);
    const Eigen::VectorXd v =
        joiner_rows[j] - cand.row(static_cast<Eigen::Index>(c)).transpose();
    return v.dot(precision * v);
  };
  auto eligible = [&](std::size_t j, std::size_t c) {
    if (used.count(candidates[c])) return false;
    return !first_hate[c] || *first_hate[c] >= joiners[j].second;
  };
  const auto match = greedy_match(joiners.size(), candidates.size(), dist2, eligible);

  std::vector<Eigen::VectorXd> jrows, crows;
  for (const auto& p : match.pairs) {
    const auto& [user, anchor] = joiners[p.joiner];
    out.pairs.push_back({user, candidates[p.candidate], p.distance, anchor});
    used.insert(candidates[p.candidate]);
    jrows.push_back(joiner_rows[p.joiner]);
    crows.push_back(candidate_at.at(joiner_cutoff[p.joiner])
                        .row(static_cast<Eigen::Index>(p.candidate))
                        .transpose());
  }
  for (auto j : match.unmatched) out.unmatched.push_back(joiners[j].first);
  if (!out.unmatched.empty())
    log::warning(fmt::format("{}: {} joiners left unmatched", request.hate_community,
                             out.unmatched.size()));
  out.joiner_features = stack_rows(jrows, dim);
  out.counterpart_features = stack_rows(crows, dim);
  return out;
}

Eigen::VectorXd standardized_mean_differences(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw Error("feature dimensions differ");
  if (a.rows() < 2 || b.rows() < 2) throw Error("standardized differences need two rows per group");
  const Eigen::RowVectorXd ma = a.colwise().mean(), mb = b.colwise().mean();
  const Eigen::RowVectorXd va =
      (a.rowwise() - ma).array().square().colwise().sum() / static_cast<double>(a.rows() - 1);
  const Eigen::RowVectorXd vb =
      (b.rowwise() - mb).array().square().colwise().sum() / static_cast<double>(b.rows() - 1);
  Eigen::VectorXd out(a.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    const double diff = std::abs(ma(i) - mb(i));
    const double sd = std::sqrt(0.5 * (va(i) + vb(i)));
    out(i) = sd > 0.0 ? diff / sd : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  }
  return out;
}

ZTest two_proportion_z(std::int64_t x1, std::int64_t n1, std::int64_t x2, std::int64_t n2) {
  if (n1 <= 0 || n2 <= 0 || x1 < 0 || x2 < 0 || x1 > n1 || x2 > n2)
    throw Error("two-proportion test needs 0 <= x <= n and n > 0");
  const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(x2) / static_cast<double>(n2);
  const double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  const double se = std::sqrt(pooled * (1.0 - pooled) *
                              (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  if (!(se > 0.0)) return {};
  const double z = (p1 - p2) / se;
  return {z, stats::normal_two_sided_p(z)};
}

std::vector<PairTimeline> pair_timelines(const Corpus& corpus, const CategoryMap& category_of,
                                         const std::vector<MatchedPair>& pairs) {
  // The joiner's origin category is that of its first hate community.
  auto first_move = [&](const std::string& user, const std::string& origin,
                        Timestamp anchor) -> std::optional<std::int64_t> {
    for (auto pos : corpus.timeline(user)) {
      const auto& post = corpus.posts()[pos];
      if (post.timestamp < anchor) continue;
      auto it = category_of.find(post.community);
      if (it != category_of.end() && it->second != origin) return post.timestamp - anchor;
    }
    return std::nullopt;
  };
  std::vector<PairTimeline> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    std::string origin;
    for (auto pos : corpus.timeline(p.joiner)) {
      const auto& post = corpus.posts()[pos];
      auto it = category_of.find(post.community);
      if (it != category_of.end()) {
        origin = it->second;
        break;
      }
    }
    if (origin.empty())
      throw Error(fmt::format("joiner '{}' has no hate-community post", p.joiner));
    out.push_back({p.joiner, p.counterpart, origin, p.anchor_time,
                   first_move(p.joiner, origin, p.anchor_time),
                   first_move(p.counterpart, origin, p.anchor_time)});
  }
  return out;
}

namespace {

EffectRow effect_row(std::string category, std::int64_t n, std::int64_t mt, std::int64_t mc) {
  EffectRow row;
  row.category = std::move(category);
  row.n = n;
  row.moved_treat = mt;
  row.moved_counter = mc;
  row.p_treat = static_cast<double>(mt) / static_cast<double>(n);
  row.p_counter = static_cast<double>(mc) / static_cast<double>(n);
  if (row.p_counter > 0.0) row.ratio = row.p_treat / row.p_counter;
  else if (row.p_treat > 0.0) row.ratio = std::numeric_limits<double>::infinity();
  else row.ratio = std::numeric_limits<double>::quiet_NaN();
  const auto t = two_proportion_z(mt, n, mc, n);
  row.z = t.z;
  row.p_value = t.p_value;
  return row;
}

}  // namespace

std::vector<EffectRow> treatment_effect(const std::vector<PairTimeline>& timelines,
                                        const Window& window) {
  struct Tally {
    std::int64_t n = 0, treat = 0, counter = 0;
  };
  std::map<std::string, Tally> by;
  Tally all;
  for (const auto& t : timelines) {
    auto& tally = by[t.origin_category];
    const bool mt = t.joiner_move_delay && window.admits(*t.joiner_move_delay);
    const bool mc = t.counterpart_move_delay && window.admits(*t.counterpart_move_delay);
    for (Tally* x : {&tally, &all}) {
      ++x->n;
      x->treat += mt;
      x->counter += mc;
    }
  }
  std::vector<EffectRow> out;
  for (const auto& [category, t] : by) out.push_back(effect_row(category, t.n, t.treat, t.counter));
  if (all.n > 0) out.push_back(effect_row("all", all.n, all.treat, all.counter));
  return out;
}

std::vector<CurvePoint> effect_size_curve(const std::vector<PairTimeline>& timelines,
                                          const std::vector<Window>& windows) {
  std::vector<CurvePoint> out;
  for (const auto& w : windows) {
    std::vector<double> ratios;
    for (const auto& row : treatment_effect(timelines, w))
      if (row.category != "all" && std::isfinite(row.ratio)) ratios.push_back(row.ratio);
    CurvePoint p;
    p.window = w;
    p.n_categories = ratios.size();
    if (!ratios.empty()) {
      p.mean_ratio = stats::mean(ratios);
      p.standard_error = stats::standard_error(ratios);
    } else {
      p.mean_ratio = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace peripatos
