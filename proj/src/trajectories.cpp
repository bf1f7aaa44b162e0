#include "peripatos/trajectories.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include <fmt/format.h>

namespace peripatos {

UserEvents first_hate_events(const Corpus& corpus, const CategoryMap& category_of) {
  UserEvents out;
  for (const auto& [user, positions] : corpus.user_index()) {
    std::set<std::string> seen;
    std::vector<HateEvent> events;
    // Timelines are already in (timestamp, post_id) order.
    for (auto pos : positions) {
      const auto& post = corpus.posts()[pos];
      auto it = category_of.find(post.community);
      if (it == category_of.end() || !seen.insert(post.community).second) continue;
      events.push_back({user, post.community, it->second, post.timestamp, post.post_id});
    }
    if (!events.empty()) out.emplace(user, std::move(events));
  }
  return out;
}

std::vector<std::string> PeripateticLabel::destinations_within() const {
  std::vector<std::string> out;
  for (const auto& [category, t] : destinations)
    if (window.admits(t - origin_time)) out.push_back(category);
  return out;
}

std::optional<Timestamp> PeripateticLabel::first_move_time() const {
  std::optional<Timestamp> best;
  for (const auto& [category, t] : destinations)
    if (window.admits(t - origin_time) && (!best || t < *best)) best = t;
  return best;
}

bool PeripateticLabel::rejoined_within() const {
  return rejoin_time && window.admits(*rejoin_time - origin_time);
}

std::vector<PeripateticLabel> label_peripatetic(const UserEvents& events, const Window& window) {
  std::vector<PeripateticLabel> out;
  out.reserve(events.size());
  for (const auto& [user, list] : events) {
    if (list.empty()) continue;
    const auto& origin = list.front();
    PeripateticLabel label;
    label.user = user;
    label.origin_category = origin.category;
    label.origin_community = origin.community;
    label.origin_time = origin.timestamp;
    label.window = window;
    for (std::size_t i = 1; i < list.size(); ++i) {
      const auto& e = list[i];
      if (e.category == origin.category) {
        if (!label.rejoin_time) label.rejoin_time = e.timestamp;
      } else {
        label.destinations.emplace(e.category, e.timestamp);  // first entry wins
      }
    }
    label.is_peripatetic = label.first_move_time().has_value();
    out.push_back(std::move(label));
  }
  return out;
}

std::size_t TransitionMatrix::index_of(const std::string& category) const {
  auto it = std::find(categories.begin(), categories.end(), category);
  if (it == categories.end()) throw Error(fmt::format("unknown category '{}'", category));
  return static_cast<std::size_t>(it - categories.begin());
}

TransitionMatrix transition_counts(const std::vector<PeripateticLabel>& labels,
                                   const std::vector<std::string>& categories) {
  TransitionMatrix m;
  m.categories = categories;
  const auto k = categories.size();
  m.counts.assign(k, std::vector<std::int64_t>(k, 0));
  for (const auto& label : labels) {
    const auto o = m.index_of(label.origin_category);
    for (const auto& d : label.destinations_within()) ++m.counts[o][m.index_of(d)];
    if (label.rejoined_within()) ++m.counts[o][o];
  }
  return m;
}

std::map<std::string, std::int64_t> category_user_counts(const Corpus& corpus,
                                                         const CategoryMap& category_of) {
  std::map<std::string, std::set<std::string>> users;
  for (const auto& [community, category] : category_of) {
    auto& set = users[category];
    for (auto pos : corpus.community_posts(community)) set.insert(corpus.posts()[pos].author);
  }
  std::map<std::string, std::int64_t> out;
  for (const auto& [category, set] : users)
    out[category] = static_cast<std::int64_t>(set.size());
  return out;
}

void pa_null_ratios(TransitionMatrix& matrix, const std::map<std::string, std::int64_t>& users,
                    bool include_origin) {
  const auto k = matrix.categories.size();
  std::vector<double> size(k);
  for (std::size_t d = 0; d < k; ++d) {
    auto it = users.find(matrix.categories[d]);
    if (it == users.end() || it->second <= 0)
      throw Error(fmt::format("category '{}' has no users", matrix.categories[d]));
    size[d] = static_cast<double>(it->second);
  }
  double all_users = 0.0;
  for (double s : size) all_users += s;

  matrix.ratios.assign(k, std::vector<std::optional<double>>(k));
  for (std::size_t o = 0; o < k; ++o) {
    double moves = 0.0;
    for (std::size_t d = 0; d < k; ++d)
      if (d != o || include_origin) moves += static_cast<double>(matrix.counts[o][d]);
    if (moves <= 0.0) continue;
    const double null_total = include_origin ? all_users : all_users - size[o];
    if (null_total <= 0.0) continue;
    for (std::size_t d = 0; d < k; ++d) {
      const double observed = static_cast<double>(matrix.counts[o][d]) / moves;
      const double expected = size[d] / null_total;
      matrix.ratios[o][d] = observed / expected;
    }
  }
}

std::vector<std::size_t> early_origin_posts(const Corpus& corpus, const CategoryMap& category_of,
                                            const PeripateticLabel& label, const Window& early) {
  std::optional<Timestamp> stop;
  for (const auto& [_, entry] : label.destinations)
    if (!stop || entry < *stop) stop = entry;
  std::vector<std::size_t> out;
  for (auto pos : corpus.timeline(label.user)) {
    const auto& post = corpus.posts()[pos];
    if (stop && post.timestamp >= *stop) break;
    const auto delay = post.timestamp - label.origin_time;
    if (delay < 0) continue;
    if (!early.admits(delay)) break;
    auto it = category_of.find(post.community);
    if (it != category_of.end() && it->second == label.origin_category) out.push_back(pos);
  }
  return out;
}

std::vector<ActivityChange> activity_change(const Corpus& corpus,
                                            const std::vector<PeripateticLabel>& labels) {
  std::vector<ActivityChange> out;
  for (const auto& label : labels) {
    if (!label.is_peripatetic) continue;
    const auto move = label.first_move_time();
    if (!move) continue;
    const std::int64_t gap = *move - label.origin_time;
    if (gap <= 0) continue;
    ActivityChange row;
    row.user = label.user;
    row.gap_seconds = gap;
    for (auto pos : corpus.timeline(label.user)) {
      const auto t = corpus.posts()[pos].timestamp;
      if (t >= *move - gap && t < *move) ++row.posts_before;
      else if (t >= *move && t < *move + gap) ++row.posts_after;
    }
    const double days = static_cast<double>(gap) / static_cast<double>(kSecondsPerDay);
    row.rate_before = static_cast<double>(row.posts_before) / days;
    row.rate_after = static_cast<double>(row.posts_after) / days;
    if (row.posts_before > 0) row.ratio = row.rate_after / row.rate_before;
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace peripatos
