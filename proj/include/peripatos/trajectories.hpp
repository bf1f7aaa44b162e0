#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "peripatos/common.hpp"
#include "peripatos/corpus.hpp"

namespace peripatos {

/// community -> category name. Communities absent from the map are not
/// hate communities.
using CategoryMap = std::map<std::string, std::string>;

/// A user's first post in one hate community.
struct HateEvent {
  std::string user;
  std::string community;
  std::string category;
  Timestamp timestamp = 0;
  std::string post_id;
};

/// Per user, one event per hate community ordered by (timestamp, post_id).
using UserEvents = std::map<std::string, std::vector<HateEvent>>;

UserEvents first_hate_events(const Corpus& corpus, const CategoryMap& category_of);

struct PeripateticLabel {
  std::string user;
  std::string origin_category;
  std::string origin_community;
  Timestamp origin_time = 0;
  /// Every other category the user ever entered, with its first-entry time.
  std::map<std::string, Timestamp> destinations;
  /// First entry into a different community of the origin category.
  std::optional<Timestamp> rejoin_time;
  Window window = Window::six_weeks();
  bool is_peripatetic = false;

  /// Destination categories entered within the window.
  std::vector<std::string> destinations_within() const;
  /// Earliest destination entry within the window.
  std::optional<Timestamp> first_move_time() const;
  bool rejoined_within() const;
};

/// One label per user with at least one event, ordered by user.
std::vector<PeripateticLabel> label_peripatetic(const UserEvents& events, const Window& window);

struct TransitionMatrix {
  std::vector<std::string> categories;
  /// counts[o][d]: users with origin o who entered d within the window. The
  /// diagonal counts re-joins of a different same-category community.
  std::vector<std::vector<std::int64_t>> counts;
  /// Empty until filled by pa_null_ratios. Rows of origins without movers
  /// are nullopt throughout.
  std::vector<std::vector<std::optional<double>>> ratios;

  std::size_t index_of(const std::string& category) const;
};

/// `categories` fixes the row and column order; labels with categories
/// outside it throw.
TransitionMatrix transition_counts(const std::vector<PeripateticLabel>& labels,
                                   const std::vector<std::string>& categories);

/// Distinct users with a post in any community of each category.
std::map<std::string, std::int64_t> category_user_counts(const Corpus& corpus,
                                                         const CategoryMap& category_of);

/// Observed destination share of o's movers divided by the share a
/// size-proportional choice among the other categories would give. The
/// diagonal uses the same denominators. With `include_origin` the origin
/// joins both denominators. Throws when a category has no users.
void pa_null_ratios(TransitionMatrix& matrix, const std::map<std::string, std::int64_t>& users,
                    bool include_origin = false);

/// Positions of the user's posts in origin-category communities that fall in
/// `early` measured from the origin time and precede any other-category
/// entry. An unbounded `early` keeps every such post.
std::vector<std::size_t> early_origin_posts(const Corpus& corpus, const CategoryMap& category_of,
                                            const PeripateticLabel& label, const Window& early);

struct ActivityChange {
  std::string user;
  std::int64_t gap_seconds = 0;
  std::int64_t posts_before = 0;
  std::int64_t posts_after = 0;
  double rate_before = 0.0;  ///< posts per day
  double rate_after = 0.0;
  /// after / before; nullopt when there were no posts before.
  std::optional<double> ratio;
};

/// For each peripatetic user, post rates over [move - gap, move) and
/// [move, move + gap) where gap = move - origin time. Zero gaps are skipped.
std::vector<ActivityChange> activity_change(const Corpus& corpus,
                                            const std::vector<PeripateticLabel>& labels);

}  // namespace peripatos
