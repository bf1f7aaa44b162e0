#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "peripatos/common.hpp"

namespace peripatos {

enum class PostKind { comment, submission };

std::string_view to_string(PostKind kind);

struct Post {
  std::string post_id;
  std::string author;
  std::string community;
  Timestamp timestamp = 0;
  PostKind kind = PostKind::comment;
  std::string text;
  std::optional<std::string> parent_id;
  std::int64_t karma = 0;

  friend bool operator==(const Post&, const Post&) = default;
};

/// Immutable, indexed collection of posts. Posts are stored sorted by
/// (timestamp, post_id); every index refers to positions in `posts()`.
class Corpus {
 public:
  Corpus() = default;

  /// Duplicate post ids keep the last occurrence; the number of dropped
  /// duplicates is available through `duplicates_dropped()`.
  explicit Corpus(std::vector<Post> posts);

  const std::vector<Post>& posts() const { return posts_; }
  std::size_t size() const { return posts_.size(); }
  bool empty() const { return posts_.empty(); }

  const Post* find(std::string_view post_id) const;

  /// Positions of a user's posts in (timestamp, post_id) order. Empty for
  /// unknown users.
  const std::vector<std::size_t>& timeline(const std::string& author) const;
  /// Positions of a community's posts in (timestamp, post_id) order.
  const std::vector<std::size_t>& community_posts(
      const std::string& community) const;

  const std::map<std::string, std::vector<std::size_t>>& user_index() const {
    return user_index_;
  }
  const std::map<std::string, std::vector<std::size_t>>& community_index()
      const {
    return community_index_;
  }

  std::vector<std::string> communities() const;
  std::vector<std::string> authors() const;
  std::size_t distinct_authors(const std::string& community) const;

  std::size_t duplicates_dropped() const { return duplicates_dropped_; }

 private:
  std::vector<Post> posts_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<std::string, std::vector<std::size_t>> user_index_;
  std::map<std::string, std::vector<std::size_t>> community_index_;
  std::size_t duplicates_dropped_ = 0;
};

struct CommunityMeta {
  std::string community;
  std::size_t n_users = 0;
  bool is_hate_candidate = false;
};

std::vector<CommunityMeta> community_meta(
    const Corpus& corpus, const std::set<std::string>& hate_candidates);

/// Field names used when reading JSONL event dumps.
struct FieldSchema {
  std::string id = "id";
  std::string author = "author";
  std::string community = "subreddit";
  std::string timestamp = "created_utc";
  std::string body = "body";
  std::string title = "title";
  std::string selftext = "selftext";
  std::string parent_id = "parent_id";
  std::string karma = "score";
  /// Optional explicit kind field ("comment" / "submission"). When absent,
  /// records carrying `body` are comments and records carrying `title` are
  /// submissions.
  std::string kind = "kind";
};

struct IngestReport {
  std::size_t lines = 0;
  std::size_t malformed = 0;
  std::size_t duplicates = 0;
  /// First few diagnostics, "line N: reason".
  std::vector<std::string> diagnostics;
};

struct IngestResult {
  Corpus corpus;
  IngestReport report;
};

/// Reads one JSON object per line. Blank lines are ignored. Throws Error if
/// the file cannot be read or more than 10% of non-blank lines are malformed.
IngestResult ingest_events(const std::filesystem::path& path,
                           const FieldSchema& schema = {});
IngestResult ingest_events_from_string(std::string_view jsonl,
                                       const FieldSchema& schema = {});

/// Writes the corpus with the default schema plus an explicit kind field so
/// that ingest_events reproduces it exactly.
void serialize_jsonl(const Corpus& corpus, std::ostream& out);
void serialize_jsonl(const Corpus& corpus, const std::filesystem::path& path);

/// Case-insensitive substring match against the bot keyword list.
bool looks_like_bot(std::string_view author);
Corpus filter_bots(const Corpus& corpus);

/// Drops communities with fewer than `min_users` distinct authors. When
/// `scope` is given only communities in it are candidates for removal.
Corpus filter_small_communities(
    const Corpus& corpus, std::size_t min_users = 1000,
    const std::set<std::string>* scope = nullptr);

/// Strips URLs and the literal "[deleted]" / "[removed]" markers and
/// collapses whitespace. Returns nullopt when nothing remains.
std::optional<std::string> clean_text(std::string_view text);

/// Uniform sample without replacement, per kind, of a community's posts.
/// Returns post ids ordered comments first, each kind in timeline order.
std::vector<std::string> sample_batches(const Corpus& corpus,
                                        const std::string& community,
                                        std::size_t n_comments,
                                        std::size_t n_submissions,
                                        std::uint64_t seed);

struct ClusterStats {
  std::string cluster;
  std::size_t n_communities = 0;
  std::size_t n_users = 0;
  std::size_t n_comments = 0;
  std::size_t n_submissions = 0;
  double avg_comments_per_user = 0.0;
  double avg_submissions_per_user = 0.0;
};

/// One row per cluster name appearing in `cluster_of`, sorted by name.
std::vector<ClusterStats> corpus_stats(
    const Corpus& corpus, const std::map<std::string, std::string>& cluster_of);

}  // namespace peripatos
