#include "peripatos/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "peripatos/log.hpp"

namespace peripatos {

using nlohmann::json;

std::string_view to_string(PostKind kind) {
  return kind == PostKind::comment ? "comment" : "submission";
}

namespace {

bool timeline_less(const Post& a, const Post& b) {
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  return a.post_id < b.post_id;
}

const std::vector<std::size_t>& empty_positions() {
  static const std::vector<std::size_t> empty;
  return empty;
}

}  // namespace

Corpus::Corpus(std::vector<Post> posts) {
  // Last occurrence of a duplicated id wins.
  std::unordered_map<std::string, std::size_t> last;
  last.reserve(posts.size());
  for (std::size_t i = 0; i < posts.size(); ++i) last[posts[i].post_id] = i;
  if (last.size() != posts.size()) {
    duplicates_dropped_ = posts.size() - last.size();
    log::warning(fmt::format("{} duplicate post ids; keeping last occurrence",
                             duplicates_dropped_));
    std::vector<Post> unique;
    unique.reserve(last.size());
    for (std::size_t i = 0; i < posts.size(); ++i)
      if (last[posts[i].post_id] == i) unique.push_back(std::move(posts[i]));
    posts = std::move(unique);
  }
  std::sort(posts.begin(), posts.end(), timeline_less);
  posts_ = std::move(posts);

  by_id_.reserve(posts_.size());
  for (std::size_t i = 0; i < posts_.size(); ++i) {
    const Post& p = posts_[i];
    by_id_.emplace(p.post_id, i);
    user_index_[p.author].push_back(i);
    community_index_[p.community].push_back(i);
  }
}

const Post* Corpus::find(std::string_view post_id) const {
  auto it = by_id_.find(std::string(post_id));
  return it == by_id_.end() ? nullptr : &posts_[it->second];
}

const std::vector<std::size_t>& Corpus::timeline(const std::string& author) const {
  auto it = user_index_.find(author);
  return it == user_index_.end() ? empty_positions() : it->second;
}

const std::vector<std::size_t>& Corpus::community_posts(
    const std::string& community) const {
  auto it = community_index_.find(community);
  return it == community_index_.end() ? empty_positions() : it->second;
}

std::vector<std::string> Corpus::communities() const {
  std::vector<std::string> out;
  out.reserve(community_index_.size());
  for (const auto& [c, _] : community_index_) out.push_back(c);
  return out;
}

std::vector<std::string> Corpus::authors() const {
  std::vector<std::string> out;
  out.reserve(user_index_.size());
  for (const auto& [a, _] : user_index_) out.push_back(a);
  return out;
}

std::size_t Corpus::distinct_authors(const std::string& community) const {
  std::set<std::string_view> seen;
  for (std::size_t i : community_posts(community)) seen.insert(posts_[i].author);
  return seen.size();
}

std::vector<CommunityMeta> community_meta(
    const Corpus& corpus, const std::set<std::string>& hate_candidates) {
  std::vector<CommunityMeta> out;
  for (const auto& c : corpus.communities())
    out.push_back({c, corpus.distinct_authors(c), hate_candidates.contains(c)});
  return out;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

std::optional<std::string> string_field(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  return std::nullopt;
}

std::optional<std::int64_t> integer_field(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (it->is_number_integer()) return it->get<std::int64_t>();
  if (it->is_number_float()) return static_cast<std::int64_t>(it->get<double>());
  if (it->is_string()) {
    const auto& s = it->get_ref<const std::string&>();
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size()) return static_cast<std::int64_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

// Returns a reason string on failure.
std::optional<std::string> parse_post(const json& obj, const FieldSchema& schema,
                                      Post& out) {
  if (!obj.is_object()) return "not a JSON object";
  auto id = string_field(obj, schema.id);
  if (!id || id->empty()) return fmt::format("missing '{}'", schema.id);
  auto author = string_field(obj, schema.author);
  if (!author || author->empty()) return fmt::format("missing '{}'", schema.author);
  auto community = string_field(obj, schema.community);
  if (!community || community->empty())
    return fmt::format("missing '{}'", schema.community);
  auto ts = integer_field(obj, schema.timestamp);
  if (!ts) return fmt::format("missing '{}'", schema.timestamp);
  if (*ts <= 0) return "non-positive timestamp";

  auto body = string_field(obj, schema.body);
  auto title = string_field(obj, schema.title);
  auto selftext = string_field(obj, schema.selftext);

  std::optional<PostKind> kind;
  if (auto k = string_field(obj, schema.kind)) {
    if (*k == "comment") kind = PostKind::comment;
    else if (*k == "submission") kind = PostKind::submission;
    else return fmt::format("unknown kind '{}'", *k);
  } else if (body) {
    kind = PostKind::comment;
  } else if (title) {
    kind = PostKind::submission;
  } else {
    return "record has neither body nor title";
  }

  std::string text;
  if (body) {
    text = *body;
  } else if (title) {
    text = *title;
    if (selftext && !selftext->empty()) text += " " + *selftext;
  } else if (selftext) {
    text = *selftext;
  }

  out.post_id = std::move(*id);
  out.author = std::move(*author);
  out.community = std::move(*community);
  out.timestamp = *ts;
  out.kind = *kind;
  out.text = std::move(text);
  out.parent_id = std::nullopt;
  if (out.kind == PostKind::comment) {
    if (auto parent = string_field(obj, schema.parent_id); parent && !parent->empty())
      out.parent_id = std::move(*parent);
  }
  out.karma = integer_field(obj, schema.karma).value_or(0);
  return std::nullopt;
}

IngestResult ingest_stream(std::istream& in, const FieldSchema& schema) {
  IngestReport report;
  std::vector<Post> posts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(),
                    [](unsigned char c) { return std::isspace(c); }))
      continue;
    ++report.lines;
    Post post;
    std::optional<std::string> reason;
    try {
      reason = parse_post(json::parse(line), schema, post);
    } catch (const json::exception& e) {
      reason = fmt::format("invalid JSON ({})", e.what());
    }
    if (reason) {
      ++report.malformed;
      if (report.diagnostics.size() < 20)
        report.diagnostics.push_back(fmt::format("line {}: {}", line_no, *reason));
      continue;
    }
    posts.push_back(std::move(post));
  }
  if (report.lines > 0 && report.malformed * 10 > report.lines) {
    std::string msg = fmt::format("{} of {} lines malformed (limit 10%)",
                                  report.malformed, report.lines);
    for (const auto& d : report.diagnostics) msg += "\n  " + d;
    throw Error(msg);
  }
  if (report.malformed > 0)
    log::warning(fmt::format("skipped {} malformed lines", report.malformed));
  Corpus corpus(std::move(posts));
  report.duplicates = corpus.duplicates_dropped();
  return {std::move(corpus), std::move(report)};
}

}  // namespace

IngestResult ingest_events(const std::filesystem::path& path,
                           const FieldSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot read events file '{}'", path.string()));
  return ingest_stream(in, schema);
}

IngestResult ingest_events_from_string(std::string_view jsonl,
                                       const FieldSchema& schema) {
  std::istringstream in{std::string(jsonl)};
  return ingest_stream(in, schema);
}

void serialize_jsonl(const Corpus& corpus, std::ostream& out) {
  const FieldSchema schema;
  for (const Post& p : corpus.posts()) {
    json obj;
    obj[schema.id] = p.post_id;
    obj[schema.author] = p.author;
    obj[schema.community] = p.community;
    obj[schema.timestamp] = p.timestamp;
    obj[schema.kind] = std::string(to_string(p.kind));
    obj[schema.body] = p.text;
    if (p.parent_id) obj[schema.parent_id] = *p.parent_id;
    obj[schema.karma] = p.karma;
    out << obj.dump() << '\n';
  }
}

void serialize_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  serialize_jsonl(corpus, out);
}

// ---------------------------------------------------------------------------
// Filters

bool looks_like_bot(std::string_view author) {
  static constexpr std::array<std::string_view, 6> kKeywords = {
      "bot", "auto", "transcriber", "gif", "link", "twitter"};
  std::string lower(author);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::any_of(kKeywords.begin(), kKeywords.end(), [&](std::string_view k) {
    return lower.find(k) != std::string::npos;
  });
}

Corpus filter_bots(const Corpus& corpus) {
  std::vector<Post> kept;
  kept.reserve(corpus.size());
  for (const Post& p : corpus.posts())
    if (!looks_like_bot(p.author)) kept.push_back(p);
  return Corpus(std::move(kept));
}

Corpus filter_small_communities(const Corpus& corpus, std::size_t min_users,
                                const std::set<std::string>* scope) {
  if (min_users < 1) throw Error("min_users must be at least 1");
  std::set<std::string> dropped;
  for (const auto& c : corpus.communities()) {
    if (scope && !scope->contains(c)) continue;
    if (corpus.distinct_authors(c) < min_users) dropped.insert(c);
  }
  if (dropped.empty()) return corpus;
  std::vector<Post> kept;
  kept.reserve(corpus.size());
  for (const Post& p : corpus.posts())
    if (!dropped.contains(p.community)) kept.push_back(p);
  return Corpus(std::move(kept));
}

// ---------------------------------------------------------------------------
// Text cleaning

namespace {

bool starts_with_ci(std::string_view s, std::size_t pos, std::string_view prefix) {
  if (s.size() - pos < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(s[pos + i])) != prefix[i]) return false;
  return true;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::optional<std::string> clean_text(std::string_view text) {
  std::string stripped;
  stripped.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const bool token_start = i == 0 || is_space(text[i - 1]) || text[i - 1] == '(';
    if (token_start && (starts_with_ci(text, i, "http://") ||
                        starts_with_ci(text, i, "https://") ||
                        starts_with_ci(text, i, "www."))) {
      while (i < text.size() && !is_space(text[i])) ++i;
      stripped.push_back(' ');
      continue;
    }
    if (text.substr(i, 9) == "[deleted]" || text.substr(i, 9) == "[removed]") {
      i += 9;
      stripped.push_back(' ');
      continue;
    }
    stripped.push_back(text[i]);
    ++i;
  }
  std::string out;
  out.reserve(stripped.size());
  for (char c : stripped) {
    if (is_space(c)) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  if (out.empty()) return std::nullopt;
  return out;
}

// ---------------------------------------------------------------------------
// Sampling and statistics

std::vector<std::string> sample_batches(const Corpus& corpus,
                                        const std::string& community,
                                        std::size_t n_comments,
                                        std::size_t n_submissions,
                                        std::uint64_t seed) {
  const auto& positions = corpus.community_posts(community);
  if (positions.empty())
    throw Error(fmt::format("unknown community '{}'", community));
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  for (PostKind kind : {PostKind::comment, PostKind::submission}) {
    std::vector<std::size_t> pool;
    for (std::size_t i : positions)
      if (corpus.posts()[i].kind == kind) pool.push_back(i);
    const std::size_t want = kind == PostKind::comment ? n_comments : n_submissions;
    const std::size_t take = std::min(want, pool.size());
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(take);
    std::sort(pool.begin(), pool.end());
    for (std::size_t i : pool) out.push_back(corpus.posts()[i].post_id);
  }
  return out;
}

std::vector<ClusterStats> corpus_stats(
    const Corpus& corpus, const std::map<std::string, std::string>& cluster_of) {
  struct Acc {
    std::set<std::string> communities;
    std::set<std::string> users;
    std::size_t comments = 0;
    std::size_t submissions = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& [community, cluster] : cluster_of) {
    Acc& a = acc[cluster];
    a.communities.insert(community);
    for (std::size_t i : corpus.community_posts(community)) {
      const Post& p = corpus.posts()[i];
      a.users.insert(p.author);
      (p.kind == PostKind::comment ? a.comments : a.submissions) += 1;
    }
  }
  std::vector<ClusterStats> out;
  for (const auto& [name, a] : acc) {
    ClusterStats s;
    s.cluster = name;
    s.n_communities = a.communities.size();
    s.n_users = a.users.size();
    s.n_comments = a.comments;
    s.n_submissions = a.submissions;
    if (s.n_users > 0) {
      s.avg_comments_per_user = static_cast<double>(a.comments) / s.n_users;
      s.avg_submissions_per_user = static_cast<double>(a.submissions) / s.n_users;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace peripatos
