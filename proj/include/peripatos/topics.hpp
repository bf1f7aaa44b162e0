#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "peripatos/lexicon.hpp"

namespace peripatos {

/// Document id -> unit-norm vector of a fixed dimension.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  bool contains(const std::string& id) const { return index_.count(id) > 0; }

  /// Throws on a dimension mismatch, a norm outside 1 +- 1e-6, or a repeated
  /// id.
  void add(const std::string& id, const Eigen::VectorXd& v);
  /// Throws for unknown ids.
  Eigen::VectorXd get(const std::string& id) const;

  /// CSV: header "doc_id,v0,...", one row per document.
  static EmbeddingStore load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;
  /// Packed little-endian binary: "PEMB", u32 version, u64 dim, u64 count,
  /// then per document u32 id length, id bytes, dim f64 values.
  static EmbeddingStore load_binary(const std::filesystem::path& path);
  void save_binary(const std::filesystem::path& path) const;

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> data_;
};

/// Signed feature hashing of tokens and adjacent-token bigrams, L2
/// normalised. Texts without tokens map to the first basis vector.
Eigen::VectorXd fallback_embed(std::string_view text, std::size_t dim = 768,
                               std::uint64_t seed = 0);

struct Topic {
  int id = 0;
  Eigen::VectorXd centroid;
  TermCounts term_counts;
  /// Highest c-TF-IDF terms, best first.
  std::vector<std::pair<std::string, double>> representation;
  std::size_t post_count = 0;
  /// Communities whose models contributed this topic.
  std::set<std::string> sources;
};

struct TopicModel {
  std::vector<Topic> topics;
  std::vector<std::string> doc_ids;
  /// Topic id per document; -1 marks an outlier.
  std::vector<int> assignment;
  /// Stopword-free token counts per document.
  std::vector<TermCounts> doc_terms;

  std::size_t outliers() const;
};

struct TopicOptions {
  int k_min = 2;
  int k_max = 15;
  double outlier_sim = 0.3;
  std::uint64_t seed = 0;
  int restarts = 5;
  int max_iter = 100;
  std::size_t representation_size = 10;
};

/// Spherical k-means over the documents' embeddings with k chosen by cosine
/// silhouette. Fewer than 2 * k_min documents, or fewer than two distinct
/// vectors, give a single topic. Throws when a document has no embedding.
TopicModel fit_topics(const EmbeddingStore& store,
                      const std::vector<std::pair<std::string, std::string>>& docs,
                      const std::string& community, const TopicOptions& options = {});

/// W(t, c) = tf(t, c) * ln(1 + A / f(t)), A the mean token count per topic
/// and f(t) the term's total frequency. Stopwords get no weight.
std::vector<std::map<std::string, double>> ctfidf(const std::vector<TermCounts>& topic_terms);

/// Recomputes every topic's representation from its term counts.
void refresh_representations(TopicModel& model, std::size_t size = 10);

/// Assigns each outlier to its most cosine-similar centroid (ties to the
/// lowest topic id) and updates counts and representations.
void reduce_outliers(TopicModel& model, const EmbeddingStore& store,
                     std::size_t representation_size = 10);

/// Merges topics across models by repeatedly joining the most similar pair
/// of clusters whose centroid cosine is at least merge_sim. Topics are put
/// in a canonical order first, so the result does not depend on input
/// order. Merged centroids are post-count weighted means, renormalised.
TopicModel merge_models(const std::vector<TopicModel>& models, double merge_sim = 0.9,
                        std::size_t representation_size = 10);

struct TopicStat {
  int topic = 0;
  std::string label;
  std::size_t post_count = 0;
  ContingencyTable table;  ///< peripatetic in/out of topic, others in/out
  double log_odds = 0.0;
  double p_value = 1.0;
  double p_adjusted = 1.0;
  double coverage = 0.0;
};

struct TopicOdds {
  /// Retained topics, by post count.
  std::vector<TopicStat> rows;
  std::vector<TopicStat> top, bottom;
};

/// Peripatetic vs other posting odds per topic among the top_n topics by
/// post count with coverage (source communities / n_communities) of at
/// least min_coverage. Documents missing from `peripatetic` are ignored.
TopicOdds topic_odds(const TopicModel& model, const std::map<std::string, bool>& peripatetic,
                     std::size_t n_communities, std::size_t top_n = 100,
                     double min_coverage = 0.10, std::size_t extremes = 5);

}  // namespace peripatos
