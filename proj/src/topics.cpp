#include "peripatos/topics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "peripatos/csv.hpp"
#include "peripatos/stats.hpp"
#include "peripatos/text.hpp"

namespace peripatos {

static_assert(std::endian::native == std::endian::little,
              "binary embedding files assume a little-endian host");

void EmbeddingStore::add(const std::string& id, const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != dim_)
    throw Error(fmt::format("embedding '{}' has dimension {}, expected {}", id, v.size(), dim_));
  const double norm = v.norm();
  if (!(std::abs(norm - 1.0) <= 1e-6))
    throw Error(fmt::format("embedding '{}' is not unit norm ({})", id, norm));
  if (!index_.emplace(id, ids_.size()).second)
    throw Error(fmt::format("duplicate embedding id '{}'", id));
  ids_.push_back(id);
  data_.insert(data_.end(), v.data(), v.data() + v.size());
}

Eigen::VectorXd EmbeddingStore::get(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(fmt::format("no embedding for '{}'", id));
  return Eigen::Map<const Eigen::VectorXd>(data_.data() + it->second * dim_,
                                           static_cast<Eigen::Index>(dim_));
}

EmbeddingStore EmbeddingStore::load_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  if (table.header.size() < 2 || table.header[0] != "doc_id")
    throw Error(fmt::format("{}: expected a doc_id column followed by values", path.string()));
  EmbeddingStore store(table.header.size() - 1);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size())
      throw Error(fmt::format("{}: row {} has {} fields", path.string(), r + 2, row.size()));
    Eigen::VectorXd v(static_cast<Eigen::Index>(store.dim_));
    for (std::size_t i = 1; i < row.size(); ++i) {
      try {
        std::size_t used = 0;
        v(static_cast<Eigen::Index>(i - 1)) = std::stod(row[i], &used);
        if (used != row[i].size()) throw std::invalid_argument(row[i]);
      } catch (const std::exception&) {
        throw Error(fmt::format("{}: row {} column {} is not a number", path.string(), r + 2, i));
      }
    }
    store.add(row[0], v);
  }
  return store;
}

void EmbeddingStore::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  csv::Writer w(out);
  std::vector<std::string> header{"doc_id"};
  for (std::size_t i = 0; i < dim_; ++i) header.push_back(fmt::format("v{}", i));
  w.row(header);
  for (std::size_t d = 0; d < ids_.size(); ++d) {
    std::vector<std::string> row{ids_[d]};
    for (std::size_t i = 0; i < dim_; ++i) row.push_back(csv::num(data_[d * dim_ + i]));
    w.row(row);
  }
}

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error("truncated embedding file");
  return v;
}

}  // namespace

void EmbeddingStore::save_binary(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out.write("PEMB", 4);
  put<std::uint32_t>(out, 1);
  put<std::uint64_t>(out, dim_);
  put<std::uint64_t>(out, ids_.size());
  for (std::size_t d = 0; d < ids_.size(); ++d) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ids_[d].size()));
    out.write(ids_[d].data(), static_cast<std::streamsize>(ids_[d].size()));
    out.write(reinterpret_cast<const char*>(data_.data() + d * dim_),
              static_cast<std::streamsize>(dim_ * sizeof(double)));
  }
}

EmbeddingStore EmbeddingStore::load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read {}", path.string()));
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "PEMB", 4) != 0)
    throw Error(fmt::format("{}: not an embedding file", path.string()));
  if (take<std::uint32_t>(in) != 1) throw Error("unsupported embedding file version");
  const auto dim = take<std::uint64_t>(in);
  const auto count = take<std::uint64_t>(in);
  EmbeddingStore store(dim);
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (std::uint64_t d = 0; d < count; ++d) {
    std::string id(take<std::uint32_t>(in), '\0');
    if (!in.read(id.data(), static_cast<std::streamsize>(id.size())) ||
        !in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim * sizeof(double))))
      throw Error("truncated embedding file");
    store.add(id, v);
  }
  return store;
}

Eigen::VectorXd fallback_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error("embedding dimension must be positive");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  const auto tokens = tokenize(text);
  auto feature = [&](std::string_view f) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : f) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    const std::uint64_t mixed = stats::derive_seed(seed, h);
    const auto bucket = static_cast<Eigen::Index>(mixed % dim);
    v(bucket) += (mixed >> 63) ? -1.0 : 1.0;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    feature(tokens[i]);
    if (i + 1 < tokens.size()) feature(tokens[i] + ' ' + tokens[i + 1]);
  }
  const double norm = v.norm();
  if (norm == 0.0) {
    v.setZero();
    v(0) = 1.0;
    return v;
  }
  return v / norm;
}

std::size_t TopicModel::outliers() const {
  return static_cast<std::size_t>(std::count(assignment.begin(), assignment.end(), -1));
}

namespace {

TermCounts doc_term_counts(std::string_view text) {
  TermCounts counts;
  for (auto& t : tokenize(text))
    if (!is_stopword(t)) counts[std::move(t)] += 1.0;
  return counts;
}

struct SphericalRun {
  std::vector<int> assignment;
  Eigen::MatrixXd centroids;
  double objective = -std::numeric_limits<double>::infinity();
};

SphericalRun spherical_kmeans(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng,
                              int max_iter) {
  const Eigen::Index n = x.rows();
  SphericalRun run;
  run.centroids.resize(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  run.centroids.row(0) = x.row(first(rng));
  Eigen::VectorXd d = (1.0 - (x * run.centroids.row(0).transpose()).array()).max(0.0).matrix();
  for (int c = 1; c < k; ++c) {
    const double total = d.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d(i);
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    }
    run.centroids.row(c) = x.row(pick);
    d = d.cwiseMin((1.0 - (x * run.centroids.row(c).transpose()).array()).max(0.0).matrix());
  }
  run.assignment.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::MatrixXd sims = x * run.centroids.transpose();
    bool changed = false;
    double objective = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      objective += sims.row(i).maxCoeff(&best);
      if (run.assignment[static_cast<std::size_t>(i)] != static_cast<int>(best)) changed = true;
      run.assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    run.objective = objective;
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) sums.row(run.assignment[static_cast<std::size_t>(i)]) += x.row(i);
    for (int c = 0; c < k; ++c) {
      const double norm = sums.row(c).norm();
      if (norm > 0.0) run.centroids.row(c) = sums.row(c) / norm;
    }
  }
  return run;
}

double silhouette_from_distances(const Eigen::MatrixXd& dist, const std::vector<int>& assignment,
                                 int k) {
  const auto n = assignment.size();
  std::vector<std::size_t> size(static_cast<std::size_t>(k), 0);
  for (int a : assignment) ++size[static_cast<std::size_t>(a)];
  std::vector<double> sum(static_cast<std::size_t>(k));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(assignment[i]);
    if (size[own] <= 1) continue;
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i)
        sum[static_cast<std::size_t>(assignment[j])] +=
            dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
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

Eigen::VectorXd unit(const Eigen::VectorXd& v, const Eigen::VectorXd& fallback) {
  const double norm = v.norm();
  return norm > 0.0 ? Eigen::VectorXd(v / norm) : fallback;
}

void rebuild_topic_counts(TopicModel& model) {
  for (auto& t : model.topics) {
    t.term_counts.clear();
    t.post_count = 0;
  }
  for (std::size_t d = 0; d < model.doc_ids.size(); ++d) {
    const int a = model.assignment[d];
    if (a < 0) continue;
    auto& topic = model.topics[static_cast<std::size_t>(a)];
    ++topic.post_count;
    for (const auto& [t, c] : model.doc_terms[d]) topic.term_counts[t] += c;
  }
}

}  // namespace

TopicModel fit_topics(const EmbeddingStore& store,
                      const std::vector<std::pair<std::string, std::string>>& docs,
                      const std::string& community, const TopicOptions& options) {
  TopicModel model;
  const auto n = docs.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(store.dim()));
  for (std::size_t i = 0; i < n; ++i) {
    model.doc_ids.push_back(docs[i].first);
    model.doc_terms.push_back(doc_term_counts(docs[i].second));
    x.row(static_cast<Eigen::Index>(i)) = store.get(docs[i].first).transpose();
  }
  if (n == 0) return model;

  std::set<std::vector<double>> distinct;
  for (std::size_t i = 0; i < n && distinct.size() < 2; ++i) {
    const Eigen::VectorXd row = x.row(static_cast<Eigen::Index>(i)).transpose();
    distinct.emplace(row.data(), row.data() + row.size());
  }

  std::vector<int> assignment(n, 0);
  Eigen::MatrixXd centroids;
  const int k_max = std::min<int>(options.k_max, static_cast<int>(n) - 1);
  if (static_cast<int>(n) < 2 * options.k_min || distinct.size() < 2 || k_max < options.k_min) {
    centroids = unit(x.colwise().sum().transpose(), x.row(0).transpose()).transpose();
  } else {
    const Eigen::MatrixXd dist = (1.0 - (x * x.transpose()).array()).max(0.0).matrix();
    double best = -std::numeric_limits<double>::infinity();
    for (int k = options.k_min; k <= k_max; ++k) {
      SphericalRun best_run;
      for (int r = 0; r < std::max(1, options.restarts); ++r) {
        std::mt19937_64 rng(stats::derive_seed(options.seed, static_cast<std::uint64_t>(k * 1000 + r)));
        auto run = spherical_kmeans(x, k, rng, options.max_iter);
        if (run.objective > best_run.objective) best_run = std::move(run);
      }
      const double s = silhouette_from_distances(dist, best_run.assignment, k);
      if (s > best + 1e-12) {
        best = s;
        assignment = best_run.assignment;
        centroids = best_run.centroids;
      }
    }
  }

  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    Topic t;
    t.id = static_cast<int>(c);
    t.centroid = centroids.row(c).transpose();
    t.sources.insert(community);
    model.topics.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double sim =
        x.row(static_cast<Eigen::Index>(i)).dot(centroids.row(assignment[i]));
    model.assignment.push_back(sim < options.outlier_sim ? -1 : assignment[i]);
  }
  rebuild_topic_counts(model);
  refresh_representations(model, options.representation_size);
  return model;
}

std::vector<std::map<std::string, double>> ctfidf(const std::vector<TermCounts>& topic_terms) {
  std::map<std::string, double> freq;
  double tokens = 0.0;
  for (const auto& counts : topic_terms)
    for (const auto& [t, c] : counts) {
      if (is_stopword(t) || c <= 0.0) continue;
      freq[t] += c;
      tokens += c;
    }
  std::vector<std::map<std::string, double>> out(topic_terms.size());
  if (topic_terms.empty()) return out;
  const double avg = tokens / static_cast<double>(topic_terms.size());
  for (std::size_t c = 0; c < topic_terms.size(); ++c)
    for (const auto& [t, tf] : topic_terms[c]) {
      if (is_stopword(t) || tf <= 0.0) continue;
      out[c][t] = tf * std::log(1.0 + avg / freq.at(t));
    }
  return out;
}

void refresh_representations(TopicModel& model, std::size_t size) {
  std::vector<TermCounts> terms;
  for (const auto& t : model.topics) terms.push_back(t.term_counts);
  const auto weights = ctfidf(terms);
  for (std::size_t c = 0; c < model.topics.size(); ++c) {
    std::vector<std::pair<std::string, double>> rep(weights[c].begin(), weights[c].end());
    std::sort(rep.begin(), rep.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (rep.size() > size) rep.resize(size);
    model.topics[c].representation = std::move(rep);
  }
}

void reduce_outliers(TopicModel& model, const EmbeddingStore& store,
                     std::size_t representation_size) {
  if (model.topics.empty()) throw Error("outlier reduction needs at least one topic");
  bool any = false;
  for (std::size_t d = 0; d < model.doc_ids.size(); ++d) {
    if (model.assignment[d] >= 0) continue;
    const Eigen::VectorXd v = store.get(model.doc_ids[d]);
    int best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < model.topics.size(); ++c) {
      const double s = v.dot(model.topics[c].centroid);
      if (s > best_sim) {
        best_sim = s;
        best = static_cast<int>(c);
      }
    }
    model.assignment[d] = best;
    any = true;
  }
  if (!any) return;
  rebuild_topic_counts(model);
  refresh_representations(model, representation_size);
}

TopicModel merge_models(const std::vector<TopicModel>& models, double merge_sim,
                        std::size_t representation_size) {
  // Canonical model order: by smallest source community, then first doc id.
  auto model_key = [](const TopicModel& m) {
    std::string source;
    for (const auto& t : m.topics)
      if (!t.sources.empty() && (source.empty() || *t.sources.begin() < source))
        source = *t.sources.begin();
    return std::make_pair(source, m.doc_ids.empty() ? std::string() : m.doc_ids.front());
  };
  std::vector<std::size_t> order(models.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return model_key(models[a]) < model_key(models[b]);
  });

  struct Cluster {
    Eigen::VectorXd weighted;
    Eigen::VectorXd centroid;
    std::vector<std::pair<std::size_t, int>> members;  // (canonical model, topic id)
  };
  std::vector<Cluster> clusters;
  for (std::size_t mi = 0; mi < order.size(); ++mi) {
    const auto& m = models[order[mi]];
    for (const auto& t : m.topics) {
      if (!clusters.empty() && clusters.front().centroid.size() != t.centroid.size())
        throw Error("topic models use different embedding dimensions");
      const double w = static_cast<double>(std::max<std::size_t>(t.post_count, 1));
      clusters.push_back({w * t.centroid, t.centroid, {{mi, t.id}}});
    }
  }

  const auto n = clusters.size();
  std::vector<char> alive(n, 1);
  Eigen::MatrixXd sim = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n),
                                                  static_cast<Eigen::Index>(n),
                                                  -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          clusters[i].centroid.dot(clusters[j].centroid);
  for (;;) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t bi = n, bj = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[j]) continue;
        const double s = sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (s > best) {
          best = s;
          bi = i;
          bj = j;
        }
      }
    }
    if (bi == n || best < merge_sim) break;
    auto& into = clusters[bi];
    into.weighted += clusters[bj].weighted;
    into.centroid = unit(into.weighted, into.centroid);
    into.members.insert(into.members.end(), clusters[bj].members.begin(),
                        clusters[bj].members.end());
    alive[bj] = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (!alive[k] || k == bi) continue;
      const double s = into.centroid.dot(clusters[k].centroid);
      if (k < bi) sim(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(bi)) = s;
      else sim(static_cast<Eigen::Index>(bi), static_cast<Eigen::Index>(k)) = s;
    }
  }

  TopicModel merged;
  std::map<std::pair<std::size_t, int>, int> remap;
  for (std::size_t i = 0; i < n; ++i) {
    if (!alive[i]) continue;
    Topic t;
    t.id = static_cast<int>(merged.topics.size());
    t.centroid = clusters[i].centroid;
    for (const auto& key : clusters[i].members) {
      remap[key] = t.id;
      const auto& src = models[order[key.first]].topics[static_cast<std::size_t>(key.second)];
      t.sources.insert(src.sources.begin(), src.sources.end());
    }
    merged.topics.push_back(std::move(t));
  }
  for (std::size_t mi = 0; mi < order.size(); ++mi) {
    const auto& m = models[order[mi]];
    for (std::size_t d = 0; d < m.doc_ids.size(); ++d) {
      merged.doc_ids.push_back(m.doc_ids[d]);
      merged.doc_terms.push_back(m.doc_terms[d]);
      const int a = m.assignment[d];
      merged.assignment.push_back(a < 0 ? -1 : remap.at({mi, a}));
    }
  }
  rebuild_topic_counts(merged);
  refresh_representations(merged, representation_size);
  return merged;
}

TopicOdds topic_odds(const TopicModel& model, const std::map<std::string, bool>& peripatetic,
                     std::size_t n_communities, std::size_t top_n, double min_coverage,
                     std::size_t extremes) {
  if (n_communities == 0) throw Error("topic odds need a positive community count");
  const auto k = model.topics.size();
  std::vector<std::int64_t> in_peri(k, 0), in_other(k, 0);
  std::int64_t total_peri = 0, total_other = 0;
  for (std::size_t d = 0; d < model.doc_ids.size(); ++d) {
    auto it = peripatetic.find(model.doc_ids[d]);
    if (it == peripatetic.end()) continue;
    (it->second ? total_peri : total_other) += 1;
    const int a = model.assignment[d];
    if (a >= 0) (it->second ? in_peri : in_other)[static_cast<std::size_t>(a)] += 1;
  }

  std::vector<std::size_t> ranked(k);
  std::iota(ranked.begin(), ranked.end(), 0);
  std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    return model.topics[a].post_count > model.topics[b].post_count;
  });
  if (ranked.size() > top_n) ranked.resize(top_n);

  TopicOdds out;
  for (auto c : ranked) {
    const auto& topic = model.topics[c];
    TopicStat s;
    s.topic = topic.id;
    s.coverage = static_cast<double>(topic.sources.size()) / static_cast<double>(n_communities);
    if (s.coverage < min_coverage) continue;
    for (std::size_t i = 0; i < topic.representation.size() && i < 3; ++i)
      s.label += (i ? "_" : "") + topic.representation[i].first;
    s.post_count = topic.post_count;
    s.table = {in_peri[c], total_peri - in_peri[c], in_other[c], total_other - in_other[c]};
    s.log_odds = std::log(odds_ratio(s.table));
    s.p_value = fisher_exact(s.table);
    out.rows.push_back(std::move(s));
  }
  std::vector<double> p;
  for (const auto& r : out.rows) p.push_back(r.p_value);
  const auto adjusted = bh_adjust(p);
  for (std::size_t i = 0; i < out.rows.size(); ++i) out.rows[i].p_adjusted = adjusted[i];

  std::vector<TopicStat> by_odds = out.rows;
  std::stable_sort(by_odds.begin(), by_odds.end(),
                   [](const auto& a, const auto& b) { return a.log_odds > b.log_odds; });
  for (std::size_t i = 0; i < by_odds.size() && i < extremes; ++i) out.top.push_back(by_odds[i]);
  for (std::size_t i = 0; i < by_odds.size() && i < extremes; ++i)
    out.bottom.push_back(by_odds[by_odds.size() - 1 - i]);
  return out;
}

}  // namespace peripatos
