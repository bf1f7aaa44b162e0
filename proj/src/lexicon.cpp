#include "peripatos/lexicon.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "peripatos/log.hpp"
#include "peripatos/text.hpp"

namespace peripatos {

TermCounts count_terms(const std::vector<std::string>& texts) {
  TermCounts counts;
  for (const auto& text : texts)
    for (auto& token : tokenize(text)) counts[std::move(token)] += 1.0;
  return counts;
}

std::vector<std::pair<std::string, double>> SageModel::top_terms(std::size_t n) const {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (eta[i] > 0.0) out.emplace_back(vocab[i], eta[i]);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (out.size() > n) out.resize(n);
  return out;
}

namespace {

struct SageProblem {
  std::vector<double> counts, m;
  double total = 0.0;
  double lambda = 0.0;

  // Negative log-likelihood and, optionally, its gradient.
  double smooth(const std::vector<double>& eta, std::vector<double>* grad) const {
    double max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < eta.size(); ++i) max = std::max(max, m[i] + eta[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < eta.size(); ++i) z += std::exp(m[i] + eta[i] - max);
    const double log_z = max + std::log(z);
    double nll = total * log_z;
    for (std::size_t i = 0; i < eta.size(); ++i) nll -= counts[i] * (m[i] + eta[i]);
    if (grad) {
      grad->resize(eta.size());
      for (std::size_t i = 0; i < eta.size(); ++i)
        (*grad)[i] = total * std::exp(m[i] + eta[i] - log_z) - counts[i];
    }
    return nll;
  }

  double penalty(const std::vector<double>& eta) const {
    double s = 0.0;
    for (double e : eta) s += std::abs(e);
    return lambda * s;
  }
};

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

}  // namespace

SageModel fit_sage(const TermCounts& target, const TermCounts& background,
                   const SageOptions& options) {
  if (options.lambda < 0.0) throw Error("lambda must be non-negative");
  if (options.smoothing <= 0.0) throw Error("background smoothing must be positive");
  SageModel model;
  model.lambda = options.lambda;
  std::set<std::string> vocab;
  for (const auto& [t, c] : target)
    if (c > 0.0) vocab.insert(t);
  for (const auto& [t, c] : background)
    if (c > 0.0) vocab.insert(t);
  if (vocab.empty()) throw Error("SAGE needs a non-empty vocabulary");
  model.vocab.assign(vocab.begin(), vocab.end());

  SageProblem prob;
  prob.lambda = options.lambda;
  const auto v = model.vocab.size();
  prob.counts.resize(v);
  prob.m.resize(v);
  double bg_total = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    auto it = background.find(model.vocab[i]);
    const double seen = it == background.end() ? 0.0 : it->second;
    const double b = seen > 0.0 ? seen : options.smoothing;
    prob.m[i] = b;
    bg_total += b;
    auto jt = target.find(model.vocab[i]);
    prob.counts[i] = jt == target.end() ? 0.0 : jt->second;
    prob.total += prob.counts[i];
  }
  for (auto& x : prob.m) x = std::log(x / bg_total);
  model.m = prob.m;
  model.eta.assign(v, 0.0);
  if (prob.total <= 0.0) {
    model.converged = true;
    model.objective.push_back(0.0);
    return model;
  }

  std::vector<double> eta(v, 0.0), grad, next(v);
  double f = prob.smooth(eta, &grad);
  double objective = f + prob.penalty(eta);
  model.objective.push_back(objective);
  // The smooth part's curvature is bounded by the token total.
  double step = 1.0 / prob.total;
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    model.iterations = iter;
    double f_next = 0.0;
    for (int tries = 0; tries < 60; ++tries) {
      double lin = 0.0, quad = 0.0;
      for (std::size_t i = 0; i < v; ++i) {
        next[i] = soft_threshold(eta[i] - step * grad[i], step * options.lambda);
        const double d = next[i] - eta[i];
        lin += grad[i] * d;
        quad += d * d;
      }
      f_next = prob.smooth(next, nullptr);
      if (f_next <= f + lin + quad / (2.0 * step) + 1e-12 * std::abs(f)) break;
      step *= 0.5;
    }
    const double obj_next = f_next + prob.penalty(next);
    if (obj_next > objective) {
      // Rounding noise at the optimum: stop rather than accept an increase.
      model.converged = true;
      break;
    }
    const double change = objective - obj_next;
    eta.swap(next);
    f = prob.smooth(eta, &grad);
    objective = obj_next;
    model.objective.push_back(objective);
    if (change <= options.tol * std::max(1.0, std::abs(objective))) {
      model.converged = true;
      break;
    }
    step *= 1.5;
  }
  if (!model.converged)
    log::warning(fmt::format("SAGE did not converge in {} iterations", options.max_iter));
  model.eta = std::move(eta);
  return model;
}

LexiconSet build_lexicons(const std::map<std::string, TermCounts>& corpora,
                          const SageOptions& options, std::size_t top_n) {
  if (corpora.size() < 2) throw Error("lexicons need at least two categories");
  LexiconSet out;
  std::vector<std::string> names;
  std::vector<std::future<SageModel>> fits;
  for (const auto& [category, counts] : corpora) {
    names.push_back(category);
    fits.push_back(std::async(std::launch::async, [&, category = category] {
      TermCounts background;
      for (const auto& [other, oc] : corpora)
        if (other != category)
          for (const auto& [t, c] : oc) background[t] += c;
      return fit_sage(corpora.at(category), background, options);
    }));
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto model = fits[i].get();
    const auto top = model.top_terms(top_n);
    auto& list = out.terms[names[i]];
    for (std::size_t r = 0; r < top.size(); ++r) list.push_back({top[r].first, top[r].second, r + 1});
    double max_eta = 0.0;
    for (double e : model.eta) max_eta = std::max(max_eta, e);
    if (max_eta < 1e-3) {
      out.degenerate.push_back(names[i]);
      out.warnings.push_back(fmt::format("lexicon for '{}' is degenerate (max eta {:.2g})",
                                         names[i], max_eta));
    } else if (top.size() < top_n) {
      out.warnings.push_back(fmt::format("lexicon for '{}' has {} terms with positive eta (< {})",
                                         names[i], top.size(), top_n));
    }
  }
  for (const auto& w : out.warnings) log::warning(w);
  return out;
}

LexiconOwners disjointify(const LexiconSet& lexicons) {
  LexiconOwners owners;
  std::map<std::string, double> best;
  // Categories iterate in name order, so strict > keeps ties with the smaller name.
  for (const auto& [category, terms] : lexicons.terms)
    for (const auto& t : terms) {
      auto it = best.find(t.term);
      if (it == best.end() || t.eta > it->second) {
        best[t.term] = t.eta;
        owners[t.term] = category;
      }
    }
  return owners;
}

namespace {

std::pair<std::int64_t, std::int64_t> tally(const TokenGroups& group,
                                            const std::string& destination,
                                            const LexiconOwners& owners, bool distinct) {
  std::int64_t hit = 0, miss = 0;
  for (const auto& user : group) {
    std::set<std::string> seen;
    for (const auto& token : user) {
      if (distinct && !seen.insert(token).second) continue;
      auto it = owners.find(token);
      if (it == owners.end()) continue;
      if (it->second == destination) ++hit;
      else ++miss;
    }
  }
  return {hit, miss};
}

}  // namespace

ContingencyTable usage_table(const TokenGroups& group1, const TokenGroups& group2,
                             const std::string& destination, const LexiconOwners& owners,
                             bool distinct_types) {
  const auto [a, b] = tally(group1, destination, owners, distinct_types);
  const auto [c, d] = tally(group2, destination, owners, distinct_types);
  return {a, b, c, d};
}

double odds_ratio(const ContingencyTable& t) {
  double a = static_cast<double>(t.a), b = static_cast<double>(t.b);
  double c = static_cast<double>(t.c), d = static_cast<double>(t.d);
  if (t.a == 0 || t.b == 0 || t.c == 0 || t.d == 0) {
    a += 0.5;
    b += 0.5;
    c += 0.5;
    d += 0.5;
  }
  return (a * d) / (b * c);
}

double fisher_exact(const ContingencyTable& t) {
  if (t.a < 0 || t.b < 0 || t.c < 0 || t.d < 0) throw Error("contingency counts must be >= 0");
  const std::int64_t r1 = t.a + t.b, r2 = t.c + t.d, c1 = t.a + t.c;
  const std::int64_t n = r1 + r2;
  if (r1 == 0 || r2 == 0 || c1 == 0 || c1 == n) return 1.0;
  auto lf = [](std::int64_t k) { return std::lgamma(static_cast<double>(k) + 1.0); };
  const double base = lf(r1) + lf(r2) + lf(c1) + lf(n - c1) - lf(n);
  auto log_p = [&](std::int64_t x) {
    return base - lf(x) - lf(r1 - x) - lf(c1 - x) - lf(r2 - c1 + x);
  };
  const std::int64_t lo = std::max<std::int64_t>(0, c1 - r2);
  const std::int64_t hi = std::min(r1, c1);
  const double observed = log_p(t.a);
  // Ties are judged with 1e-12 relative slack plus the rounding scale of the
  // log-gamma terms.
  const double slack = 1e-12 + 8.0 * std::numeric_limits<double>::epsilon() * lf(n);
  double total = 0.0;
  for (std::int64_t x = lo; x <= hi; ++x) {
    const double lp = log_p(x);
    if (lp <= observed + slack) total += std::exp(lp);
  }
  return std::min(1.0, total);
}

namespace {

std::vector<std::string> post_tokens(const Post& post) {
  auto cleaned = clean_text(post.text);
  return cleaned ? tokenize(*cleaned) : std::vector<std::string>{};
}

void finish_cell(DiffusionCell& cell, const DiffusionOptions& options) {
  cell.odds_ratio = odds_ratio(cell.table);
  cell.p_value = fisher_exact(cell.table);
  cell.suppressed = cell.n <= options.min_movers;
  cell.significant = !cell.suppressed && cell.p_value < options.alpha;
}

}  // namespace

DiffusionMatrix diffusion_matrix(const Corpus& corpus, const CategoryMap& category_of,
                                 const std::vector<PeripateticLabel>& labels,
                                 const LexiconOwners& owners,
                                 const std::vector<std::string>& categories,
                                 const DiffusionOptions& options) {
  DiffusionMatrix out;
  out.categories = categories;
  const auto k = categories.size();
  out.cells.assign(k, std::vector<std::optional<DiffusionCell>>(k));
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < k; ++i) index[categories[i]] = i;

  // Early origin-category tokens per labeled user.
  std::vector<std::vector<std::string>> early(labels.size());
  for (std::size_t u = 0; u < labels.size(); ++u)
    for (auto pos : early_origin_posts(corpus, category_of, labels[u], options.early_window)) {
      auto tokens = post_tokens(corpus.posts()[pos]);
      early[u].insert(early[u].end(), tokens.begin(), tokens.end());
    }

  for (std::size_t o = 0; o < k; ++o) {
    TokenGroups stayers;
    std::vector<TokenGroups> movers(k);
    for (std::size_t u = 0; u < labels.size(); ++u) {
      const auto& label = labels[u];
      if (label.origin_category != categories[o]) continue;
      if (!label.is_peripatetic) {
        stayers.push_back(early[u]);
        continue;
      }
      for (const auto& d : label.destinations_within()) {
        auto it = index.find(d);
        if (it != index.end()) movers[it->second].push_back(early[u]);
      }
    }
    for (std::size_t d = 0; d < k; ++d) {
      if (d == o) continue;
      DiffusionCell cell;
      cell.n = movers[d].size();
      cell.table =
          usage_table(movers[d], stayers, categories[d], owners, options.distinct_types);
      finish_cell(cell, options);
      out.cells[o][d] = cell;
    }
  }
  return out;
}

DiffusionMatrix before_after_shift(const Corpus& corpus,
                                   const std::vector<PeripateticLabel>& labels,
                                   const LexiconOwners& owners,
                                   const std::vector<std::string>& categories,
                                   const DiffusionOptions& options) {
  DiffusionMatrix out;
  out.categories = categories;
  const auto k = categories.size();
  out.cells.assign(k, std::vector<std::optional<DiffusionCell>>(k));
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < k; ++i) index[categories[i]] = i;
  std::vector<std::vector<TokenGroups>> after(k, std::vector<TokenGroups>(k));
  std::vector<std::vector<TokenGroups>> before(k, std::vector<TokenGroups>(k));

  for (const auto& label : labels) {
    if (!label.is_peripatetic) continue;
    auto oi = index.find(label.origin_category);
    if (oi == index.end()) continue;
    for (const auto& dest : label.destinations_within()) {
      auto di = index.find(dest);
      if (di == index.end()) continue;
      const Timestamp entry = label.destinations.at(dest);
      const std::int64_t gap = entry - label.origin_time;
      if (gap <= 0) continue;
      std::vector<std::string> pre, post;
      for (auto pos : corpus.timeline(label.user)) {
        const auto& p = corpus.posts()[pos];
        if (p.timestamp >= entry - gap && p.timestamp < entry) {
          auto t = post_tokens(p);
          pre.insert(pre.end(), t.begin(), t.end());
        } else if (p.timestamp >= entry && p.timestamp < entry + gap) {
          auto t = post_tokens(p);
          post.insert(post.end(), t.begin(), t.end());
        }
      }
      if (pre.empty() || post.empty()) continue;
      before[oi->second][di->second].push_back(std::move(pre));
      after[oi->second][di->second].push_back(std::move(post));
    }
  }
  for (std::size_t o = 0; o < k; ++o)
    for (std::size_t d = 0; d < k; ++d) {
      if (d == o) continue;
      DiffusionCell cell;
      cell.n = after[o][d].size();
      cell.table = usage_table(after[o][d], before[o][d], categories[d], owners,
                               options.distinct_types);
      finish_cell(cell, options);
      out.cells[o][d] = cell;
    }
  return out;
}

std::vector<double> bh_adjust(const std::vector<double>& p_values) {
  const auto m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  std::vector<double> out(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const auto i = order[r];
    const double adj = p_values[i] * static_cast<double>(m) / static_cast<double>(r + 1);
    running = std::min(running, adj);
    out[i] = std::min(1.0, running);
  }
  return out;
}

}  // namespace peripatos
