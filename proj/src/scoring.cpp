#include "peripatos/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "peripatos/csv.hpp"
#include "peripatos/log.hpp"
#include "peripatos/stats.hpp"
#include "peripatos/text.hpp"

namespace peripatos {

namespace {

constexpr std::array<std::string_view, kNumIdentities> kIdentityNames = {
    "antisemitism", "islamophobia", "ableism",    "misogyny",
    "xenophobia",   "racism",       "homophobia", "transphobia"};

constexpr std::array<std::string_view, kNumIdentities> kCategoryNames = {
    "antisemitic", "Islamophobic", "ableist",    "misogynistic",
    "xenophobic",  "racist",       "homophobic", "transphobic"};

constexpr std::array<std::string_view, kNumAux> kAuxNames = {
    "negative", "disrespect", "insult", "attack", "hate_speech"};

std::size_t idx(Identity id) { return static_cast<std::size_t>(id); }

}  // namespace

std::string_view identity_name(Identity id) { return kIdentityNames[idx(id)]; }
std::string_view identity_category_name(Identity id) { return kCategoryNames[idx(id)]; }
std::string_view aux_name(AuxLabel label) {
  return kAuxNames[static_cast<std::size_t>(label)];
}

std::optional<Identity> parse_identity(std::string_view name) {
  for (std::size_t i = 0; i < kNumIdentities; ++i)
    if (kIdentityNames[i] == name) return static_cast<Identity>(i);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Score files

const std::vector<std::string>& score_file_header() {
  static const std::vector<std::string> header = [] {
    std::vector<std::string> h{"post_id"};
    for (auto n : kIdentityNames) h.emplace_back(n);
    for (auto n : kAuxNames) h.emplace_back(n);
    return h;
  }();
  return header;
}

ScoreMap load_scores(std::istream& in) {
  ScoreMap out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = csv::split(line);
    if (!header_seen) {
      if (fields != score_file_header())
        throw Error("score file header must be: post_id, 8 identity columns, 5 aux columns");
      header_seen = true;
      continue;
    }
    if (fields.size() != score_file_header().size())
      throw Error(fmt::format("score file line {}: expected {} columns, got {}", line_no,
                              score_file_header().size(), fields.size()));
    IdentityScores s;
    s.post_id = fields[0];
    for (std::size_t c = 1; c < fields.size(); ++c) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(fields[c], &used);
        if (used != fields[c].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(fmt::format("score file line {}: '{}' is not a number", line_no,
                                fields[c]));
      }
      if (!(v >= 0.0 && v <= 1.0))
        throw Error(fmt::format("score file line {}: {} = {} outside [0,1]", line_no,
                                score_file_header()[c], fields[c]));
      if (c <= kNumIdentities) s.identity[c - 1] = v;
      else s.aux[c - 1 - kNumIdentities] = v;
    }
    if (out.contains(s.post_id))
      throw Error(fmt::format("score file line {}: duplicate post_id '{}'", line_no,
                              s.post_id));
    out.emplace(s.post_id, std::move(s));
  }
  return out;
}

ScoreMap load_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot read score file '{}'", path.string()));
  return load_scores(in);
}

void write_scores(const ScoreMap& scores, std::ostream& out) {
  csv::Writer w(out);
  w.row(score_file_header());
  for (const auto& [id, s] : scores) {
    std::vector<std::string> row{id};
    for (double v : s.identity) row.push_back(csv::num(v));
    for (double v : s.aux) row.push_back(csv::num(v));
    w.row(row);
  }
}

void write_scores(const ScoreMap& scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  write_scores(scores, out);
}

std::vector<std::string> missing_scores(const Corpus& corpus, const ScoreMap& scores) {
  std::vector<std::string> missing;
  for (const Post& p : corpus.posts())
    if (!scores.contains(p.post_id)) missing.push_back(p.post_id);
  return missing;
}

// ---------------------------------------------------------------------------
// Fallback scorer

IdentityScores fallback_score(std::string_view post_id, std::string_view text,
                              const SeedLexicons& lexicons) {
  IdentityScores s;
  s.post_id = std::string(post_id);
  std::unordered_map<std::string, int> counts;
  for (auto& t : tokenize(text)) ++counts[t];
  auto matches = [&](const std::vector<std::string>& terms) {
    int n = 0;
    for (const auto& t : terms) {
      auto it = counts.find(t);
      if (it != counts.end()) n += it->second;
    }
    return n;
  };
  auto squash = [](int n) { return 1.0 - std::exp(-static_cast<double>(n)); };
  double max_identity = 0.0;
  for (std::size_t c = 0; c < kNumIdentities; ++c) {
    s.identity[c] = squash(matches(lexicons.identity[c]));
    max_identity = std::max(max_identity, s.identity[c]);
  }
  const double neg = squash(matches(lexicons.negative));
  s.aux = {neg, neg, neg, neg, neg * max_identity};
  return s;
}

ScoreMap fallback_scorer(const Corpus& corpus, const SeedLexicons& lexicons) {
  const bool any_identity = std::any_of(lexicons.identity.begin(), lexicons.identity.end(),
                                        [](const auto& l) { return !l.empty(); });
  if (!any_identity || lexicons.negative.empty())
    throw Error("fallback scorer needs non-empty identity and negative lexicons");
  ScoreMap out;
  for (const Post& p : corpus.posts())
    out.emplace(p.post_id, fallback_score(p.post_id, p.text, lexicons));
  return out;
}

HateLabels assign_hate_labels(const IdentityScores& scores, const ThresholdSet& thresholds) {
  HateLabels labels;
  if (scores[AuxLabel::negative] < thresholds.negative) return labels;
  for (std::size_t c = 0; c < kNumIdentities; ++c)
    if (scores.identity[c] >= thresholds.identity[c]) labels.set(c);
  return labels;
}

// ---------------------------------------------------------------------------
// Calibration

std::vector<double> threshold_grid(double step) {
  if (!(step > 0.0 && step < 0.5)) throw Error("threshold grid step must be in (0, 0.5)");
  std::vector<double> grid;
  const int n = static_cast<int>(std::floor(1.0 / step + 1e-9));
  for (int i = 1; i < n; ++i) grid.push_back(std::round(i * step * 1e9) / 1e9);
  return grid;
}

namespace {

constexpr double kTieEps = 1e-12;

// True when `candidate` should replace `best` under the maximise-then-prefer
// -closest-to-0.5-then-lower rule.
bool better(double value, double tau, double best_value, double best_tau) {
  if (value > best_value + kTieEps) return true;
  if (value < best_value - kTieEps) return false;
  const double d = std::fabs(tau - 0.5), bd = std::fabs(best_tau - 0.5);
  if (d < bd - kTieEps) return true;
  if (d > bd + kTieEps) return false;
  return tau < best_tau;
}

double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

struct Choice {
  double tau = 0.5;
  double value = -std::numeric_limits<double>::infinity();
};

}  // namespace

double f1_at(const std::vector<LabeledScores>& validation, Identity id, double tau_negative,
             double tau_identity) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& v : validation) {
    const bool pred = v.scores[AuxLabel::negative] >= tau_negative && v.scores[id] >= tau_identity;
    const bool truth = v.truth.test(idx(id));
    tp += pred && truth;
    fp += pred && !truth;
    fn += !pred && truth;
  }
  return f1_score(tp, fp, fn);
}

namespace {

// Shared two-level grid search. `objective(c, tau_neg, tau_c)` returns the
// per-category objective; categories where `usable[c]` is false keep 0.5.
template <typename Objective>
CalibrationResult grid_search(const std::vector<double>& grid,
                              const std::array<bool, kNumIdentities>& usable,
                              Objective&& objective) {
  CalibrationResult result;
  Choice best_neg;
  std::array<Choice, kNumIdentities> best_per_cat{};
  for (double tn : grid) {
    std::array<Choice, kNumIdentities> per_cat{};
    double total = 0.0;
    std::size_t n_used = 0;
    for (std::size_t c = 0; c < kNumIdentities; ++c) {
      if (!usable[c]) continue;
      for (double tc : grid) {
        const double v = objective(c, tn, tc);
        if (better(v, tc, per_cat[c].value, per_cat[c].tau)) per_cat[c] = {tc, v};
      }
      total += per_cat[c].value;
      ++n_used;
    }
    const double mean = n_used ? total / static_cast<double>(n_used) : 0.0;
    if (better(mean, tn, best_neg.value, best_neg.tau)) {
      best_neg = {tn, mean};
      best_per_cat = per_cat;
    }
  }
  result.thresholds.negative = best_neg.tau;
  for (std::size_t c = 0; c < kNumIdentities; ++c) {
    if (!usable[c]) continue;
    result.thresholds.identity[c] = best_per_cat[c].tau;
    result.objective[c] = best_per_cat[c].value;
  }
  return result;
}

}  // namespace

CalibrationResult calibrate_thresholds(const std::vector<LabeledScores>& validation,
                                       double step) {
  const auto grid = threshold_grid(step);
  std::array<bool, kNumIdentities> usable{};
  for (const auto& v : validation)
    for (std::size_t c = 0; c < kNumIdentities; ++c) usable[c] = usable[c] || v.truth.test(c);

  // Pre-extract columns for the inner loop.
  const std::size_t n = validation.size();
  std::vector<double> neg(n);
  std::array<std::vector<double>, kNumIdentities> ids;
  std::array<std::vector<char>, kNumIdentities> truth;
  for (std::size_t c = 0; c < kNumIdentities; ++c) {
    ids[c].resize(n);
    truth[c].resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    neg[i] = validation[i].scores[AuxLabel::negative];
    for (std::size_t c = 0; c < kNumIdentities; ++c) {
      ids[c][i] = validation[i].scores.identity[c];
      truth[c][i] = validation[i].truth.test(c);
    }
  }
  auto result = grid_search(grid, usable, [&](std::size_t c, double tn, double tc) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pred = neg[i] >= tn && ids[c][i] >= tc;
      tp += pred && truth[c][i];
      fp += pred && !truth[c][i];
      fn += !pred && truth[c][i];
    }
    return f1_score(tp, fp, fn);
  });
  for (std::size_t c = 0; c < kNumIdentities; ++c) {
    if (usable[c]) continue;
    auto msg = fmt::format("no positive examples for {}; threshold defaults to 0.5",
                           kIdentityNames[c]);
    log::warning(msg);
    result.warnings.push_back(std::move(msg));
  }
  return result;
}

std::map<std::string, std::array<double, kNumIdentities>> AnnotationSet::mean_counts() const {
  std::map<std::string, std::array<double, kNumIdentities>> out;
  for (const auto& [community, per_cat] : counts) {
    auto& row = out[community];
    for (std::size_t c = 0; c < kNumIdentities; ++c) {
      const auto& v = per_cat[c];
      row[c] = v.empty() ? 0.0
                         : static_cast<double>(std::accumulate(v.begin(), v.end(), 0)) /
                               static_cast<double>(v.size());
    }
  }
  return out;
}

AnnotationSet load_annotations(const std::filesystem::path& path, std::size_t sample_size) {
  const auto table = csv::read(path);
  const auto ci = table.column("community"), ki = table.column("category"),
             ni = table.column("count");
  AnnotationSet set;
  set.sample_size = sample_size;
  for (const auto& row : table.rows) {
    if (row.size() < table.header.size()) throw Error("short row in annotation file");
    auto id = parse_identity(row[ki]);
    if (!id) throw Error(fmt::format("unknown category '{}' in annotation file", row[ki]));
    const int count = std::stoi(row[ni]);
    if (count < 0 || static_cast<std::size_t>(count) > sample_size)
      throw Error(fmt::format("annotation count {} exceeds sample size {}", count, sample_size));
    set.counts[row[ci]][idx(*id)].push_back(count);
  }
  return set;
}

std::array<std::optional<double>, kNumIdentities> validate_r2(const CategoryCounts& predicted,
                                                             const CategoryCounts& annotated) {
  std::vector<std::string> shared;
  for (const auto& [community, _] : annotated)
    if (predicted.contains(community)) shared.push_back(community);
  if (shared.size() < 2) throw Error("R-squared needs at least two annotated communities");
  std::array<std::optional<double>, kNumIdentities> out{};
  for (std::size_t c = 0; c < kNumIdentities; ++c) {
    double mean = 0.0;
    for (const auto& k : shared) mean += annotated.at(k)[c];
    mean /= static_cast<double>(shared.size());
    double ss_tot = 0.0, ss_res = 0.0;
    for (const auto& k : shared) {
      const double y = annotated.at(k)[c], yhat = predicted.at(k)[c];
      ss_tot += (y - mean) * (y - mean);
      ss_res += (y - yhat) * (y - yhat);
    }
    if (ss_tot > 0.0) out[c] = 1.0 - ss_res / ss_tot;
  }
  return out;
}

CalibrationResult calibrate_thresholds_r2(
    const std::map<std::string, std::vector<IdentityScores>>& annotated_samples,
    const CategoryCounts& annotated_means, double step) {
  const auto grid = threshold_grid(step);
  std::vector<std::string> shared;
  for (const auto& [community, _] : annotated_means)
    if (annotated_samples.contains(community)) shared.push_back(community);
  if (shared.size() < 2) throw Error("R-squared calibration needs at least two communities");

  std::array<bool, kNumIdentities> usable{};
  std::array<double, kNumIdentities> means{};
  for (std::size_t c = 0; c < kNumIdentities; ++c) {
    for (const auto& k : shared) means[c] += annotated_means.at(k)[c];
    means[c] /= static_cast<double>(shared.size());
    double ss = 0.0;
    for (const auto& k : shared) ss += std::pow(annotated_means.at(k)[c] - means[c], 2);
    usable[c] = ss > 0.0;
  }
  auto result = grid_search(grid, usable, [&](std::size_t c, double tn, double tc) {
    double ss_tot = 0.0, ss_res = 0.0;
    for (const auto& k : shared) {
      double count = 0.0;
      for (const auto& s : annotated_samples.at(k))
        count += (s[AuxLabel::negative] >= tn && s.identity[c] >= tc) ? 1.0 : 0.0;
      const double y = annotated_means.at(k)[c];
      ss_tot += (y - means[c]) * (y - means[c]);
      ss_res += (y - count) * (y - count);
    }
    return 1.0 - ss_res / ss_tot;
  });
  for (std::size_t c = 0; c < kNumIdentities; ++c) {
    if (usable[c]) continue;
    auto msg = fmt::format("annotations for {} have zero variance; threshold defaults to 0.5",
                           kIdentityNames[c]);
    log::warning(msg);
    result.warnings.push_back(std::move(msg));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Agreement statistics

double krippendorff_alpha(const std::vector<std::vector<std::optional<int>>>& ratings,
                          AlphaMetric metric) {
  if (ratings.size() < 2) throw Error("Krippendorff's alpha needs at least two annotators");
  std::size_t n_items = 0;
  for (const auto& r : ratings) n_items = std::max(n_items, r.size());

  std::map<int, std::size_t> value_index;
  for (const auto& r : ratings)
    for (const auto& v : r)
      if (v) value_index.emplace(*v, 0);
  std::size_t k = 0;
  std::vector<int> values;
  for (auto& [v, i] : value_index) {
    i = k++;
    values.push_back(v);
  }

  std::vector<std::vector<double>> coincidence(k, std::vector<double>(k, 0.0));
  for (std::size_t u = 0; u < n_items; ++u) {
    std::vector<std::size_t> present;
    for (const auto& r : ratings)
      if (u < r.size() && r[u]) present.push_back(value_index.at(*r[u]));
    const std::size_t m = present.size();
    if (m < 2) continue;
    const double w = 1.0 / static_cast<double>(m - 1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (i != j) coincidence[present[i]][present[j]] += w;
  }
  std::vector<double> marg(k, 0.0);
  double n = 0.0;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t d = 0; d < k; ++d) {
      marg[c] += coincidence[c][d];
      n += coincidence[c][d];
    }
  if (n <= 0.0) throw Error("no pairable ratings for Krippendorff's alpha");

  auto delta = [&](std::size_t c, std::size_t d) -> double {
    if (metric == AlphaMetric::nominal) return c == d ? 0.0 : 1.0;
    const double diff = static_cast<double>(values[c] - values[d]);
    return diff * diff;
  };
  double observed = 0.0, expected = 0.0;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t d = 0; d < k; ++d) {
      observed += coincidence[c][d] * delta(c, d);
      expected += marg[c] * marg[d] * delta(c, d);
    }
  observed /= n;
  expected /= n * (n - 1.0);
  if (expected == 0.0) return 1.0;  // a single value was used throughout
  return 1.0 - observed / expected;
}

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("spearman: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const auto rx = stats::average_ranks(x), ry = stats::average_ranks(y);
  const double mx = stats::mean(rx), my = stats::mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

AuxCorrelation spearman_label_correlations(const std::vector<IdentityScores>& scores) {
  if (scores.size() < 3) throw Error("Spearman correlations need at least three posts");
  std::array<std::vector<double>, kNumAux> cols;
  for (auto& c : cols) c.reserve(scores.size());
  for (const auto& s : scores)
    for (std::size_t a = 0; a < kNumAux; ++a) cols[a].push_back(s.aux[a]);
  AuxCorrelation out{};
  for (std::size_t a = 0; a < kNumAux; ++a)
    for (std::size_t b = a; b < kNumAux; ++b) {
      const auto r = spearman(cols[a], cols[b]);
      out[a][b] = out[b][a] = r;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Chat-model prompts

std::string llm_count_prompt(const std::vector<std::string>& posts,
                             std::string_view bias_category, std::string_view hate_type) {
  if (posts.size() != 10)
    throw Error(fmt::format("batch prompt needs exactly 10 posts, got {}", posts.size()));
  std::string out = fmt::format(
      "Below is a collection of 10 Reddit posts that may or may not be attacking someone "
      "because of their {}. Please respond with the number of these posts that are very "
      "clearly {}. Do not include anything else in your response:\n\n",
      bias_category, hate_type);
  for (std::size_t i = 0; i < posts.size(); ++i) {
    if (i) out += '\n';
    out += fmt::format("{}. {}", i + 1, posts[i]);
  }
  return out;
}

std::string llm_single_prompt(std::string_view post, std::string_view bias_category,
                              std::string_view hate_type) {
  return fmt::format(
      "Below is a Reddit post that may or may not be attacking someone because of their "
      "{}. Please respond with \"Yes\" or \"No.\" Is this post very clearly {}? Do not "
      "include anything else in your response:\n\n{}",
      bias_category, hate_type, post);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

int parse_count(std::string_view reply) {
  const auto s = trim(reply);
  if (s.empty() || s.size() > 2 ||
      !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
    throw Error(fmt::format("expected an integer 0-10, got '{}'", reply));
  const int v = std::stoi(std::string(s));
  if (v > 10) throw Error(fmt::format("count {} out of range 0-10", v));
  return v;
}

bool parse_yesno(std::string_view reply) {
  auto s = trim(reply);
  while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  s = trim(s);
  if (s == "Yes") return true;
  if (s == "No") return false;
  throw Error(fmt::format("expected Yes or No, got '{}'", reply));
}

}  // namespace peripatos
