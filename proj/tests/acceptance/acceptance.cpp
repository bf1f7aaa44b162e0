// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <unistd.h>

#include "generators.hpp"
#include "peripatos/csv.hpp"
#include "peripatos/lexicon.hpp"
#include "peripatos/log.hpp"
#include "peripatos/matching.hpp"
#include "peripatos/pipeline.hpp"
#include "peripatos/predictor.hpp"
#include "peripatos/profiles.hpp"
#include "peripatos/stats.hpp"
#include "peripatos/trajectories.hpp"

namespace fs = std::filesystem;
using namespace peripatos;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// 1. Fisher exact test against full enumeration.

using i128 = __int128;

i128 choose(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0;
  i128 r = 1;
  for (std::int64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

double fisher_by_enumeration(const ContingencyTable& t) {
  const auto r1 = t.a + t.b, r2 = t.c + t.d, c1 = t.a + t.c;
  auto weight = [&](std::int64_t x) { return choose(r1, x) * choose(r2, c1 - x); };
  const i128 observed = weight(t.a);
  i128 extreme = 0, all = 0;
  for (std::int64_t x = 0; x <= std::min(r1, c1); ++x) {
    const i128 w = weight(x);
    all += w;
    if (w <= observed) extreme += w;
  }
  return static_cast<double>(static_cast<long double>(extreme) / static_cast<long double>(all));
}

Outcome fisher_exactness() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t tables = 0;
  for (std::int64_t a = 0; a <= 40; ++a)
    for (std::int64_t b = 0; a + b <= 40; ++b)
      for (std::int64_t c = 0; a + b + c <= 40; ++c)
        for (std::int64_t d = 0; a + b + c + d <= 40; ++d) {
          const ContingencyTable t{a, b, c, d};
          worst = std::max(worst, std::abs(fisher_exact(t) - fisher_by_enumeration(t)));
          ++tables;
        }
  const double elapsed = seconds_since(start);
  return {worst < 1e-9 && elapsed < 10.0,
          fmt::format("{} tables, max |dp| = {:.2e}, {:.2f} s", tables, worst, elapsed)};
}

// ---------------------------------------------------------------------------
// 2. Preferential-attachment null on simulated movers.

Outcome preferential_attachment_null() {
  const std::vector<std::string> cats = {"A", "B", "C", "D"};
  const std::map<std::string, std::int64_t> users = {{"A", 2000}, {"B", 1000}, {"C", 3000}, {"D", 6000}};
  const std::size_t movers = 100000;

  // Destination probabilities per origin: size-proportional among the
  // others, optionally with one cell's share tripled.
  auto simulate = [&](std::uint64_t seed, std::optional<std::pair<int, int>> planted) {
    testgen::Rng rng(seed);
    std::vector<PeripateticLabel> labels;
    labels.reserve(movers);
    std::uniform_int_distribution<int> origin(0, 3);
    std::vector<std::discrete_distribution<int>> pick;
    for (int o = 0; o < 4; ++o) {
      std::vector<double> w(4, 0.0);
      double rest = 0;
      for (int d = 0; d < 4; ++d)
        if (d != o) rest += static_cast<double>(users.at(cats[d]));
      for (int d = 0; d < 4; ++d)
        if (d != o) w[d] = static_cast<double>(users.at(cats[d])) / rest;
      if (planted && planted->first == o) {
        const int p = planted->second;
        const double boosted = 3.0 * w[p];
        const double scale = (1.0 - boosted) / (1.0 - w[p]);
        for (int d = 0; d < 4; ++d) w[d] *= scale;
        w[p] = boosted;
      }
      pick.emplace_back(w.begin(), w.end());
    }
    for (std::size_t i = 0; i < movers; ++i) {
      PeripateticLabel l;
      l.user = fmt::format("u{}", i);
      const int o = origin(rng);
      l.origin_category = cats[o];
      l.origin_time = 0;
      l.destinations[cats[pick[o](rng)]] = 86400;
      l.is_peripatetic = true;
      labels.push_back(std::move(l));
    }
    auto m = transition_counts(labels, cats);
    pa_null_ratios(m, users);
    return m;
  };

  const auto null = simulate(101, std::nullopt);
  double worst = 0.0;
  for (std::size_t o = 0; o < 4; ++o)
    for (std::size_t d = 0; d < 4; ++d)
      if (o != d) worst = std::max(worst, std::abs(*null.ratios[o][d] - 1.0));
  const auto planted = simulate(202, std::make_pair(0, 1));
  const double recovered = *planted.ratios[0][1];
  return {worst < 0.1 && std::abs(recovered - 3.0) <= 0.2,
          fmt::format("null max |ratio - 1| = {:.3f}; planted 3x recovered as {:.3f}", worst,
                      recovered)};
}

// ---------------------------------------------------------------------------
// 3. k selection on eight separated blobs.

Outcome cluster_recovery() {
  int exact = 0;
  std::vector<std::string> misses;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto blobs = testgen::make_blobs(8, 12, 13, 3.0, 0.05, seed);
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < blobs.points.rows(); ++i) names.push_back(fmt::format("c{}", i));
    const auto sel = select_k(blobs.points, names, 2, 15, seed);
    const double ari = adjusted_rand_index(blobs.labels, sel.clustering.assignment);
    if (sel.clustering.k() == 8 && ari == 1.0) ++exact;
    else misses.push_back(fmt::format("seed {}: k={} ARI={:.3f}", seed, sel.clustering.k(), ari));
  }
  std::string detail = fmt::format("{}/20 seeds recover k=8 with ARI=1", exact);
  for (const auto& m : misses) detail += "; " + m;
  return {exact == 20, detail};
}

// ---------------------------------------------------------------------------
// 4. Mahalanobis matching.

Outcome matching_checks() {
  testgen::Rng rng(404);
  std::normal_distribution<double> g;
  int agree = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const Eigen::Index nj = 15, nc = 40, dim = 5;
    Eigen::MatrixXd j(nj, dim), c(nc, dim);
    for (Eigen::Index r = 0; r < nj; ++r)
      for (Eigen::Index k = 0; k < dim; ++k) j(r, k) = g(rng);
    for (Eigen::Index r = 0; r < nc; ++r)
      for (Eigen::Index k = 0; k < dim; ++k) c(r, k) = g(rng);
    MatchOptions opt;
    opt.covariance = Eigen::MatrixXd::Identity(dim, dim);
    const auto m = mahalanobis_match(j, c, opt);
    std::vector<char> taken(static_cast<std::size_t>(nc), 0);
    bool same = m.pairs.size() == static_cast<std::size_t>(nj);
    for (Eigen::Index r = 0; same && r < nj; ++r) {
      Eigen::Index best = -1;
      for (Eigen::Index k = 0; k < nc; ++k)
        if (!taken[static_cast<std::size_t>(k)] &&
            (best < 0 || (j.row(r) - c.row(k)).norm() < (j.row(r) - c.row(best)).norm()))
          best = k;
      taken[static_cast<std::size_t>(best)] = 1;
      same = m.pairs[static_cast<std::size_t>(r)].candidate == static_cast<std::size_t>(best);
    }
    agree += same;
  }

  // Joiners are shifted and more active than the candidate population.
  Eigen::MatrixXd joiners(200, 4), pool(2000, 4);
  for (Eigen::Index r = 0; r < 200; ++r)
    joiners.row(r) << 1.0 + g(rng), 50 + 10 * g(rng), 0.5 * g(rng) + 0.5, g(rng);
  for (Eigen::Index r = 0; r < 2000; ++r)
    pool.row(r) << g(rng), 40 + 15 * g(rng), 0.5 * g(rng), 2 * g(rng);
  const auto m = mahalanobis_match(joiners, pool);
  Eigen::MatrixXd matched(static_cast<Eigen::Index>(m.pairs.size()), 4);
  for (std::size_t i = 0; i < m.pairs.size(); ++i)
    matched.row(static_cast<Eigen::Index>(i)) = pool.row(static_cast<Eigen::Index>(m.pairs[i].candidate));
  const Eigen::VectorXd pre = standardized_mean_differences(joiners, pool);
  const Eigen::VectorXd post = standardized_mean_differences(joiners, matched);
  bool improved = true;
  for (Eigen::Index k = 0; k < 4; ++k) improved = improved && post(k) < pre(k);
  return {agree == 100 && improved,
          fmt::format("{}/100 identity-covariance instances equal Euclidean greedy; "
                      "SMD pre [{:.2f} {:.2f} {:.2f} {:.2f}] post [{:.2f} {:.2f} {:.2f} {:.2f}]",
                      agree, pre(0), pre(1), pre(2), pre(3), post(0), post(1), post(2), post(3))};
}

// ---------------------------------------------------------------------------
// 5. SAGE recovery.

Outcome sage_recovery() {
  testgen::Rng rng(505);
  TermCounts background;
  std::vector<std::string> vocab;
  for (int i = 0; i < 2000; ++i) {
    vocab.push_back(fmt::format("term{:04}", i));
    background[vocab.back()] = std::round(20000.0 / (i + 1)) + 2.0;
  }
  std::vector<std::size_t> idx(vocab.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin() + 50, idx.end(), rng);
  std::set<std::string> planted;
  TermCounts target = background;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& t = vocab[idx[50 + i]];
    planted.insert(t);
    target[t] = 4.0 * background[t] + 30.0;
  }
  const auto model = fit_sage(target, background);
  std::size_t hits = 0;
  for (const auto& [term, _] : model.top_terms(30)) hits += planted.count(term);

  const auto same = fit_sage(background, background);
  double max_eta = 0.0;
  for (double e : same.eta) max_eta = std::max(max_eta, std::abs(e));
  return {hits == 20 && max_eta < 1e-4,
          fmt::format("{}/20 planted terms in the top 30; identical corpora max |eta| = {:.2e}",
                      hits, max_eta)};
}

// ---------------------------------------------------------------------------
// 6. End-to-end fixture.

fs::path scratch(const std::string& name) {
  return fs::temp_directory_path() / fmt::format("peripatos_acceptance_{}_{}", ::getpid(), name);
}

PipelineConfig fixture_config(std::uint64_t seed, const fs::path& dir) {
  SynthOptions opt;
  opt.seed = seed;
  fs::remove_all(dir);
  write_fixture(make_fixture(opt), dir);
  return load_config(dir / "config.json", nlohmann::json::object(), false);
}

std::set<std::pair<std::string, std::string>> planted_cells(const fs::path& dir) {
  std::ifstream in(dir / "truth.json");
  const auto truth = nlohmann::json::parse(in);
  std::set<std::pair<std::string, std::string>> cells;
  for (const auto& c : truth.at("planted_cells"))
    cells.insert({c.at(0).get<std::string>(), c.at(1).get<std::string>()});
  return cells;
}

Outcome fixture_recovery() {
  const auto start = std::chrono::steady_clock::now();
  bool ratio_ok = false, planted_ok = true;
  std::string ratio_text, planted_text;
  std::size_t null_cells = 0, false_positives = 0, planted_seen = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto dir = scratch(fmt::format("fixture{}", seed));
    const auto cfg = fixture_config(seed, dir);
    run(Stage::all, cfg);
    const auto planted = planted_cells(dir);

    if (seed == 1) {
      const auto effects = csv::read(cfg.paths.output / "effects.csv");
      const auto ci = effects.column("category"), ri = effects.column("ratio"),
                 pi = effects.column("p_value");
      for (const auto& row : effects.rows)
        if (row[ci] == "all") {
          const double ratio = std::stod(row[ri]), p = std::stod(row[pi]);
          ratio_ok = std::abs(ratio - 2.0) <= 0.4 && p < 0.01;
          ratio_text = fmt::format("pooled ratio {:.3f} (p = {:.1e})", ratio, p);
        }
    }

    const auto diff = csv::read(cfg.paths.output / "diffusion.csv");
    const auto oi = diff.column("origin"), di = diff.column("destination"),
               ori = diff.column("odds_ratio"), pi = diff.column("p_value"),
               si = diff.column("suppressed"), sg = diff.column("significant");
    for (const auto& row : diff.rows) {
      if (row[si] == "1") continue;
      if (planted.count({row[oi], row[di]})) {
        if (seed != 1) continue;
        ++planted_seen;
        const double odds = std::stod(row[ori]), p = std::stod(row[pi]);
        planted_ok = planted_ok && odds > 1.0 && p < 0.05;
        planted_text += fmt::format(" {}->{} OR {:.2f} p {:.1e};", row[oi], row[di], odds, p);
      } else {
        ++null_cells;
        false_positives += row[sg] == "1";
      }
    }
    fs::remove_all(dir);
  }
  planted_ok = planted_ok && planted_seen > 0;
  const double fp_rate = null_cells ? static_cast<double>(false_positives) / static_cast<double>(null_cells) : 1.0;
  const double elapsed = seconds_since(start);
  const bool pass = ratio_ok && planted_ok && fp_rate <= 0.07 && elapsed < 300.0;
  return {pass, fmt::format("{}; planted cells:{} null false positives {}/{} = {:.3f}; {:.1f} s for 10 runs",
                            ratio_text, planted_text, false_positives, null_cells, fp_rate,
                            elapsed)};
}

// ---------------------------------------------------------------------------
// 7. Predictor.

Outcome predictor_checks() {
  testgen::Rng rng(707);
  std::normal_distribution<double> g;
  const Eigen::Index n = 16, width = 32;
  Eigen::MatrixXd x(n, width), onehot = Eigen::MatrixXd::Zero(n, kOneHotWidth), y(n, kNumTargets);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < width; ++k) x(i, k) = g(rng);
    onehot(i, static_cast<Eigen::Index>(rng() % kOneHotWidth)) = 1.0;
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(kNumTargets); ++c)
      y(i, c) = static_cast<double>(rng() % 2);
  }
  const double grad_err = gradient_check(Mlp(MlpShape::for_text_width(width), 1), x, onehot, y);

  const auto data = testgen::planted_dataset(rng, 2000, 32);
  auto shuffled = data;
  {
    std::vector<std::size_t> perm(shuffled.examples.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < perm.size(); ++i)
      shuffled.examples[i].labels = data.examples[perm[i]].labels;
  }
  SplitConfig split;
  split.runs = 50;
  split.seed = 7;
  // The default optimizer settings are sized for the full corpus; this
  // smaller set needs a faster rate and lighter dropout to converge.
  TrainConfig train;
  train.lr = 3e-3;
  train.dropout = 0.3;

  auto mean_auc = [](const EvalReport& r) {
    std::vector<double> all;
    for (const auto& c : r.categories) all.insert(all.end(), c.aucs.begin(), c.aucs.end());
    return stats::mean(all);
  };
  const double null_auc = mean_auc(repeated_splits(shuffled, Arm::all, split, train));

  const auto arms = ablation(data, split, train);
  const double all_auc = mean_auc(arms[0]);
  const double target_auc = mean_auc(arms[1]);
  const double context_auc = mean_auc(arms[2]);
  const bool pass = grad_err < 1e-4 && std::abs(null_auc - 0.5) <= 0.02 && all_auc >= 0.90 &&
                    all_auc >= target_auc - 0.02 && all_auc >= context_auc - 0.02;
  return {pass, fmt::format("gradient rel. error {:.1e}; shuffled AUC {:.3f}; planted AUC all "
                            "{:.3f}, target {:.3f}, context {:.3f}",
                            grad_err, null_auc, all_auc, target_auc, context_auc)};
}

// ---------------------------------------------------------------------------
// 8. ROC-AUC against pair counting.

Outcome auc_exactness() {
  testgen::Rng rng(808);
  std::uniform_int_distribution<int> level(0, 5);
  std::size_t cases = 0;
  double worst = 0.0;
  for (std::size_t n = 2; n <= 12; ++n)
    for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask)
      for (int rep = 0; rep < 2; ++rep) {
        std::vector<double> s(n);
        std::vector<int> l(n);
        for (std::size_t i = 0; i < n; ++i) {
          l[i] = static_cast<int>((mask >> i) & 1u);
          s[i] = level(rng) / 5.0;
        }
        double wins = 0, pairs = 0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            if (l[i] == 1 && l[j] == 0) {
              pairs += 1;
              wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
            }
        worst = std::max(worst, std::abs(roc_auc(s, l) - wins / pairs));
        ++cases;
      }
  return {worst < 1e-12, fmt::format("{} label/score vectors, max |dAUC| = {:.1e}", cases, worst)};
}

// ---------------------------------------------------------------------------
// 9. Determinism.

std::map<std::string, std::string> csv_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.path().extension() == ".csv") {
      std::ifstream in(e.path(), std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      out[fs::relative(e.path(), root).generic_string()] = ss.str();
    }
  return out;
}

Outcome determinism() {
  const auto dir = scratch("determinism");
  auto cfg = fixture_config(3, dir);
  const auto first_out = dir / "run1";
  const auto second_out = dir / "run2";
  cfg.paths.output = first_out;
  run(Stage::all, cfg);
  cfg.paths.output = second_out;
  run(Stage::all, cfg);
  const auto a = csv_files(first_out), b = csv_files(second_out);
  std::vector<std::string> differing;
  for (const auto& [name, content] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != content) differing.push_back(name);
  }
  fs::remove_all(dir);
  const bool pass = !a.empty() && a.size() == b.size() && differing.empty();
  std::string detail = fmt::format("{} CSV files compared", a.size());
  for (const auto& d : differing) detail += "; differs: " + d;
  return {pass, detail};
}

}  // namespace

int main() {
  log::set_level(log::Level::silent);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"fisher exact test matches enumeration", fisher_exactness},
      {"preferential-attachment null calibration", preferential_attachment_null},
      {"k selection recovers planted clusters", cluster_recovery},
      {"mahalanobis matching", matching_checks},
      {"SAGE recovers planted terms", sage_recovery},
      {"synthetic fixture end to end", fixture_recovery},
      {"predictor gradient, null and signal", predictor_checks},
      {"ROC-AUC matches pair counting", auc_exactness},
      {"repeated runs are byte-identical", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    failures += !o.pass;
    std::cout << fmt::format("criterion {}: {} - {} ({})", i + 1, o.pass ? "PASS" : "FAIL",
                             criteria[i].first, o.detail)
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
