#include "peripatos/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "peripatos/corpus.hpp"
#include "peripatos/csv.hpp"
#include "peripatos/lexicon.hpp"
#include "peripatos/log.hpp"
#include "peripatos/matching.hpp"
#include "peripatos/predictor.hpp"
#include "peripatos/profiles.hpp"
#include "peripatos/report.hpp"
#include "peripatos/stats.hpp"
#include "peripatos/topics.hpp"
#include "peripatos/trajectories.hpp"

namespace peripatos {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kVersion = "0.1.0";

constexpr std::array<std::string_view, 11> kStageNames = {
    "ingest", "score",   "profile", "cluster", "transitions", "match",
    "lexicon", "topics", "predict", "report",  "all"};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string_view stage_name(Stage stage) { return kStageNames[static_cast<std::size_t>(stage)]; }

Stage parse_stage(std::string_view name) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i)
    if (kStageNames[i] == name) return static_cast<Stage>(i);
  throw Error(fmt::format("unknown stage '{}'", name));
}

std::string_view threshold_mode_name(ThresholdMode mode) {
  switch (mode) {
    case ThresholdMode::fixed: return "fixed";
    case ThresholdMode::f1: return "f1";
    case ThresholdMode::r2: return "r2";
  }
  return "fixed";
}

ThresholdMode parse_threshold_mode(std::string_view name) {
  if (name == "fixed") return ThresholdMode::fixed;
  if (name == "f1") return ThresholdMode::f1;
  if (name == "r2") return ThresholdMode::r2;
  throw Error(fmt::format("unknown threshold mode '{}' (expected f1, r2 or fixed)", name));
}

// ---------------------------------------------------------------------------
// Configuration

json default_config() {
  json thresholds = {{"negative", 0.5}};
  for (auto id : kIdentities) thresholds[std::string(identity_name(id))] = 0.5;
  return {
      {"paths",
       {{"corpus", ""},
        {"scores", nullptr},
        {"embeddings", nullptr},
        {"annotations", nullptr},
        {"validation", nullptr},
        {"seed_lexicons", nullptr},
        {"output", "out"}}},
      {"hate_communities", json::array()},
      {"min_community_users", 1000},
      {"filter_bots", true},
      {"threshold_mode", "f1"},
      {"thresholds", thresholds},
      {"annotation_sample_size", 20},
      {"window", "6w"},
      {"curve_windows", {"6w", "6m", "none"}},
      {"seed", 0},
      {"profile",
       {{"n_comments", 1000},
        {"n_submissions", 1000},
        {"k_min", 2},
        {"k_max", 15},
        {"restarts", 10},
        {"theta_general", 0.5},
        {"lgbtq_delta", 0.5}}},
      {"match",
       {{"top_k", 50}, {"max_candidates", 0}, {"ridge", 1e-6}, {"collapse_activity", false}}},
      {"lexicon",
       {{"lambda", 5.0},
        {"top_n", 300},
        {"early_window", "72h"},
        {"min_movers", 20},
        {"distinct_types", false},
        {"alpha", 0.05}}},
      {"topics",
       {{"dim", 768},
        {"k_min", 2},
        {"k_max", 15},
        {"outlier_sim", 0.3},
        {"merge_sim", 0.9},
        {"top_n", 100},
        {"min_coverage", 0.10}}},
      {"predict",
       {{"dim", 768},
        {"runs", 50},
        {"max_epochs", 100},
        {"lr", 1e-3},
        {"batch", 128},
        {"dropout", 0.6},
        {"patience", 5},
        {"padding", 0},
        {"text_span", "72h"}}},
      {"toggles", {{"match", true}, {"lexicon", true}, {"topics", true}, {"predict", true}}},
  };
}

namespace {

void merge_into(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw Error(fmt::format("config{}: expected an object", where));
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where + "." + key;
    if (!base.contains(key)) throw Error(fmt::format("unknown config key '{}'", path.substr(1)));
    auto& slot = base[key];
    if (slot.is_object() && value.is_object()) {
      merge_into(slot, value, path);
    } else {
      slot = value;
    }
  }
}

void apply_environment(json& config, const json& defaults, const std::string& prefix) {
  for (const auto& [key, value] : defaults.items()) {
    std::string name = prefix + "_" + key;
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (value.is_object()) {
      apply_environment(config[key], value, name);
      continue;
    }
    const char* raw = std::getenv(name.c_str());
    if (!raw) continue;
    if (value.is_string() || value.is_null()) {
      config[key] = std::string(raw);
      continue;
    }
    try {
      config[key] = json::parse(raw);
    } catch (const json::exception&) {
      throw Error(fmt::format("{}: cannot parse '{}'", name, raw));
    }
  }
}

template <typename T>
T get(const json& j, const char* key, std::string_view where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(fmt::format("config {}{}: {}", where, key, e.what()));
  }
}

Window window_at(const json& j, const char* key, std::string_view where) {
  const auto text = get<std::string>(j, key, where);
  try {
    return Window::parse(text);
  } catch (const Error& e) {
    throw Error(fmt::format("config {}{}: {}", where, key, e.what()));
  }
}

}  // namespace

std::string PipelineConfig::hash() const { return fmt::format("{:016x}", fnv1a(source.dump())); }

PipelineConfig parse_config(const json& merged, const fs::path& base) {
  PipelineConfig c;
  c.source = merged;
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  auto optional_path = [&](const char* key) -> std::optional<fs::path> {
    const auto& v = merged.at("paths").at(key);
    if (v.is_null()) return std::nullopt;
    const auto s = get<std::string>(merged.at("paths"), key, "paths.");
    if (s.empty()) return std::nullopt;
    return resolve(s);
  };
  const auto& paths = merged.at("paths");
  c.paths.corpus = resolve(get<std::string>(paths, "corpus", "paths."));
  c.paths.scores = optional_path("scores");
  c.paths.embeddings = optional_path("embeddings");
  c.paths.annotations = optional_path("annotations");
  c.paths.validation = optional_path("validation");
  c.paths.seed_lexicons = optional_path("seed_lexicons");
  c.paths.output = resolve(get<std::string>(paths, "output", "paths."));

  c.hate_communities = get<std::vector<std::string>>(merged, "hate_communities", "");
  c.min_community_users = get<std::size_t>(merged, "min_community_users", "");
  c.filter_bots = get<bool>(merged, "filter_bots", "");
  c.threshold_mode = parse_threshold_mode(get<std::string>(merged, "threshold_mode", ""));
  const auto& th = merged.at("thresholds");
  c.thresholds.negative = get<double>(th, "negative", "thresholds.");
  for (auto id : kIdentities)
    c.thresholds.identity[static_cast<std::size_t>(id)] =
        get<double>(th, std::string(identity_name(id)).c_str(), "thresholds.");
  c.annotation_sample_size = get<std::size_t>(merged, "annotation_sample_size", "");
  c.window = window_at(merged, "window", "");
  c.curve_windows.clear();
  for (const auto& w : get<std::vector<std::string>>(merged, "curve_windows", ""))
    c.curve_windows.push_back(Window::parse(w));
  c.seed = get<std::uint64_t>(merged, "seed", "");

  const auto& pr = merged.at("profile");
  c.profile.n_comments = get<std::size_t>(pr, "n_comments", "profile.");
  c.profile.n_submissions = get<std::size_t>(pr, "n_submissions", "profile.");
  c.profile.k_min = get<int>(pr, "k_min", "profile.");
  c.profile.k_max = get<int>(pr, "k_max", "profile.");
  c.profile.restarts = get<int>(pr, "restarts", "profile.");
  c.profile.theta_general = get<double>(pr, "theta_general", "profile.");
  c.profile.lgbtq_delta = get<double>(pr, "lgbtq_delta", "profile.");

  const auto& m = merged.at("match");
  c.match.top_k = get<std::size_t>(m, "top_k", "match.");
  c.match.max_candidates = get<std::size_t>(m, "max_candidates", "match.");
  c.match.ridge = get<double>(m, "ridge", "match.");
  c.match.collapse_activity = get<bool>(m, "collapse_activity", "match.");

  const auto& lx = merged.at("lexicon");
  c.lexicon.lambda = get<double>(lx, "lambda", "lexicon.");
  c.lexicon.top_n = get<std::size_t>(lx, "top_n", "lexicon.");
  c.lexicon.early_window = window_at(lx, "early_window", "lexicon.");
  c.lexicon.min_movers = get<std::size_t>(lx, "min_movers", "lexicon.");
  c.lexicon.distinct_types = get<bool>(lx, "distinct_types", "lexicon.");
  c.lexicon.alpha = get<double>(lx, "alpha", "lexicon.");

  const auto& tp = merged.at("topics");
  c.topics.dim = get<std::size_t>(tp, "dim", "topics.");
  c.topics.k_min = get<int>(tp, "k_min", "topics.");
  c.topics.k_max = get<int>(tp, "k_max", "topics.");
  c.topics.outlier_sim = get<double>(tp, "outlier_sim", "topics.");
  c.topics.merge_sim = get<double>(tp, "merge_sim", "topics.");
  c.topics.top_n = get<std::size_t>(tp, "top_n", "topics.");
  c.topics.min_coverage = get<double>(tp, "min_coverage", "topics.");

  const auto& pd = merged.at("predict");
  c.predict.dim = get<std::size_t>(pd, "dim", "predict.");
  c.predict.runs = get<std::size_t>(pd, "runs", "predict.");
  c.predict.max_epochs = get<int>(pd, "max_epochs", "predict.");
  c.predict.lr = get<double>(pd, "lr", "predict.");
  c.predict.batch = get<std::size_t>(pd, "batch", "predict.");
  c.predict.dropout = get<double>(pd, "dropout", "predict.");
  c.predict.patience = get<int>(pd, "patience", "predict.");
  c.predict.padding = get<std::size_t>(pd, "padding", "predict.");
  c.predict.text_span = window_at(pd, "text_span", "predict.");

  const auto& tg = merged.at("toggles");
  c.toggles.match = get<bool>(tg, "match", "toggles.");
  c.toggles.lexicon = get<bool>(tg, "lexicon", "toggles.");
  c.toggles.topics = get<bool>(tg, "topics", "toggles.");
  c.toggles.predict = get<bool>(tg, "predict", "toggles.");

  if (c.profile.k_min < 2 || c.profile.k_max < c.profile.k_min)
    throw Error("config profile: need 2 <= k_min <= k_max");
  if (c.predict.dropout < 0.0 || c.predict.dropout >= 1.0)
    throw Error("config predict.dropout must lie in [0, 1)");
  return c;
}

PipelineConfig load_config(const std::optional<fs::path>& path, const json& overrides,
                           bool use_environment) {
  json merged = default_config();
  fs::path base = fs::current_path();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error(fmt::format("cannot read config {}", path->string()));
    json file;
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(fmt::format("{}: {}", path->string(), e.what()));
    }
    merge_into(merged, file, "");
    base = fs::absolute(*path).parent_path();
  }
  if (use_environment) apply_environment(merged, default_config(), "PERIPATOS");
  merge_into(merged, overrides, "");
  return parse_config(merged, base);
}

SeedLexicons load_seed_lexicons(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(fmt::format("cannot read seed lexicons {}", path.string()));
  SeedLexicons seeds;
  try {
    const auto j = json::parse(in);
    seeds.negative = j.at("negative").get<std::vector<std::string>>();
    for (const auto& [name, words] : j.at("identity").items()) {
      const auto id = parse_identity(name);
      if (!id) throw Error(fmt::format("{}: unknown identity '{}'", path.string(), name));
      seeds.identity[static_cast<std::size_t>(*id)] = words.get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw Error(fmt::format("{}: {}", path.string(), e.what()));
  }
  return seeds;
}

json seed_lexicons_json(const SeedLexicons& seeds) {
  json identity = json::object();
  for (auto id : kIdentities) {
    const auto& words = seeds.identity[static_cast<std::size_t>(id)];
    if (!words.empty()) identity[std::string(identity_name(id))] = words;
  }
  return {{"negative", seeds.negative}, {"identity", identity}};
}

// ---------------------------------------------------------------------------
// Stages

namespace {

// Artifact file -> producing stage.
const std::map<std::string, Stage>& producers() {
  static const std::map<std::string, Stage> m = {
      {"corpus.jsonl", Stage::ingest},      {"scores.csv", Stage::score},
      {"thresholds.json", Stage::score},    {"profiles.csv", Stage::profile},
      {"clusters.csv", Stage::cluster},     {"transitions.csv", Stage::transitions},
      {"effects.csv", Stage::match},        {"diffusion.csv", Stage::lexicon},
      {"eval.csv", Stage::predict},
  };
  return m;
}

std::string fmt_bool(bool b) { return b ? "1" : "0"; }

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

class Runner {
 public:
  explicit Runner(const PipelineConfig& config) : cfg_(config), out_(config.paths.output) {}

  void run(Stage stage);
  const std::vector<std::string>& stages_run() const { return stages_run_; }

 private:
  fs::path require(const std::string& file) const {
    const auto path = out_ / file;
    if (!fs::exists(path))
      throw Error(fmt::format("missing {}; run the '{}' stage first", path.string(),
                              stage_name(producers().at(file))));
    return path;
  }
  void put(const std::string& file, const std::string& content) const {
    write_atomic(out_ / file, content);
  }

  const Corpus& corpus();
  const CategoryMap& categories();
  std::vector<std::string> category_names();
  const std::vector<PeripateticLabel>& labels();
  ThresholdSet thresholds() const;

  void ingest();
  void score();
  void profile();
  void cluster();
  void transitions();
  void match();
  void lexicon();
  void topics();
  void predict();
  void report();

  const PipelineConfig& cfg_;
  fs::path out_;
  std::optional<Corpus> corpus_;
  std::optional<CategoryMap> categories_;
  std::optional<std::vector<PeripateticLabel>> labels_;
  std::vector<std::string> stages_run_;
};

const Corpus& Runner::corpus() {
  if (!corpus_) corpus_ = ingest_events(require("corpus.jsonl")).corpus;
  return *corpus_;
}

const CategoryMap& Runner::categories() {
  if (!categories_) {
    const auto table = csv::read(require("clusters.csv"));
    const auto ci = table.column("community"), ki = table.column("category");
    CategoryMap m;
    for (const auto& row : table.rows) m[row.at(ci)] = row.at(ki);
    categories_ = std::move(m);
  }
  return *categories_;
}

std::vector<std::string> Runner::category_names() {
  std::set<std::string> names;
  for (const auto& [_, c] : categories()) names.insert(c);
  return {names.begin(), names.end()};
}

const std::vector<PeripateticLabel>& Runner::labels() {
  if (!labels_) labels_ = label_peripatetic(first_hate_events(corpus(), categories()), cfg_.window);
  return *labels_;
}

ThresholdSet Runner::thresholds() const {
  std::ifstream in(require("thresholds.json"));
  const auto j = json::parse(in);
  ThresholdSet t;
  t.negative = j.at("negative").get<double>();
  for (auto id : kIdentities)
    t.identity[static_cast<std::size_t>(id)] =
        j.at("identity").at(std::string(identity_name(id))).get<double>();
  return t;
}

void Runner::ingest() {
  if (!fs::exists(cfg_.paths.corpus))
    throw Error(fmt::format("corpus file {} does not exist", cfg_.paths.corpus.string()));
  auto result = ingest_events(cfg_.paths.corpus);
  Corpus c = std::move(result.corpus);
  const auto raw_posts = c.size();
  if (cfg_.filter_bots) c = filter_bots(c);
  const std::set<std::string> hate(cfg_.hate_communities.begin(), cfg_.hate_communities.end());
  const auto before = c.communities();
  c = filter_small_communities(c, cfg_.min_community_users, &hate);
  const auto after = c.communities();
  std::vector<std::string> dropped;
  std::set_difference(before.begin(), before.end(), after.begin(), after.end(),
                      std::back_inserter(dropped));
  const std::set<std::string> present(after.begin(), after.end());
  for (const auto& h : cfg_.hate_communities)
    if (!present.contains(h) && std::find(dropped.begin(), dropped.end(), h) == dropped.end())
      log::warning(fmt::format("hate community '{}' has no posts in the corpus", h));

  std::ostringstream jsonl;
  serialize_jsonl(c, jsonl);
  put("corpus.jsonl", jsonl.str());
  json report = {{"lines", result.report.lines},
                 {"malformed", result.report.malformed},
                 {"duplicates", result.report.duplicates},
                 {"posts_read", raw_posts},
                 {"posts_kept", c.size()},
                 {"users", c.user_index().size()},
                 {"communities", after.size()},
                 {"dropped_small_communities", dropped},
                 {"diagnostics", result.report.diagnostics}};
  put("ingest_report.json", report.dump(2) + "\n");
  corpus_ = std::move(c);
}

void Runner::score() {
  const auto& c = corpus();
  ScoreMap scores;
  if (cfg_.paths.scores) {
    scores = load_scores(*cfg_.paths.scores);
  } else if (cfg_.paths.seed_lexicons) {
    scores = fallback_scorer(c, load_seed_lexicons(*cfg_.paths.seed_lexicons));
  } else {
    throw Error("the score stage needs paths.scores or paths.seed_lexicons");
  }
  const auto missing = missing_scores(c, scores);
  if (!missing.empty())
    log::warning(fmt::format("{} posts have no scores and will be skipped", missing.size()));

  CalibrationResult cal;
  cal.thresholds = cfg_.thresholds;
  auto mode = cfg_.threshold_mode;
  if (mode == ThresholdMode::f1 && !cfg_.paths.validation) {
    log::warning("f1 calibration needs paths.validation; using configured thresholds");
    mode = ThresholdMode::fixed;
  }
  if (mode == ThresholdMode::r2 && !cfg_.paths.annotations) {
    log::warning("r2 calibration needs paths.annotations; using configured thresholds");
    mode = ThresholdMode::fixed;
  }
  if (mode == ThresholdMode::f1) {
    // Columns: post_id and one 0/1 column per identity.
    const auto table = csv::read(*cfg_.paths.validation);
    const auto pid = table.column("post_id");
    std::vector<LabeledScores> validation;
    std::size_t skipped = 0;
    for (const auto& row : table.rows) {
      auto it = scores.find(row.at(pid));
      if (it == scores.end()) {
        ++skipped;
        continue;
      }
      LabeledScores ls{it->second, {}};
      for (auto id : kIdentities)
        ls.truth[static_cast<std::size_t>(id)] =
            row.at(table.column(identity_name(id))) == "1";
      validation.push_back(std::move(ls));
    }
    if (skipped) log::warning(fmt::format("{} validation posts have no scores", skipped));
    cal = calibrate_thresholds(validation);
  } else if (mode == ThresholdMode::r2) {
    const auto annotations = load_annotations(*cfg_.paths.annotations, cfg_.annotation_sample_size);
    std::map<std::string, std::vector<IdentityScores>> samples;
    std::uint64_t stream = 0;
    for (const auto& [community, _] : annotations.counts) {
      auto& out = samples[community];
      for (const auto& id : sample_batches(c, community, cfg_.annotation_sample_size, 0,
                                           stats::derive_seed(cfg_.seed, stream++)))
        if (auto it = scores.find(id); it != scores.end()) out.push_back(it->second);
    }
    cal = calibrate_thresholds_r2(samples, annotations.mean_counts());
  }

  std::ostringstream csv_out;
  write_scores(scores, csv_out);
  put("scores.csv", csv_out.str());
  json identity = json::object(), objective = json::object();
  for (auto id : kIdentities) {
    const auto i = static_cast<std::size_t>(id);
    identity[std::string(identity_name(id))] = cal.thresholds.identity[i];
    objective[std::string(identity_name(id))] =
        cal.objective[i] ? json(*cal.objective[i]) : json(nullptr);
  }
  json t = {{"mode", threshold_mode_name(mode)},
            {"negative", cal.thresholds.negative},
            {"identity", identity},
            {"objective", objective}};
  put("thresholds.json", t.dump(2) + "\n");
}

void Runner::profile() {
  const auto scores = load_scores(require("scores.csv"));
  const auto t = thresholds();
  const auto& c = corpus();
  std::vector<std::string> communities;
  for (const auto& h : cfg_.hate_communities)
    if (!c.community_posts(h).empty()) communities.push_back(h);
  std::sort(communities.begin(), communities.end());
  communities.erase(std::unique(communities.begin(), communities.end()), communities.end());
  auto build = build_profiles(c, scores, t, communities,
                              {cfg_.profile.n_comments, cfg_.profile.n_submissions, cfg_.seed});
  zscore_transform(build.profiles);

  std::vector<std::string> head = {"community", "n_sampled"};
  for (auto id : kIdentities) head.push_back(fmt::format("p_{}", identity_name(id)));
  for (auto id : kIdentities) head.push_back(fmt::format("z_{}", identity_name(id)));
  std::ostringstream out;
  csv::Writer w(out);
  w.row(head);
  for (const auto& p : build.profiles) {
    std::vector<std::string> row = {p.community, std::to_string(p.n_sampled)};
    for (double v : p.proportions) row.push_back(csv::num(v));
    for (double v : p.z) row.push_back(csv::num(v));
    w.row(row);
  }
  put("profiles.csv", out.str());

  if (build.profiles.size() >= 3) {
    const auto xy = project_2d(z_matrix(build.profiles));
    std::ostringstream proj;
    csv::Writer pw(proj);
    pw.row({"community", "pc1", "pc2"});
    for (std::size_t i = 0; i < build.profiles.size(); ++i)
      pw.row({build.profiles[i].community, csv::num(xy(static_cast<Eigen::Index>(i), 0)),
              csv::num(xy(static_cast<Eigen::Index>(i), 1))});
    put("projection.csv", proj.str());
  }
}

void Runner::cluster() {
  const auto table = csv::read(require("profiles.csv"));
  std::vector<CommunityProfile> profiles;
  for (const auto& row : table.rows) {
    CommunityProfile p;
    p.community = row.at(table.column("community"));
    for (auto id : kIdentities)
      p.z[static_cast<std::size_t>(id)] =
          std::stod(row.at(table.column(fmt::format("z_{}", identity_name(id)))));
    profiles.push_back(std::move(p));
  }
  if (profiles.size() < 3) throw Error("clustering needs at least three profiled communities");
  std::vector<std::string> names;
  for (const auto& p : profiles) names.push_back(p.community);
  const auto points = z_matrix(profiles);
  KMeansOptions km;
  km.restarts = cfg_.profile.restarts;
  auto sel = select_k(points, names, cfg_.profile.k_min, cfg_.profile.k_max, cfg_.seed, km);
  auto& cl = sel.clustering;
  cl.names = name_clusters(cl.centroids, {cfg_.profile.theta_general, cfg_.profile.lgbtq_delta});

  std::ostringstream out;
  csv::Writer w(out);
  w.row({"community", "cluster", "category"});
  for (std::size_t i = 0; i < cl.communities.size(); ++i)
    w.row({cl.communities[i], std::to_string(cl.assignment[i]),
           cl.names[static_cast<std::size_t>(cl.assignment[i])]});
  put("clusters.csv", out.str());

  std::ostringstream ks;
  csv::Writer kw(ks);
  kw.row({"k", "silhouette"});
  for (const auto& [k, s] : sel.scores) kw.row({std::to_string(k), csv::num(s)});
  put("k_selection.csv", ks.str());

  std::ostringstream cs;
  csv::Writer cw(cs);
  std::vector<std::string> head = {"cluster", "category"};
  for (auto id : kIdentities) head.push_back(fmt::format("z_{}", identity_name(id)));
  cw.row(head);
  for (Eigen::Index r = 0; r < cl.centroids.rows(); ++r) {
    std::vector<std::string> row = {std::to_string(r), cl.names[static_cast<std::size_t>(r)]};
    for (Eigen::Index j = 0; j < cl.centroids.cols(); ++j) row.push_back(csv::num(cl.centroids(r, j)));
    cw.row(row);
  }
  put("centroids.csv", cs.str());
  categories_.reset();
  labels_.reset();
}

void Runner::transitions() {
  const auto& c = corpus();
  const auto names = category_names();
  const auto& labs = labels();
  auto matrix = transition_counts(labs, names);
  pa_null_ratios(matrix, category_user_counts(c, categories()));

  std::ostringstream lo;
  csv::Writer lw(lo);
  lw.row({"user", "origin_category", "origin_community", "origin_time", "is_peripatetic",
          "destinations", "rejoined", "window"});
  for (const auto& l : labs) {
    std::vector<std::string> dest;
    for (const auto& [cat, t] : l.destinations) dest.push_back(fmt::format("{}@{}", cat, t));
    lw.row({l.user, l.origin_category, l.origin_community, std::to_string(l.origin_time),
            fmt_bool(l.is_peripatetic), join(dest, ";"), fmt_bool(l.rejoined_within()),
            cfg_.window.label()});
  }
  put("labels.csv", lo.str());

  std::ostringstream to;
  csv::Writer tw(to);
  tw.row({"origin", "destination", "count", "ratio"});
  for (std::size_t o = 0; o < names.size(); ++o)
    for (std::size_t d = 0; d < names.size(); ++d)
      tw.row({names[o], names[d], std::to_string(matrix.counts[o][d]),
              csv::num(matrix.ratios[o][d])});
  put("transitions.csv", to.str());

  std::ostringstream ao;
  csv::Writer aw(ao);
  aw.row({"user", "gap_seconds", "posts_before", "posts_after", "rate_before", "rate_after",
          "ratio"});
  for (const auto& a : activity_change(c, labs))
    aw.row({a.user, std::to_string(a.gap_seconds), std::to_string(a.posts_before),
            std::to_string(a.posts_after), csv::num(a.rate_before), csv::num(a.rate_after),
            csv::num(a.ratio)});
  put("activity.csv", ao.str());
}

void Runner::match() {
  const auto& c = corpus();
  const auto& cats = categories();
  std::set<std::string> hate;
  for (const auto& [community, _] : cats) hate.insert(community);

  // Joiners are matched month by month, earliest first, so earlier joiners
  // get first pick of counterparts.
  std::map<std::pair<Timestamp, std::string>, std::vector<std::pair<std::string, Timestamp>>>
      batches;
  for (const auto& [user, events] : first_hate_events(c, cats))
    if (!events.empty())
      batches[{month_start(events.front().timestamp), events.front().community}].emplace_back(
          user, events.front().timestamp);

  std::map<std::string, std::optional<CandidatePool>> pools;
  std::uint64_t stream = 0;
  for (const auto& community : hate) {
    PoolOptions po{cfg_.match.top_k, cfg_.match.max_candidates,
                   stats::derive_seed(cfg_.seed, stream++)};
    try {
      pools[community] = candidate_pool(c, community, hate, po);
    } catch (const Error& e) {
      log::warning(fmt::format("{}: {}", community, e.what()));
      pools[community] = std::nullopt;
    }
  }

  std::set<std::string> used;
  std::vector<MatchedPair> pairs;
  std::vector<std::string> pair_community;
  std::ostringstream bo;
  csv::Writer bw(bo);
  bw.row({"month", "hate_community", "joiners", "pairs", "mean_abs_smd_pre",
          "mean_abs_smd_post"});
  auto mean_abs = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) -> std::optional<double> {
    if (a.rows() < 2 || b.rows() < 2) return std::nullopt;
    const Eigen::VectorXd smd = standardized_mean_differences(a, b);
    double total = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < smd.size(); ++i)
      if (std::isfinite(smd(i))) total += smd(i), ++n;
    return n ? std::optional<double>(total / static_cast<double>(n)) : std::nullopt;
  };
  for (const auto& [key, js] : batches) {
    const auto& [month, community] = key;
    const auto& pool = pools.at(community);
    if (!pool) continue;
    MatchRequest req{community, js, hate, cfg_.match.collapse_activity};
    MatchOptions mo;
    mo.ridge = cfg_.match.ridge;
    const auto m = match_community(c, req, *pool, mo, used);
    for (const auto& p : m.pairs) {
      pairs.push_back(p);
      pair_community.push_back(community);
    }
    bw.row({std::to_string(month), community, std::to_string(js.size()),
            std::to_string(m.pairs.size()),
            csv::num(mean_abs(m.pre_joiner_features, m.pre_candidate_features)),
            csv::num(mean_abs(m.joiner_features, m.counterpart_features))});
  }
  put("balance.csv", bo.str());

  const auto timelines = pair_timelines(c, cats, pairs);
  std::ostringstream po;
  csv::Writer pw(po);
  pw.row({"hate_community", "joiner", "counterpart", "distance", "anchor_time", "origin_category",
          "joiner_move_delay", "counterpart_move_delay"});
  auto delay = [](const std::optional<std::int64_t>& d) {
    return d ? std::to_string(*d) : std::string();
  };
  for (std::size_t i = 0; i < pairs.size(); ++i)
    pw.row({pair_community[i], pairs[i].joiner, pairs[i].counterpart, csv::num(pairs[i].distance),
            std::to_string(pairs[i].anchor_time), timelines[i].origin_category,
            delay(timelines[i].joiner_move_delay), delay(timelines[i].counterpart_move_delay)});
  put("pairs.csv", po.str());

  std::ostringstream eo;
  csv::Writer ew(eo);
  ew.row({"category", "n", "moved_treat", "moved_counter", "p_treat", "p_counter", "ratio", "z",
          "p_value", "window"});
  for (const auto& r : treatment_effect(timelines, cfg_.window))
    ew.row({r.category, std::to_string(r.n), std::to_string(r.moved_treat),
            std::to_string(r.moved_counter), csv::num(r.p_treat), csv::num(r.p_counter),
            csv::num(r.ratio), csv::num(r.z), csv::num(r.p_value), cfg_.window.label()});
  put("effects.csv", eo.str());

  std::ostringstream co;
  csv::Writer cw(co);
  cw.row({"window", "mean_ratio", "standard_error", "n_categories"});
  for (const auto& p : effect_size_curve(timelines, cfg_.curve_windows))
    cw.row({p.window.label(), csv::num(p.mean_ratio), csv::num(p.standard_error),
            std::to_string(p.n_categories)});
  put("effect_curve.csv", co.str());
}

void write_diffusion(csv::Writer& w, const DiffusionMatrix& m) {
  w.row({"origin", "destination", "a", "b", "c", "d", "n", "odds_ratio", "log_odds", "p_value",
         "suppressed", "significant"});
  for (std::size_t o = 0; o < m.categories.size(); ++o)
    for (std::size_t d = 0; d < m.categories.size(); ++d) {
      const auto& cell = m.cells[o][d];
      if (!cell) continue;
      w.row({m.categories[o], m.categories[d], std::to_string(cell->table.a),
             std::to_string(cell->table.b), std::to_string(cell->table.c),
             std::to_string(cell->table.d), std::to_string(cell->n), csv::num(cell->odds_ratio),
             csv::num(std::log(cell->odds_ratio)), csv::num(cell->p_value),
             fmt_bool(cell->suppressed), fmt_bool(cell->significant)});
    }
}

void Runner::lexicon() {
  const auto& c = corpus();
  const auto& cats = categories();
  const auto names = category_names();
  std::map<std::string, std::vector<std::string>> texts;
  for (const auto& p : c.posts()) {
    auto it = cats.find(p.community);
    if (it == cats.end()) continue;
    if (auto t = clean_text(p.text)) texts[it->second].push_back(std::move(*t));
  }
  std::map<std::string, TermCounts> corpora;
  for (const auto& [cat, ts] : texts) corpora[cat] = count_terms(ts);
  SageOptions so;
  so.lambda = cfg_.lexicon.lambda;
  const auto lex = build_lexicons(corpora, so, cfg_.lexicon.top_n);
  const auto owners = disjointify(lex);

  std::ostringstream lo;
  csv::Writer lw(lo);
  lw.row({"category", "rank", "term", "eta", "owner"});
  for (const auto& [cat, terms] : lex.terms)
    for (const auto& t : terms)
      lw.row({cat, std::to_string(t.rank), t.term, csv::num(t.eta), owners.at(t.term)});
  put("lexicons.csv", lo.str());

  DiffusionOptions opt;
  opt.early_window = cfg_.lexicon.early_window;
  opt.min_movers = cfg_.lexicon.min_movers;
  opt.distinct_types = cfg_.lexicon.distinct_types;
  opt.alpha = cfg_.lexicon.alpha;
  std::ostringstream d_out;
  csv::Writer dw(d_out);
  write_diffusion(dw, diffusion_matrix(c, cats, labels(), owners, names, opt));
  put("diffusion.csv", d_out.str());

  std::ostringstream s_out;
  csv::Writer sw(s_out);
  write_diffusion(sw, before_after_shift(c, labels(), owners, names, opt));
  put("shift.csv", s_out.str());
}

void Runner::topics() {
  const auto& c = corpus();
  const auto& cats = categories();
  std::optional<EmbeddingStore> loaded;
  if (cfg_.paths.embeddings)
    loaded = cfg_.paths.embeddings->extension() == ".csv"
                 ? EmbeddingStore::load_csv(*cfg_.paths.embeddings)
                 : EmbeddingStore::load_binary(*cfg_.paths.embeddings);
  EmbeddingStore generated(cfg_.topics.dim);

  std::map<std::string, std::vector<std::pair<std::string, std::string>>> docs;
  std::size_t missing = 0;
  for (const auto& p : c.posts()) {
    if (!cats.contains(p.community)) continue;
    auto text = clean_text(p.text);
    if (!text) continue;
    if (loaded) {
      if (!loaded->contains(p.post_id)) {
        ++missing;
        continue;
      }
    } else {
      generated.add(p.post_id, fallback_embed(*text, cfg_.topics.dim, cfg_.seed));
    }
    docs[p.community].emplace_back(p.post_id, std::move(*text));
  }
  if (missing) log::warning(fmt::format("{} documents have no embedding and were skipped", missing));
  const EmbeddingStore& store = loaded ? *loaded : generated;

  std::vector<TopicModel> models;
  std::uint64_t stream = 0;
  for (const auto& [community, ds] : docs) {
    TopicOptions to;
    to.k_min = cfg_.topics.k_min;
    to.k_max = cfg_.topics.k_max;
    to.outlier_sim = cfg_.topics.outlier_sim;
    to.seed = stats::derive_seed(cfg_.seed, stream++);
    auto model = fit_topics(store, ds, community, to);
    reduce_outliers(model, store);
    models.push_back(std::move(model));
  }
  if (models.empty()) throw Error("no hate-community documents to model");
  const auto merged = merge_models(models, cfg_.topics.merge_sim);

  std::map<std::string, bool> peripatetic_user;
  for (const auto& l : labels()) peripatetic_user[l.user] = l.is_peripatetic;
  std::map<std::string, bool> doc_flags;
  for (const auto& id : merged.doc_ids) {
    const Post* p = c.find(id);
    if (!p) continue;
    if (auto it = peripatetic_user.find(p->author); it != peripatetic_user.end())
      doc_flags[id] = it->second;
  }
  const auto odds = topic_odds(merged, doc_flags, cats.size(), cfg_.topics.top_n,
                               cfg_.topics.min_coverage);

  std::ostringstream tout;
  csv::Writer tw(tout);
  tw.row({"topic", "post_count", "sources", "terms"});
  for (const auto& t : merged.topics) {
    std::vector<std::string> terms;
    for (const auto& [term, _] : t.representation) terms.push_back(term);
    tw.row({std::to_string(t.id), std::to_string(t.post_count),
            join({t.sources.begin(), t.sources.end()}, ";"), join(terms, " ")});
  }
  put("topics.csv", tout.str());

  std::set<int> top, bottom;
  for (const auto& s : odds.top) top.insert(s.topic);
  for (const auto& s : odds.bottom) bottom.insert(s.topic);
  std::ostringstream oout;
  csv::Writer ow(oout);
  ow.row({"topic", "label", "post_count", "coverage", "a", "b", "c", "d", "log_odds", "p_value",
          "p_adjusted", "extreme"});
  for (const auto& s : odds.rows)
    ow.row({std::to_string(s.topic), s.label, std::to_string(s.post_count), csv::num(s.coverage),
            std::to_string(s.table.a), std::to_string(s.table.b), std::to_string(s.table.c),
            std::to_string(s.table.d), csv::num(s.log_odds), csv::num(s.p_value),
            csv::num(s.p_adjusted),
            top.contains(s.topic) ? "top" : (bottom.contains(s.topic) ? "bottom" : "")});
  put("topic_odds.csv", oout.str());
}

void Runner::predict() {
  const auto& c = corpus();
  std::optional<EmbeddingStore> store;
  if (cfg_.paths.embeddings) {
    store = cfg_.paths.embeddings->extension() == ".csv"
                ? EmbeddingStore::load_csv(*cfg_.paths.embeddings)
                : EmbeddingStore::load_binary(*cfg_.paths.embeddings);
    if (store->dim() != cfg_.predict.dim) {
      log::warning("embedding dimension differs from predict.dim; using fallback embeddings");
      store.reset();
    }
  }
  ExampleOptions eo;
  eo.text_span = cfg_.predict.text_span;
  eo.dim = cfg_.predict.dim;
  eo.embed_seed = cfg_.seed;
  const auto data = build_examples(c, categories(), labels(), eo, store ? &*store : nullptr);

  std::ostringstream out;
  csv::Writer w(out);
  w.row({"arm", "category", "runs", "mean_auc", "standard_error"});
  if (data.examples.size() < 100) {
    log::warning(fmt::format("only {} prediction examples; evaluation needs 100",
                             data.examples.size()));
  } else {
    SplitConfig split;
    split.runs = cfg_.predict.runs;
    split.seed = cfg_.seed;
    split.padding = cfg_.predict.padding;
    TrainConfig tc;
    tc.max_epochs = cfg_.predict.max_epochs;
    tc.lr = cfg_.predict.lr;
    tc.batch = cfg_.predict.batch;
    tc.dropout = cfg_.predict.dropout;
    tc.patience = cfg_.predict.patience;
    for (const auto& report : ablation(data, split, tc))
      for (const auto& cat : report.categories)
        w.row({std::string(arm_name(report.arm)), cat.category, std::to_string(cat.aucs.size()),
               csv::num(cat.aucs.empty() ? std::nullopt : std::optional<double>(cat.mean)),
               csv::num(cat.aucs.empty() ? std::nullopt
                                         : std::optional<double>(cat.standard_error))});
  }
  put("eval.csv", out.str());
}

std::optional<double> parse_num(const std::string& s) {
  if (s.empty() || s == "nan") return std::nullopt;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  return std::stod(s);
}

void Runner::report() {
  const auto stamp = utc_now();
  {
    const auto t = csv::read(require("transitions.csv"));
    std::vector<std::string> names;
    for (const auto& row : t.rows)
      if (std::find(names.begin(), names.end(), row[0]) == names.end()) names.push_back(row[0]);
    Heatmap h;
    h.title = fmt::format("Destination preference over size-proportional choice ({})",
                          cfg_.window.label());
    h.rows = h.columns = names;
    h.values.assign(names.size(), std::vector<std::optional<double>>(names.size()));
    h.significant.assign(names.size(), std::vector<bool>(names.size(), false));
    for (const auto& row : t.rows) {
      const auto o = static_cast<std::size_t>(std::find(names.begin(), names.end(), row[0]) - names.begin());
      const auto d = static_cast<std::size_t>(std::find(names.begin(), names.end(), row[1]) - names.begin());
      h.values[o][d] = parse_num(row[3]);
      // No test is attached to these ratios; every observed cell is labelled.
      h.significant[o][d] = std::stoll(row[2]) > 0;
    }
    emit_heatmap(h, out_ / "report" / "transitions.svg", stamp);
  }
  if (fs::exists(out_ / "diffusion.csv")) {
    const auto t = csv::read(out_ / "diffusion.csv");
    std::vector<std::string> names = category_names();
    Heatmap h;
    h.title = "Early use of destination lexicon, log odds ratio";
    h.scale = HeatmapScale::log_odds;
    h.rows = h.columns = names;
    h.values.assign(names.size(), std::vector<std::optional<double>>(names.size()));
    h.significant.assign(names.size(), std::vector<bool>(names.size(), false));
    for (const auto& row : t.rows) {
      const auto o = static_cast<std::size_t>(std::find(names.begin(), names.end(), row[0]) - names.begin());
      const auto d = static_cast<std::size_t>(std::find(names.begin(), names.end(), row[1]) - names.begin());
      if (o >= names.size() || d >= names.size() || row[t.column("suppressed")] == "1") continue;
      h.values[o][d] = parse_num(row[t.column("log_odds")]);
      h.significant[o][d] = row[t.column("significant")] == "1";
    }
    emit_heatmap(h, out_ / "report" / "diffusion.svg", stamp);
  }
  if (fs::exists(out_ / "effects.csv")) {
    const auto t = csv::read(out_ / "effects.csv");
    BarChart b;
    b.title = fmt::format("Joiner vs counterpart move ratio ({})", cfg_.window.label());
    b.reference = 1.0;
    for (const auto& row : t.rows) {
      const auto v = parse_num(row[t.column("ratio")]);
      b.labels.push_back(row[0]);
      b.values.push_back(v && std::isfinite(*v) ? *v : std::numeric_limits<double>::quiet_NaN());
    }
    emit_bar_chart(b, out_ / "report" / "effects.svg", stamp);
  }
  if (fs::exists(out_ / "eval.csv")) {
    const auto t = csv::read(out_ / "eval.csv");
    BarChart b;
    b.title = "Mean ROC-AUC, all features";
    b.reference = 0.5;
    for (const auto& row : t.rows) {
      if (row[0] != "all") continue;
      b.labels.push_back(row[1]);
      const auto m = parse_num(row[3]);
      const auto se = parse_num(row[4]);
      b.values.push_back(m.value_or(std::numeric_limits<double>::quiet_NaN()));
      b.errors.push_back(se.value_or(0.0));
    }
    emit_bar_chart(b, out_ / "report" / "eval.svg", stamp);
  }
}

void Runner::run(Stage stage) {
  if (stage == Stage::all) {
    for (Stage s : {Stage::ingest, Stage::score, Stage::profile, Stage::cluster,
                    Stage::transitions, Stage::match, Stage::lexicon, Stage::topics,
                    Stage::predict, Stage::report}) {
      if ((s == Stage::match && !cfg_.toggles.match) ||
          (s == Stage::lexicon && !cfg_.toggles.lexicon) ||
          (s == Stage::topics && !cfg_.toggles.topics) ||
          (s == Stage::predict && !cfg_.toggles.predict))
        continue;
      run(s);
    }
    return;
  }
  log::info(fmt::format("stage {}", stage_name(stage)));
  fs::create_directories(out_);
  switch (stage) {
    case Stage::ingest: ingest(); break;
    case Stage::score: score(); break;
    case Stage::profile: profile(); break;
    case Stage::cluster: cluster(); break;
    case Stage::transitions: transitions(); break;
    case Stage::match: match(); break;
    case Stage::lexicon: lexicon(); break;
    case Stage::topics: topics(); break;
    case Stage::predict: predict(); break;
    case Stage::report: report(); break;
    case Stage::all: break;
  }
  stages_run_.emplace_back(stage_name(stage));
}

}  // namespace

void run(Stage stage, const PipelineConfig& config) {
  Runner runner(config);
  runner.run(stage);

  const fs::path out = config.paths.output;
  json artifacts = json::object();
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(out))
    if (entry.is_regular_file() && entry.path().filename() != "run_manifest.json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    const auto bytes = buf.str();
    artifacts[fs::relative(f, out).generic_string()] = {
        {"bytes", bytes.size()}, {"fnv1a", fmt::format("{:016x}", fnv1a(bytes))}};
  }
  json manifest = {
      {"stage", stage_name(stage)},
      {"stages_run", runner.stages_run()},
      {"config_hash", config.hash()},
      {"seed", config.seed},
      {"generated_at", utc_now()},
      {"versions",
       {{"peripatos", kVersion},
        {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION,
                              EIGEN_MINOR_VERSION)},
        {"fmt", FMT_VERSION},
        {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR,
                                      NLOHMANN_JSON_VERSION_MINOR, NLOHMANN_JSON_VERSION_PATCH)}}},
      {"config", config.source},
      {"artifacts", artifacts},
  };
  write_atomic(out / "run_manifest.json", manifest.dump(2) + "\n");
}

void write_fixture(const SynthFixture& fixture, const fs::path& dir) {
  fs::create_directories(dir);
  std::ostringstream jsonl;
  serialize_jsonl(fixture.corpus, jsonl);
  write_atomic(dir / "events.jsonl", jsonl.str());
  write_atomic(dir / "seed_lexicons.json", seed_lexicons_json(fixture.seeds).dump(2) + "\n");

  json cells = json::array();
  for (const auto& [o, d] : fixture.planted_cells) cells.push_back(json::array({o, d}));
  json truth = {{"categories", fixture.categories},
                {"category_of", fixture.category_of},
                {"planted_cells", cells},
                {"jargon", fixture.jargon}};
  write_atomic(dir / "truth.json", truth.dump(2) + "\n");

  json config = {
      {"paths",
       {{"corpus", "events.jsonl"}, {"seed_lexicons", "seed_lexicons.json"}, {"output", "out"}}},
      {"hate_communities", fixture.hate_communities},
      {"min_community_users", 10},
      {"threshold_mode", "fixed"},
      {"profile", {{"n_comments", 200}, {"n_submissions", 200}, {"k_max", 8}}},
      {"lexicon", {{"min_movers", 10}}},
      {"topics", {{"dim", 64}, {"k_max", 6}, {"merge_sim", 0.7}}},
      {"predict", {{"dim", 32}, {"runs", 5}, {"max_epochs", 30}, {"batch", 64}}},
  };
  write_atomic(dir / "config.json", config.dump(2) + "\n");
}

}  // namespace peripatos
