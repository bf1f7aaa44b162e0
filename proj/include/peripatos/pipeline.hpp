#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "peripatos/common.hpp"
#include "peripatos/scoring.hpp"
#include "peripatos/synth.hpp"

namespace peripatos {

enum class Stage {
  ingest,
  score,
  profile,
  cluster,
  transitions,
  match,
  lexicon,
  topics,
  predict,
  report,
  all,
};

std::string_view stage_name(Stage stage);
Stage parse_stage(std::string_view name);

enum class ThresholdMode { fixed, f1, r2 };
std::string_view threshold_mode_name(ThresholdMode mode);
ThresholdMode parse_threshold_mode(std::string_view name);

/// Effective run configuration. Relative paths are resolved against the
/// directory of the config file.
struct PipelineConfig {
  struct Paths {
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> scores;
    std::optional<std::filesystem::path> embeddings;
    std::optional<std::filesystem::path> annotations;
    std::optional<std::filesystem::path> validation;
    std::optional<std::filesystem::path> seed_lexicons;
    std::filesystem::path output = "out";
  } paths;

  std::vector<std::string> hate_communities;
  std::size_t min_community_users = 1000;
  bool filter_bots = true;

  ThresholdMode threshold_mode = ThresholdMode::f1;
  ThresholdSet thresholds;
  std::size_t annotation_sample_size = 20;

  Window window = Window::six_weeks();
  /// Windows of the effect-size curve.
  std::vector<Window> curve_windows = {Window::six_weeks(), Window::six_months(),
                                       Window::unbounded()};
  std::uint64_t seed = 0;

  struct Profile {
    std::size_t n_comments = 1000;
    std::size_t n_submissions = 1000;
    int k_min = 2;
    int k_max = 15;
    int restarts = 10;
    double theta_general = 0.5;
    double lgbtq_delta = 0.5;
  } profile;

  struct Match {
    std::size_t top_k = 50;
    std::size_t max_candidates = 0;
    double ridge = 1e-6;
    bool collapse_activity = false;
  } match;

  struct Lexicon {
    double lambda = 5.0;
    std::size_t top_n = 300;
    Window early_window = Window::hours(72);
    std::size_t min_movers = 20;
    bool distinct_types = false;
    double alpha = 0.05;
  } lexicon;

  struct Topics {
    std::size_t dim = 768;
    int k_min = 2;
    int k_max = 15;
    double outlier_sim = 0.3;
    double merge_sim = 0.9;
    std::size_t top_n = 100;
    double min_coverage = 0.10;
  } topics;

  struct Predict {
    std::size_t dim = 768;
    std::size_t runs = 50;
    int max_epochs = 100;
    double lr = 1e-3;
    std::size_t batch = 128;
    double dropout = 0.6;
    int patience = 5;
    std::size_t padding = 0;
    Window text_span = Window::hours(72);
  } predict;

  struct Toggles {
    bool match = true;
    bool lexicon = true;
    bool topics = true;
    bool predict = true;
  } toggles;

  /// The merged JSON the fields were read from.
  nlohmann::json source;

  /// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
};

/// Every key with its default value.
nlohmann::json default_config();

/// Defaults, then the file, then PERIPATOS_<KEY> environment variables
/// (nested keys joined by '_', upper-cased, e.g. PERIPATOS_PREDICT_RUNS),
/// then `overrides`. Throws on unknown keys or ill-typed values.
PipelineConfig load_config(const std::optional<std::filesystem::path>& path,
                           const nlohmann::json& overrides = nlohmann::json::object(),
                           bool use_environment = true);

/// Parses an already merged configuration. `base` anchors relative paths.
PipelineConfig parse_config(const nlohmann::json& merged, const std::filesystem::path& base);

SeedLexicons load_seed_lexicons(const std::filesystem::path& path);
nlohmann::json seed_lexicons_json(const SeedLexicons& seeds);

/// Runs one stage, or every enabled stage in order for Stage::all, writing
/// artifacts under the output directory and refreshing run_manifest.json.
/// A missing upstream artifact raises Error naming the stage that makes it.
void run(Stage stage, const PipelineConfig& config);

/// Writes events.jsonl, seed_lexicons.json, truth.json and a config.json
/// sized for a quick run into `dir`.
void write_fixture(const SynthFixture& fixture, const std::filesystem::path& dir);

}  // namespace peripatos
