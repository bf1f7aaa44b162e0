#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "peripatos/log.hpp"
#include "peripatos/pipeline.hpp"
#include "peripatos/synth.hpp"

namespace {

constexpr const char* kStages[] = {"ingest", "score",  "profile", "cluster", "transitions", "match",
                                   "lexicon", "topics", "predict", "report",  "all"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hate-community migration analysis pipeline"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> window;
  std::optional<std::string> threshold_mode;
  bool verbose = false;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--window", window, "Label window")->check(CLI::IsMember({"6w", "6m", "none"}));
  app.add_option("--threshold-mode", threshold_mode, "Threshold calibration regime")
      ->check(CLI::IsMember({"f1", "r2", "fixed"}));
  app.add_flag("-v,--verbose", verbose, "Log progress");

  for (const char* name : kStages)
    app.add_subcommand(name, fmt::format("Run the {} stage", name));

  std::string synth_dir = "fixture";
  peripatos::SynthOptions synth_options;
  auto* synth = app.add_subcommand("synth", "Write the synthetic fixture and its config");
  synth->add_option("--out", synth_dir, "Output directory")->capture_default_str();
  synth->add_option("--fixture-seed", synth_options.seed, "Fixture seed")->capture_default_str();
  synth->add_option("--joiners", synth_options.joiners_per_category, "Joiners per category")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  if (verbose) peripatos::log::set_level(peripatos::log::Level::info);

  try {
    if (synth->parsed()) {
      peripatos::write_fixture(peripatos::make_fixture(synth_options), synth_dir);
      std::cout << "fixture written to " << synth_dir << "\n";
      return 0;
    }
    nlohmann::json overrides = nlohmann::json::object();
    if (seed) overrides["seed"] = *seed;
    if (window) overrides["window"] = *window;
    if (threshold_mode) overrides["threshold_mode"] = *threshold_mode;
    const auto config = peripatos::load_config(config_path, overrides);
    const auto stage = peripatos::parse_stage(app.get_subcommands().front()->get_name());
    peripatos::run(stage, config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
