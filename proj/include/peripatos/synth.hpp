#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "peripatos/corpus.hpp"
#include "peripatos/scoring.hpp"
#include "peripatos/trajectories.hpp"

namespace peripatos {

/// Knobs for the synthetic end-to-end fixture.
struct SynthOptions {
  std::uint64_t seed = 1;
  /// Users whose first hate community lies in each category.
  std::size_t joiners_per_category = 100;
  /// Exact fraction of joiners that enter another category within the
  /// label window.
  double joiner_move_rate = 0.6;
  /// Exact fraction of twins (same pre-history, never joined) that enter a
  /// hate community of another category within the window.
  double twin_move_rate = 0.3;
  std::size_t noise_users = 150;
  std::size_t communities_per_category = 3;
  std::size_t non_hate_communities = 8;
  std::size_t jargon_size = 25;
  /// Share of hate-post tokens drawn from the community category's jargon.
  double jargon_rate = 0.2;
  /// Share of early-post tokens drawn from the destination's jargon for
  /// movers on planted cells.
  double planted_rate = 0.15;
  /// Share of tokens drawn from a random category's jargon in any hate post.
  double leak_rate = 0.02;
};

struct SynthFixture {
  Corpus corpus;
  SeedLexicons seeds;
  std::vector<std::string> hate_communities;
  std::vector<std::string> categories;
  /// The planted community categories.
  CategoryMap category_of;
  /// (origin, destination) cells whose movers use destination jargon early.
  std::vector<std::pair<std::string, std::string>> planted_cells;
  std::map<std::string, std::vector<std::string>> jargon;
};

/// Four categories (misogynistic, racist, xenophobic, Islamophobic) of hate
/// communities plus non-hate communities. Joiners and their twins share
/// identical non-hate pre-histories, so the joiner/twin move rates give a
/// planted migration ratio of joiner_move_rate / twin_move_rate.
SynthFixture make_fixture(const SynthOptions& options = {});

}  // namespace peripatos
