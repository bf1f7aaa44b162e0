#include "peripatos/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <set>

#include <fmt/format.h>

#include "peripatos/stats.hpp"
#include "peripatos/text.hpp"

namespace peripatos {

namespace {

constexpr Timestamp kBase = 1577836800;  // 2020-01-01T00:00:00Z

constexpr std::array<Identity, 4> kPlantedIdentities = {
    Identity::misogyny, Identity::racism, Identity::xenophobia, Identity::islamophobia};

class Generator {
 public:
  explicit Generator(const SynthOptions& options) : opt_(options), rng_(options.seed) {}

  SynthFixture run();

 private:
  struct Draft {
    std::string author;
    std::string community;
    Timestamp timestamp;
    std::string text;
    std::int64_t karma;
    bool submission;
  };
  struct Hist {
    std::string community;
    Timestamp timestamp;
    std::int64_t karma;
    bool submission;
  };

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
  }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(between(0, static_cast<std::int64_t>(v.size()) - 1))];
  }

  std::string word();
  std::string neutral_text(std::size_t n);
  std::string hate_text(std::size_t category, std::optional<std::size_t> planted);
  std::vector<Hist> pre_history();
  void emit(const std::string& author, const std::string& community, Timestamp t,
            std::string text, std::int64_t karma, std::optional<bool> submission = {}) {
    drafts_.push_back(
        {author, community, t, std::move(text), karma, submission.value_or(uniform() < 0.25)});
  }
  std::string hate_community(std::size_t category) {
    return pick(communities_[category]);
  }

  const SynthOptions& opt_;
  std::mt19937_64 rng_;
  std::set<std::string> used_words_;
  std::vector<std::string> neutral_;
  std::vector<std::vector<std::string>> jargon_;
  std::vector<std::vector<std::string>> identity_words_;
  std::vector<std::string> negative_words_;
  std::vector<std::vector<std::string>> communities_;
  std::vector<std::string> non_hate_;
  std::vector<Draft> drafts_;
};

std::string Generator::word() {
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  for (;;) {
    std::string w;
    const auto syllables = between(2, 3);
    for (std::int64_t i = 0; i < syllables; ++i) {
      w += consonants[static_cast<std::size_t>(between(0, consonants.size() - 1))];
      w += vowels[static_cast<std::size_t>(between(0, vowels.size() - 1))];
    }
    if (!is_stopword(w) && used_words_.insert(w).second) return w;
  }
}

std::string Generator::neutral_text(std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    // Skewed toward the head of the list so frequencies look Zipf-like.
    const double u = uniform();
    const auto idx = static_cast<std::size_t>(u * u * static_cast<double>(neutral_.size()));
    if (i) out += ' ';
    out += neutral_[std::min(idx, neutral_.size() - 1)];
  }
  return out;
}

std::string Generator::hate_text(std::size_t category, std::optional<std::size_t> planted) {
  std::vector<std::string> tokens;
  const auto n = static_cast<std::size_t>(between(8, 12));
  for (std::size_t i = 0; i < n; ++i) {
    const double u = uniform();
    double edge = opt_.jargon_rate;
    if (u < edge) {
      tokens.push_back(pick(jargon_[category]));
      continue;
    }
    if (planted) {
      edge += opt_.planted_rate;
      if (u < edge) {
        tokens.push_back(pick(jargon_[*planted]));
        continue;
      }
    }
    edge += opt_.leak_rate;
    if (u < edge) {
      tokens.push_back(pick(jargon_[static_cast<std::size_t>(between(0, 3))]));
      continue;
    }
    tokens.push_back(neutral_text(1));
  }
  if (uniform() < 0.7) tokens.push_back(pick(identity_words_[category]));
  if (uniform() < 0.7) tokens.push_back(pick(negative_words_));
  std::shuffle(tokens.begin(), tokens.end(), rng_);
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

// Non-hate activity in January and February, before any hate post.
std::vector<Generator::Hist> Generator::pre_history() {
  std::vector<Hist> out;
  std::vector<std::string> pool = non_hate_;
  std::shuffle(pool.begin(), pool.end(), rng_);
  const auto n_comm = static_cast<std::size_t>(between(2, 3));
  const auto n_posts = between(3, 7);
  const auto start = between(0, 20);
  for (std::int64_t i = 0; i < n_posts; ++i) {
    const Timestamp day = start + between(0, 35);
    out.push_back({pool[static_cast<std::size_t>(i) % n_comm],
                   kBase + day * kSecondsPerDay + between(8, 10) * kSecondsPerHour +
                       between(0, 3599),
                   between(-2, 30), uniform() < 0.25});
  }
  std::sort(out.begin(), out.end(),
            [](const Hist& a, const Hist& b) { return a.timestamp < b.timestamp; });
  return out;
}

SynthFixture Generator::run() {
  SynthFixture fx;
  for (int i = 0; i < 200; ++i) neutral_.push_back(word());
  for (std::size_t c = 0; c < kPlantedIdentities.size(); ++c) {
    const auto id = kPlantedIdentities[c];
    const std::string category(identity_category_name(id));
    fx.categories.push_back(category);
    std::vector<std::string> jargon;
    for (std::size_t i = 0; i < opt_.jargon_size; ++i) jargon.push_back(word());
    fx.jargon[category] = jargon;
    jargon_.push_back(std::move(jargon));
    std::vector<std::string> ids;
    for (int i = 0; i < 3; ++i) ids.push_back(word());
    fx.seeds.identity[static_cast<std::size_t>(id)] = ids;
    identity_words_.push_back(std::move(ids));
    std::vector<std::string> names;
    for (std::size_t k = 0; k < opt_.communities_per_category; ++k) {
      names.push_back(fmt::format("{}_{}", category.substr(0, 3), k + 1));
      fx.category_of[names.back()] = category;
      fx.hate_communities.push_back(names.back());
    }
    communities_.push_back(std::move(names));
  }
  for (int i = 0; i < 4; ++i) negative_words_.push_back(word());
  fx.seeds.negative = negative_words_;
  for (std::size_t k = 0; k < opt_.non_hate_communities; ++k)
    non_hate_.push_back(fmt::format("forum_{}", k + 1));
  std::sort(fx.hate_communities.begin(), fx.hate_communities.end());

  // Each origin's movers on one planted cell use that destination's jargon.
  const std::size_t n_cat = fx.categories.size();
  for (std::size_t o = 0; o < n_cat; ++o)
    fx.planted_cells.emplace_back(fx.categories[o], fx.categories[(o + 1) % n_cat]);

  std::size_t user_no = 0;
  auto next_user = [&] { return fmt::format("u{:05}", ++user_no); };

  for (std::size_t o = 0; o < n_cat; ++o) {
    const std::size_t n = opt_.joiners_per_category;
    const auto n_move = static_cast<std::size_t>(std::lround(opt_.joiner_move_rate * n));
    const auto n_twin_move = static_cast<std::size_t>(std::lround(opt_.twin_move_rate * n));
    std::vector<std::size_t> order(n), twin_order(n);
    std::iota(order.begin(), order.end(), 0);
    std::iota(twin_order.begin(), twin_order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    std::shuffle(twin_order.begin(), twin_order.end(), rng_);
    std::vector<bool> moves(n), twin_moves(n);
    for (std::size_t i = 0; i < n_move; ++i) moves[order[i]] = true;
    for (std::size_t i = 0; i < n_twin_move; ++i) twin_moves[twin_order[i]] = true;

    std::size_t mover_no = 0, twin_mover_no = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const std::string joiner = next_user(), twin = next_user();
      for (const auto& h : pre_history()) {
        emit(joiner, h.community, h.timestamp,
             neutral_text(static_cast<std::size_t>(between(6, 10))), h.karma, h.submission);
        emit(twin, h.community, h.timestamp + kSecondsPerHour,
             neutral_text(static_cast<std::size_t>(between(6, 10))), h.karma, h.submission);
      }
      // First hate posts fall between March 2 and March 8.
      const std::int64_t anchor_day = between(61, 67);
      const Timestamp anchor =
          kBase + anchor_day * kSecondsPerDay + 12 * kSecondsPerHour + between(0, 3599);
      std::optional<std::size_t> destination, planted;
      if (moves[j]) {
        destination = (o + 1 + mover_no++ % (n_cat - 1)) % n_cat;
        if (*destination == (o + 1) % n_cat) planted = destination;
      }
      const std::string origin_comm = hate_community(o);
      emit(joiner, origin_comm, anchor, hate_text(o, planted), between(0, 20));
      for (int e = 0; e < 2; ++e)
        emit(joiner, e == 0 ? origin_comm : hate_community(o),
             anchor + between(kSecondsPerHour, 70 * kSecondsPerHour), hate_text(o, planted),
             between(0, 20));
      emit(joiner, origin_comm, anchor + between(20, 60) * kSecondsPerDay, hate_text(o, {}),
           between(0, 20));
      if (destination) {
        const Timestamp move = anchor + between(4, 19) * kSecondsPerDay;
        const std::string dest_comm = hate_community(*destination);
        emit(joiner, dest_comm, move, hate_text(*destination, {}), between(0, 20));
        emit(joiner, dest_comm, move + between(1, 10) * kSecondsPerDay,
             hate_text(*destination, {}), between(0, 20));
      }
      if (twin_moves[j]) {
        // Twin entries fall in April, after every joiner's first hate post
        // and within six weeks of their joiner's.
        const std::size_t d = (o + 1 + twin_mover_no++ % (n_cat - 1)) % n_cat;
        emit(twin, hate_community(d), anchor + between(91 - anchor_day, 41) * kSecondsPerDay,
             hate_text(d, {}), between(0, 20));
      }
    }
  }
  for (std::size_t i = 0; i < opt_.noise_users; ++i) {
    const std::string user = next_user();
    const auto n_posts = between(3, 8);
    for (std::int64_t p = 0; p < n_posts; ++p)
      emit(user, pick(non_hate_), kBase + between(0, 150) * kSecondsPerDay + between(0, 86399),
           neutral_text(static_cast<std::size_t>(between(6, 10))), between(-2, 30));
  }

  std::stable_sort(drafts_.begin(), drafts_.end(), [](const Draft& a, const Draft& b) {
    return a.timestamp < b.timestamp;
  });
  std::vector<Post> posts;
  posts.reserve(drafts_.size());
  std::map<std::string, std::vector<std::size_t>> by_community;
  for (std::size_t i = 0; i < drafts_.size(); ++i) {
    auto& d = drafts_[i];
    Post p;
    p.post_id = fmt::format("p{:06}", i + 1);
    p.author = d.author;
    p.community = d.community;
    p.timestamp = d.timestamp;
    p.text = std::move(d.text);
    p.karma = d.karma;
    auto& earlier = by_community[d.community];
    if (d.submission) {
      p.kind = PostKind::submission;
    } else if (earlier.empty()) {
      p.kind = PostKind::comment;
    } else {
      const auto& parent = posts[pick(earlier)];
      p.kind = PostKind::comment;
      p.parent_id = (parent.kind == PostKind::submission ? "t3_" : "t1_") + parent.post_id;
    }
    earlier.push_back(posts.size());
    posts.push_back(std::move(p));
  }
  fx.corpus = Corpus(std::move(posts));
  return fx;
}

}  // namespace

SynthFixture make_fixture(const SynthOptions& options) {
  if (options.joiners_per_category < 4) throw Error("fixture needs at least 4 joiners per category");
  if (options.communities_per_category == 0 || options.non_hate_communities < 3)
    throw Error("fixture needs hate communities and at least 3 non-hate communities");
  Generator gen(options);
  return gen.run();
}

}  // namespace peripatos
