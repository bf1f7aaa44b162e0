#include "peripatos/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "peripatos/log.hpp"
#include "peripatos/stats.hpp"

namespace peripatos {

const std::array<std::string, kNumTargets>& target_categories() {
  static const std::array<std::string, kNumTargets> names = {
      "general hate", "misogynistic", "anti-LGBTQ", "racist", "xenophobic", "Islamophobic"};
  return names;
}

std::optional<std::size_t> target_index(const std::string& category) {
  const auto& names = target_categories();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == category) return i;
  return std::nullopt;
}

namespace {

const Post* resolve_parent(const Corpus& corpus, const std::string& parent_id) {
  if (const Post* p = corpus.find(parent_id)) return p;
  // Dump-style fullnames carry a type prefix ("t1_", "t3_").
  if (parent_id.size() > 3 && parent_id[0] == 't' && parent_id[2] == '_')
    return corpus.find(std::string_view(parent_id).substr(3));
  return nullptr;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

Dataset build_examples(const Corpus& corpus, const CategoryMap& category_of,
                       const std::vector<PeripateticLabel>& labels, const ExampleOptions& options,
                       const EmbeddingStore* store) {
  if (store && store->dim() != options.dim)
    throw Error(fmt::format("embedding store has dimension {}, expected {}", store->dim(),
                            options.dim));
  Dataset data;
  data.dim = options.dim;
  for (const auto& label : labels) {
    std::optional<Timestamp> stop;
    for (const auto& [_, entry] : label.destinations)
      if (!stop || entry < *stop) stop = entry;

    std::vector<std::string> authored, parents;
    std::array<double, kOneHotWidth> onehot{};
    if (auto o = target_index(label.origin_category)) onehot[*o] = 1.0;
    for (auto pos : corpus.timeline(label.user)) {
      const auto& post = corpus.posts()[pos];
      if (stop && post.timestamp >= *stop) break;
      const auto delay = post.timestamp - label.origin_time;
      if (delay < 0) continue;
      if (!options.text_span.admits(delay)) break;
      if (auto text = clean_text(post.text)) authored.push_back(std::move(*text));
      if (!post.parent_id) continue;
      const Post* parent = resolve_parent(corpus, *post.parent_id);
      if (!parent) continue;
      if (auto text = clean_text(parent->text)) parents.push_back(std::move(*text));
      // Categories the replied-to user had posted in before this reply.
      for (auto ppos : corpus.timeline(parent->author)) {
        const auto& pp = corpus.posts()[ppos];
        if (pp.timestamp >= post.timestamp) break;
        auto it = category_of.find(pp.community);
        if (it == category_of.end()) continue;
        if (auto t = target_index(it->second)) onehot[kNumTargets + *t] = 1.0;
      }
    }
    if (authored.empty()) {
      ++data.excluded;
      continue;
    }
    PredictionExample ex;
    ex.user = label.user;
    ex.origin_category = label.origin_category;
    ex.onehot = onehot;
    for (const auto& d : label.destinations_within())
      if (auto t = target_index(d); t && d != label.origin_category) ex.labels[*t] = 1.0;
    const std::string author_text = join(authored, options.separator);
    const std::string context_text =
        parents.empty() ? options.placeholder : join(parents, options.separator);
    const std::string author_id = "author:" + label.user;
    const std::string context_id = "context:" + label.user;
    ex.author = store && store->contains(author_id)
                    ? store->get(author_id)
                    : fallback_embed(author_text, options.dim, options.embed_seed);
    ex.context = store && store->contains(context_id)
                     ? store->get(context_id)
                     : fallback_embed(context_text, options.dim, options.embed_seed);
    data.examples.push_back(std::move(ex));
  }
  if (data.excluded > 0)
    log::info(fmt::format("{} users had no usable text and were excluded", data.excluded));
  return data;
}

std::string_view arm_name(Arm arm) {
  switch (arm) {
    case Arm::all: return "all";
    case Arm::target: return "target";
    case Arm::context: return "context";
  }
  return "all";
}

Arm parse_arm(std::string_view name) {
  if (name == "all") return Arm::all;
  if (name == "target") return Arm::target;
  if (name == "context") return Arm::context;
  throw Error(fmt::format("unknown arm '{}'", name));
}

DesignMatrices design(const Dataset& data, Arm arm, std::size_t padding) {
  const auto n = static_cast<Eigen::Index>(data.examples.size());
  const auto d = static_cast<Eigen::Index>(data.dim);
  const Eigen::Index text = arm == Arm::all ? 2 * d : d;
  DesignMatrices m;
  m.padding = padding;
  m.x = Eigen::MatrixXd::Zero(n, text + static_cast<Eigen::Index>(padding));
  m.onehot.resize(n, kOneHotWidth);
  m.y.resize(n, kNumTargets);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ex = data.examples[static_cast<std::size_t>(i)];
    if (arm == Arm::all) {
      m.x.row(i).head(d) = ex.author.transpose();
      m.x.row(i).segment(d, d) = ex.context.transpose();
    } else {
      m.x.row(i).head(d) = (arm == Arm::target ? ex.author : ex.context).transpose();
    }
    for (std::size_t j = 0; j < kOneHotWidth; ++j)
      m.onehot(i, static_cast<Eigen::Index>(j)) = ex.onehot[j];
    for (std::size_t j = 0; j < kNumTargets; ++j)
      m.y(i, static_cast<Eigen::Index>(j)) = ex.labels[j];
    const auto o = target_index(ex.origin_category);
    m.origin.push_back(o ? static_cast<int>(*o) : -1);
  }
  return m;
}

DesignMatrices subset(const DesignMatrices& m, std::span<const std::size_t> rows) {
  DesignMatrices out;
  out.padding = m.padding;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.x.resize(n, m.x.cols());
  out.onehot.resize(n, m.onehot.cols());
  out.y.resize(n, m.y.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]);
    out.x.row(i) = m.x.row(r);
    out.onehot.row(i) = m.onehot.row(r);
    out.y.row(i) = m.y.row(r);
    out.origin.push_back(m.origin[static_cast<std::size_t>(r)]);
  }
  return out;
}

MlpShape MlpShape::for_text_width(std::size_t text_width, std::size_t padding) {
  if (text_width < 4) throw Error("text width must be at least 4");
  MlpShape s;
  s.input = text_width + padding;
  s.hidden1 = text_width / 2;
  s.hidden2 = text_width / 4;
  return s;
}

std::size_t MlpShape::parameter_count() const {
  return hidden1 * input + hidden1 + hidden2 * (hidden1 + onehot) + hidden2 + output * hidden2 +
         output;
}

// ---------------------------------------------------------------------------
// MLP

struct Mlp::Views {
  Eigen::Map<const Eigen::MatrixXd> w1;
  Eigen::Map<const Eigen::VectorXd> b1;
  Eigen::Map<const Eigen::MatrixXd> w2;
  Eigen::Map<const Eigen::VectorXd> b2;
  Eigen::Map<const Eigen::MatrixXd> w3;
  Eigen::Map<const Eigen::VectorXd> b3;
};

namespace {

struct Offsets {
  Eigen::Index w1, b1, w2, b2, w3, b3;
};

Offsets offsets(const MlpShape& s) {
  Offsets o{};
  const auto in = static_cast<Eigen::Index>(s.input), h1 = static_cast<Eigen::Index>(s.hidden1),
             oh = static_cast<Eigen::Index>(s.onehot), h2 = static_cast<Eigen::Index>(s.hidden2);
  o.w1 = 0;
  o.b1 = o.w1 + h1 * in;
  o.w2 = o.b1 + h1;
  o.b2 = o.w2 + h2 * (h1 + oh);
  o.w3 = o.b2 + h2;
  o.b3 = o.w3 + static_cast<Eigen::Index>(s.output) * h2;
  return o;
}

Eigen::MatrixXd leaky(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return v > 0.0 ? v : Mlp::kLeak * v; });
}

Eigen::MatrixXd leaky_slope(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : Mlp::kLeak; });
}

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate,
                             std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - rate);
  Eigen::MatrixXd mask(rows, cols);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = keep(rng) ? scale : 0.0;
  return mask;
}

}  // namespace

Mlp::Views Mlp::views() const {
  const auto o = offsets(shape_);
  const auto in = static_cast<Eigen::Index>(shape_.input),
             h1 = static_cast<Eigen::Index>(shape_.hidden1),
             oh = static_cast<Eigen::Index>(shape_.onehot),
             h2 = static_cast<Eigen::Index>(shape_.hidden2),
             out = static_cast<Eigen::Index>(shape_.output);
  const double* p = params_.data();
  return {{p + o.w1, h1, in},      {p + o.b1, h1}, {p + o.w2, h2, h1 + oh},
          {p + o.b2, h2},          {p + o.w3, out, h2}, {p + o.b3, out}};
}

Mlp::Mlp(const MlpShape& shape, std::uint64_t seed) : shape_(shape) {
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.parameter_count()));
  std::mt19937_64 rng(seed);
  const auto o = offsets(shape);
  auto fill = [&](Eigen::Index start, Eigen::Index count, std::size_t fan_in) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (Eigen::Index i = 0; i < count; ++i) params_(start + i) = normal(rng);
  };
  fill(o.w1, o.b1 - o.w1, shape.input);
  fill(o.w2, o.b2 - o.w2, shape.hidden1 + shape.onehot);
  fill(o.w3, o.b3 - o.w3, shape.hidden2);
}

Eigen::MatrixXd Mlp::predict(const Eigen::MatrixXd& x, const Eigen::MatrixXd& onehot) const {
  const auto v = views();
  const Eigen::MatrixXd a1 = leaky((x * v.w1.transpose()).rowwise() + v.b1.transpose());
  Eigen::MatrixXd c(x.rows(), a1.cols() + onehot.cols());
  c << a1, onehot;
  const Eigen::MatrixXd a2 = leaky((c * v.w2.transpose()).rowwise() + v.b2.transpose());
  return sigmoid((a2 * v.w3.transpose()).rowwise() + v.b3.transpose());
}

double bce(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& y) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < probs.cols(); ++j)
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      const double p = std::clamp(probs(i, j), Mlp::kClamp, 1.0 - Mlp::kClamp);
      total -= y(i, j) * std::log(p) + (1.0 - y(i, j)) * std::log(1.0 - p);
    }
  return total / static_cast<double>(probs.size());
}

double Mlp::loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& onehot,
                              const Eigen::MatrixXd& y, Eigen::VectorXd* gradient,
                              double dropout, std::mt19937_64* dropout_rng) const {
  const auto v = views();
  const bool drop = dropout_rng && dropout > 0.0;
  const Eigen::MatrixXd z1 = (x * v.w1.transpose()).rowwise() + v.b1.transpose();
  Eigen::MatrixXd a1 = leaky(z1);
  Eigen::MatrixXd m1;
  if (drop) {
    m1 = dropout_mask(a1.rows(), a1.cols(), dropout, *dropout_rng);
    a1 = a1.cwiseProduct(m1);
  }
  Eigen::MatrixXd c(x.rows(), a1.cols() + onehot.cols());
  c << a1, onehot;
  const Eigen::MatrixXd z2 = (c * v.w2.transpose()).rowwise() + v.b2.transpose();
  Eigen::MatrixXd a2 = leaky(z2);
  Eigen::MatrixXd m2;
  if (drop) {
    m2 = dropout_mask(a2.rows(), a2.cols(), dropout, *dropout_rng);
    a2 = a2.cwiseProduct(m2);
  }
  const Eigen::MatrixXd p = sigmoid((a2 * v.w3.transpose()).rowwise() + v.b3.transpose());
  const double loss = bce(p, y);
  if (!gradient) return loss;

  // d loss / d logit is (p - y) / N except where the clamp is active.
  const double n = static_cast<double>(p.size());
  Eigen::MatrixXd d3(p.rows(), p.cols());
  for (Eigen::Index j = 0; j < p.cols(); ++j)
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double pi = p(i, j);
      d3(i, j) = (pi < kClamp || pi > 1.0 - kClamp) ? 0.0 : (pi - y(i, j)) / n;
    }
  gradient->setZero(params_.size());
  const auto o = offsets(shape_);
  const auto h1 = static_cast<Eigen::Index>(shape_.hidden1);
  auto block = [&](Eigen::Index start, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<Eigen::MatrixXd>(gradient->data() + start, rows, cols);
  };
  block(o.w3, v.w3.rows(), v.w3.cols()) = d3.transpose() * a2;
  block(o.b3, v.b3.size(), 1) = d3.colwise().sum().transpose();
  Eigen::MatrixXd da2 = d3 * v.w3;
  if (drop) da2 = da2.cwiseProduct(m2);
  const Eigen::MatrixXd d2 = da2.cwiseProduct(leaky_slope(z2));
  block(o.w2, v.w2.rows(), v.w2.cols()) = d2.transpose() * c;
  block(o.b2, v.b2.size(), 1) = d2.colwise().sum().transpose();
  Eigen::MatrixXd da1 = (d2 * v.w2).leftCols(h1);
  if (drop) da1 = da1.cwiseProduct(m1);
  const Eigen::MatrixXd d1 = da1.cwiseProduct(leaky_slope(z1));
  block(o.w1, v.w1.rows(), v.w1.cols()) = d1.transpose() * x;
  block(o.b1, v.b1.size(), 1) = d1.colwise().sum().transpose();
  return loss;
}

namespace {

constexpr char kCheckpointMagic[4] = {'P', 'M', 'L', 'P'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error("truncated checkpoint");
  return v;
}

}  // namespace

// Layout: "PMLP", u32 version, u64 input, hidden1, onehot, hidden2, output,
// then w1, b1, w2, b2, w3, b3 as row-major f64.
void Mlp::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out.write(kCheckpointMagic, 4);
  put<std::uint32_t>(out, 1);
  for (auto d : {shape_.input, shape_.hidden1, shape_.onehot, shape_.hidden2, shape_.output})
    put<std::uint64_t>(out, d);
  const auto v = views();
  auto write_matrix = [&](const auto& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(out, m(i, j));
  };
  write_matrix(v.w1);
  write_matrix(v.b1);
  write_matrix(v.w2);
  write_matrix(v.b2);
  write_matrix(v.w3);
  write_matrix(v.b3);
}

Mlp Mlp::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read {}", path.string()));
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw Error(fmt::format("{}: not a model checkpoint", path.string()));
  if (take<std::uint32_t>(in) != 1) throw Error("unsupported checkpoint version");
  Mlp m;
  m.shape_.input = take<std::uint64_t>(in);
  m.shape_.hidden1 = take<std::uint64_t>(in);
  m.shape_.onehot = take<std::uint64_t>(in);
  m.shape_.hidden2 = take<std::uint64_t>(in);
  m.shape_.output = take<std::uint64_t>(in);
  m.params_.resize(static_cast<Eigen::Index>(m.shape_.parameter_count()));
  const auto o = offsets(m.shape_);
  auto read_matrix = [&](Eigen::Index start, Eigen::Index rows, Eigen::Index cols) {
    Eigen::Map<Eigen::MatrixXd> block(m.params_.data() + start, rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) block(i, j) = take<double>(in);
  };
  const auto in_w = static_cast<Eigen::Index>(m.shape_.input),
             h1 = static_cast<Eigen::Index>(m.shape_.hidden1),
             oh = static_cast<Eigen::Index>(m.shape_.onehot),
             h2 = static_cast<Eigen::Index>(m.shape_.hidden2),
             out = static_cast<Eigen::Index>(m.shape_.output);
  read_matrix(o.w1, h1, in_w);
  read_matrix(o.b1, h1, 1);
  read_matrix(o.w2, h2, h1 + oh);
  read_matrix(o.b2, h2, 1);
  read_matrix(o.w3, out, h2);
  read_matrix(o.b3, out, 1);
  if (!m.params_.allFinite()) throw Error("checkpoint holds non-finite parameters");
  return m;
}

TrainResult train(const DesignMatrices& train_set, const DesignMatrices& val_set,
                  const TrainConfig& config) {
  if (train_set.x.rows() == 0) throw Error("empty training set");
  if (config.batch == 0) throw Error("batch size must be positive");
  const auto padding = train_set.padding;
  const auto shape = MlpShape::for_text_width(
      static_cast<std::size_t>(train_set.x.cols()) - padding, padding);

  TrainResult result;
  result.model = Mlp(shape, stats::derive_seed(config.seed, 0));
  std::mt19937_64 rng(stats::derive_seed(config.seed, 1));
  Eigen::VectorXd m = Eigen::VectorXd::Zero(result.model.parameters().size());
  Eigen::VectorXd v = m, grad;
  Eigen::VectorXd best = result.model.parameters();
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::int64_t step = 0;
  const auto n = static_cast<std::size_t>(train_set.x.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const bool has_val = val_set.x.rows() > 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch) {
      const std::size_t end = std::min(n, start + config.batch);
      const auto batch = subset(train_set, std::span(order).subspan(start, end - start));
      const double loss = result.model.loss_and_gradient(batch.x, batch.onehot, batch.y, &grad,
                                                         config.dropout, &rng);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw Error(fmt::format("non-finite loss at epoch {} batch {} (loss {})", epoch,
                                start / config.batch, loss));
      epoch_loss += loss * static_cast<double>(end - start);
      ++step;
      m = config.beta1 * m + (1.0 - config.beta1) * grad;
      v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      result.model.parameters().array() -=
          config.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_eps);
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(n));
    if (!has_val) {
      best = result.model.parameters();
      result.best_epoch = epoch;
      continue;
    }
    const double val = bce(result.model.predict(val_set.x, val_set.onehot), val_set.y);
    if (!std::isfinite(val)) throw Error(fmt::format("non-finite validation loss at epoch {}", epoch));
    result.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      best = result.model.parameters();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  if (config.max_epochs > 0) result.model.parameters() = best;
  return result;
}

Eigen::VectorXd numeric_gradient(const Mlp& model, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd& onehot, const Eigen::MatrixXd& y,
                                 double eps) {
  Mlp probe = model;
  auto& p = probe.parameters();
  Eigen::VectorXd g(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double saved = p(i);
    p(i) = saved + eps;
    const double up = probe.loss_and_gradient(x, onehot, y, nullptr);
    p(i) = saved - eps;
    const double down = probe.loss_and_gradient(x, onehot, y, nullptr);
    p(i) = saved;
    g(i) = (up - down) / (2.0 * eps);
  }
  return g;
}

double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor) {
  if (a.size() != b.size()) throw Error("gradient sizes differ");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a(i)), std::abs(b(i)), floor});
    worst = std::max(worst, std::abs(a(i) - b(i)) / denom);
  }
  return worst;
}

double gradient_check(const Mlp& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& onehot,
                      const Eigen::MatrixXd& y, double eps) {
  Eigen::VectorXd analytic;
  model.loss_and_gradient(x, onehot, y, &analytic);
  return max_relative_error(analytic, numeric_gradient(model, x, onehot, y, eps));
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::int64_t pos = 0, neg = 0, concordant = 0, ties = 0;
  std::int64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::int64_t gp = 0, gn = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? gp : gn) += 1;
      ++j;
    }
    concordant += gp * neg_below;
    ties += gp * gn;
    neg_below += gn;
    pos += gp;
    neg += gn;
    i = j;
  }
  if (pos == 0 || neg == 0) throw Error("ROC-AUC needs both classes");
  return static_cast<double>(2 * concordant + ties) / static_cast<double>(2 * pos * neg);
}

EvalReport repeated_splits(const Dataset& data, Arm arm, const SplitConfig& split,
                           const TrainConfig& train_config) {
  const auto n = data.examples.size();
  if (n < 100) throw Error(fmt::format("repeated splits need at least 100 examples, got {}", n));
  const auto all = design(data, arm, split.padding);
  EvalReport report;
  report.arm = arm;
  report.runs = split.runs;
  for (const auto& name : target_categories()) report.categories.push_back({name, {}, 0.0, 0.0});

  const auto n_train = static_cast<std::size_t>(std::floor(split.train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(split.val_fraction * static_cast<double>(n)));
  for (std::size_t run = 0; run < split.runs; ++run) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(stats::derive_seed(split.seed, run));
    std::shuffle(order.begin(), order.end(), rng);
    const std::span<const std::size_t> idx(order);
    const auto tr = subset(all, idx.subspan(0, n_train));
    const auto va = subset(all, idx.subspan(n_train, n_val));
    const auto te = subset(all, idx.subspan(n_train + n_val));
    auto config = train_config;
    config.seed = stats::derive_seed(split.seed ^ 0x5eedULL, run);
    const auto model = train(tr, va, config).model;
    const Eigen::MatrixXd probs = model.predict(te.x, te.onehot);
    for (std::size_t c = 0; c < kNumTargets; ++c) {
      std::vector<double> s;
      std::vector<int> l;
      for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        if (te.origin[static_cast<std::size_t>(i)] == static_cast<int>(c)) continue;
        s.push_back(probs(i, static_cast<Eigen::Index>(c)));
        l.push_back(te.y(i, static_cast<Eigen::Index>(c)) > 0.5 ? 1 : 0);
      }
      const auto positives = std::count(l.begin(), l.end(), 1);
      if (positives == 0 || positives == static_cast<std::ptrdiff_t>(l.size())) continue;
      report.categories[c].aucs.push_back(roc_auc(s, l));
    }
  }
  for (auto& c : report.categories) {
    if (c.aucs.empty()) {
      c.mean = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    c.mean = stats::mean(c.aucs);
    c.standard_error = stats::standard_error(c.aucs);
  }
  return report;
}

std::vector<EvalReport> ablation(const Dataset& data, const SplitConfig& split,
                                 const TrainConfig& train_config) {
  std::vector<EvalReport> reports;
  for (Arm arm : {Arm::all, Arm::target, Arm::context})
    reports.push_back(repeated_splits(data, arm, split, train_config));
  return reports;
}

}  // namespace peripatos
