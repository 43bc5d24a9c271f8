#include "mailconv/predict.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <fmt/format.h>
#include <json.hpp>

#include "mailconv/error.hpp"
#include "mailconv/random.hpp"
#include "mailconv/table.hpp"

namespace mailconv {

std::string_view to_string(Task t) {
  switch (t) {
    case Task::ReplyTime: return "reply_time";
    case Task::ReplyLength: return "reply_length";
    case Task::LastEmail: return "last_email";
  }
  return "?";
}

std::optional<Task> parse_task(std::string_view s) {
  for (auto t : {Task::ReplyTime, Task::ReplyLength, Task::LastEmail})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

ReplyTimeClass bin_reply_time(double minutes, double fast_from, double slow_from) {
  if (!(minutes > 0)) throw DomainError("reply time must be positive");
  if (minutes <= fast_from) return ReplyTimeClass::Immediate;
  if (minutes <= slow_from) return ReplyTimeClass::Fast;
  return ReplyTimeClass::Slow;
}

ReplyLengthClass bin_reply_length(std::uint32_t words, std::uint32_t medium_from, std::uint32_t long_from) {
  if (words <= medium_from) return ReplyLengthClass::Short;
  if (words <= long_from) return ReplyLengthClass::Medium;
  return ReplyLengthClass::Long;
}

ClassScheme ClassScheme::reply_time(double immediate_max, double fast_max) {
  if (!(immediate_max > 0 && immediate_max < fast_max)) throw DomainError("reply time boundaries must increase");
  return {Task::ReplyTime, {immediate_max, fast_max}, {"immediate", "fast", "slow"}};
}

ClassScheme ClassScheme::reply_length(double short_max, double medium_max) {
  if (!(short_max >= 0 && short_max < medium_max)) throw DomainError("reply length boundaries must increase");
  return {Task::ReplyLength, {short_max, medium_max}, {"short", "medium", "long"}};
}

ClassScheme ClassScheme::last_email() { return {Task::LastEmail, {0.5}, {"continues", "last"}}; }

ClassScheme ClassScheme::for_task(Task t) {
  switch (t) {
    case Task::ReplyTime: return reply_time();
    case Task::ReplyLength: return reply_length();
    case Task::LastEmail: return last_email();
  }
  throw DomainError("unknown task");
}

std::uint8_t ClassScheme::classify(double value) const {
  if (task == Task::ReplyTime && !(value > 0)) throw DomainError("reply time must be positive");
  std::uint8_t k = 0;
  while (k < boundaries.size() && value > boundaries[k]) ++k;
  return k;
}

std::uint8_t ClassScheme::label_of(const FeatureRow& row) const {
  switch (task) {
    case Task::ReplyTime: return classify(row.reply_time_minutes);
    case Task::ReplyLength: return classify(row.reply_length_words);
    case Task::LastEmail: return row.is_last ? 1 : 0;
  }
  return 0;
}

Dataset make_dataset(std::span<const FeatureRow> rows, std::span<const std::size_t> indices,
                     const ClassScheme& scheme, std::span<const std::size_t> columns) {
  Dataset d;
  d.n_classes = scheme.n_classes();
  const std::size_t width = columns.empty() ? (rows.empty() ? 0 : rows.front().values.size()) : columns.size();
  d.x = Matrix(indices.size(), width);
  d.y.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& row = rows[indices[r]];
    for (std::size_t c = 0; c < width; ++c) d.x.at(r, c) = row.values.at(columns.empty() ? c : columns[c]);
    d.y.push_back(scheme.label_of(row));
  }
  return d;
}

// ---------------------------------------------------------------------------

Model::Model(Task task, std::vector<std::string> feature_names, std::size_t n_classes, std::vector<DecisionTree> trees)
    : task_(task), feature_names_(std::move(feature_names)), n_classes_(n_classes), trees_(std::move(trees)) {
  if (trees_.empty()) throw DomainError("model without trees");
  for (const auto& t : trees_)
    if (t.n_classes() != n_classes_) throw DomainError("tree class count differs from the model");
}

Model Model::train(const Dataset& train, Task task, std::vector<std::string> feature_names,
                   const ModelParams& params) {
  if (params.n_trees == 0) throw DomainError("n_trees must be >= 1");
  if (feature_names.size() != train.x.cols) throw DomainError("feature names do not match the training matrix");
  std::vector<bool> seen(train.n_classes, false);
  for (auto y : train.y) seen.at(y) = true;
  if (std::count(seen.begin(), seen.end(), true) < 2) throw DomainError("training labels hold a single class");

  const auto data = QuantizedData::build(train.x);
  const TreeParams tp{params.max_depth, params.min_leaf};
  const auto n = train.x.rows;
  std::vector<DecisionTree> trees(params.n_trees);

  auto fit_one = [&](std::size_t t) {
    std::vector<double> weights(n, 1.0);
    if (params.bootstrap) {
      std::fill(weights.begin(), weights.end(), 0.0);
      Rng rng(splitmix64(params.seed + t));
      for (std::size_t i = 0; i < n; ++i) weights[rng.below(n)] += 1.0;
    }
    trees[t] = DecisionTree::fit(data, train.y, train.n_classes, weights, tp);
  };

  const auto workers = std::min(std::max<std::size_t>(params.workers, 1), params.n_trees);
  if (workers == 1) {
    for (std::size_t t = 0; t < params.n_trees; ++t) fit_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t t; (t = next++) < params.n_trees;) {
          try {
            fit_one(t);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  return Model(task, std::move(feature_names), train.n_classes, std::move(trees));
}

Prediction Model::predict(std::span<const double> x) const {
  if (x.size() != feature_names_.size())
    throw DomainError(fmt::format("model expects {} features, got {}", feature_names_.size(), x.size()));
  Prediction p;
  p.probabilities.assign(n_classes_, 0.0);
  for (const auto& t : trees_) {
    const auto probs = t.predict_proba(x);
    for (std::size_t k = 0; k < n_classes_; ++k) p.probabilities[k] += probs[k];
  }
  for (auto& v : p.probabilities) v /= static_cast<double>(trees_.size());
  p.label = static_cast<std::uint8_t>(std::max_element(p.probabilities.begin(), p.probabilities.end()) -
                                      p.probabilities.begin());
  return p;
}

std::uint64_t Model::catalog_hash() const {
  std::vector<FeatureSpec> specs;
  for (const auto& n : feature_names_) specs.push_back({n, FeatureGroup::PairHistory, {}});
  return FeatureCatalog(std::move(specs)).hash();
}

namespace {

constexpr char kMagic[8] = {'M', 'C', 'V', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void u(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
  void f64(double v) { u(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <typename T>
  T u() {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      const int c = in_.get();
      if (c == std::char_traits<char>::eof()) throw InputError("truncated model file");
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return static_cast<T>(v);
  }
  double f64() { return std::bit_cast<double>(u<std::uint64_t>()); }
  std::string str() {
    const auto n = u<std::uint32_t>();
    if (n > (1u << 20)) throw InputError("corrupt model file");
    std::string s(n, '\0');
    if (!in_.read(s.data(), n)) throw InputError("truncated model file");
    return s;
  }

 private:
  std::istream& in_;
};

}  // namespace

void Model::save(std::ostream& out) const {
  out.write(kMagic, sizeof kMagic);
  Writer w(out);
  w.u(kFormatVersion);
  w.u(static_cast<std::uint8_t>(task_));
  w.u(catalog_hash());
  w.u(static_cast<std::uint32_t>(feature_names_.size()));
  for (const auto& n : feature_names_) w.str(n);
  w.u(static_cast<std::uint32_t>(n_classes_));
  w.u(static_cast<std::uint32_t>(trees_.size()));
  for (const auto& t : trees_) {
    w.u(static_cast<std::uint32_t>(t.nodes().size()));
    for (const auto& n : t.nodes()) {
      w.u(static_cast<std::uint32_t>(n.feature));
      if (n.feature < 0) {
        for (double p : n.probabilities) w.f64(p);
      } else {
        w.f64(n.threshold);
        w.u(static_cast<std::uint8_t>(n.missing_left));
        w.u(n.left);
        w.u(n.right);
      }
    }
  }
}

Model Model::load(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kMagic))
    throw InputError("not a model file");
  Reader r(in);
  if (r.u<std::uint32_t>() != kFormatVersion) throw InputError("unsupported model format version");
  const auto task = r.u<std::uint8_t>();
  if (task > static_cast<std::uint8_t>(Task::LastEmail)) throw InputError("unknown task in model file");
  const auto hash = r.u<std::uint64_t>();
  std::vector<std::string> names(r.u<std::uint32_t>());
  for (auto& n : names) n = r.str();
  const auto k = r.u<std::uint32_t>();
  const auto n_trees = r.u<std::uint32_t>();
  std::vector<DecisionTree> trees;
  try {
    for (std::uint32_t t = 0; t < n_trees; ++t) {
      std::vector<DecisionTree::Node> nodes(r.u<std::uint32_t>());
      for (auto& n : nodes) {
        n.feature = static_cast<std::int32_t>(r.u<std::uint32_t>());
        if (n.feature < 0) {
          n.probabilities.resize(k);
          for (auto& p : n.probabilities) p = r.f64();
        } else {
          n.threshold = r.f64();
          n.missing_left = r.u<std::uint8_t>() != 0;
          n.left = r.u<std::uint32_t>();
          n.right = r.u<std::uint32_t>();
          if (static_cast<std::size_t>(n.feature) >= names.size()) throw InputError("tree uses an unknown feature");
        }
      }
      trees.emplace_back(std::move(nodes), k);
    }
    Model m(static_cast<Task>(task), std::move(names), k, std::move(trees));
    if (m.catalog_hash() != hash) throw InputError("model feature list does not match its digest");
    return m;
  } catch (const DomainError& e) {
    throw InputError(std::string("corrupt model file: ") + e.what());
  }
}

void Model::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  save(out);
  if (!out) throw InputError("failed writing " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  return load(in);
}

// ---------------------------------------------------------------------------

std::optional<double> binary_auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw DomainError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (auto q = i; q < j; ++q)
      if (positive[order[q]]) {
        rank_sum += mid;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

Metrics compute_metrics(std::span<const std::uint8_t> truth, std::span<const std::vector<double>> probabilities,
                        std::size_t n_classes) {
  if (truth.size() != probabilities.size()) throw DomainError("truth and predictions differ in length");
  if (truth.empty()) throw DomainError("no samples to evaluate");
  if (n_classes < 2) throw DomainError("metrics need at least two classes");
  Metrics m;
  m.n = truth.size();
  m.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t correct = 0;
  double sq = 0;
  const double scale = static_cast<double>(n_classes - 1);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& p = probabilities[i];
    if (p.size() != n_classes || truth[i] >= n_classes) throw DomainError("prediction shape mismatch");
    const auto pred = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    ++m.confusion[truth[i]][pred];
    if (pred == truth[i]) ++correct;
    const double d = (static_cast<double>(pred) - truth[i]) / scale;
    sq += d * d;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);
  m.rmse = std::sqrt(sq / static_cast<double>(m.n));

  double auc_sum = 0, weight_sum = 0;
  std::vector<double> scores(m.n);
  std::unique_ptr<bool[]> positive(new bool[m.n]);
  for (std::size_t k = 0; k < n_classes; ++k) {
    std::size_t support = 0;
    for (std::size_t i = 0; i < m.n; ++i) {
      scores[i] = probabilities[i][k];
      positive[i] = truth[i] == k;
      support += positive[i];
    }
    if (auto auc = binary_auc(scores, std::span<const bool>(positive.get(), m.n))) {
      auc_sum += static_cast<double>(support) * *auc;
      weight_sum += static_cast<double>(support);
    }
  }
  m.weighted_auc = weight_sum > 0 ? auc_sum / weight_sum : std::numeric_limits<double>::quiet_NaN();
  return m;
}

namespace {

std::uint8_t modal_class(std::span<const std::size_t> counts) {
  return static_cast<std::uint8_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

}  // namespace

BaselineAccuracy baselines(std::span<const FeatureRow> rows, const TrainTestSplit& split, const ClassScheme& scheme,
                           const BaselineOptions& options) {
  BaselineAccuracy acc;
  if (split.test.empty()) return acc;
  const auto k = scheme.n_classes();
  std::vector<std::uint8_t> label(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) label[i] = scheme.label_of(rows[i]);

  std::vector<std::size_t> train_counts(k, 0);
  for (auto i : split.train) ++train_counts[label[i]];
  const auto majority = modal_class(train_counts);

  // History groups: the replier within a pair, or the replier everywhere.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i)
    groups[options.global_replier ? rows[i].replier : rows[i].dyad + '\n' + rows[i].replier].push_back(i);

  std::vector<std::uint8_t> last_pred(rows.size(), majority), most_pred(rows.size(), majority);
  for (auto& [_, members] : groups) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      if (rows[a].reply_timestamp_utc != rows[b].reply_timestamp_utc)
        return rows[a].reply_timestamp_utc < rows[b].reply_timestamp_utc;
      return rows[a].reply_message_id < rows[b].reply_message_id;
    });
    std::vector<std::size_t> counts(k, 0);
    std::vector<std::ptrdiff_t> latest(k, -1);
    std::size_t seen = 0;
    for (std::size_t pos = 0; pos < members.size(); ++pos) {
      const auto i = members[pos];
      while (seen < pos && rows[members[seen]].reply_timestamp_utc < rows[i].reply_timestamp_utc) {
        const auto c = label[members[seen]];
        ++counts[c];
        latest[c] = static_cast<std::ptrdiff_t>(seen);
        ++seen;
      }
      if (seen == 0) continue;
      last_pred[i] = label[members[seen - 1]];
      std::uint8_t best = 0;
      for (std::uint8_t c = 1; c < k; ++c)
        if (counts[c] > counts[best] || (counts[c] == counts[best] && latest[c] > latest[best])) best = c;
      most_pred[i] = best;
    }
  }

  std::size_t hit_major = 0, hit_last = 0, hit_most = 0;
  for (auto i : split.test) {
    hit_major += label[i] == majority;
    hit_last += label[i] == last_pred[i];
    hit_most += label[i] == most_pred[i];
  }
  const auto n = static_cast<double>(split.test.size());
  acc.majority = static_cast<double>(hit_major) / n;
  acc.last_reply = static_cast<double>(hit_last) / n;
  acc.most_used = static_cast<double>(hit_most) / n;
  return acc;
}

EvalReport evaluate(const Model& model, std::span<const FeatureRow> rows, const TrainTestSplit& split,
                    const ClassScheme& scheme, std::span<const std::size_t> columns, const BaselineOptions& options) {
  if (split.test.empty()) throw DomainError("test set is empty");
  if (model.n_classes() != scheme.n_classes()) throw DomainError("model and class scheme disagree on class count");
  EvalReport report;
  report.task = scheme.task;
  report.class_names = scheme.names;

  const auto test = make_dataset(rows, split.test, scheme, columns);
  std::vector<std::vector<double>> probs;
  probs.reserve(test.x.rows);
  for (std::size_t r = 0; r < test.x.rows; ++r) probs.push_back(model.predict(test.x.row(r)).probabilities);
  report.metrics = compute_metrics(test.y, probs, scheme.n_classes());
  report.baseline = baselines(rows, split, scheme, options);

  if (scheme.n_classes() == 3) {
    std::vector<std::uint8_t> truth;
    std::vector<std::vector<double>> outer;
    for (std::size_t r = 0; r < test.y.size(); ++r) {
      if (test.y[r] == 1) continue;
      truth.push_back(test.y[r] == 2 ? 1 : 0);
      const double lo = probs[r][0], hi = probs[r][2];
      outer.push_back(lo + hi > 0 ? std::vector<double>{lo / (lo + hi), hi / (lo + hi)} : std::vector<double>{0.5, 0.5});
    }
    if (!truth.empty()) report.two_class = compute_metrics(truth, outer, 2);
  }
  return report;
}

namespace {

nlohmann::json metrics_json(const Metrics& m) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"n", m.n},
          {"accuracy", num(m.accuracy)},
          {"weighted_auc", num(m.weighted_auc)},
          {"rmse", num(m.rmse)},
          {"confusion", m.confusion}};
}

}  // namespace

void write_eval_report(std::ostream& out, const EvalReport& report) {
  nlohmann::json j;
  j["task"] = std::string(to_string(report.task));
  j["classes"] = report.class_names;
  j["metrics"] = metrics_json(report.metrics);
  j["baselines"] = {{"majority", report.baseline.majority},
                    {"last_reply", report.baseline.last_reply},
                    {"most_used", report.baseline.most_used}};
  j["two_class"] = report.two_class ? metrics_json(*report.two_class) : nlohmann::json(nullptr);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

std::vector<Chi2Entry> chi2_rank(const Dataset& data, const FeatureCatalog& catalog, std::size_t n_bins) {
  if (n_bins < 2) throw DomainError("chi-squared ranking needs at least two bins");
  if (catalog.size() != data.x.cols) throw DomainError("catalog does not match the data");
  const auto k = data.n_classes;
  const auto n = data.x.rows;
  std::vector<std::size_t> class_total(k, 0);
  for (auto y : data.y) ++class_total.at(y);
  if (std::count_if(class_total.begin(), class_total.end(), [](std::size_t c) { return c > 0; }) < 2)
    throw DomainError("chi-squared ranking needs at least two classes");

  std::vector<Chi2Entry> out;
  std::vector<double> present;
  std::vector<std::size_t> bin(n);
  for (std::size_t f = 0; f < data.x.cols; ++f) {
    present.clear();
    for (std::size_t r = 0; r < n; ++r)
      if (!std::isnan(data.x.at(r, f))) present.push_back(data.x.at(r, f));
    std::sort(present.begin(), present.end());
    std::vector<double> distinct;
    std::unique_copy(present.begin(), present.end(), std::back_inserter(distinct));
    const bool categorical = distinct.size() <= n_bins;
    const std::size_t missing_bin = categorical ? distinct.size() : n_bins;

    for (std::size_t r = 0; r < n; ++r) {
      const double v = data.x.at(r, f);
      if (std::isnan(v)) {
        bin[r] = missing_bin;
      } else if (categorical) {
        bin[r] = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin());
      } else {
        const auto less = static_cast<std::size_t>(std::lower_bound(present.begin(), present.end(), v) - present.begin());
        bin[r] = n_bins * less / present.size();
      }
    }

    std::vector<std::vector<std::size_t>> table(missing_bin + 1, std::vector<std::size_t>(k, 0));
    std::vector<std::size_t> bin_total(missing_bin + 1, 0);
    for (std::size_t r = 0; r < n; ++r) {
      ++table[bin[r]][data.y[r]];
      ++bin_total[bin[r]];
    }
    double chi2 = 0;
    for (std::size_t b = 0; b <= missing_bin; ++b) {
      if (bin_total[b] == 0) continue;
      for (std::size_t c = 0; c < k; ++c) {
        if (class_total[c] == 0) continue;
        const double expected = static_cast<double>(bin_total[b]) * static_cast<double>(class_total[c]) / static_cast<double>(n);
        const double d = static_cast<double>(table[b][c]) - expected;
        chi2 += d * d / expected;
      }
    }
    out.push_back({f, catalog[f].name, chi2});
  }
  std::stable_sort(out.begin(), out.end(), [](const Chi2Entry& a, const Chi2Entry& b) { return a.chi2 > b.chi2; });
  return out;
}

std::vector<std::size_t> top_k(std::span<const Chi2Entry> ranked, std::size_t k) {
  if (k == 0 || k > ranked.size()) throw DomainError(fmt::format("k must be in [1, {}]", ranked.size()));
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(ranked[i].feature);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t write_chi2_table(std::ostream& out, std::span<const Chi2Entry> ranked) {
  TsvWriter w(out, {"rank", "feature", "chi2"});
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    w << i + 1 << ranked[i].name << ranked[i].chi2;
    w.end_row();
  }
  return w.rows();
}

}  // namespace mailconv
