#include "mailconv/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <functional>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "mailconv/analytics.hpp"
#include "mailconv/error.hpp"
#include "mailconv/features.hpp"
#include "mailconv/random.hpp"

namespace mailconv {

AnalysisToggles AnalysisToggles::none() {
  AnalysisToggles t;
  t.tables = t.distributions = t.steps = t.correlation = t.circadian = t.groups = t.overload = false;
  t.synchronization = t.markers = t.similarity = t.features = t.train = t.rank = false;
  return t;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  for (unsigned i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  auto sorted = entries;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  nlohmann::json files = nlohmann::json::array();
  for (const auto& e : sorted)
    files.push_back({{"path", e.path},
                     {"sha256", e.sha256},
                     {"rows", e.rows ? nlohmann::json(*e.rows) : nlohmann::json(nullptr)}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << nlohmann::json{{"files", files}}.dump(2) << '\n';
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    std::vector<ManifestEntry> out;
    for (const auto& f : j.at("files")) {
      ManifestEntry e;
      f.at("path").get_to(e.path);
      f.at("sha256").get_to(e.sha256);
      if (!f.at("rows").is_null()) e.rows = f.at("rows").get<std::size_t>();
      out.push_back(std::move(e));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

namespace {

/// Tracks files written by this run so they can be digested or removed.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void emit(const std::string& name, const std::function<std::optional<std::size_t>(std::ostream&)>& write) {
    const auto path = dir_ / name;
    std::filesystem::create_directories(path.parent_path());
    written_.push_back(path);
    std::optional<std::size_t> rows;
    {
      std::ofstream out(path, std::ios::binary);
      if (!out) throw InputError("cannot write " + path.string());
      rows = write(out);
      out.flush();
      if (!out) throw std::runtime_error("failed writing " + path.string());
    }
    entries_.push_back({name, sha256_file(path), rows});
  }

  void note(const std::filesystem::path& path) { written_.push_back(path); }

  void remove_all() noexcept {
    std::error_code ec;
    for (auto it = written_.rbegin(); it != written_.rend(); ++it) std::filesystem::remove(*it, ec);
  }

  const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> written_;
  std::vector<ManifestEntry> entries_;
};

std::size_t curves_out(std::ostream& out, const std::vector<SummaryCurve>& curves) { return write_curves(out, curves); }

std::vector<SummaryCurve> segment_curves(std::initializer_list<const SegmentCurve*> curves) {
  std::vector<SummaryCurve> out;
  for (const auto* c : curves) out.push_back(c->curve);
  return out;
}

ClassScheme scheme_for(Task t, const RunConfig& c) {
  switch (t) {
    case Task::ReplyTime: return ClassScheme::reply_time(c.immediate_max_minutes, c.fast_max_minutes);
    case Task::ReplyLength: return ClassScheme::reply_length(c.short_max_words, c.medium_max_words);
    case Task::LastEmail: return ClassScheme::last_email();
  }
  throw DomainError("unknown task");
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& what) { throw InputError("invalid configuration: " + what); };
  if (c.records.empty()) fail("records path is required");
  if (c.model.n_trees == 0) fail("n_trees must be >= 1");
  if (c.model.max_depth == 0) fail("max_depth must be >= 1");
  if (!(c.model.min_leaf >= 1)) fail("min_leaf must be >= 1");
  if (c.chi2_bins < 2) fail("chi2_bins must be >= 2");
  if (!(c.train_fraction > 0 && c.train_fraction <= 1)) fail("train_fraction must be in (0, 1]");
  if (!(c.immediate_max_minutes > 0 && c.immediate_max_minutes < c.fast_max_minutes))
    fail("reply time boundaries must be positive and increasing");
  if (!(c.short_max_words >= 0 && c.short_max_words < c.medium_max_words))
    fail("reply length boundaries must be increasing");
  if (c.top_k > FeatureCatalog::standard().size()) fail("top_k exceeds the number of features");
  try {
    c.embedding.validate();
  } catch (const DomainError& e) {
    fail(e.what());
  }
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& config) {
  const auto& tg = config.toggles;
  const bool need_features = tg.features || tg.train || tg.rank;
  const bool trains = tg.train || (tg.similarity && config.use_embeddings);
  if (trains && !config.seed) throw InputError("a seed is required for runs that train models or embeddings");
  validate(config);

  PipelineResult result;
  OutputSet out(config.output_dir);
  std::string stage = "ingest";
  try {
    IngestConfig ingest;
    if (config.templates) ingest.templates = TemplateSet::load(*config.templates);
    if (config.lexicon) ingest.lexicon = MarkerLexicon::load(*config.lexicon);
    auto parsed = read_records(config.records, ingest);
    result.records = parsed.records.size();
    result.rejected = parsed.rejected.size();
    if (parsed.records.empty()) throw InputError(config.records.string() + ": no valid records");
    const ProfileMap profiles = config.profiles ? read_profiles(*config.profiles) : ProfileMap{};
    const auto& records = parsed.records;
    std::filesystem::create_directories(config.output_dir);

    stage = "thread";
    ThreadingOptions topts;
    topts.anchor = config.anchor;
    auto all_dyads = build_dyads(records, topts, &result.counters);
    result.dyads = all_dyads.size();
    const auto reply_ids = reply_message_ids(all_dyads);
    const auto dyads = filter_dyads(all_dyads, config.min_replies_each_way);
    result.dyads_kept = dyads.size();
    const auto threads = thread_refs(dyads);
    for (const auto* t : threads) result.reply_events += t->reply_events.size();
    if (tg.tables) {
      out.emit("threads.tsv", [&](std::ostream& o) { return write_thread_table(o, dyads); });
      out.emit("replies.tsv", [&](std::ostream& o) { return write_reply_table(o, dyads); });
    }

    stage = "analyze";
    nlohmann::json summary;
    if (tg.distributions && result.reply_events > 0) {
      for (auto m : {Measure::ReplyTime, Measure::ReplyLength}) {
        const auto d = distribution(collect(threads, m));
        out.emit(fmt::format("{}_distribution.tsv", to_string(m)),
                 [&](std::ostream& o) { return write_distribution(o, d); });
      }
    }
    if (tg.steps) {
      const auto s = step_stats(threads);
      auto curves = s.by_step;
      curves.push_back(s.time_by_thread_length);
      curves.push_back(s.length_by_thread_length);
      out.emit("thread_steps.tsv", [&](std::ostream& o) { return curves_out(o, curves); });
    }
    if (tg.correlation)
      out.emit("time_vs_length.tsv", [&](std::ostream& o) { return curves_out(o, time_length_correlation(threads)); });
    if (tg.circadian)
      out.emit("circadian.tsv", [&](std::ostream& o) { return curves_out(o, circadian_stats(threads)); });
    if (tg.groups) {
      for (auto by : {GroupBy::AgeGroup, GroupBy::Gender, GroupBy::Device, GroupBy::HasAttachment}) {
        const auto g = group_stats(threads, profiles, by);
        auto curves = g.time_given_length;
        curves.insert(curves.end(), g.distributions.begin(), g.distributions.end());
        out.emit(fmt::format("groups/{}_summary.tsv", to_string(by)),
                 [&](std::ostream& o) { return write_group_summaries(o, g.groups); });
        out.emit(fmt::format("groups/{}_curves.tsv", to_string(by)),
                 [&](std::ostream& o) { return curves_out(o, curves); });
      }
    }
    if (tg.overload) {
      const auto loads = compute_daily_loads(records, reply_ids);
      const auto report = overload_curves(loads, threads, profiles);
      summary["overload_excluded_users"] = report.excluded_users.size();
      out.emit("daily_loads.tsv", [&](std::ostream& o) { return write_daily_loads(o, loads); });
      out.emit("overload.tsv", [&](std::ostream& o) { return curves_out(o, report.curves); });
    }
    if (tg.synchronization) {
      const auto time = synchronization_curve(threads, Measure::ReplyTime);
      const auto length = synchronization_curve(threads, Measure::ReplyLength);
      summary["synchronization_threads"] = time.threads_used;
      summary["synchronization_skipped_zero_median"] =
          time.threads_skipped_zero_median + length.threads_skipped_zero_median;
      out.emit("synchronization.tsv", [&](std::ostream& o) { return curves_out(o, segment_curves({&time, &length})); });
    }
    if (tg.markers) {
      const auto markers = marker_coordination(threads);
      std::vector<SummaryCurve> curves;
      for (const auto& m : markers) curves.push_back(m.curve);
      out.emit("markers.tsv", [&](std::ostream& o) { return curves_out(o, curves); });
    }
    if (tg.similarity) {
      std::vector<std::vector<std::string>> docs;
      docs.reserve(records.size());
      for (const auto& r : records) docs.push_back(tokenize(r.body_stripped));
      SegmentCurve curve;
      if (config.use_embeddings) {
        stage = "embed";
        auto params = config.embedding;
        params.seed = derive_seed(*config.seed, "embedding");
        params.workers = config.deterministic ? 1 : std::max<std::size_t>(1, config.workers);
        const auto model = train_embeddings(docs, params);
        std::vector<DocVector> vectors;
        for (std::size_t i = 0; i < records.size(); ++i)
          vectors.push_back({records[i].message_id, model.document_vectors[i]});
        out.emit("vectors.bin", [&](std::ostream& o) {
          write_vectors(o, vectors);
          return std::optional<std::size_t>{};
        });
        summary["embedding_epoch_loss"] = model.epoch_loss;
        curve = content_similarity_curve(threads, [&](const ThreadMessage& a, const ThreadMessage& b) -> std::optional<double> {
          const auto& u = model.document_vectors[a.record_index];
          const auto& v = model.document_vectors[b.record_index];
          if (std::all_of(u.begin(), u.end(), [](float x) { return x == 0; }) ||
              std::all_of(v.begin(), v.end(), [](float x) { return x == 0; }))
            return std::nullopt;
          return cosine(u, v);
        });
        stage = "analyze";
      } else {
        const auto tf = tf_vectorize(docs);
        summary["empty_bodies"] = tf.empty_documents;
        curve = content_similarity_curve(threads, [&](const ThreadMessage& a, const ThreadMessage& b) -> std::optional<double> {
          const auto& u = tf.vectors[a.record_index];
          const auto& v = tf.vectors[b.record_index];
          if (u.empty() || v.empty()) return std::nullopt;
          return cosine(u, v);
        });
      }
      out.emit("similarity.tsv", [&](std::ostream& o) { return curves_out(o, {curve.curve}); });
    }

    if (need_features) {
      stage = "features";
      const auto& catalog = FeatureCatalog::standard();
      const auto rows = assemble_features(records, dyads, profiles, reply_ids);
      const auto split = split_train_test(rows, config.train_fraction);
      summary["feature_rows"] = rows.size();
      summary["train_rows"] = split.train.size();
      summary["test_rows"] = split.test.size();
      summary["short_dyads"] = split.short_dyads.size();
      if (tg.features)
        out.emit("features.tsv", [&](std::ostream& o) { return write_feature_table(o, rows, catalog); });

      std::vector<std::string> all_names;
      for (const auto& e : catalog.entries()) all_names.push_back(e.name);
      BaselineOptions bopts{config.global_replier_baselines};

      for (auto task : {Task::ReplyTime, Task::ReplyLength, Task::LastEmail}) {
        const auto scheme = scheme_for(task, config);
        const auto name = std::string(to_string(task));
        std::vector<Chi2Entry> ranked;
        if (tg.rank || (tg.train && config.top_k > 0)) {
          stage = "rank";
          ranked = chi2_rank(make_dataset(rows, split.train, scheme), catalog, config.chi2_bins);
          if (tg.rank)
            out.emit(fmt::format("chi2/{}.tsv", name), [&](std::ostream& o) { return write_chi2_table(o, ranked); });
        }
        if (!tg.train) continue;

        auto fit_and_report = [&](std::span<const std::size_t> columns, const std::string& suffix) {
          stage = "train";
          std::vector<std::string> names;
          if (columns.empty())
            names = all_names;
          else
            for (auto c : columns) names.push_back(all_names[c]);
          auto params = config.model;
          params.seed = derive_seed(*config.seed, "model/" + name + suffix);
          params.workers = std::max<std::size_t>(1, config.workers);
          const auto model = Model::train(make_dataset(rows, split.train, scheme, columns), task, names, params);
          out.emit(fmt::format("models/{}{}.model", name, suffix), [&](std::ostream& o) {
            model.save(o);
            return std::optional<std::size_t>{};
          });
          stage = "evaluate";
          const auto report = evaluate(model, rows, split, scheme, columns, bopts);
          out.emit(fmt::format("eval/{}{}.json", name, suffix), [&](std::ostream& o) {
            write_eval_report(o, report);
            return std::optional<std::size_t>{1};
          });
        };
        fit_and_report({}, "");
        if (config.top_k > 0) {
          const auto cols = top_k(ranked, std::min(config.top_k, ranked.size()));
          fit_and_report(cols, fmt::format("_top{}", config.top_k));
        }
      }
    }

    if (tg.tables) {
      summary["records"] = result.records;
      summary["rejected"] = result.rejected;
      summary["dyads"] = result.dyads;
      summary["dyads_kept"] = result.dyads_kept;
      summary["reply_events"] = result.reply_events;
      summary["nonpositive_reply_times"] = result.counters.nonpositive_reply_times;
      summary["self_addressed"] = result.counters.self_addressed;
      out.emit("summary.json", [&](std::ostream& o) {
        o << summary.dump(2) << '\n';
        return std::optional<std::size_t>{1};
      });
    }

    stage = "manifest";
    const auto manifest_path = config.output_dir / "manifest.json";
    out.note(manifest_path);
    write_manifest(manifest_path, out.entries());
    result.manifest = out.entries();
    return result;
  } catch (const InputError&) {
    out.remove_all();
    throw;
  } catch (const StageError&) {
    out.remove_all();
    throw;
  } catch (const std::exception& e) {
    out.remove_all();
    throw StageError(stage, e.what());
  }
}

}  // namespace mailconv
