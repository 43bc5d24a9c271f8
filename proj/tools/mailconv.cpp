// mailconv: command-line front end for the reply-behaviour analysis pipeline.
//
// Exit codes: 0 success, 1 input or usage error, 2 stage failure.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mailconv/analytics.hpp"
#include "mailconv/error.hpp"
#include "mailconv/features.hpp"
#include "mailconv/generator.hpp"
#include "mailconv/ingest.hpp"
#include "mailconv/pipeline.hpp"
#include "mailconv/predict.hpp"
#include "mailconv/threading.hpp"

namespace fs = std::filesystem;
using namespace mailconv;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

IngestConfig ingest_config(const std::string& templates, const std::string& lexicon) {
  IngestConfig c;
  if (!templates.empty()) c.templates = TemplateSet::load(templates);
  if (!lexicon.empty()) c.lexicon = MarkerLexicon::load(lexicon);
  return c;
}

std::vector<EmailRecord> load_records(const std::string& path, const IngestConfig& config) {
  auto result = read_records(fs::path(path), config);
  for (const auto& r : result.rejected) std::cerr << fmt::format("{}:{}: rejected: {}\n", path, r.line, r.message);
  if (result.records.empty()) throw InputError(path + ": no valid records");
  return std::move(result.records);
}

std::vector<FeatureRow> load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  return read_feature_table(in, FeatureCatalog::standard());
}

struct SchemeFlags {
  double immediate_max = 15;
  double fast_max = 164;
  double short_max = 21;
  double medium_max = 88;

  void add(CLI::App* app) {
    app->add_option("--immediate-max", immediate_max, "Longest Immediate reply, minutes")->capture_default_str();
    app->add_option("--fast-max", fast_max, "Longest Fast reply, minutes")->capture_default_str();
    app->add_option("--short-max", short_max, "Longest Short reply, words")->capture_default_str();
    app->add_option("--medium-max", medium_max, "Longest Medium reply, words")->capture_default_str();
  }

  ClassScheme scheme(Task t) const {
    switch (t) {
      case Task::ReplyTime: return ClassScheme::reply_time(immediate_max, fast_max);
      case Task::ReplyLength: return ClassScheme::reply_length(short_max, medium_max);
      case Task::LastEmail: return ClassScheme::last_email();
    }
    throw DomainError("unknown task");
  }
};

/// Applies a flat key = value file to `cmd`. Options already given on the
/// command line keep their values; unknown keys are an error.
void merge_config(CLI::App* cmd, const std::string& path) {
  try {
    for (const auto& item : CLI::ConfigINI().from_file(path)) {
      auto* opt = item.parents.empty() && item.name != "config" ? cmd->get_option_no_throw("--" + item.name) : nullptr;
      if (opt == nullptr) throw InputError(fmt::format("{}: unknown configuration key '{}'", path, item.fullname()));
      if (opt->count() > 0) continue;
      if (opt->get_expected_min() == 0) {
        opt->add_result(opt->get_flag_value(item.name, item.inputs.empty() ? "" : item.inputs.front()));
      } else {
        opt->add_result(item.inputs);
      }
      opt->run_callback();
    }
  } catch (const CLI::Error& e) {
    throw InputError(fmt::format("{}: {}", path, e.what()));
  }
}

Task task_from(const std::string& s) {
  if (auto t = parse_task(s)) return *t;
  throw InputError("unknown task '" + s + "' (reply_time, reply_length, last_email)");
}

const std::map<std::string, bool AnalysisToggles::*> kToggles = {
    {"tables", &AnalysisToggles::tables},       {"distributions", &AnalysisToggles::distributions},
    {"steps", &AnalysisToggles::steps},         {"correlation", &AnalysisToggles::correlation},
    {"circadian", &AnalysisToggles::circadian}, {"groups", &AnalysisToggles::groups},
    {"overload", &AnalysisToggles::overload},   {"synchronization", &AnalysisToggles::synchronization},
    {"markers", &AnalysisToggles::markers},     {"similarity", &AnalysisToggles::similarity},
    {"features", &AnalysisToggles::features},   {"train", &AnalysisToggles::train},
    {"rank", &AnalysisToggles::rank},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reply-behaviour analysis of email corpora"};
  app.require_subcommand(1);
  app.fallthrough(false);

  // ingest
  std::string records, templates, lexicon, profiles, out, out_dir;
  auto* ingest = app.add_subcommand("ingest", "Parse records and emit derived fields as JSON lines");
  ingest->add_option("--records", records, "Input records (JSON lines)")->required();
  ingest->add_option("--templates", templates, "Quote/signature template file");
  ingest->add_option("--lexicon", lexicon, "Marker lexicon file");
  ingest->add_option("--out", out, "Output file")->required();

  // thread
  std::string anchor = "first";
  std::size_t min_replies = 5;
  auto* thread = app.add_subcommand("thread", "Reconstruct threads and reply events");
  thread->add_option("--records", records)->required();
  thread->add_option("--templates", templates);
  thread->add_option("--lexicon", lexicon);
  thread->add_option("--out-dir", out_dir)->required();
  thread->add_option("--anchor", anchor, "Reply time measured from the first or last message of a run")
      ->check(CLI::IsMember({"first", "last"}))
      ->capture_default_str();
  thread->add_option("--min-replies", min_replies, "Minimum replies each way for a pair to be kept")
      ->capture_default_str();

  // features
  auto* features = app.add_subcommand("features", "Assemble the feature matrix");
  features->add_option("--records", records)->required();
  features->add_option("--profiles", profiles);
  features->add_option("--templates", templates);
  features->add_option("--lexicon", lexicon);
  features->add_option("--out", out)->required();
  features->add_option("--anchor", anchor)->check(CLI::IsMember({"first", "last"}));
  features->add_option("--min-replies", min_replies)->capture_default_str();

  // train / evaluate / rank
  std::string features_path, task_name, model_path;
  std::uint64_t seed = 0;
  double train_fraction = 0.75;
  std::size_t k = 0, bins = 10;
  bool global_replier = false;
  ModelParams model_params;
  SchemeFlags scheme_flags;
  auto* train = app.add_subcommand("train", "Train a bagged-tree model on the training split");
  train->add_option("--features", features_path)->required();
  train->add_option("--task", task_name, "reply_time, reply_length or last_email")->required();
  train->add_option("--seed", seed)->required();
  train->add_option("--out", model_path)->required();
  train->add_option("--trees", model_params.n_trees)->capture_default_str();
  train->add_option("--max-depth", model_params.max_depth)->capture_default_str();
  train->add_option("--min-leaf", model_params.min_leaf)->capture_default_str();
  train->add_option("--workers", model_params.workers)->capture_default_str();
  train->add_option("--train-fraction", train_fraction)->capture_default_str();
  train->add_option("--top-k", k, "Train on the k features with the largest chi-squared statistic");
  train->add_option("--bins", bins, "Quantile bins for the chi-squared ranking")->capture_default_str();
  scheme_flags.add(train);

  std::string report_path;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a model and the baselines on the test split");
  evaluate_cmd->add_option("--features", features_path)->required();
  evaluate_cmd->add_option("--model", model_path)->required();
  evaluate_cmd->add_option("--out", report_path, "Report file (default: standard output)");
  evaluate_cmd->add_option("--train-fraction", train_fraction)->capture_default_str();
  evaluate_cmd->add_flag("--global-replier", global_replier, "History baselines use the replier's replies in all pairs");
  scheme_flags.add(evaluate_cmd);

  auto* rank = app.add_subcommand("rank", "Rank features by chi-squared statistic on the training split");
  rank->add_option("--features", features_path)->required();
  rank->add_option("--task", task_name)->required();
  rank->add_option("--out", out, "Output table (default: standard output)");
  rank->add_option("--bins", bins)->capture_default_str();
  rank->add_option("--train-fraction", train_fraction)->capture_default_str();
  scheme_flags.add(rank);

  // generate
  GeneratorParams gen;
  bool no_boundary = false;
  auto* generate = app.add_subcommand("generate", "Write a synthetic corpus with ground truth");
  generate->add_option("--dyads", gen.n_dyads)->capture_default_str();
  generate->add_option("--seed", gen.seed)->required();
  generate->add_option("--out-dir", out_dir)->required();
  generate->add_flag("--planted", gen.planted_signal, "Reply-time class follows the replier's history");
  generate->add_option("--label-noise", gen.label_noise)->capture_default_str();
  generate->add_option("--mean-thread-length", gen.mean_thread_length)->capture_default_str();
  generate->add_option("--min-threads", gen.min_threads_per_dyad)->capture_default_str();
  generate->add_option("--max-threads", gen.max_threads_per_dyad)->capture_default_str();
  generate->add_option("--max-messages", gen.max_messages_per_dyad)->capture_default_str();
  generate->add_option("--background", gen.background_messages_per_dyad, "Bulk messages per pair")
      ->capture_default_str();
  generate->add_flag("--no-boundary", no_boundary, "Do not plant replies exactly on the class boundaries");

  // analyze and pipeline share the run configuration
  RunConfig run;
  run.workers = std::max(1u, std::thread::hardware_concurrency());
  std::string run_records, run_profiles, run_templates, run_lexicon, run_out = "out", only, run_config;
  std::uint64_t run_seed = 0;
  auto add_run_options = [&](CLI::App* cmd, bool training) {
    cmd->add_option("--records", run_records, "Input records (JSON lines); required");
    cmd->add_option("--profiles", run_profiles, "User profiles (TSV)");
    cmd->add_option("--templates", run_templates, "Quote/signature template file");
    cmd->add_option("--lexicon", run_lexicon, "Marker lexicon file");
    cmd->add_option("--out-dir", run_out, "Output directory")->capture_default_str();
    cmd->add_option("--anchor", anchor, "Reply time measured from the first or last message of a run")
        ->check(CLI::IsMember({"first", "last"}))->capture_default_str();
    cmd->add_option("--min-replies", run.min_replies_each_way, "Minimum replies each way for a pair to be kept")
        ->capture_default_str();
    cmd->add_option("--workers", run.workers, "Worker threads (default: all cores)");
    cmd->add_flag("--deterministic", run.deterministic, "Single-worker embedding training");
    cmd->add_flag("--embeddings", run.use_embeddings, "Content similarity from trained document vectors");
    cmd->add_option("--embedding-dim", run.embedding.dim, "Document vector dimension")->capture_default_str();
    cmd->add_option("--embedding-iterations", run.embedding.iterations, "Training passes")->capture_default_str();
    cmd->add_option("--embedding-min-count", run.embedding.min_count, "Rarest word kept in the vocabulary")->capture_default_str();
    cmd->add_option("--seed", run_seed, "Run seed; required when training");
    cmd->add_option("--only", only, "Comma-separated outputs to enable; all others off");
    for (const auto& [name, member] : kToggles) {
      if (!training && (name == "features" || name == "train" || name == "rank")) continue;
      cmd->add_flag(fmt::format("--{0},!--no-{0}", name), run.toggles.*member, "Enable or disable " + name);
    }
    if (!training) return;
    cmd->add_option("--immediate-max", run.immediate_max_minutes, "Longest Immediate reply, minutes")->capture_default_str();
    cmd->add_option("--fast-max", run.fast_max_minutes, "Longest Fast reply, minutes")->capture_default_str();
    cmd->add_option("--short-max", run.short_max_words, "Longest Short reply, words")->capture_default_str();
    cmd->add_option("--medium-max", run.medium_max_words, "Longest Medium reply, words")->capture_default_str();
    cmd->add_option("--train-fraction", run.train_fraction, "Share of each pair's replies used for training")->capture_default_str();
    cmd->add_option("--trees", run.model.n_trees, "Trees in each bagged model")->capture_default_str();
    cmd->add_option("--max-depth", run.model.max_depth, "Deepest tree level")->capture_default_str();
    cmd->add_option("--min-leaf", run.model.min_leaf, "Smallest leaf weight")->capture_default_str();
    cmd->add_option("--bins", run.chi2_bins, "Quantile bins for the chi-squared ranking")->capture_default_str();
    cmd->add_option("--top-k", run.top_k, "Also train on the k best-ranked features")->capture_default_str();
    cmd->add_flag("--global-replier", run.global_replier_baselines,
                 "History baselines use the replier's replies in all pairs");
  };
  auto* analyze = app.add_subcommand("analyze", "Compute the descriptive analysis tables");
  add_run_options(analyze, false);
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
  add_run_options(pipeline, true);
  for (auto* cmd : {analyze, pipeline}) {
    cmd->add_option("--config", run_config, "Flat key = value file; command-line flags take precedence")
        ->check(CLI::ExistingFile);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (ingest->parsed()) {
      const auto config = ingest_config(templates, lexicon);
      auto result = read_records(fs::path(records), config);
      auto f = open_out(out);
      for (const auto& r : result.records) f << to_parsed_line(r) << '\n';
      for (const auto& r : result.rejected) std::cerr << fmt::format("{}:{}: rejected: {}\n", records, r.line, r.message);
      std::cerr << fmt::format("{} records, {} rejected\n", result.records.size(), result.rejected.size());
      return 0;
    }

    ThreadingOptions topts;
    topts.anchor = anchor == "last" ? ReplyTimeAnchor::LastOfRun : ReplyTimeAnchor::FirstOfRun;

    if (thread->parsed()) {
      const auto corpus = load_records(records, ingest_config(templates, lexicon));
      ThreadingCounters counters;
      const auto dyads = filter_dyads(build_dyads(corpus, topts, &counters), min_replies);
      fs::create_directories(out_dir);
      auto t = open_out(fs::path(out_dir) / "threads.tsv");
      auto r = open_out(fs::path(out_dir) / "replies.tsv");
      const auto n_threads = write_thread_table(t, dyads);
      const auto n_events = write_reply_table(r, dyads);
      std::cerr << fmt::format("{} pairs kept, {} threads, {} reply events, {} dropped for non-positive reply time\n",
                               dyads.size(), n_threads, n_events, counters.nonpositive_reply_times);
      return 0;
    }

    if (features->parsed()) {
      const auto corpus = load_records(records, ingest_config(templates, lexicon));
      const auto prof = profiles.empty() ? ProfileMap{} : read_profiles(fs::path(profiles));
      const auto all = build_dyads(corpus, topts);
      const auto kept = filter_dyads(all, min_replies);
      const auto rows = assemble_features(corpus, kept, prof, reply_message_ids(all));
      auto f = open_out(out);
      write_feature_table(f, rows, FeatureCatalog::standard());
      std::cerr << fmt::format("{} feature rows\n", rows.size());
      return 0;
    }

    if (train->parsed()) {
      const auto task = task_from(task_name);
      const auto scheme = scheme_flags.scheme(task);
      const auto rows = load_features(features_path);
      const auto split = split_train_test(rows, train_fraction);
      const auto& catalog = FeatureCatalog::standard();
      std::vector<std::size_t> columns;
      if (k > 0) columns = top_k(chi2_rank(make_dataset(rows, split.train, scheme), catalog, bins), k);
      std::vector<std::string> names;
      if (columns.empty())
        for (const auto& e : catalog.entries()) names.push_back(e.name);
      else
        for (auto c : columns) names.push_back(catalog[c].name);
      model_params.seed = seed;
      const auto model = Model::train(make_dataset(rows, split.train, scheme, columns), task, names, model_params);
      model.save(fs::path(model_path));
      std::cerr << fmt::format("trained {} trees on {} rows, {} features\n", model.trees().size(), split.train.size(),
                               names.size());
      return 0;
    }

    if (evaluate_cmd->parsed()) {
      const auto model = Model::load(fs::path(model_path));
      const auto scheme = scheme_flags.scheme(model.task());
      const auto rows = load_features(features_path);
      const auto split = split_train_test(rows, train_fraction);
      std::vector<std::size_t> columns;
      const auto& catalog = FeatureCatalog::standard();
      for (const auto& n : model.feature_names()) columns.push_back(catalog.index_of(n));
      const auto report = evaluate(model, rows, split, scheme, columns, BaselineOptions{global_replier});
      if (report_path.empty()) {
        write_eval_report(std::cout, report);
      } else {
        auto f = open_out(report_path);
        write_eval_report(f, report);
      }
      return 0;
    }

    if (rank->parsed()) {
      const auto scheme = scheme_flags.scheme(task_from(task_name));
      const auto rows = load_features(features_path);
      const auto split = split_train_test(rows, train_fraction);
      const auto ranked = chi2_rank(make_dataset(rows, split.train, scheme), FeatureCatalog::standard(), bins);
      if (out.empty()) {
        write_chi2_table(std::cout, ranked);
      } else {
        auto f = open_out(out);
        write_chi2_table(f, ranked);
      }
      return 0;
    }

    if (generate->parsed()) {
      gen.boundary_replies = !no_boundary;
      const auto corpus = generate_corpus(gen);
      write_generated(out_dir, corpus);
      std::cerr << fmt::format("{} records, {} users with profiles\n", corpus.records.size(), corpus.profiles.size());
      return 0;
    }

    for (auto* cmd : {analyze, pipeline}) {
      if (!cmd->parsed()) continue;
      if (!run_config.empty()) merge_config(cmd, run_config);
      if (run_records.empty()) throw InputError("--records is required");
      const bool training = cmd == pipeline;
      if (!training) {
        run.toggles.features = run.toggles.train = run.toggles.rank = false;
      }
      if (!only.empty()) {
        run.toggles = AnalysisToggles::none();
        std::stringstream ss(only);
        for (std::string name; std::getline(ss, name, ',');) {
          auto it = kToggles.find(name);
          if (it == kToggles.end() || (!training && (name == "features" || name == "train" || name == "rank")))
            throw InputError("unknown output group '" + name + "'");
          run.toggles.*(it->second) = true;
        }
      }
      run.records = run_records;
      if (!run_profiles.empty()) run.profiles = run_profiles;
      if (!run_templates.empty()) run.templates = run_templates;
      if (!run_lexicon.empty()) run.lexicon = run_lexicon;
      run.output_dir = run_out;
      run.anchor = topts.anchor;
      if (cmd->count("--seed") > 0) run.seed = run_seed;
      const auto result = run_pipeline(run);
      std::cerr << fmt::format("{} records ({} rejected), {} of {} pairs kept, {} reply events, {} outputs\n",
                               result.records, result.rejected, result.dyads_kept, result.dyads, result.reply_events,
                               result.manifest.size());
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error: stage " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
