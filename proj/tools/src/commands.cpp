#include "commands.hpp"

#include <charconv>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>

#include "cli.hpp"
#include "run_dir.hpp"
#include "utged/error.hpp"
#include "utged/evaluation.hpp"
#include "utged/numeric/serialize.hpp"
#include "utged/selection.hpp"
#include "utged/synth.hpp"
#include "utged/training.hpp"

namespace utged::cli {

namespace fs = std::filesystem;

namespace {

// File names inside data and run directories.
constexpr const char* kTrain = "train.jsonl";
constexpr const char* kValid = "valid.jsonl";
constexpr const char* kTest = "test.jsonl";
constexpr const char* kVocab = "vocab.txt";
constexpr const char* kBowVocab = "bow_vocab.txt";
constexpr const char* kTfidf = "tfidf.txt";
constexpr const char* kCheckpoint = "checkpoint.ckpt";
constexpr const char* kNtmCheckpoint = "ntm.ckpt";

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::vector<std::size_t> parse_values(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    const std::string_view item(text.data() + pos, comma - pos);
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size())
      throw UsageError("--values: '" + std::string(item) + "' is not a non-negative integer");
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

struct DataDir {
  fs::path dir;
  std::vector<corpus::UserRecord> train, valid, test;
  train::Vocabularies vocabs;

  explicit DataDir(fs::path d) : dir(std::move(d)) {
    for (const char* name : {kTrain, kValid, kTest, kVocab, kBowVocab})
      if (!fs::exists(dir / name)) throw UsageError(dir.string() + " is not a prepared data directory (missing " + name + ")");
    train = corpus::load_jsonl(dir / kTrain);
    valid = corpus::load_jsonl(dir / kValid);
    test = corpus::load_jsonl(dir / kTest);
    vocabs.gen = corpus::Vocabulary::load(dir / kVocab);
    vocabs.bow = corpus::Vocabulary::load(dir / kBowVocab);
  }

  const std::vector<corpus::UserRecord>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    return test;
  }

  void record(RunDir& run) const {
    for (const char* name : {kTrain, kValid, kTest, kVocab, kBowVocab}) run.record_input(dir / name);
  }
};

// A finished train run: its config (plus overrides), vocabularies, weights
// and selection backend.
struct LoadedRun {
  Config config;
  train::Vocabularies vocabs;
  std::unique_ptr<train::Model> model;
  std::unique_ptr<sim::SimilarityBackend> backend;
};

LoadedRun load_run(const fs::path& dir, const Overrides& overrides) {
  if (!fs::exists(dir / "config.txt") || !fs::exists(dir / kCheckpoint))
    throw UsageError(dir.string() + " is not a train run directory (needs config.txt and " + kCheckpoint + ")");
  LoadedRun r;
  r.config = overrides.resolve(load_config(dir / "config.txt"));
  r.vocabs.gen = corpus::Vocabulary::load(dir / kVocab);
  r.vocabs.bow = corpus::Vocabulary::load(dir / kBowVocab);
  num::Rng rng(r.config.seed);
  r.model = std::make_unique<train::Model>(r.config, r.vocabs, rng);
  train::load_checkpoint(dir / kCheckpoint, *r.model);
  if (r.config.similarity_backend == "mean-token") {
    r.backend = train::make_backend(r.config, {}, &r.model->generator, &r.vocabs.gen);
  } else {
    r.backend = std::make_unique<sim::TfidfBackend>(sim::TfidfBackend::load(dir / kTfidf));
  }
  return r;
}

void record_run(RunDir& run, const fs::path& dir) {
  for (const char* name : {"config.txt", kVocab, kBowVocab, kCheckpoint})
    if (fs::exists(dir / name)) run.record_input(dir / name);
  if (fs::exists(dir / kTfidf)) run.record_input(dir / kTfidf);
}

// Selection backend for commands that run before a model exists.
std::unique_ptr<sim::SimilarityBackend> fresh_backend(const Config& config,
                                                      std::span<const corpus::UserRecord> fit_records,
                                                      const std::string& embeddings_run, const Overrides& overrides,
                                                      std::optional<LoadedRun>& holder) {
  if (config.similarity_backend != "mean-token") return train::make_backend(config, fit_records);
  if (embeddings_run.empty()) throw UsageError("similarity_backend = mean-token needs --embeddings <train run>");
  holder = load_run(embeddings_run, overrides);
  return train::make_backend(config, {}, &holder->model->generator, &holder->vocabs.gen);
}

nlohmann::ordered_json filter_report_json(const corpus::FilterReport& r) {
  nlohmann::ordered_json j;
  j["input"] = r.input;
  j["dropped_few_published"] = r.dropped_few_published;
  j["dropped_non_ascii"] = r.dropped_non_ascii;
  j["dropped_intro_short"] = r.dropped_intro_short;
  j["dropped_intro_long"] = r.dropped_intro_long;
  j["dropped_low_similarity"] = r.dropped_low_similarity;
  j["kept"] = r.kept;
  return j;
}

std::vector<std::string> words_of(const std::vector<std::uint32_t>& indices, const corpus::Vocabulary& bow) {
  std::vector<std::string> out;
  for (auto i : indices) out.push_back(bow.content_token(i));
  return out;
}

}  // namespace

int cmd_synth(const Args& a, const Overrides& overrides, Io io) {
  const auto config = overrides.resolve();
  synth::SynthOptions so;
  so.topics = a.topics;
  so.users = a.users;
  so.min_docs = a.min_docs;
  so.max_docs = a.max_docs;
  so.vocab_size = a.word_types;
  so.min_words = a.min_words;
  so.max_words = a.max_words;
  so.concentration = a.concentration;
  so.repost_rate = a.repost_rate;
  so.seed = config.seed;
  synth::validate(so);
  RunDir run(a.out, "synth", a.argv, config);
  const auto corpus = synth::generate(so);
  corpus::save_jsonl(run / "corpus.jsonl", corpus.records);
  synth::save_sidecar(run / "planted.json", corpus);
  run.write_manifest();
  io.out << "wrote " << corpus.records.size() << " users over " << so.topics << " topics to "
         << (run / "corpus.jsonl").string() << '\n';
  return kExitOk;
}

int cmd_prepare(const Args& a, const Overrides& overrides, Io io) {
  const auto config = overrides.resolve();
  const auto records = corpus::load_jsonl(a.input);
  std::optional<LoadedRun> holder;
  const auto backend = fresh_backend(config, records, a.embeddings, overrides, holder);
  RunDir run(a.out, "prepare", a.argv, config);
  run.record_input(a.input);
  corpus::FilterReport report;
  const auto kept = corpus::filter_records(records, config.filter_options(), *backend, &report);
  const auto split = corpus::split_records(kept, config.split_ratios(), config.seed);
  corpus::save_jsonl(run / kTrain, split.train);
  corpus::save_jsonl(run / kValid, split.valid);
  corpus::save_jsonl(run / kTest, split.test);
  const auto vocabs = train::build_vocabularies(split.train, config);
  vocabs.gen.save(run / kVocab);
  vocabs.bow.save(run / kBowVocab);
  open_out(run / "filter_report.json") << filter_report_json(report).dump(2) << '\n';
  run.write_manifest();
  io.out << "kept " << report.kept << " of " << report.input << " users; train/valid/test = " << split.train.size()
         << '/' << split.valid.size() << '/' << split.test.size() << "; vocab " << vocabs.gen.size() << ", bow "
         << vocabs.bow.content_size() << '\n';
  return kExitOk;
}

int cmd_stats(const Args& a, const Overrides& overrides, Io io) {
  const auto config = overrides.resolve();
  const auto records = corpus::load_jsonl(a.input);
  if (records.empty()) throw UsageError(a.input + " holds no records");
  const auto backend = train::make_backend(config, records);
  RunDir run(a.out, "stats", a.argv, config);
  run.record_input(a.input);
  const auto opts = config.filter_options();
  const auto stats = corpus::compute_stats(records, *backend, opts.top_k, opts.ordering);
  auto sim_csv = open_out(run / "similarity_hist.csv");
  corpus::write_histogram_csv(sim_csv, stats.similarity);
  auto doc_csv = open_out(run / "doc_count_hist.csv");
  corpus::write_histogram_csv(doc_csv, stats.doc_counts);
  const auto summary = corpus::format_stats_summary(stats);
  open_out(run / "summary.txt") << summary;
  run.write_manifest();
  io.out << summary;
  return kExitOk;
}

int cmd_pretrain_ntm(const Args& a, const Overrides& overrides, Io io) {
  const auto config = overrides.resolve();
  const DataDir data(a.data);
  RunDir run(a.out, "pretrain-ntm", a.argv, config);
  data.record(run);
  run.import(data.dir / kVocab, kVocab);
  run.import(data.dir / kBowVocab, kBowVocab);

  std::vector<train::PreparedExample> bows(data.train.size());
  for (std::size_t i = 0; i < bows.size(); ++i) bows[i].bow = corpus::build_bow(data.train[i], data.vocabs.bow);
  num::Rng root(config.seed);
  auto init = root.fork(1);
  ntm::TopicModel model(config.ntm_config(data.vocabs.bow.content_size()), init);
  auto rng = root.fork(2);
  const auto result = train::pretrain_ntm(model, bows, config, rng);

  auto csv = open_out(run / "ntm_loss.csv");
  csv << "epoch,loss\n";
  csv.precision(17);
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) csv << e + 1 << ',' << result.epoch_losses[e] << '\n';
  num::save_tensors(run / kNtmCheckpoint, num::with_prefix(model.parameters(), "ntm/"));
  run.write_manifest();
  if (result.diverged) {
    io.err << "error: topic-model loss diverged after " << result.epoch_losses.size()
           << " epochs; saved the last finite state\n";
    return kExitRuntime;
  }
  io.out << "pretrained " << result.epoch_losses.size() << " epochs";
  if (!result.epoch_losses.empty())
    io.out << ", loss " << result.epoch_losses.front() << " -> " << result.epoch_losses.back();
  io.out << '\n';
  return kExitOk;
}

int cmd_train(const Args& a, const Overrides& overrides, Io io) {
  const auto config = overrides.resolve();
  const DataDir data(a.data);
  std::optional<LoadedRun> holder;
  const auto backend = fresh_backend(config, data.train, a.embeddings, overrides, holder);
  RunDir run(a.out, "train", a.argv, config);
  data.record(run);
  run.import(data.dir / kVocab, kVocab);
  run.import(data.dir / kBowVocab, kBowVocab);
  if (const auto* tfidf = dynamic_cast<const sim::TfidfBackend*>(backend.get())) tfidf->save(run / kTfidf);

  const auto examples = train::prepare_examples(data.train, data.vocabs, *backend, config);
  const auto valid = train::prepare_examples(data.valid, data.vocabs, *backend, config);
  num::Rng root(config.seed);
  auto init = root.fork(1);
  train::Model model(config, data.vocabs, init);

  nlohmann::ordered_json summary;
  if (!a.ntm.empty()) {
    run.record_input(a.ntm);
    num::assign_by_name(model.ntm.parameters(), num::load_tensors(a.ntm), "ntm/");
  } else {
    auto rng = root.fork(2);
    const auto pre = train::pretrain_ntm(model.ntm, examples, config, rng);
    auto csv = open_out(run / "ntm_loss.csv");
    csv << "epoch,loss\n";
    csv.precision(17);
    for (std::size_t e = 0; e < pre.epoch_losses.size(); ++e) csv << e + 1 << ',' << pre.epoch_losses[e] << '\n';
    summary["pretrain_epochs"] = pre.epoch_losses.size();
    summary["pretrain_diverged"] = pre.diverged;
    if (pre.diverged) {
      run.write_manifest();
      io.err << "error: topic-model pretraining diverged; aborting before joint training\n";
      return kExitRuntime;
    }
  }

  train::JointTrainer trainer(model, config);
  auto log = open_out(run / "train_log.csv");
  train::write_log_header(log);
  auto rng = root.fork(3);
  const auto result = train::joint_train(trainer, examples, config, rng,
                                         [&](const train::StepLog& row) { train::write_log_row(log, row); });
  train::save_checkpoint(run / kCheckpoint, model, &trainer.optimizer(),
                         {trainer.epoch(), trainer.steps(), fnv1a(config_to_text(config))});

  summary["steps"] = trainer.steps();
  summary["epochs"] = trainer.epoch();
  summary["diverged"] = result.diverged;
  if (!result.log.empty()) {
    summary["final_l_ntm"] = result.log.back().l_ntm;
    summary["final_l_sig"] = result.log.back().l_sig;
    summary["final_total"] = result.log.back().total;
  }
  if (!valid.empty()) {
    num::NoGradScope no_grad;
    std::vector<const train::PreparedExample*> all;
    for (const auto& ex : valid) all.push_back(&ex);
    const auto v = train::joint_loss(model, all, config.alpha_loss, nullptr);
    summary["valid_l_sig"] = v.l_sig.item();
  }
  open_out(run / "train_summary.json") << summary.dump(2) << '\n';
  run.write_manifest();
  if (result.diverged) {
    io.err << "error: joint loss diverged after " << trainer.steps() << " steps; saved the last finite state\n";
    return kExitRuntime;
  }
  io.out << "trained " << trainer.steps() << " steps";
  if (!result.log.empty()) io.out << ", final L_SIG " << result.log.back().l_sig;
  io.out << "; checkpoint " << (run / kCheckpoint).string() << '\n';
  return kExitOk;
}

int cmd_generate(const Args& a, const Overrides& overrides, Io io) {
  const auto loaded = load_run(a.run, overrides);
  const auto records = corpus::load_jsonl(a.input);
  RunDir run(a.out, "generate", a.argv, loaded.config);
  record_run(run, a.run);
  run.record_input(a.input);
  auto out = open_out(run / "predictions.jsonl");
  fs::create_directories(run / "traces");
  std::size_t warnings = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto ex = train::prepare_example(records[i], loaded.vocabs, *loaded.backend, loaded.config);
    const auto g = train::generate(*loaded.model, loaded.vocabs, ex, loaded.config);
    nlohmann::ordered_json j;
    j["user_id"] = ex.user_id;
    j["self_intro"] = g.text;
    j["major_topic"] = g.guidance.major_topic;
    j["topic_words"] = words_of(g.guidance.topic_words, loaded.vocabs.bow);
    j["theta"] = g.guidance.theta;
    out << j.dump() << '\n';
    if (!g.trace.steps.empty()) {
      auto trace = open_out(run / "traces" / (std::to_string(i) + ".jsonl"));
      control::write_trace_jsonl(trace, g.trace);
    }
    warnings += g.trace.warnings;
  }
  run.write_manifest();
  io.out << "generated " << records.size() << " self-introductions";
  if (warnings) io.out << " (" << warnings << " control steps aborted)";
  io.out << '\n';
  return kExitOk;
}

int cmd_evaluate(const Args& a, const Overrides& overrides, Io io) {
  const auto loaded = load_run(a.run, overrides);
  const DataDir data(a.data);
  const auto& records = data.split(a.split);
  RunDir run(a.out, "evaluate", a.argv, loaded.config);
  record_run(run, a.run);
  data.record(run);
  const auto& config = loaded.config;

  eval::EvalReport report;
  auto predictions = open_out(run / "predictions.jsonl");
  const auto write_prediction = [&](const std::string& user, const std::string& text) {
    predictions << nlohmann::ordered_json{{"user_id", user}, {"self_intro", text}}.dump() << '\n';
  };
  const std::optional<selection::OracleMode> oracle =
      a.oracle.empty() ? std::nullopt : std::optional(selection::parse_oracle_mode(a.oracle));
  if (oracle && *oracle != selection::OracleMode::kAbstractiveInput) {
    // Extractive baselines: the picked document is the prediction.
    std::vector<eval::RougeScore> scores;
    for (const auto& r : records) {
      eval::SampleResult s;
      s.user_id = r.user_id;
      s.history_size = r.history.size();
      s.reference = corpus::join_tokens(corpus::tokenize(r.self_intro));
      s.candidate = corpus::join_tokens(
          selection::oracle_select(r.history, r.self_intro, *loaded.backend, *oracle, config.max_input_tokens).tokens);
      bool empty = false;
      s.score = eval::rouge_text(s.candidate, s.reference, &empty);
      report.empty_references += empty;
      scores.push_back(s.score);
      write_prediction(s.user_id, s.candidate);
      report.samples.push_back(std::move(s));
    }
    report.mean = eval::macro_average(scores);
  } else {
    auto examples = train::prepare_examples(records, loaded.vocabs, *loaded.backend, config);
    if (oracle) {
      for (std::size_t i = 0; i < records.size(); ++i) {
        const auto src = selection::oracle_select(records[i].history, records[i].self_intro, *loaded.backend,
                                                  *oracle, config.max_input_tokens);
        examples[i].source = loaded.vocabs.gen.encode(src.tokens);
        if (examples[i].source.empty()) examples[i].source.push_back(corpus::Vocabulary::kUnk);
      }
    }
    report = eval::evaluate(*loaded.model, loaded.vocabs, examples, config,
                            [&](const train::PreparedExample& ex, const train::Generation& g) {
                              write_prediction(ex.user_id, g.text);
                            });
  }

  auto samples = open_out(run / "samples.csv");
  eval::write_samples_csv(samples, report);
  auto metrics = open_out(run / "metrics.json");
  eval::write_summary_json(metrics, report);
  auto buckets = open_out(run / "buckets.csv");
  buckets << "bucket_upper,samples,r1,r2,rl\n";
  buckets.precision(10);
  for (const auto& b : eval::bucket_by_history(report, eval::kBucketGrid))
    buckets << b.upper << ',' << b.count << ',' << b.mean.r1 << ',' << b.mean.r2 << ',' << b.mean.rl << '\n';
  run.write_manifest();
  if (report.empty_references) io.err << "warning: " << report.empty_references << " empty references scored 0\n";
  if (report.failed) io.err << "warning: " << report.failed << " samples failed and were skipped\n";
  io.out << "R-1 " << report.mean.r1 << "  R-2 " << report.mean.r2 << "  R-L " << report.mean.rl << "  ("
         << report.samples.size() - report.failed << " samples)\n";
  return kExitOk;
}

int cmd_sweep(const Args& a, const Overrides& overrides, Io io) {
  const auto axis = eval::parse_axis(a.axis);
  std::vector<std::size_t> values;
  if (!a.values.empty()) {
    values = parse_values(a.values);
  } else if (axis == eval::SweepAxis::kTopics) {
    values.assign(std::begin(eval::kTopicGrid), std::end(eval::kTopicGrid));
  } else if (axis == eval::SweepAxis::kPromptLength) {
    values.assign(std::begin(eval::kPromptGrid), std::end(eval::kPromptGrid));
  } else {
    values.assign(std::begin(eval::kBucketGrid), std::end(eval::kBucketGrid));
  }
  if (!a.run.empty() && axis != eval::SweepAxis::kHistoryBucket)
    throw UsageError("--run only applies to the bucket axis");

  const DataDir data(a.data);
  std::optional<LoadedRun> loaded;
  if (!a.run.empty()) loaded = load_run(a.run, overrides);
  const auto config = loaded ? loaded->config : overrides.resolve();
  RunDir run(a.out, "sweep", a.argv, config);
  data.record(run);
  if (loaded) record_run(run, a.run);

  const corpus::DatasetSplit split{data.train, data.valid, data.test};
  const eval::LegRunner leg = [&](const Config& c) {
    if (loaded) {
      const auto examples = train::prepare_examples(data.test, loaded->vocabs, *loaded->backend, c);
      return eval::evaluate(*loaded->model, loaded->vocabs, examples, c);
    }
    io.out << eval::axis_name(axis) << " leg: K=" << c.num_topics << " L=" << c.prompt_length << '\n';
    return eval::run_experiment(c, split).report;
  };
  const auto report = eval::sweep(axis, values, config, leg);
  auto csv = open_out(run / "sweep.csv");
  eval::write_sweep_csv(csv, report);
  auto dat = open_out(run / "sweep.dat");
  eval::write_sweep_dat(dat, report);
  run.write_manifest();
  std::size_t failed = 0;
  for (const auto& r : report.rows) {
    io.out << eval::axis_name(axis) << '=' << r.value << ' ';
    if (r.ok) {
      io.out << "R-1 " << r.mean.r1 << " R-2 " << r.mean.r2 << " R-L " << r.mean.rl << '\n';
    } else {
      io.out << "failed: " << r.error << '\n';
      ++failed;
    }
  }
  if (failed) io.err << "warning: " << failed << " of " << report.rows.size() << " legs failed\n";
  return kExitOk;
}

int cmd_topics_dump(const Args& a, const Overrides& overrides, Io io) {
  const fs::path dir(a.run);
  Config config;
  train::Vocabularies vocabs;
  vocabs.bow = corpus::Vocabulary::load(dir / kBowVocab);
  std::optional<ntm::TopicModel> model;
  if (fs::exists(dir / kCheckpoint)) {
    auto loaded = load_run(dir, overrides);
    config = loaded.config;
    model.emplace(loaded.model->ntm);
  } else if (fs::exists(dir / kNtmCheckpoint)) {
    config = overrides.resolve(load_config(dir / "config.txt"));
    num::Rng rng(config.seed);
    model.emplace(config.ntm_config(vocabs.bow.content_size()), rng);
    num::assign_by_name(model->parameters(), num::load_tensors(dir / kNtmCheckpoint), "ntm/");
  } else {
    throw UsageError(dir.string() + " holds neither " + kCheckpoint + " nor " + kNtmCheckpoint);
  }
  const std::size_t top = std::min(a.top ? a.top : config.topic_words, vocabs.bow.content_size());
  std::ostringstream text;
  for (std::size_t k = 0; k < model->num_topics(); ++k) {
    text << "topic " << k << ':';
    for (const auto& w : words_of(ntm::topic_words(model->topic_word_matrix(), k, top), vocabs.bow)) text << ' ' << w;
    text << '\n';
  }
  if (!a.out.empty()) {
    RunDir run(a.out, "topics-dump", a.argv, config);
    record_run(run, dir);
    open_out(run / "topics.txt") << text.str();
    run.write_manifest();
  }
  io.out << text.str();
  return kExitOk;
}

int cmd_selection_dump(const Args& a, const Overrides& overrides, Io io) {
  const auto records = corpus::load_jsonl(a.input);
  const auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.user_id == a.user; });
  if (it == records.end()) throw UsageError("no user '" + a.user + "' in " + a.input);
  std::optional<LoadedRun> loaded;
  if (!a.run.empty()) loaded = load_run(a.run, overrides);
  const auto config = loaded ? loaded->config : overrides.resolve();
  const auto backend = loaded ? nullptr : train::make_backend(config, records);
  const auto& b = loaded ? *loaded->backend : *backend;

  const auto result = selection::build_source(it->history, b, config.selection_options());
  std::ostringstream text;
  text << "user " << it->user_id << ": " << it->history.size() << " documents, " << result.shortlist.size()
       << " shortlisted\n";
  text << "pick\tindex\trepresentativeness\tdocument\n";
  for (std::size_t r = 0; r < result.shortlist.size(); ++r) {
    const auto& s = result.shortlist[r];
    text << r + 1 << '\t' << s.index << '\t' << s.score << '\t' << it->history[s.index] << '\n';
  }
  text << "kept (chronological):";
  for (auto k : result.source.kept) text << ' ' << k;
  text << "\nsource (" << result.source.token_count() << " tokens): " << corpus::join_tokens(result.source.tokens)
       << '\n';
  if (!a.out.empty()) {
    RunDir run(a.out, "selection-dump", a.argv, config);
    run.record_input(a.input);
    if (loaded) record_run(run, a.run);
    open_out(run / "selection.txt") << text.str();
    run.write_manifest();
  }
  io.out << text.str();
  return kExitOk;
}

}  // namespace utged::cli
