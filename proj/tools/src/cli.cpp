#include "cli.hpp"

#include <CLI11.hpp>
#include <functional>
#include <map>
#include <ostream>

#include "commands.hpp"
#include "utged/error.hpp"

namespace utged::cli {

namespace {

using Handler = int (*)(const Args&, const Overrides&, Io);

struct Subcommand {
  CLI::App* app = nullptr;
  Handler handler = nullptr;
  std::map<std::string, std::string> raw;  // config key -> flag text
  std::vector<std::pair<std::string, CLI::Option*>> flags;
  std::string config_path;
};

void add_config_flags(Subcommand& sub) {
  sub.app->add_option("--config", sub.config_path, "key = value config file applied over the defaults")
      ->check(CLI::ExistingFile);
  for (const auto& key : config_keys()) {
    auto* opt = sub.app->add_option("--" + dash_case(key.name), sub.raw[key.name], key.help);
    opt->group("Config overrides");
    sub.flags.emplace_back(key.name, opt);
  }
}

}  // namespace

Config Overrides::resolve(Config base) const {
  if (!config_path.empty()) base = load_config(config_path, std::move(base));
  for (const auto& [key, text] : values) set_config_value(base, key, text);
  try {
    base.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  return base;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"utged: self-introduction generation from user histories"};
  app.name("utged");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  Args a;
  a.argv = args;
  std::vector<std::unique_ptr<Subcommand>> subs;
  auto add = [&](const std::string& name, const std::string& help, Handler h) {
    auto s = std::make_unique<Subcommand>();
    s->app = app.add_subcommand(name, help);
    s->handler = h;
    add_config_flags(*s);
    subs.push_back(std::move(s));
    return subs.back()->app;
  };

  auto* synth = add("synth", "Generate a synthetic corpus with planted topics", cmd_synth);
  synth->add_option("--out", a.out, "Output run directory")->required();
  synth->add_option("--topics", a.topics, "Planted topics T")->capture_default_str();
  synth->add_option("--users", a.users, "Users N")->capture_default_str();
  synth->add_option("--min-docs", a.min_docs, "Fewest documents per user")->capture_default_str();
  synth->add_option("--max-docs", a.max_docs, "Most documents per user")->capture_default_str();
  synth->add_option("--word-types", a.word_types, "Vocabulary size, split evenly across topics")->capture_default_str();
  synth->add_option("--min-words", a.min_words, "Fewest words per document")->capture_default_str();
  synth->add_option("--max-words", a.max_words, "Most words per document")->capture_default_str();
  synth->add_option("--concentration", a.concentration, "Dirichlet concentration of user mixtures")
      ->capture_default_str();
  synth->add_option("--repost-rate", a.repost_rate, "Chance a document repeats an earlier one")
      ->capture_default_str();

  auto* prepare = add("prepare", "Filter, split and build vocabularies", cmd_prepare);
  prepare->add_option("--input", a.input, "Raw JSONL corpus")->required()->check(CLI::ExistingFile);
  prepare->add_option("--out", a.out, "Output data directory")->required();
  prepare->add_option("--embeddings", a.embeddings, "Train run whose embeddings back the mean-token similarity");

  auto* stats = add("stats", "Similarity and history-size histograms", cmd_stats);
  stats->add_option("--input", a.input, "JSONL corpus")->required()->check(CLI::ExistingFile);
  stats->add_option("--out", a.out, "Output directory")->required();

  auto* pretrain = add("pretrain-ntm", "Pretrain the topic model alone", cmd_pretrain_ntm);
  pretrain->add_option("--data", a.data, "Prepared data directory")->required()->check(CLI::ExistingDirectory);
  pretrain->add_option("--out", a.out, "Output run directory")->required();

  auto* train = add("train", "Joint training of topic model and generator", cmd_train);
  train->add_option("--data", a.data, "Prepared data directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", a.out, "Output run directory")->required();
  train->add_option("--ntm", a.ntm, "Pretrained topic model (ntm.ckpt); pretrains when absent")
      ->check(CLI::ExistingFile);
  train->add_option("--embeddings", a.embeddings, "Train run whose embeddings back the mean-token similarity");

  auto* generate = add("generate", "Write self-introductions for a JSONL file", cmd_generate);
  generate->add_option("--run", a.run, "Train run directory")->required()->check(CLI::ExistingDirectory);
  generate->add_option("--input", a.input, "JSONL users")->required()->check(CLI::ExistingFile);
  generate->add_option("--out", a.out, "Output directory")->required();

  auto* evaluate = add("evaluate", "ROUGE on a prepared split", cmd_evaluate);
  evaluate->add_option("--run", a.run, "Train run directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--data", a.data, "Prepared data directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--split", a.split, "train, valid or test")
      ->check(CLI::IsMember({"train", "valid", "test"}))
      ->capture_default_str();
  evaluate->add_option("--oracle", a.oracle, "Reference-aware selection: extractive, abstractive-input or consen");
  evaluate->add_option("--out", a.out, "Output directory")->required();

  auto* sweep = add("sweep", "Train and evaluate over K or L, or bucket by history size", cmd_sweep);
  sweep->add_option("--axis", a.axis, "K, L or bucket")->required();
  sweep->add_option("--values", a.values, "Comma-separated values; defaults to the standard grid");
  sweep->add_option("--data", a.data, "Prepared data directory")->required()->check(CLI::ExistingDirectory);
  sweep->add_option("--run", a.run, "Existing train run to bucket instead of training one")
      ->check(CLI::ExistingDirectory);
  sweep->add_option("--out", a.out, "Output directory")->required();

  auto* topics = add("topics-dump", "Top words of every learned topic", cmd_topics_dump);
  topics->add_option("--run", a.run, "Train or pretrain run directory")->required()->check(CLI::ExistingDirectory);
  topics->add_option("--top", a.top, "Words per topic (default: topic_words)");
  topics->add_option("--out", a.out, "Also write topics.txt into this directory");

  auto* seldump = add("selection-dump", "Show the shortlist and encoder input for one user", cmd_selection_dump);
  seldump->add_option("--input", a.input, "JSONL corpus")->required()->check(CLI::ExistingFile);
  seldump->add_option("--user", a.user, "user_id to inspect")->required();
  seldump->add_option("--run", a.run, "Use this train run's tfidf model instead of fitting on the input")
      ->check(CLI::ExistingDirectory);
  seldump->add_option("--out", a.out, "Also write selection.txt into this directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (const auto& s : subs) {
    if (!s->app->parsed()) continue;
    Overrides o;
    o.config_path = s->config_path;
    for (const auto& [key, opt] : s->flags)
      if (opt->count() > 0) o.values.emplace_back(key, s->raw[key]);
    Io io{out, err};
    try {
      return s->handler(a, o, io);
    } catch (const UsageError& e) {
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitRuntime;
    }
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace utged::cli
