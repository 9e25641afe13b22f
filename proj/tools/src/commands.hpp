#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "utged/config.hpp"

namespace utged::cli {

// Union of the per-command options; each subcommand binds only its own.
struct Args {
  std::vector<std::string> argv;  // for the run manifest
  std::string input;
  std::string out;
  std::string data;
  std::string run;
  std::string ntm;
  std::string embeddings;
  std::string split = "test";
  std::string oracle;
  std::string axis;
  std::string values;
  std::string user;
  std::size_t top = 0;

  // synth
  std::size_t topics = 3;
  std::size_t users = 200;
  std::size_t min_docs = 30;
  std::size_t max_docs = 60;
  std::size_t word_types = 300;
  std::size_t min_words = 8;
  std::size_t max_words = 14;
  double concentration = 0.3;
  double repost_rate = 0.05;
};

// Config layers above a base: the --config file, then explicit flags.
// Commands that read a trained run use that run's config as the base.
struct Overrides {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> values;  // key, raw text

  Config resolve(Config base = {}) const;
};

struct Io {
  std::ostream& out;
  std::ostream& err;
};

int cmd_synth(const Args& args, const Overrides& overrides, Io io);
int cmd_prepare(const Args& args, const Overrides& overrides, Io io);
int cmd_stats(const Args& args, const Overrides& overrides, Io io);
int cmd_pretrain_ntm(const Args& args, const Overrides& overrides, Io io);
int cmd_train(const Args& args, const Overrides& overrides, Io io);
int cmd_generate(const Args& args, const Overrides& overrides, Io io);
int cmd_evaluate(const Args& args, const Overrides& overrides, Io io);
int cmd_sweep(const Args& args, const Overrides& overrides, Io io);
int cmd_topics_dump(const Args& args, const Overrides& overrides, Io io);
int cmd_selection_dump(const Args& args, const Overrides& overrides, Io io);

}  // namespace utged::cli
