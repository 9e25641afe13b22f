#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "utged/control.hpp"
#include "utged/corpus.hpp"
#include "utged/generator.hpp"
#include "utged/ntm.hpp"
#include "utged/selection.hpp"

// Every tunable value of the pipeline, readable from a key = value file.
namespace utged {

inline constexpr int kConfigFormatVersion = 1;

struct Config {
  // corpus
  std::size_t vocab_size = 20000;
  std::size_t bow_vocab_size = 10000;
  std::size_t min_intro_tokens = 7;
  std::size_t max_intro_tokens = 30;
  std::size_t min_published = 30;
  std::size_t max_history = 100;
  double min_similarity = 0.4;
  std::size_t similarity_top_k = 30;
  std::string top_ordering = "most-similar";  // or most-recent
  bool ascii_heuristic = false;
  double train_ratio = 0.8;
  double valid_ratio = 0.1;
  double test_ratio = 0.1;
  std::string similarity_backend = "tfidf";  // or mean-token

  // selection (S)
  bool selection = true;
  double lambda = 0.8;
  std::size_t max_input_tokens = 1024;
  bool static_scores = false;

  // topic model
  std::size_t num_topics = 100;
  std::size_t ntm_hidden = 200;
  std::size_t topic_words = 30;

  // generator (E toggles the prompt prefix)
  std::string model_shape = "toy";  // or full
  std::size_t d_model = 128;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t heads = 4;
  std::size_t ff_hidden = 512;
  std::size_t prompt_length = 7;
  std::size_t prompt_hidden = 256;
  std::size_t max_output_tokens = 32;
  std::size_t beam_width = 1;
  bool tpee = true;

  // decoding control (D)
  bool twed = true;
  double alpha_step = 0.25;
  double gamma = 1.5;
  std::size_t iters = 3;

  // training
  double alpha_loss = 0.01;
  std::size_t ntm_pretrain_epochs = 100;
  std::size_t ntm_batch_size = 8;
  std::size_t joint_epochs = 5;
  std::size_t batch_size = 8;
  std::size_t max_steps = 0;  // 0 = no cap
  double lr_sig = 5e-5;
  double lr_ntm = 1e-4;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double ntm_clip_norm = 100.0;

  std::uint64_t seed = 1;

  // Checks ranges and cross-field consistency; throws ConfigError.
  void validate() const;

  corpus::FilterOptions filter_options() const;
  corpus::SplitRatios split_ratios() const;
  selection::SelectionOptions selection_options() const;
  ntm::NtmConfig ntm_config(std::size_t bow_vocab) const;
  gen::GeneratorConfig generator_config(std::size_t gen_vocab) const;
  control::ControlConfig control_config() const;
};

struct ConfigKey {
  std::string name;  // snake_case; the CLI flag is the dash-case form
  std::string help;
};

const std::vector<ConfigKey>& config_keys();
std::string dash_case(std::string_view key);

// Sets one key from text; UsageError for unknown keys or unparsable values.
void set_config_value(Config& config, std::string_view key, std::string_view value);
std::string get_config_value(const Config& config, std::string_view key);

// "key = value" lines; '#' starts a comment. A format_version line, when
// present, must match kConfigFormatVersion.
Config read_config(std::istream& in, Config base = {});
Config load_config(const std::filesystem::path& path, Config base = {});
// Every key in a stable order, preceded by format_version.
std::string config_to_text(const Config& config);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ULL);
std::uint64_t file_hash(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace utged
