#include "utged/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <sstream>

#include "utged/error.hpp"

namespace utged {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw UsageError("config '" + std::string(key) + "': expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw UsageError("config '" + std::string(key) + "': expected a number, got '" + s + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config '" + std::string(key) + "': expected on/off, got '" + std::string(v) + "'");
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Field {
  ConfigKey key;
  std::function<void(Config&, std::string_view)> set;
  std::function<std::string(const Config&)> get;
};

#define UTGED_SIZE(name, help)                                                                  \
  Field {                                                                                       \
    {#name, help}, [](Config& c, std::string_view v) { c.name = parse_size(#name, v); },       \
        [](const Config& c) { return std::to_string(c.name); }                                  \
  }
#define UTGED_DOUBLE(name, help)                                                                \
  Field {                                                                                       \
    {#name, help}, [](Config& c, std::string_view v) { c.name = parse_double(#name, v); },     \
        [](const Config& c) { return format_double(c.name); }                                   \
  }
#define UTGED_BOOL(name, help)                                                                  \
  Field {                                                                                       \
    {#name, help}, [](Config& c, std::string_view v) { c.name = parse_bool(#name, v); },       \
        [](const Config& c) { return std::string(c.name ? "on" : "off"); }                      \
  }
#define UTGED_STRING(name, help)                                                                \
  Field {                                                                                       \
    {#name, help}, [](Config& c, std::string_view v) { c.name = std::string(v); },             \
        [](const Config& c) { return c.name; }                                                  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      UTGED_SIZE(vocab_size, "generation vocabulary cap"),
      UTGED_SIZE(bow_vocab_size, "topic-model vocabulary size"),
      UTGED_SIZE(min_intro_tokens, "shortest kept self-introduction"),
      UTGED_SIZE(max_intro_tokens, "longest kept self-introduction"),
      UTGED_SIZE(min_published, "fewest history documents a user may have"),
      UTGED_SIZE(max_history, "latest documents kept per user"),
      UTGED_DOUBLE(min_similarity, "mean top-k intro/history similarity floor"),
      UTGED_SIZE(similarity_top_k, "documents averaged by the similarity filter"),
      UTGED_STRING(top_ordering, "most-similar or most-recent"),
      UTGED_BOOL(ascii_heuristic, "drop mostly non-ASCII self-introductions"),
      UTGED_DOUBLE(train_ratio, "training share of the split"),
      UTGED_DOUBLE(valid_ratio, "validation share of the split"),
      UTGED_DOUBLE(test_ratio, "test share of the split"),
      UTGED_STRING(similarity_backend, "tfidf or mean-token"),
      UTGED_BOOL(selection, "representative document selection (S)"),
      UTGED_DOUBLE(lambda, "redundancy threshold for selection"),
      UTGED_SIZE(max_input_tokens, "encoder token budget"),
      UTGED_BOOL(static_scores, "score documents once instead of every round"),
      UTGED_SIZE(num_topics, "topics K"),
      UTGED_SIZE(ntm_hidden, "topic-model encoder width"),
      UTGED_SIZE(topic_words, "topic words l used for control"),
      UTGED_STRING(model_shape, "toy (2+2 layers) or full (6+6 layers)"),
      UTGED_SIZE(d_model, "transformer width"),
      UTGED_SIZE(encoder_layers, "encoder depth"),
      UTGED_SIZE(decoder_layers, "decoder depth"),
      UTGED_SIZE(heads, "attention heads"),
      UTGED_SIZE(ff_hidden, "feed-forward width"),
      UTGED_SIZE(prompt_length, "topic prompt vectors L"),
      UTGED_SIZE(prompt_hidden, "prompt network hidden width"),
      UTGED_SIZE(max_output_tokens, "generation length cap"),
      UTGED_SIZE(beam_width, "1 for greedy decoding"),
      UTGED_BOOL(tpee, "topic prompt prefix on the encoder (E)"),
      UTGED_BOOL(twed, "topic-word controlled decoding (D)"),
      UTGED_DOUBLE(alpha_step, "control step size"),
      UTGED_DOUBLE(gamma, "control gradient-norm exponent"),
      UTGED_SIZE(iters, "control rounds per decode step"),
      UTGED_DOUBLE(alpha_loss, "topic-model weight in the joint loss"),
      UTGED_SIZE(ntm_pretrain_epochs, "topic-model pretraining epochs"),
      UTGED_SIZE(ntm_batch_size, "topic-model pretraining batch size"),
      UTGED_SIZE(joint_epochs, "joint training epochs"),
      UTGED_SIZE(batch_size, "joint training batch size"),
      UTGED_SIZE(max_steps, "stop joint training after this many updates (0 = no cap)"),
      UTGED_DOUBLE(lr_sig, "generator learning rate (AdamW)"),
      UTGED_DOUBLE(lr_ntm, "topic-model learning rate (SGD)"),
      UTGED_DOUBLE(weight_decay, "AdamW decoupled weight decay"),
      UTGED_DOUBLE(clip_norm, "joint gradient clipping norm"),
      UTGED_DOUBLE(ntm_clip_norm, "pretraining gradient clipping norm"),
      UTGED_SIZE(seed, "random seed"),
  };
  return table;
}

#undef UTGED_SIZE
#undef UTGED_DOUBLE
#undef UTGED_BOOL
#undef UTGED_STRING

const Field& find_field(std::string_view key) {
  for (const auto& f : fields())
    if (f.key.name == key) return f;
  throw UsageError("unknown config key '" + std::string(key) + "'");
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

std::string dash_case(std::string_view key) {
  std::string s(key);
  for (char& c : s)
    if (c == '_') c = '-';
  return s;
}

void set_config_value(Config& config, std::string_view key, std::string_view value) {
  find_field(key).set(config, trim(value));
}

std::string get_config_value(const Config& config, std::string_view key) { return find_field(key).get(config); }

void Config::validate() const {
  require(vocab_size > corpus::Vocabulary::kNumSpecials, "vocab_size must exceed the special tokens");
  require(bow_vocab_size >= 1, "bow_vocab_size must be positive");
  require(min_intro_tokens <= max_intro_tokens, "min_intro_tokens exceeds max_intro_tokens");
  require(top_ordering == "most-similar" || top_ordering == "most-recent",
          "top_ordering must be most-similar or most-recent");
  require(similarity_backend == "tfidf" || similarity_backend == "mean-token",
          "similarity_backend must be tfidf or mean-token");
  require(std::abs(train_ratio + valid_ratio + test_ratio - 1.0) <= 1e-9, "split ratios must sum to 1");
  require(lambda > 0.0 && lambda <= 1.0, "lambda must lie in (0, 1]");
  require(max_input_tokens >= 1, "max_input_tokens must be at least 1");
  require(num_topics >= 2, "num_topics must be at least 2");
  require(ntm_hidden >= 1, "ntm_hidden must be positive");
  require(topic_words >= 1, "topic_words must be at least 1");
  require(model_shape == "toy" || model_shape == "full", "model_shape must be toy or full");
  require(heads >= 1 && d_model % heads == 0, "d_model must be a multiple of heads");
  require(!tpee || prompt_length >= 1, "prompt_length must be at least 1 with tpee on");
  require(max_output_tokens >= 1, "max_output_tokens must be at least 1");
  require(beam_width >= 1, "beam_width must be at least 1");
  require(alpha_step > 0.0, "alpha_step must be positive");
  require(gamma >= 0.0, "gamma must be non-negative");
  require(alpha_loss >= 0.0 && alpha_loss <= 1.0, "alpha_loss must lie in [0, 1]");
  require(batch_size >= 1 && ntm_batch_size >= 1, "batch sizes must be positive");
  require(lr_sig >= 0.0 && lr_ntm >= 0.0, "learning rates must be non-negative");
  require(clip_norm > 0.0 && ntm_clip_norm > 0.0, "clipping norms must be positive");
}

corpus::FilterOptions Config::filter_options() const {
  corpus::FilterOptions o;
  o.min_intro_tokens = min_intro_tokens;
  o.max_intro_tokens = max_intro_tokens;
  o.min_published = min_published;
  o.max_history = max_history;
  o.min_similarity = min_similarity;
  o.top_k = similarity_top_k;
  o.ordering = top_ordering == "most-recent" ? corpus::TopOrdering::kMostRecent : corpus::TopOrdering::kMostSimilar;
  o.ascii_heuristic = ascii_heuristic;
  return o;
}

corpus::SplitRatios Config::split_ratios() const { return {train_ratio, valid_ratio, test_ratio}; }

selection::SelectionOptions Config::selection_options() const {
  selection::SelectionOptions o;
  o.enabled = selection;
  o.lambda = lambda;
  o.max_tokens = max_input_tokens;
  o.mode = static_scores ? selection::ScoreMode::kStatic : selection::ScoreMode::kRecompute;
  return o;
}

ntm::NtmConfig Config::ntm_config(std::size_t bow_vocab) const { return {bow_vocab, num_topics, ntm_hidden}; }

gen::GeneratorConfig Config::generator_config(std::size_t gen_vocab) const {
  gen::GeneratorConfig g;
  if (model_shape == "full") g = gen::GeneratorConfig::full_shape(gen_vocab, num_topics);
  g.vocab_size = gen_vocab;
  g.num_topics = num_topics;
  g.d_model = d_model;
  if (model_shape != "full") {
    g.encoder_layers = encoder_layers;
    g.decoder_layers = decoder_layers;
  }
  g.heads = heads;
  g.ff_hidden = ff_hidden;
  g.prompt_length = prompt_length;
  g.prompt_hidden = prompt_hidden;
  g.max_input_tokens = max_input_tokens;
  g.max_output_tokens = max_output_tokens;
  g.tpee = tpee;
  return g;
}

control::ControlConfig Config::control_config() const {
  control::ControlConfig c;
  c.alpha_step = alpha_step;
  c.gamma = gamma;
  c.iterations = twed ? iters : 0;
  return c;
}

Config read_config(std::istream& in, Config base) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    try {
      if (key == "format_version") {
        if (parse_size(key, value) != static_cast<std::size_t>(kConfigFormatVersion)) {
          throw UsageError("unsupported format_version " + value);
        }
        continue;
      }
      set_config_value(base, key, value);
    } catch (const UsageError& e) {
      throw UsageError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

Config load_config(const std::filesystem::path& path, Config base) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  return read_config(in, std::move(base));
}

std::string config_to_text(const Config& config) {
  std::string out = "format_version = " + std::to_string(kConfigFormatVersion) + "\n";
  for (const auto& f : fields()) out += f.key.name + " = " + f.get(config) + "\n";
  return out;
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t hash) {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 15];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace utged
