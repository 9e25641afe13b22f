#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "utged/config.hpp"
#include "utged/control.hpp"
#include "utged/corpus.hpp"
#include "utged/generator.hpp"
#include "utged/ntm.hpp"
#include "utged/numeric/optim.hpp"
#include "utged/numeric/random.hpp"
#include "utged/similarity.hpp"

// Data preparation, topic-model pretraining, joint training, checkpoints
// and inference for the full model.
namespace utged::train {

using corpus::TokenId;

struct Vocabularies {
  corpus::Vocabulary gen;
  corpus::Vocabulary bow;
};

// Both vocabularies are built from training records only.
Vocabularies build_vocabularies(std::span<const corpus::UserRecord> train, const Config& config);

// Backend used for history selection. tfidf is fitted on `fit_records`;
// mean-token needs the embedding table of a generator over `gen_vocab`.
std::unique_ptr<sim::SimilarityBackend> make_backend(const Config& config,
                                                     std::span<const corpus::UserRecord> fit_records,
                                                     const gen::Generator* embeddings = nullptr,
                                                     const corpus::Vocabulary* gen_vocab = nullptr);

struct PreparedExample {
  std::string user_id;
  std::vector<TokenId> source;  // encoder ids, documents separated by <sep>
  std::vector<TokenId> target;  // self-introduction ids, no BOS/EOS
  corpus::BowVector bow;
  std::size_t history_size = 0;
  std::string reference;  // tokenized self-introduction joined by spaces
};

// Selection (or chronological truncation when S is off) followed by
// vocabulary lookup. A user whose source comes out empty gets a single
// <unk> so the encoder always has input.
PreparedExample prepare_example(const corpus::UserRecord& record, const Vocabularies& vocabs,
                                const sim::SimilarityBackend& backend, const Config& config);
std::vector<PreparedExample> prepare_examples(std::span<const corpus::UserRecord> records,
                                              const Vocabularies& vocabs, const sim::SimilarityBackend& backend,
                                              const Config& config);

struct Model {
  ntm::TopicModel ntm;
  gen::Generator generator;

  // Draws the topic model first, then the generator, from one stream.
  Model(const Config& config, const Vocabularies& vocabs, num::Rng& rng);
  num::ParameterList parameters() const;  // "ntm/..." then "gen/..."
};

struct PretrainResult {
  std::vector<double> epoch_losses;  // mean batch loss per finished epoch
  std::size_t clamped = 0;           // reconstruction probabilities floored
  bool diverged = false;             // parameters restored to the last finite epoch
};

// Plain SGD on the topic-model loss alone. Users with an empty bag of words
// are skipped.
PretrainResult pretrain_ntm(ntm::TopicModel& model, std::span<const PreparedExample> examples, const Config& config,
                            num::Rng& rng);

struct StepLog {
  std::size_t step = 0;
  double l_ntm = 0.0;
  double l_sig = 0.0;
  double total = 0.0;
};

struct JointLoss {
  num::Tensor total, l_ntm, l_sig;
  std::size_t sig_tokens = 0;
  std::size_t ntm_users = 0;
};

// alpha * L_NTM + (1 - alpha) * L_SIG for one batch. L_NTM averages over
// the users that have a bag of words (0 when none do); L_SIG is the token
// mean of the generator NLL. theta comes from the stochastic latent when
// `rng` is given and from the mean otherwise; users with an empty bag get a
// uniform mixture. Topic words play no part here.
JointLoss joint_loss(const Model& model, std::span<const PreparedExample* const> batch, double alpha_loss,
                     num::Rng* rng);

class JointTrainer {
 public:
  JointTrainer(Model& model, const Config& config);

  // One update on the batch; returns the logged losses. Throws NumericError
  // without touching the parameters when the loss or gradient is not finite.
  StepLog step(std::span<const PreparedExample* const> batch, num::Rng& rng);
  std::size_t steps() const { return optimizer_.steps(); }
  std::size_t epoch() const { return epoch_; }
  void set_epoch(std::size_t epoch) { epoch_ = epoch; }
  num::AdamW& optimizer() { return optimizer_; }
  const num::AdamW& optimizer() const { return optimizer_; }

 private:
  Model& model_;
  Config config_;
  num::ParameterList gen_params_, ntm_params_, all_params_;
  num::AdamW optimizer_;
  num::Sgd ntm_sgd_;
  std::size_t epoch_ = 0;
};

struct JointResult {
  std::vector<StepLog> log;
  // A non-finite loss or gradient stopped training before that update, so
  // the parameters are the last finite ones.
  bool diverged = false;
};

// Runs joint_epochs over the examples (or stops after max_steps updates).
// `on_step` sees every log entry as it is produced.
JointResult joint_train(JointTrainer& trainer, std::span<const PreparedExample> examples, const Config& config,
                        num::Rng& rng, const std::function<void(const StepLog&)>& on_step = {});

// Training log CSV: step,L_NTM,L_SIG,total.
void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const StepLog& row);

struct CheckpointMeta {
  std::size_t epoch = 0;
  std::size_t adam_steps = 0;
  std::uint64_t config_hash = 0;
};

// Tensor file holding ntm/*, gen/*, adam/m/*, adam/v/* and meta/* entries.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const num::AdamW* optimizer,
                     const CheckpointMeta& meta);
// Restores weights (and moments when `optimizer` is given). FormatError on
// a missing or mis-shaped tensor.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, Model& model, num::AdamW* optimizer = nullptr);

struct Generation {
  std::vector<TokenId> tokens;
  std::string text;
  ntm::TopicGuidance guidance;
  std::vector<TokenId> topic_word_ids;  // A mapped into the generation vocabulary
  std::size_t dropped_topic_words = 0;
  control::DecodeTrace trace;  // empty unless controlled decoding ran
};

// Inference: deterministic theta, topic words of the major topic, then
// controlled decoding when D is on (greedy or beam otherwise).
Generation generate(const Model& model, const Vocabularies& vocabs, const PreparedExample& example,
                    const Config& config);

}  // namespace utged::train
