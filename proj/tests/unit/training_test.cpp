#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "utged/error.hpp"
#include "utged/numeric/ops.hpp"
#include "utged/selection.hpp"
#include "utged/synth.hpp"
#include "utged/training.hpp"

namespace utged::train {
namespace {

Config tiny_config() {
  Config c;
  c.num_topics = 3;
  c.ntm_hidden = 8;
  c.d_model = 16;
  c.heads = 2;
  c.ff_hidden = 32;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.prompt_length = 2;
  c.prompt_hidden = 8;
  c.max_input_tokens = 24;
  c.max_output_tokens = 12;
  c.batch_size = 4;
  c.ntm_batch_size = 4;
  c.lr_sig = 1e-3;
  c.joint_epochs = 1;
  c.ntm_pretrain_epochs = 3;
  c.topic_words = 5;
  return c;
}

struct Fixture {
  Config config = tiny_config();
  std::vector<corpus::UserRecord> records;
  Vocabularies vocabs;
  std::vector<PreparedExample> examples;

  Fixture() {
    synth::SynthOptions so;
    so.users = 12;
    so.min_docs = 5;
    so.max_docs = 8;
    so.vocab_size = 60;
    so.seed = 4;
    records = synth::generate(so).records;
    vocabs = build_vocabularies(records, config);
    const auto backend = make_backend(config, records);
    examples = prepare_examples(records, vocabs, *backend, config);
  }

  Model model(std::uint64_t seed = 1) const {
    num::Rng rng(seed);
    return Model(config, vocabs, rng);
  }
};

std::vector<const PreparedExample*> pointers(const std::vector<PreparedExample>& ex, std::size_t n) {
  std::vector<const PreparedExample*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&ex[i]);
  return out;
}

double grad_sum(const num::ParameterList& params) {
  double s = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) s += std::abs(g);
  return s;
}

TEST(Prepare, SourcesFitTheBudgetAndTargetsRoundTrip) {
  Fixture f;
  ASSERT_EQ(f.examples.size(), f.records.size());
  for (std::size_t i = 0; i < f.examples.size(); ++i) {
    const auto& ex = f.examples[i];
    EXPECT_LE(ex.source.size(), f.config.max_input_tokens);
    EXPECT_FALSE(ex.source.empty());
    EXPECT_EQ(ex.history_size, f.records[i].history.size());
    EXPECT_EQ(corpus::join_tokens(f.vocabs.gen.decode(ex.target)), ex.reference);
    EXPECT_FALSE(ex.bow.empty());
  }
}

TEST(Prepare, SelectionOffIsChronologicalTruncation) {
  Fixture f;
  f.config.selection = false;
  const auto backend = make_backend(f.config, f.records);
  const auto ex = prepare_example(f.records[0], f.vocabs, *backend, f.config);
  std::vector<corpus::Tokens> docs;
  for (const auto& d : f.records[0].history) docs.push_back(corpus::tokenize(d));
  EXPECT_EQ(ex.source, f.vocabs.gen.encode(selection::chronological_truncate(docs, 24).tokens));
}

TEST(Prepare, EmptyHistoryGetsUnknownToken) {
  Fixture f;
  corpus::UserRecord r{"empty", {}, "hello there"};
  const auto backend = make_backend(f.config, f.records);
  const auto ex = prepare_example(r, f.vocabs, *backend, f.config);
  EXPECT_EQ(ex.source, std::vector<TokenId>{corpus::Vocabulary::kUnk});
  EXPECT_TRUE(ex.bow.empty());
}

TEST(Prepare, MeanTokenBackendNeedsEmbeddings) {
  Fixture f;
  f.config.similarity_backend = "mean-token";
  EXPECT_THROW(make_backend(f.config, f.records), UsageError);
  const auto m = f.model();
  EXPECT_EQ(make_backend(f.config, f.records, &m.generator, &f.vocabs.gen)->name(), "mean-token");
}

TEST(Pretrain, ZeroEpochsLeavesInitialization) {
  Fixture f;
  f.config.ntm_pretrain_epochs = 0;
  auto m = f.model(), init = f.model();
  num::Rng rng(3);
  const auto r = pretrain_ntm(m.ntm, f.examples, f.config, rng);
  EXPECT_TRUE(r.epoch_losses.empty());
  const auto a = m.ntm.parameters(), b = init.ntm.parameters();
  for (std::size_t k = 0; k < a.size(); ++k)
    EXPECT_TRUE(std::equal(a[k].tensor.values().begin(), a[k].tensor.values().end(), b[k].tensor.values().begin()));
}

TEST(Pretrain, LossFallsOnSyntheticCorpus) {
  Fixture f;
  f.config.ntm_pretrain_epochs = 30;
  f.config.lr_ntm = 1e-3;
  auto m = f.model();
  num::Rng rng(3);
  const auto r = pretrain_ntm(m.ntm, f.examples, f.config, rng);
  ASSERT_EQ(r.epoch_losses.size(), 30u);
  EXPECT_FALSE(r.diverged);
  EXPECT_GT(r.epoch_losses.front(), r.epoch_losses.back());
}

TEST(Pretrain, DivergenceRestoresLastFiniteState) {
  Fixture f;
  f.config.lr_ntm = 1e300;
  f.config.ntm_clip_norm = 1e300;
  auto m = f.model();
  num::Rng rng(3);
  const auto r = pretrain_ntm(m.ntm, f.examples, f.config, rng);
  EXPECT_TRUE(r.diverged);
  for (const auto& p : m.ntm.parameters())
    for (double v : p.tensor.values()) ASSERT_TRUE(std::isfinite(v)) << p.name;
}

TEST(JointLossTest, TotalIsTheWeightedSum) {
  Fixture f;
  const auto m = f.model();
  const auto batch = pointers(f.examples, 4);
  for (double alpha : {0.0, 0.01, 0.5, 1.0}) {
    num::Rng rng(5);
    const auto l = joint_loss(m, batch, alpha, &rng);
    EXPECT_NEAR(l.total.item(), alpha * l.l_ntm.item() + (1 - alpha) * l.l_sig.item(), 1e-9);
    EXPECT_EQ(l.ntm_users, 4u);
  }
}

TEST(JointLossTest, AlphaZeroReachesTopicModelOnlyThroughTheMixture) {
  Fixture f;
  const auto m = f.model();
  num::Tape tape;
  num::TapeScope scope(tape);
  num::Rng rng(5);
  const auto l = joint_loss(m, pointers(f.examples, 4), 0.0, &rng);
  const auto params = m.parameters();
  num::zero_grad(params);
  tape.backward(l.total);
  for (const auto& p : m.ntm.parameters()) {
    const double g = grad_sum({p});
    // The reconstruction head only feeds L_NTM.
    if (p.name.starts_with("f_phi")) {
      EXPECT_EQ(g, 0.0) << p.name;
    } else {
      EXPECT_GT(g, 0.0) << p.name;
    }
  }
}

TEST(JointLossTest, AlphaOneGivesGeneratorNoGradient) {
  Fixture f;
  const auto m = f.model();
  num::Tape tape;
  num::TapeScope scope(tape);
  num::Rng rng(5);
  const auto l = joint_loss(m, pointers(f.examples, 4), 1.0, &rng);
  num::zero_grad(m.parameters());
  tape.backward(l.total);
  EXPECT_EQ(grad_sum(m.generator.parameters()), 0.0);
  EXPECT_GT(grad_sum(m.ntm.parameters()), 0.0);
}

TEST(JointLossTest, TpeeOffCutsTheMixturePath) {
  Fixture f;
  f.config.tpee = false;
  const auto m = f.model();
  num::Tape tape;
  num::TapeScope scope(tape);
  num::Rng rng(5);
  const auto l = joint_loss(m, pointers(f.examples, 4), 0.0, &rng);
  num::zero_grad(m.parameters());
  tape.backward(l.total);
  EXPECT_EQ(grad_sum(m.ntm.parameters()), 0.0);
}

TEST(JointLossTest, EmptyBagsUseUniformMixture) {
  Fixture f;
  auto ex = f.examples;
  for (auto& e : ex) e.bow = {};
  const auto m = f.model();
  num::Rng rng(5);
  const auto l = joint_loss(m, pointers(ex, 3), 0.3, &rng);
  EXPECT_EQ(l.ntm_users, 0u);
  EXPECT_EQ(l.l_ntm.item(), 0.0);
  const num::NoGradScope ng;
  double manual = 0.0;
  std::size_t tokens = 0;
  const auto uniform = num::Tensor::full({1, 3}, 1.0 / 3.0);
  for (std::size_t i = 0; i < 3; ++i) {
    auto s = m.generator.sequence_loss(ex[i].source, uniform, ex[i].target);
    manual += s.nll.item();
    tokens += s.tokens;
  }
  EXPECT_NEAR(l.l_sig.item(), manual / static_cast<double>(tokens), 1e-12);
}

TEST(JointTrain, LogsDecomposeEveryStepAndRespectMaxSteps) {
  Fixture f;
  f.config.joint_epochs = 4;
  f.config.max_steps = 7;
  auto m = f.model();
  JointTrainer trainer(m, f.config);
  num::Rng rng(6);
  std::size_t seen = 0;
  const auto r = joint_train(trainer, f.examples, f.config, rng, [&](const StepLog&) { ++seen; });
  ASSERT_EQ(r.log.size(), 7u);
  EXPECT_EQ(seen, 7u);
  EXPECT_FALSE(r.diverged);
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    const auto& s = r.log[i];
    EXPECT_EQ(s.step, i + 1);
    EXPECT_NEAR(s.total, f.config.alpha_loss * s.l_ntm + (1 - f.config.alpha_loss) * s.l_sig, 1e-9);
  }
  std::ostringstream csv;
  write_log_header(csv);
  write_log_row(csv, {3, 0.5, 0.25, 0.2525});
  EXPECT_EQ(csv.str(), "step,L_NTM,L_SIG,total\n3,0.5,0.25,0.2525\n");
}

TEST(JointTrain, SameSeedSameCurve) {
  Fixture f;
  f.config.joint_epochs = 2;
  auto run = [&] {
    auto m = f.model(9);
    JointTrainer trainer(m, f.config);
    num::Rng rng(10);
    return joint_train(trainer, f.examples, f.config, rng).log;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].total, b[i].total);
    EXPECT_EQ(a[i].l_ntm, b[i].l_ntm);
  }
}

TEST(JointTrain, DivergenceStopsBeforeTheBadUpdate) {
  Fixture f;
  f.config.lr_sig = 1e300;
  f.config.joint_epochs = 3;
  auto m = f.model();
  JointTrainer trainer(m, f.config);
  num::Rng rng(6);
  const auto r = joint_train(trainer, f.examples, f.config, rng);
  EXPECT_TRUE(r.diverged);
  for (const auto& p : m.parameters())
    for (double v : p.tensor.values()) ASSERT_TRUE(std::isfinite(v)) << p.name;
}

TEST(Checkpoint, RoundTripGivesIdenticalLogitsAndMoments) {
  Fixture f;
  auto m = f.model(2);
  JointTrainer trainer(m, f.config);
  num::Rng rng(6);
  joint_train(trainer, f.examples, f.config, rng);
  const auto path = std::filesystem::temp_directory_path() / "utged_training_test.ckpt";
  save_checkpoint(path, m, &trainer.optimizer(), {trainer.epoch(), trainer.steps(), 0x0123456789abcdefULL});

  auto loaded = f.model(77);
  JointTrainer other(loaded, f.config);
  const auto meta = load_checkpoint(path, loaded, &other.optimizer());
  EXPECT_EQ(meta.epoch, 1u);
  EXPECT_EQ(meta.adam_steps, trainer.steps());
  EXPECT_EQ(meta.config_hash, 0x0123456789abcdefULL);
  EXPECT_EQ(other.steps(), trainer.steps());

  const auto ma = trainer.optimizer().moments(), mb = other.optimizer().moments();
  for (std::size_t k = 0; k < ma.size(); ++k)
    EXPECT_TRUE(std::equal(ma[k].tensor.values().begin(), ma[k].tensor.values().end(), mb[k].tensor.values().begin()));

  const num::NoGradScope ng;
  const auto theta = num::Tensor::from({1, 3}, {0.2, 0.3, 0.5});
  const auto& ex = f.examples[0];
  std::vector<TokenId> inputs = {corpus::Vocabulary::kBos};
  inputs.insert(inputs.end(), ex.target.begin(), ex.target.end());
  const auto la = m.generator.decode(m.generator.encode(ex.source, theta).h_e, inputs);
  const auto lb = loaded.generator.decode(loaded.generator.encode(ex.source, theta).h_e, inputs);
  ASSERT_EQ(la.numel(), lb.numel());
  EXPECT_TRUE(std::equal(la.values().begin(), la.values().end(), lb.values().begin()));
  const auto ta = m.ntm.forward(ntm::bow_matrix(std::vector{ex.bow}, m.ntm.vocab_size()), nullptr).theta;
  const auto tb = loaded.ntm.forward(ntm::bow_matrix(std::vector{ex.bow}, m.ntm.vocab_size()), nullptr).theta;
  EXPECT_TRUE(std::equal(ta.values().begin(), ta.values().end(), tb.values().begin()));
  std::filesystem::remove(path);
}

TEST(Checkpoint, ShapeMismatchIsAFormatError) {
  Fixture f;
  const auto m = f.model();
  const auto path = std::filesystem::temp_directory_path() / "utged_training_test_bad.ckpt";
  save_checkpoint(path, m, nullptr, {});
  f.config.d_model = 32;
  auto other = f.model();
  EXPECT_THROW(load_checkpoint(path, other), FormatError);
  std::filesystem::remove(path);
}

TEST(Generate, ControlOffIsGreedyDecoding) {
  Fixture f;
  f.config.twed = false;
  const auto m = f.model();
  const auto& ex = f.examples[1];
  const auto g = generate(m, f.vocabs, ex, f.config);
  const auto theta = num::Tensor::from({1, 3}, g.guidance.theta);
  const num::NoGradScope ng;
  EXPECT_EQ(g.tokens, gen::greedy_decode(m.generator, m.generator.encode(ex.source, theta), 12));
  EXPECT_TRUE(g.trace.steps.empty());
  EXPECT_EQ(g.text, corpus::join_tokens(f.vocabs.gen.decode(g.tokens)));
}

TEST(Generate, ControlOnTracesEveryStep) {
  Fixture f;
  const auto m = f.model();
  const auto g = generate(m, f.vocabs, f.examples[1], f.config);
  EXPECT_EQ(g.topic_word_ids.size() + g.dropped_topic_words, 5u);
  EXPECT_FALSE(g.topic_word_ids.empty());
  EXPECT_EQ(g.trace.steps.size(), std::min<std::size_t>(g.tokens.size() + 1, 12));
  EXPECT_EQ(generate(m, f.vocabs, f.examples[1], f.config).tokens, g.tokens);
}

}  // namespace
}  // namespace utged::train
