#include "utged/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "utged/error.hpp"
#include "utged/numeric/ops.hpp"
#include "utged/numeric/serialize.hpp"
#include "utged/selection.hpp"

namespace utged::train {

namespace {

bool all_finite(const num::ParameterList& params) {
  for (const auto& p : params)
    for (double v : p.tensor.values())
      if (!std::isfinite(v)) return false;
  return true;
}

std::vector<std::vector<double>> snapshot(const num::ParameterList& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

void restore(const num::ParameterList& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto dst = num::Tensor(params[k].tensor).values();
    std::copy(values[k].begin(), values[k].end(), dst.begin());
  }
}

num::Tensor zero_scalar() { return num::Tensor::scalar(0.0); }

const num::Tensor& find_tensor(const num::ParameterList& list, std::string_view name) {
  for (const auto& t : list)
    if (t.name == name) return t.tensor;
  throw FormatError("checkpoint is missing " + std::string(name));
}

std::size_t meta_value(const num::ParameterList& list, std::string_view name) {
  return static_cast<std::size_t>(find_tensor(list, name).item());
}

}  // namespace

Vocabularies build_vocabularies(std::span<const corpus::UserRecord> train, const Config& config) {
  const std::size_t gen_cap = config.vocab_size - corpus::Vocabulary::kNumSpecials;
  Vocabularies v{corpus::build_generation_vocab(train, gen_cap), corpus::build_bow_vocab(train, config.bow_vocab_size)};
  if (v.bow.content_size() == 0) throw ConfigError("topic-model vocabulary is empty; the training histories have no content words");
  return v;
}

std::unique_ptr<sim::SimilarityBackend> make_backend(const Config& config,
                                                     std::span<const corpus::UserRecord> fit_records,
                                                     const gen::Generator* embeddings,
                                                     const corpus::Vocabulary* gen_vocab) {
  if (config.similarity_backend == "mean-token") {
    if (!embeddings || !gen_vocab) throw UsageError("the mean-token backend needs trained generator embeddings");
    return std::make_unique<sim::MeanTokenBackend>(embeddings->embedding_table().detach(), *gen_vocab);
  }
  return std::make_unique<sim::TfidfBackend>(sim::TfidfBackend::fit_records(fit_records));
}

PreparedExample prepare_example(const corpus::UserRecord& record, const Vocabularies& vocabs,
                                const sim::SimilarityBackend& backend, const Config& config) {
  PreparedExample ex;
  ex.user_id = record.user_id;
  ex.history_size = record.history.size();
  const auto picked = selection::build_source(record.history, backend, config.selection_options());
  ex.source = vocabs.gen.encode(picked.source.tokens);
  if (ex.source.empty()) ex.source.push_back(corpus::Vocabulary::kUnk);
  const auto intro = corpus::tokenize(record.self_intro);
  ex.target = vocabs.gen.encode(intro);
  ex.reference = corpus::join_tokens(intro);
  ex.bow = corpus::build_bow(record, vocabs.bow);
  return ex;
}

std::vector<PreparedExample> prepare_examples(std::span<const corpus::UserRecord> records,
                                              const Vocabularies& vocabs, const sim::SimilarityBackend& backend,
                                              const Config& config) {
  std::vector<PreparedExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(prepare_example(r, vocabs, backend, config));
  return out;
}

Model::Model(const Config& config, const Vocabularies& vocabs, num::Rng& rng)
    : ntm(config.ntm_config(vocabs.bow.content_size()), rng),
      generator(config.generator_config(vocabs.gen.size()), rng) {}

num::ParameterList Model::parameters() const {
  auto out = num::with_prefix(ntm.parameters(), "ntm/");
  auto g = num::with_prefix(generator.parameters(), "gen/");
  out.insert(out.end(), g.begin(), g.end());
  return out;
}

PretrainResult pretrain_ntm(ntm::TopicModel& model, std::span<const PreparedExample> examples, const Config& config,
                            num::Rng& rng) {
  PretrainResult result;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < examples.size(); ++i)
    if (!examples[i].bow.empty()) usable.push_back(i);
  if (usable.empty() || config.ntm_pretrain_epochs == 0) return result;

  const auto params = model.parameters();
  const num::Sgd sgd(config.lr_ntm);
  auto last_good = snapshot(params);
  for (std::size_t epoch = 0; epoch < config.ntm_pretrain_epochs && !result.diverged; ++epoch) {
    rng.shuffle(usable);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < usable.size(); begin += config.ntm_batch_size) {
      const std::size_t end = std::min(usable.size(), begin + config.ntm_batch_size);
      std::vector<corpus::BowVector> bows;
      for (std::size_t k = begin; k < end; ++k) bows.push_back(examples[usable[k]].bow);
      num::Tape tape;
      num::TapeScope scope(tape);
      const auto bow = ntm::bow_matrix(bows, model.vocab_size());
      double value = 0.0, norm = 0.0;
      try {
        const auto loss = ntm::ntm_loss(bow, model.forward(bow, &rng));
        result.clamped += loss.clamped;
        num::zero_grad(params);
        tape.backward(loss.total);
        norm = num::clip_grad_norm(params, config.ntm_clip_norm);
        value = loss.total.item();
      } catch (const NumericError&) {
        value = std::numeric_limits<double>::quiet_NaN();
      }
      if (!std::isfinite(value) || !std::isfinite(norm)) {
        result.diverged = true;
        break;
      }
      sgd.step(params);
      loss_sum += value;
      ++batches;
    }
    if (!result.diverged && !all_finite(params)) result.diverged = true;
    if (result.diverged) {
      restore(params, last_good);
      break;
    }
    last_good = snapshot(params);
    result.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
  }
  num::zero_grad(params);
  return result;
}

JointLoss joint_loss(const Model& model, std::span<const PreparedExample* const> batch, double alpha_loss,
                     num::Rng* rng) {
  if (batch.empty()) throw UsageError("joint loss needs a non-empty batch");
  const std::size_t k = model.ntm.num_topics();
  JointLoss out;

  std::vector<corpus::BowVector> bows;
  std::vector<std::size_t> row(batch.size(), batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->bow.empty()) continue;
    row[i] = bows.size();
    bows.push_back(batch[i]->bow);
  }
  num::Tensor theta;
  if (bows.empty()) {
    out.l_ntm = zero_scalar();
  } else {
    const auto bow = ntm::bow_matrix(bows, model.ntm.vocab_size());
    const auto fwd = model.ntm.forward(bow, rng);
    out.l_ntm = ntm::ntm_loss(bow, fwd).total;
    theta = fwd.theta;
    out.ntm_users = bows.size();
  }

  const auto uniform = num::Tensor::full({1, k}, 1.0 / static_cast<double>(k));
  std::vector<num::Tensor> nll;
  nll.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto t = row[i] < bows.size() ? num::slice(theta, 0, row[i], row[i] + 1) : uniform;
    auto s = model.generator.sequence_loss(batch[i]->source, t, batch[i]->target);
    nll.push_back(std::move(s.nll));
    out.sig_tokens += s.tokens;
  }
  out.l_sig = num::scale(num::sum(num::concat(nll, 0)), 1.0 / static_cast<double>(out.sig_tokens));
  out.total = num::add(num::scale(out.l_ntm, alpha_loss), num::scale(out.l_sig, 1.0 - alpha_loss));
  return out;
}

JointTrainer::JointTrainer(Model& model, const Config& config)
    : model_(model),
      config_(config),
      gen_params_(model.generator.parameters()),
      ntm_params_(model.ntm.parameters()),
      all_params_(model.parameters()),
      optimizer_(gen_params_, num::AdamWOptions{config.lr_sig, 0.9, 0.999, 1e-8, config.weight_decay}),
      ntm_sgd_(config.lr_ntm) {}

StepLog JointTrainer::step(std::span<const PreparedExample* const> batch, num::Rng& rng) {
  num::Tape tape;
  num::TapeScope scope(tape);
  const auto loss = joint_loss(model_, batch, config_.alpha_loss, &rng);
  num::zero_grad(all_params_);
  tape.backward(loss.total);
  const double norm = num::clip_grad_norm(all_params_, config_.clip_norm);
  StepLog log{optimizer_.steps() + 1, loss.l_ntm.item(), loss.l_sig.item(), loss.total.item()};
  if (!std::isfinite(log.total) || !std::isfinite(norm)) {
    num::zero_grad(all_params_);
    throw NumericError("joint loss diverged at step " + std::to_string(log.step));
  }
  optimizer_.step();
  ntm_sgd_.step(ntm_params_);
  return log;
}

JointResult joint_train(JointTrainer& trainer, std::span<const PreparedExample> examples, const Config& config,
                        num::Rng& rng, const std::function<void(const StepLog&)>& on_step) {
  JointResult result;
  if (examples.empty()) throw ConfigError("no training examples");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  const auto capped = [&] { return config.max_steps != 0 && trainer.steps() >= config.max_steps; };
  while (trainer.epoch() < config.joint_epochs && !capped()) {
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size() && !capped(); begin += config.batch_size) {
      std::vector<const PreparedExample*> batch;
      for (std::size_t k = begin; k < std::min(order.size(), begin + config.batch_size); ++k)
        batch.push_back(&examples[order[k]]);
      try {
        result.log.push_back(trainer.step(batch, rng));
      } catch (const NumericError&) {
        result.diverged = true;
        return result;
      }
      if (on_step) on_step(result.log.back());
    }
    if (!capped()) trainer.set_epoch(trainer.epoch() + 1);
  }
  return result;
}

void write_log_header(std::ostream& out) { out << "step,L_NTM,L_SIG,total\n"; }

void write_log_row(std::ostream& out, const StepLog& row) {
  const auto old = out.precision(17);
  out << row.step << ',' << row.l_ntm << ',' << row.l_sig << ',' << row.total << '\n';
  out.precision(old);
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const num::AdamW* optimizer,
                     const CheckpointMeta& meta) {
  auto tensors = model.parameters();
  if (optimizer) {
    const auto moments = num::with_prefix(optimizer->moments(), "adam/");
    tensors.insert(tensors.end(), moments.begin(), moments.end());
  }
  tensors.push_back({"meta/epoch", num::Tensor::scalar(static_cast<double>(meta.epoch))});
  tensors.push_back({"meta/adam_steps", num::Tensor::scalar(static_cast<double>(meta.adam_steps))});
  // Two 32-bit halves so each is exact in a double.
  tensors.push_back({"meta/config_hash_hi", num::Tensor::scalar(static_cast<double>(meta.config_hash >> 32))});
  tensors.push_back({"meta/config_hash_lo", num::Tensor::scalar(static_cast<double>(meta.config_hash & 0xffffffffULL))});
  num::save_tensors(path, tensors);
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, Model& model, num::AdamW* optimizer) {
  const auto tensors = num::load_tensors(path);
  num::assign_by_name(model.ntm.parameters(), tensors, "ntm/");
  num::assign_by_name(model.generator.parameters(), tensors, "gen/");
  CheckpointMeta meta;
  meta.epoch = meta_value(tensors, "meta/epoch");
  meta.adam_steps = meta_value(tensors, "meta/adam_steps");
  meta.config_hash = (static_cast<std::uint64_t>(meta_value(tensors, "meta/config_hash_hi")) << 32) |
                     static_cast<std::uint64_t>(meta_value(tensors, "meta/config_hash_lo"));
  if (optimizer) optimizer->load_moments(num::strip_prefix(tensors, "adam/"), meta.adam_steps);
  return meta;
}

Generation generate(const Model& model, const Vocabularies& vocabs, const PreparedExample& example,
                    const Config& config) {
  Generation g;
  g.guidance = ntm::guidance(model.ntm, example.bow, config.topic_words);
  g.topic_word_ids = control::map_topic_words(g.guidance.topic_words, vocabs.bow, vocabs.gen, &g.dropped_topic_words);
  const auto theta = num::Tensor::from({1, g.guidance.theta.size()}, g.guidance.theta);
  gen::EncodedSource enc;
  {
    num::NoGradScope no_grad;
    enc = model.generator.encode(example.source, theta);
  }
  const auto control_cfg = config.control_config();
  if (control_cfg.iterations > 0 && !g.topic_word_ids.empty()) {
    auto out = control::controlled_decode(model.generator, enc, g.topic_word_ids, control_cfg, config.max_output_tokens);
    g.tokens = std::move(out.tokens);
    g.trace = std::move(out.trace);
  } else {
    g.tokens = gen::decode(model.generator, enc, {config.max_output_tokens, config.beam_width});
  }
  g.text = corpus::join_tokens(vocabs.gen.decode(g.tokens));
  return g;
}

}  // namespace utged::train
