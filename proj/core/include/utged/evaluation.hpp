#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "utged/config.hpp"
#include "utged/corpus.hpp"
#include "utged/training.hpp"

// ROUGE scoring, dataset evaluation, parameter sweeps.
namespace utged::eval {

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct RougeScore {
  Prf r1, r2, rl;
};

// F1 means.
struct MeanScore {
  double r1 = 0.0;
  double r2 = 0.0;
  double rl = 0.0;
};

// precision = overlap / candidate_total, recall = overlap / reference_total;
// each is 0 when its denominator is.
Prf make_prf(double overlap, double candidate_total, double reference_total);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// R-1/R-2 from clipped n-gram overlap, R-L from the longest common
// subsequence. No stemming or stopword removal. An empty reference scores 0
// everywhere and sets *empty_reference.
RougeScore rouge(std::span<const std::string> candidate, std::span<const std::string> reference,
                 bool* empty_reference = nullptr);
// Tokenizes both sides with the corpus tokenizer first.
RougeScore rouge_text(std::string_view candidate, std::string_view reference, bool* empty_reference = nullptr);

MeanScore macro_average(std::span<const RougeScore> scores);

struct SampleResult {
  std::string user_id;
  std::size_t history_size = 0;
  std::string candidate;
  std::string reference;
  RougeScore score;
  bool ok = true;
  std::string error;
};

struct EvalReport {
  std::vector<SampleResult> samples;
  MeanScore mean;  // over successful samples
  std::size_t failed = 0;
  std::size_t empty_references = 0;
  std::size_t control_warnings = 0;
};

// Generates for every example and scores it against its reference.
// Samples whose generation throws a utged::Error are skipped and counted.
EvalReport evaluate(const train::Model& model, const train::Vocabularies& vocabs,
                    std::span<const train::PreparedExample> examples, const Config& config,
                    const std::function<void(const train::PreparedExample&, const train::Generation&)>& on_sample = {});

// user_id,history_size,status,r1_p,r1_r,r1_f,r2_p,r2_r,r2_f,rl_p,rl_r,rl_f,candidate,reference
void write_samples_csv(std::ostream& out, const EvalReport& report);
// {"r1": f, "r2": f, "rl": f, "samples": n, "failed": n, ...}
void write_summary_json(std::ostream& out, const EvalReport& report);

struct BucketRow {
  std::size_t upper = 0;  // bucket covers (previous upper, upper]
  std::size_t count = 0;
  MeanScore mean;
};

// Groups successful samples by history size. Sizes above the last bound
// fall into the last bucket.
std::vector<BucketRow> bucket_by_history(const EvalReport& report, std::span<const std::size_t> bounds);

enum class SweepAxis { kTopics, kPromptLength, kHistoryBucket };

// "K" / "topics", "L" / "prompt-length", "bucket". UsageError otherwise.
SweepAxis parse_axis(std::string_view name);
std::string_view axis_name(SweepAxis axis);

inline constexpr std::size_t kTopicGrid[] = {50, 100, 150, 200};
inline constexpr std::size_t kPromptGrid[] = {3, 7, 11, 15, 19};
inline constexpr std::size_t kBucketGrid[] = {20, 40, 60, 80, 100};

struct SweepRow {
  std::size_t value = 0;
  bool ok = false;
  std::string error;
  std::size_t samples = 0;
  MeanScore mean;
};

struct SweepReport {
  SweepAxis axis = SweepAxis::kTopics;
  std::uint64_t seed = 0;
  std::vector<SweepRow> rows;
};

// Runs one leg per value with the axis key overridden (the bucket axis runs
// a single leg and groups it). A leg that throws is marked failed and the
// rest still run.
using LegRunner = std::function<EvalReport(const Config&)>;
SweepReport sweep(SweepAxis axis, std::span<const std::size_t> values, const Config& base, const LegRunner& run);

// axis,value,status,samples,r1,r2,rl,error
void write_sweep_csv(std::ostream& out, const SweepReport& report);
// Whitespace-separated "value r1 r2 rl" rows of the successful legs.
void write_sweep_dat(std::ostream& out, const SweepReport& report);

struct BootstrapResult {
  double mean_difference = 0.0;  // mean(a - b)
  double p_value = 0.0;          // share of resamples whose mean(a - b) <= 0
  std::size_t resamples = 0;
};

// Paired bootstrap over per-sample scores; a and b must align.
BootstrapResult paired_bootstrap(std::span<const double> a, std::span<const double> b, std::size_t resamples,
                                 std::uint64_t seed);

struct ExperimentResult {
  train::PretrainResult pretrain;
  train::JointResult joint;
  EvalReport report;
};

// Vocabularies and selection fitted on the train split, topic-model
// pretraining, joint training, then evaluation on the test split.
ExperimentResult run_experiment(const Config& config, const corpus::DatasetSplit& data);

}  // namespace utged::eval
