#include "utged/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>

#include "utged/error.hpp"
#include "utged/numeric/random.hpp"

namespace utged::eval {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(std::span<const std::string> tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

Prf ngram_prf(std::span<const std::string> cand, std::span<const std::string> ref, std::size_t n) {
  const auto c = ngram_counts(cand, n);
  const auto r = ngram_counts(ref, n);
  std::size_t overlap = 0, c_total = 0, r_total = 0;
  for (const auto& [g, k] : c) {
    c_total += k;
    if (auto it = r.find(g); it != r.end()) overlap += std::min(k, it->second);
  }
  for (const auto& [g, k] : r) r_total += k;
  return make_prf(static_cast<double>(overlap), static_cast<double>(c_total), static_cast<double>(r_total));
}

std::string csv_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::vector<RougeScore> ok_scores(const EvalReport& report) {
  std::vector<RougeScore> out;
  for (const auto& s : report.samples)
    if (s.ok) out.push_back(s.score);
  return out;
}

}  // namespace

Prf make_prf(double overlap, double candidate_total, double reference_total) {
  Prf p;
  p.precision = candidate_total > 0 ? overlap / candidate_total : 0.0;
  p.recall = reference_total > 0 ? overlap / reference_total : 0.0;
  const double sum = p.precision + p.recall;
  p.f1 = sum > 0 ? 2.0 * p.precision * p.recall / sum : 0.0;
  return p;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge(std::span<const std::string> candidate, std::span<const std::string> reference,
                 bool* empty_reference) {
  if (empty_reference) *empty_reference = reference.empty();
  if (reference.empty()) return {};
  RougeScore s;
  s.r1 = ngram_prf(candidate, reference, 1);
  s.r2 = ngram_prf(candidate, reference, 2);
  s.rl = make_prf(static_cast<double>(lcs_length(candidate, reference)), static_cast<double>(candidate.size()),
                  static_cast<double>(reference.size()));
  return s;
}

RougeScore rouge_text(std::string_view candidate, std::string_view reference, bool* empty_reference) {
  return rouge(corpus::tokenize(candidate), corpus::tokenize(reference), empty_reference);
}

MeanScore macro_average(std::span<const RougeScore> scores) {
  MeanScore m;
  if (scores.empty()) return m;
  for (const auto& s : scores) {
    m.r1 += s.r1.f1;
    m.r2 += s.r2.f1;
    m.rl += s.rl.f1;
  }
  const double n = static_cast<double>(scores.size());
  return {m.r1 / n, m.r2 / n, m.rl / n};
}

EvalReport evaluate(const train::Model& model, const train::Vocabularies& vocabs,
                    std::span<const train::PreparedExample> examples, const Config& config,
                    const std::function<void(const train::PreparedExample&, const train::Generation&)>& on_sample) {
  EvalReport report;
  for (const auto& ex : examples) {
    SampleResult s;
    s.user_id = ex.user_id;
    s.history_size = ex.history_size;
    s.reference = ex.reference;
    try {
      const auto g = train::generate(model, vocabs, ex, config);
      s.candidate = g.text;
      report.control_warnings += g.trace.warnings;
      bool empty = false;
      s.score = rouge_text(s.candidate, s.reference, &empty);
      report.empty_references += empty;
      if (on_sample) on_sample(ex, g);
    } catch (const Error& e) {
      s.ok = false;
      s.error = e.what();
      ++report.failed;
    }
    report.samples.push_back(std::move(s));
  }
  report.mean = macro_average(ok_scores(report));
  return report;
}

void write_samples_csv(std::ostream& out, const EvalReport& report) {
  out << "user_id,history_size,status,r1_p,r1_r,r1_f,r2_p,r2_r,r2_f,rl_p,rl_r,rl_f,candidate,reference\n";
  const auto old = out.precision(10);
  for (const auto& s : report.samples) {
    out << csv_quote(s.user_id) << ',' << s.history_size << ',' << (s.ok ? "ok" : "failed");
    for (const Prf* p : {&s.score.r1, &s.score.r2, &s.score.rl})
      out << ',' << p->precision << ',' << p->recall << ',' << p->f1;
    out << ',' << csv_quote(s.ok ? s.candidate : s.error) << ',' << csv_quote(s.reference) << '\n';
  }
  out.precision(old);
}

void write_summary_json(std::ostream& out, const EvalReport& report) {
  nlohmann::ordered_json j;
  j["r1"] = report.mean.r1;
  j["r2"] = report.mean.r2;
  j["rl"] = report.mean.rl;
  j["samples"] = report.samples.size() - report.failed;
  j["failed"] = report.failed;
  j["empty_references"] = report.empty_references;
  j["control_warnings"] = report.control_warnings;
  out << j.dump(2) << '\n';
}

std::vector<BucketRow> bucket_by_history(const EvalReport& report, std::span<const std::size_t> bounds) {
  if (bounds.empty() || !std::is_sorted(bounds.begin(), bounds.end()))
    throw UsageError("bucket bounds must be non-empty and ascending");
  std::vector<std::vector<RougeScore>> groups(bounds.size());
  for (const auto& s : report.samples) {
    if (!s.ok) continue;
    auto it = std::lower_bound(bounds.begin(), bounds.end(), s.history_size);
    const auto b = it == bounds.end() ? bounds.size() - 1 : static_cast<std::size_t>(it - bounds.begin());
    groups[b].push_back(s.score);
  }
  std::vector<BucketRow> rows;
  for (std::size_t b = 0; b < bounds.size(); ++b) rows.push_back({bounds[b], groups[b].size(), macro_average(groups[b])});
  return rows;
}

SweepAxis parse_axis(std::string_view name) {
  if (name == "K" || name == "topics") return SweepAxis::kTopics;
  if (name == "L" || name == "prompt-length") return SweepAxis::kPromptLength;
  if (name == "bucket") return SweepAxis::kHistoryBucket;
  throw UsageError("unknown sweep axis '" + std::string(name) + "' (expected K, L or bucket)");
}

std::string_view axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kTopics: return "K";
    case SweepAxis::kPromptLength: return "L";
    case SweepAxis::kHistoryBucket: return "bucket";
  }
  return "?";
}

SweepReport sweep(SweepAxis axis, std::span<const std::size_t> values, const Config& base, const LegRunner& run) {
  SweepReport report;
  report.axis = axis;
  report.seed = base.seed;
  if (values.empty()) throw UsageError("sweep needs at least one value");
  if (axis == SweepAxis::kHistoryBucket) {
    std::vector<std::size_t> bounds(values.begin(), values.end());
    std::sort(bounds.begin(), bounds.end());
    try {
      const auto eval = run(base);
      for (const auto& b : bucket_by_history(eval, bounds)) report.rows.push_back({b.upper, true, "", b.count, b.mean});
    } catch (const std::exception& e) {
      for (auto v : bounds) report.rows.push_back({v, false, e.what(), 0, {}});
    }
    return report;
  }
  for (auto v : values) {
    SweepRow row;
    row.value = v;
    try {
      Config leg = base;
      (axis == SweepAxis::kTopics ? leg.num_topics : leg.prompt_length) = v;
      leg.validate();
      const auto eval = run(leg);
      row.ok = true;
      row.samples = eval.samples.size() - eval.failed;
      row.mean = eval.mean;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_sweep_csv(std::ostream& out, const SweepReport& report) {
  out << "axis,value,status,samples,r1,r2,rl,error\n";
  const auto old = out.precision(10);
  for (const auto& r : report.rows) {
    out << axis_name(report.axis) << ',' << r.value << ',' << (r.ok ? "ok" : "failed") << ',' << r.samples << ','
        << r.mean.r1 << ',' << r.mean.r2 << ',' << r.mean.rl << ',' << csv_quote(r.error) << '\n';
  }
  out.precision(old);
}

void write_sweep_dat(std::ostream& out, const SweepReport& report) {
  out << "# " << axis_name(report.axis) << " r1 r2 rl\n";
  const auto old = out.precision(10);
  for (const auto& r : report.rows)
    if (r.ok) out << r.value << ' ' << r.mean.r1 << ' ' << r.mean.r2 << ' ' << r.mean.rl << '\n';
  out.precision(old);
}

BootstrapResult paired_bootstrap(std::span<const double> a, std::span<const double> b, std::size_t resamples,
                                 std::uint64_t seed) {
  if (a.size() != b.size() || a.empty()) throw UsageError("paired bootstrap needs two aligned, non-empty score lists");
  if (resamples == 0) throw UsageError("paired bootstrap needs at least one resample");
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  BootstrapResult r;
  r.resamples = resamples;
  for (double d : diff) r.mean_difference += d;
  r.mean_difference /= static_cast<double>(n);
  num::Rng rng(seed);
  std::size_t not_better = 0;
  for (std::size_t k = 0; k < resamples; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += diff[rng.index(n)];
    if (s <= 0.0) ++not_better;
  }
  r.p_value = static_cast<double>(not_better) / static_cast<double>(resamples);
  return r;
}

ExperimentResult run_experiment(const Config& config, const corpus::DatasetSplit& data) {
  config.validate();
  ExperimentResult result;
  const auto vocabs = train::build_vocabularies(data.train, config);
  const auto backend = train::make_backend(config, data.train);
  const auto train_examples = train::prepare_examples(data.train, vocabs, *backend, config);
  const auto test_examples = train::prepare_examples(data.test, vocabs, *backend, config);

  num::Rng root(config.seed);
  auto init_rng = root.fork(1);
  train::Model model(config, vocabs, init_rng);
  auto pretrain_rng = root.fork(2);
  result.pretrain = train::pretrain_ntm(model.ntm, train_examples, config, pretrain_rng);
  train::JointTrainer trainer(model, config);
  auto joint_rng = root.fork(3);
  result.joint = train::joint_train(trainer, train_examples, config, joint_rng);
  result.report = evaluate(model, vocabs, test_examples, config);
  return result;
}

}  // namespace utged::eval
