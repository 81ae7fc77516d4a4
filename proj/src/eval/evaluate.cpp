#include "re3/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace re3 {

std::string_view task_name(Task t) { return t == Task::Generation ? "generation" : "summarization"; }

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\t', ' ');
  return s;
}

std::string row_text(const MetricRow& m) {
  return num(m.rouge_l) + "\t" + num(m.meteor) + "\t" + num(m.bleu_2) + "\t" + num(m.embed_sim) + "\t" +
         num(m.chex_sim) + "\t" + num(m.radgraph_f1) + "\t" + num(m.radcliq);
}

std::optional<Task> task_of(SampleKind kind) {
  if (kind == SampleKind::Report) return Task::Generation;
  if (kind == SampleKind::Summarization) return Task::Summarization;
  return std::nullopt;
}

}  // namespace

MetricRow score_pair(std::string_view reference, std::string_view hypothesis, const Embedder& embedder,
                     const Labeler& labeler, const RadCliqWeights& weights) {
  MetricRow m;
  m.rouge_l = rouge_l(reference, hypothesis).f;
  m.meteor = meteor_simplified(reference, hypothesis);
  m.bleu_2 = bleu_2(reference, hypothesis);
  m.embed_sim = embed_similarity(reference, hypothesis, embedder);
  m.chex_sim = chex_similarity(reference, hypothesis, embedder);
  m.radgraph_f1 = radgraph_f1_proxy(reference, hypothesis, labeler);
  m.radcliq = radcliq_proxy({m.bleu_2, m.embed_sim, m.chex_sim, m.radgraph_f1}, weights);
  return m;
}

MetricReport evaluate(const ModelBundle& bundle, const std::vector<CorpusRecord>& corpus, const Embedder& embedder,
                      const EvalOptions& options) {
  const Labeler labeler;
  MetricReport report;
  report.tasks = {TaskSummary{Task::Generation}, TaskSummary{Task::Summarization}};
  std::vector<std::pair<std::size_t, std::string>> generated;  // corpus index -> report text

  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& r = corpus[i];
    const auto task = task_of(r.kind);
    if (r.split != Split::Test || !task) continue;
    InstanceScore s{r.record_id, *task, r.target, generate(bundle, r.image, r.instruction, options.max_new_tokens), {}};
    s.metrics = score_pair(s.reference, s.hypothesis, embedder, labeler, options.weights);
    if (*task == Task::Generation) generated.emplace_back(i, s.hypothesis);
    report.instances.push_back(std::move(s));
  }

  for (auto& summary : report.tasks) {
    MetricRow total;
    for (const auto& s : report.instances) {
      if (s.task != summary.task) continue;
      ++summary.count;
      total.rouge_l += s.metrics.rouge_l;
      total.meteor += s.metrics.meteor;
      total.bleu_2 += s.metrics.bleu_2;
      total.embed_sim += s.metrics.embed_sim;
      total.chex_sim += s.metrics.chex_sim;
      total.radgraph_f1 += s.metrics.radgraph_f1;
      total.radcliq += s.metrics.radcliq;
    }
    if (summary.count == 0) continue;
    const auto n = static_cast<double>(summary.count);
    summary.mean = {total.rouge_l / n, total.meteor / n, total.bleu_2 / n, total.embed_sim / n,
                    total.chex_sim / n, total.radgraph_f1 / n, total.radcliq / n};
  }

  if (!options.per_finding_auc) return report;

  // Every held-out image gets a findings report; report records reuse the
  // text generated above.
  const auto& prompt = generation_instructions().front();
  std::vector<LabelVector> predicted;
  std::vector<std::array<bool, kNumFindings>> planted;
  std::size_t next = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& r = corpus[i];
    if (r.split != Split::Test) continue;
    std::string text;
    if (next < generated.size() && generated[next].first == i) text = generated[next++].second;
    else text = generate(bundle, r.image, prompt, options.max_new_tokens);
    predicted.push_back(labeler.label(text));
    planted.push_back(r.labels());
  }
  for (std::size_t f = 0; f < kNumFindings; ++f) {
    AucRow row{finding_at(f)};
    std::vector<double> scores;
    std::vector<bool> labels;
    for (std::size_t k = 0; k < predicted.size(); ++k) {
      scores.push_back(predicted[k].scores[f]);
      labels.push_back(planted[k][f]);
      (planted[k][f] ? row.positives : row.negatives) += 1;
    }
    if (row.positives > 0 && row.negatives > 0) row.auc = auc(scores, labels);
    report.auc.push_back(row);
  }
  return report;
}

std::string MetricReport::to_text() const {
  std::string out = "# metric report\n# columns: R-L M B-2 BS CX RG RC (BS, CX, RG and RC are proxies)\n\n[aggregate]\n";
  out += "task\tn\tR-L\tM\tB-2\tBS\tCX\tRG\tRC\n";
  for (const auto& t : tasks)
    out += std::string(task_name(t.task)) + "\t" + std::to_string(t.count) + "\t" + row_text(t.mean) + "\n";
  if (!auc.empty()) {
    out += "\n[auc]\nfinding\tpositives\tnegatives\tauc\n";
    for (const auto& row : auc) {
      out += std::string(finding_name(row.finding)) + "\t" + std::to_string(row.positives) + "\t" +
             std::to_string(row.negatives) + "\t" + (row.auc ? num(*row.auc) : "n/a") + "\n";
    }
  }
  out += "\n[instances]\nrecord\ttask\tR-L\tM\tB-2\tBS\tCX\tRG\tRC\thypothesis\treference\n";
  for (const auto& s : instances) {
    out += std::to_string(s.record_id) + "\t" + std::string(task_name(s.task)) + "\t" + row_text(s.metrics) + "\t" +
           one_line(s.hypothesis) + "\t" + one_line(s.reference) + "\n";
  }
  return out;
}

// ---- latency -------------------------------------------------------------------

LatencyStats summarize_latency(Task task, std::vector<double> samples) {
  LatencyStats s;
  s.task = task;
  s.samples = std::move(samples);
  if (s.samples.empty()) return s;
  const auto n = static_cast<double>(s.samples.size());
  s.mean = std::accumulate(s.samples.begin(), s.samples.end(), 0.0) / n;
  auto sorted = s.samples;
  std::sort(sorted.begin(), sorted.end());
  const auto mid = sorted.size() / 2;
  s.median = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  s.min = sorted.front();
  s.max = sorted.back();
  double ss = 0;
  for (double x : s.samples) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / n);
  return s;
}

std::vector<LatencyStats> measure_latency(const ModelBundle& bundle, const std::vector<CorpusRecord>& corpus,
                                          const LatencyOptions& options) {
  std::vector<LatencyStats> out;
  for (auto task : {Task::Generation, Task::Summarization}) {
    std::vector<const CorpusRecord*> items;
    for (const auto& r : corpus) {
      if (r.split == Split::Test && task_of(r.kind) == task) items.push_back(&r);
      if (options.limit && items.size() == options.limit) break;
    }
    const GenerateOptions gen{options.max_new_tokens, options.stop_at_eos};
    auto run = [&](const CorpusRecord& r) {
      const auto ids = bundle.vocab.encode(r.instruction);
      const auto t0 = std::chrono::steady_clock::now();
      generate_ids(bundle, r.image, ids, gen);
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    for (const auto* r : items) run(*r);  // warm-up
    std::vector<double> samples;
    for (std::size_t rep = 0; rep < options.repeats; ++rep)
      for (const auto* r : items) samples.push_back(run(*r));
    out.push_back(summarize_latency(task, std::move(samples)));
  }
  return out;
}

std::string latency_to_text(const std::vector<LatencyStats>& stats) {
  std::string out = "# seconds per instance\ntask\tn\tmean\tmedian\tstddev\tmin\tmax\n";
  for (const auto& s : stats) {
    out += std::string(task_name(s.task)) + "\t" + std::to_string(s.samples.size()) + "\t" + num(s.mean) + "\t" +
           num(s.median) + "\t" + num(s.stddev) + "\t" + num(s.min) + "\t" + num(s.max) + "\n";
  }
  return out;
}

}  // namespace re3
