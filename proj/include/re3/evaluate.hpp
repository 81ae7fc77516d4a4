#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "re3/eval.hpp"
#include "re3/radex.hpp"

namespace re3 {

enum class Task { Generation, Summarization };
std::string_view task_name(Task t);

// Table column order: R-L, M, B-2, BS, CX, RG, RC.
struct MetricRow {
  double rouge_l = 0, meteor = 0, bleu_2 = 0, embed_sim = 0, chex_sim = 0, radgraph_f1 = 0, radcliq = 0;
};

struct InstanceScore {
  std::size_t record_id = 0;
  Task task = Task::Generation;
  std::string reference;
  std::string hypothesis;
  MetricRow metrics;
};

struct TaskSummary {
  Task task = Task::Generation;
  std::size_t count = 0;
  MetricRow mean;
};

struct AucRow {
  Finding finding = Finding::NoFinding;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::optional<double> auc;  // empty when one class is missing
};

struct MetricReport {
  std::vector<InstanceScore> instances;
  std::array<TaskSummary, 2> tasks;
  std::vector<AucRow> auc;  // finding order; empty when not requested

  const TaskSummary& summary(Task t) const { return tasks[static_cast<std::size_t>(t)]; }
  // Plain text; no wall-clock values so that reruns compare byte for byte.
  std::string to_text() const;
};

struct EvalOptions {
  std::size_t max_new_tokens = 80;
  bool per_finding_auc = true;
  RadCliqWeights weights;
};

MetricRow score_pair(std::string_view reference, std::string_view hypothesis, const Embedder& embedder,
                     const Labeler& labeler, const RadCliqWeights& weights = {});

// Scores the held-out report and summarization records. AUC compares labels
// read off a generated report for every held-out image with the planted ones.
MetricReport evaluate(const ModelBundle& bundle, const std::vector<CorpusRecord>& corpus, const Embedder& embedder,
                      const EvalOptions& options = {});

struct LatencyStats {
  Task task = Task::Generation;
  std::vector<double> samples;  // seconds per instance
  double mean = 0, median = 0, stddev = 0, min = 0, max = 0;
};

struct LatencyOptions {
  std::size_t max_new_tokens = 80;
  std::size_t repeats = 1;
  bool stop_at_eos = true;
  std::size_t limit = 0;  // instances per task, 0 = all
};

LatencyStats summarize_latency(Task task, std::vector<double> samples);

// One discarded warm-up pass, then `repeats` timed passes over the held-out
// records of each task.
std::vector<LatencyStats> measure_latency(const ModelBundle& bundle, const std::vector<CorpusRecord>& corpus,
                                          const LatencyOptions& options = {});
std::string latency_to_text(const std::vector<LatencyStats>& stats);

}  // namespace re3
