#include <cstdio>

#include "re3/app.hpp"
#include "re3/error.hpp"

namespace re3 {

namespace {

std::string cells(const MetricRow& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f", m.rouge_l, m.meteor, m.bleu_2,
                m.embed_sim, m.chex_sim, m.radgraph_f1, m.radcliq);
  return buf;
}

}  // namespace

const AblationRow& AblationResult::row(std::string_view setting) const {
  for (const auto& r : rows)
    if (r.setting == setting) return r;
  throw ConfigError("no ablation setting '" + std::string(setting) + "'");
}

bool AblationResult::ordered() const {
  const double base = row("baseline").generation.rouge_l, a = row("(a)").generation.rouge_l,
               b = row("(b)").generation.rouge_l, full = row("full").generation.rouge_l;
  return full >= b && b >= a && a >= base;
}

std::string AblationResult::to_text() const {
  std::string out =
      "setting\trecognition\treasoning\treporting"
      "\tgen.R-L\tgen.M\tgen.B-2\tgen.BS\tgen.CX\tgen.RG\tgen.RC"
      "\tsum.R-L\tsum.M\tsum.B-2\tsum.BS\tsum.CX\tsum.RG\tsum.RC\n";
  for (const auto& r : rows) {
    out += r.setting;
    for (bool s : r.stages) out += s ? "\tyes" : "\t-";
    out += "\t" + cells(r.generation) + "\t" + cells(r.summarization) + "\n";
  }
  return out;
}

AblationResult run_ablation(const TrainConfig& config, const std::vector<CorpusRecord>& corpus,
                            const EvalOptions& options, const ProgressFn& progress) {
  std::vector<ModelBundle> snapshots;
  auto result = run_pipeline(config, corpus, std::nullopt, progress,
                             [&](int, const ModelBundle& b) { snapshots.push_back(b.clone()); });

  const auto embedder = Embedder::from_bundle(result.bundle);
  auto opts = options;
  opts.per_finding_auc = false;

  static constexpr const char* kNames[] = {"baseline", "(a)", "(b)", "full"};
  AblationResult out;
  out.stages = std::move(result.stages);
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    const auto report = evaluate(snapshots[i], corpus, embedder, opts);
    AblationRow row;
    row.setting = kNames[i];
    for (std::size_t s = 0; s < 3; ++s) row.stages[s] = s < i;
    row.generation = report.summary(Task::Generation).mean;
    row.summarization = report.summary(Task::Summarization).mean;
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace re3
