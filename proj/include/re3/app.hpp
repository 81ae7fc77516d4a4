#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "re3/evaluate.hpp"
#include "re3/trainer.hpp"

namespace re3 {

std::string_view version_string();

// Lowercase hex SHA-256 of a byte string or a file's contents.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// ---- ablation -------------------------------------------------------------

struct AblationRow {
  std::string setting;           // "baseline", "(a)", "(b)", "full"
  std::array<bool, 3> stages{};  // recognition, reasoning, reporting
  MetricRow generation;
  MetricRow summarization;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<StageResult> stages;

  const AblationRow& row(std::string_view setting) const;
  // full >= (b) >= (a) >= baseline on generation ROUGE-L.
  bool ordered() const;
  // Settings and stage marks, then R-L M B-2 BS CX RG RC for generation and
  // for summarization.
  std::string to_text() const;
};

// Every setting starts from the same initial bundle: (a) is the state after
// stage 1, (b) after stage 2 and full after stage 3 of one run. All four are
// scored with the full model's embedder so the proxies share one space.
AblationResult run_ablation(const TrainConfig& config, const std::vector<CorpusRecord>& corpus,
                            const EvalOptions& options = {}, const ProgressFn& progress = {});

// ---- command line ---------------------------------------------------------

// Runs one command line. Returns 0 on success, 1 on validation errors and 2
// on runtime failures; messages go to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace re3
