#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "re3/model.hpp"
#include "re3/radex.hpp"

namespace re3 {

// One tokenized training example. Targets end with EOS.
struct Sample {
  std::size_t record_id = 0;
  SampleKind kind = SampleKind::Caption;
  const Image* image = nullptr;
  std::vector<TokenId> instruction;
  std::vector<TokenId> target;
};

Sample make_sample(const CorpusRecord& record, const Vocab& vocab);

// Vocabulary over the instruction and target text of the training split.
Vocab build_corpus_vocab(const std::vector<CorpusRecord>& records, std::size_t max_size);

struct StageConfig {
  int stage_id = 1;
  std::string trainable = "P";  // letters from {E, P, L}
  double lambda = 0.0;
  std::array<double, 3> alphas{1.0, 1.0, 0.01};
  double learning_rate = 3e-4;
  double epochs = 1.0;
  std::size_t steps = 0;  // overrides epochs when nonzero
  std::size_t batch_size = 8;
  double warmup_ratio = 0.03;
  std::string scheduler = "cosine";  // or "constant"
  double weight_decay = 0.0;
  std::vector<SampleKind> kinds;             // stages 1 and 2
  std::vector<SampleKind> report_kinds;      // stage 3, L_rep
  std::vector<SampleKind> instruction_kinds; // stage 3, L_instr

  static StageConfig defaults(int stage_id);
  // FrozenSetViolation, NegativeLambda or ConfigError.
  void validate() const;
  FreezeFlags freeze_flags() const;
};

struct TrainConfig {
  ModelConfig model;
  std::size_t vocab_size = 512;
  std::uint64_t seed = 0;
  std::array<StageConfig, 3> stages{StageConfig::defaults(1), StageConfig::defaults(2), StageConfig::defaults(3)};

  // INI text: [run], [model] and one [stageN] section per stage. Missing keys
  // keep their defaults; unknown keys raise ConfigError.
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  std::string to_text() const;
};

// ---- losses ---------------------------------------------------------------

// Mean token NLL of `target` given the visual prefix and instruction.
Tensor sample_nll(const ModelBundle& bundle, const Tensor& visual, std::span<const TokenId> instruction,
                  std::span<const TokenId> target);

// Squared L2 norm over every trainable parameter (zero scalar when none).
Tensor regularizer(const ModelBundle& bundle);

// Caption NLL with an empty instruction. Requires the bundle frozen as {E, L}.
Tensor loss_stage1(const ModelBundle& bundle, const Image& image, std::span<const TokenId> caption);

Tensor loss_stage2(const ModelBundle& bundle, const Image& image, std::span<const TokenId> instruction,
                   std::span<const TokenId> target, double lambda);

// a1 * mean report NLL + a2 * mean instruction NLL + a3 * regularizer.
Tensor loss_stage3(const ModelBundle& bundle, std::span<const Sample> reports,
                   std::span<const Sample> instructions, const std::array<double, 3>& alphas);

// ---- optimization ---------------------------------------------------------

// Linear warmup from 0 over ceil(warmup_ratio * total) steps, then cosine
// decay to 0 (or constant).
double learning_rate_at(std::size_t step, std::size_t total, double base, double warmup_ratio,
                        const std::string& scheduler = "cosine");

class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0);

  // Updates every parameter that requires grad and has one. Throws
  // NoGradients when no trainable parameter carries a gradient.
  void step(const std::vector<NamedTensor>& params, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

struct StageResult {
  int stage_id = 0;
  std::size_t steps = 0;
  std::vector<double> losses;  // one per optimizer step
  double seconds = 0.0;
  std::filesystem::path checkpoint;
};

using ProgressFn = std::function<void(int stage, std::size_t step, std::size_t total, double loss)>;

// Trains `bundle` in place for one stage on the training split of `corpus`.
StageResult run_stage(ModelBundle& bundle, const StageConfig& config, const std::vector<CorpusRecord>& corpus,
                      std::uint64_t seed, const ProgressFn& progress = {});

struct PipelineResult {
  ModelBundle bundle;
  ModelBundle initial;
  std::vector<StageResult> stages;
};

// Builds the vocabulary and initial bundle from named sub-seeds of
// config.seed, then runs stages 1 -> 2 -> 3. When out_dir is set, writes
// stage{N}.ckpt after each stage. `after_stage` sees the bundle after every
// stage (and once with stage 0 before training).
PipelineResult run_pipeline(const TrainConfig& config, const std::vector<CorpusRecord>& corpus,
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                            const ProgressFn& progress = {},
                            const std::function<void(int, const ModelBundle&)>& after_stage = {});

ModelBundle initial_bundle(const TrainConfig& config, const std::vector<CorpusRecord>& corpus);

// Raises MissingSampleKind when the training split lacks a kind that a stage
// selects.
void check_stage_data(const StageConfig& config, const std::vector<CorpusRecord>& corpus);

}  // namespace re3
