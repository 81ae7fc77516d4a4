#include "re3/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "re3/seed.hpp"

namespace re3 {

namespace {

bool selects(const std::vector<SampleKind>& kinds, SampleKind k) {
  return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
}

std::vector<Sample> training_samples(const std::vector<CorpusRecord>& corpus, const std::vector<SampleKind>& kinds,
                                     const Vocab& vocab) {
  std::vector<Sample> out;
  for (const auto& rec : corpus)
    if (rec.split == Split::Train && selects(kinds, rec.kind)) out.push_back(make_sample(rec, vocab));
  return out;
}

// Endless reshuffled pass over a pool of indices.
class Stream {
 public:
  Stream(std::size_t size, std::uint64_t seed) : order_(size), rng_(seed) {
    for (std::size_t i = 0; i < size; ++i) order_[i] = i;
    reshuffle();
  }
  std::size_t next() {
    if (pos_ == order_.size()) reshuffle();
    return order_[pos_++];
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

void require_frozen(const ModelBundle& bundle, const FreezeFlags& expected, const char* what) {
  if (!(bundle.frozen == expected)) throw FrozenSetViolation(what);
}

std::string kinds_text(const std::vector<SampleKind>& kinds) {
  std::string out;
  for (auto k : kinds) out += (out.empty() ? "" : ", ") + std::string(kind_name(k));
  return out;
}

}  // namespace

Sample make_sample(const CorpusRecord& record, const Vocab& vocab) {
  Sample s;
  s.record_id = record.record_id;
  s.kind = record.kind;
  s.image = &record.image;
  s.instruction = vocab.encode(record.instruction);
  s.target = vocab.encode(record.target);
  s.target.push_back(kEos);
  return s;
}

Vocab build_corpus_vocab(const std::vector<CorpusRecord>& records, std::size_t max_size) {
  std::vector<std::string> texts;
  for (const auto& rec : records) {
    if (rec.split != Split::Train) continue;
    texts.push_back(rec.instruction);
    texts.push_back(rec.target);
  }
  return Vocab::build(texts, max_size);
}

// ---- StageConfig ----------------------------------------------------------

StageConfig StageConfig::defaults(int stage_id) {
  StageConfig c;
  c.stage_id = stage_id;
  switch (stage_id) {
    case 1:
      c.trainable = "P";
      c.learning_rate = 3e-4;
      c.kinds = {SampleKind::Caption};
      break;
    case 2:
      c.trainable = "EPL";
      c.lambda = 0.01;
      c.learning_rate = 1e-4;
      c.kinds = {SampleKind::Instruction};
      break;
    case 3:
      c.trainable = "EPL";
      c.learning_rate = 1e-4;
      c.report_kinds = {SampleKind::Report};
      c.instruction_kinds = {SampleKind::Instruction, SampleKind::Summarization};
      break;
    default:
      throw ConfigError("stage id must be 1, 2 or 3, got " + std::to_string(stage_id));
  }
  return c;
}

FreezeFlags StageConfig::freeze_flags() const {
  auto has = [&](char c) { return trainable.find(c) != std::string::npos; };
  return {!has('E'), !has('P'), !has('L')};
}

void StageConfig::validate() const {
  if (stage_id < 1 || stage_id > 3) throw ConfigError("stage id must be 1, 2 or 3");
  for (char c : trainable)
    if (c != 'E' && c != 'P' && c != 'L') throw ConfigError(std::string("unknown component '") + c + "' in trainable set");
  const auto flags = freeze_flags();
  if (stage_id == 1 && !(flags == FreezeFlags{true, false, true})) {
    throw FrozenSetViolation("stage 1 trains the projector only (trainable = {P}), got {" + trainable + "}");
  }
  if (stage_id != 1 && !(flags == FreezeFlags{false, false, false})) {
    throw FrozenSetViolation("stage " + std::to_string(stage_id) + " trains {E,P,L}, got {" + trainable + "}");
  }
  if (lambda < 0) throw NegativeLambda("lambda must be >= 0, got " + std::to_string(lambda));
  for (double a : alphas)
    if (a < 0) throw ConfigError("alphas must be >= 0");
  if (!(learning_rate >= 0)) throw ConfigError("learning_rate must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(warmup_ratio >= 0 && warmup_ratio < 1)) throw ConfigError("warmup_ratio must be in [0, 1)");
  if (scheduler != "cosine" && scheduler != "constant") throw ConfigError("unknown scheduler '" + scheduler + "'");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (steps == 0 && !(epochs > 0)) throw ConfigError("either steps or epochs must be positive");
  if (stage_id == 3) {
    if (alphas[0] > 0 && report_kinds.empty()) throw EmptyTermWithPositiveAlpha("alpha1 > 0 but no report kinds selected");
    if (alphas[1] > 0 && instruction_kinds.empty())
      throw EmptyTermWithPositiveAlpha("alpha2 > 0 but no instruction kinds selected");
  } else if (kinds.empty()) {
    throw ConfigError("stage " + std::to_string(stage_id) + " selects no sample kinds");
  }
}

void check_stage_data(const StageConfig& config, const std::vector<CorpusRecord>& corpus) {
  auto available = [&](const std::vector<SampleKind>& kinds) {
    return std::any_of(corpus.begin(), corpus.end(),
                       [&](const CorpusRecord& r) { return r.split == Split::Train && selects(kinds, r.kind); });
  };
  const auto stage = "stage " + std::to_string(config.stage_id);
  if (config.stage_id == 3) {
    if (config.alphas[0] > 0 && !available(config.report_kinds))
      throw MissingSampleKind(stage + " needs training records of kind {" + kinds_text(config.report_kinds) + "}");
    if (config.alphas[1] > 0 && !available(config.instruction_kinds))
      throw MissingSampleKind(stage + " needs training records of kind {" + kinds_text(config.instruction_kinds) + "}");
  } else if (!available(config.kinds)) {
    throw MissingSampleKind(stage + " needs training records of kind {" + kinds_text(config.kinds) + "}");
  }
}

// ---- losses ---------------------------------------------------------------

Tensor sample_nll(const ModelBundle& bundle, const Tensor& visual, std::span<const TokenId> instruction,
                  std::span<const TokenId> target) {
  LmPrefix prefix{visual, {instruction.begin(), instruction.end()}};
  return softmax_cross_entropy(forward_lm(bundle.language, prefix, target), target);
}

Tensor regularizer(const ModelBundle& bundle) {
  Tensor total;
  for (const auto& p : bundle.parameters()) {
    if (!p.tensor.requires_grad()) continue;
    auto term = l2_norm_sq(p.tensor);
    total = total ? add(total, term) : term;
  }
  return total ? total : Tensor::scalar(0.0);
}

Tensor loss_stage1(const ModelBundle& bundle, const Image& image, std::span<const TokenId> caption) {
  require_frozen(bundle, {true, false, true}, "stage 1 requires E and L frozen and P trainable");
  return sample_nll(bundle, bundle.visual_prefix(image), {}, caption);
}

Tensor loss_stage2(const ModelBundle& bundle, const Image& image, std::span<const TokenId> instruction,
                   std::span<const TokenId> target, double lambda) {
  if (lambda < 0) throw NegativeLambda("lambda must be >= 0, got " + std::to_string(lambda));
  auto ce = sample_nll(bundle, bundle.visual_prefix(image), instruction, target);
  if (lambda == 0.0) return ce;
  return add(ce, scale(regularizer(bundle), lambda));
}

Tensor loss_stage3(const ModelBundle& bundle, std::span<const Sample> reports, std::span<const Sample> instructions,
                   const std::array<double, 3>& alphas) {
  for (double a : alphas)
    if (a < 0) throw ConfigError("alphas must be >= 0");
  if (alphas[0] > 0 && reports.empty()) throw EmptyTermWithPositiveAlpha("alpha1 > 0 with no report samples");
  if (alphas[1] > 0 && instructions.empty())
    throw EmptyTermWithPositiveAlpha("alpha2 > 0 with no instruction samples");
  auto mean_nll = [&](std::span<const Sample> batch) {
    Tensor total;
    for (const auto& s : batch) {
      auto nll = sample_nll(bundle, bundle.visual_prefix(*s.image), s.instruction, s.target);
      total = total ? add(total, nll) : nll;
    }
    return scale(total, 1.0 / static_cast<double>(batch.size()));
  };
  Tensor loss = Tensor::scalar(0.0);
  if (!reports.empty()) loss = add(loss, scale(mean_nll(reports), alphas[0]));
  if (!instructions.empty()) loss = add(loss, scale(mean_nll(instructions), alphas[1]));
  return add(loss, scale(regularizer(bundle), alphas[2]));
}

// ---- optimization ---------------------------------------------------------

double learning_rate_at(std::size_t step, std::size_t total, double base, double warmup_ratio,
                        const std::string& scheduler) {
  if (total == 0) return 0.0;
  const auto warmup = static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total)));
  if (step < warmup) return base * static_cast<double>(step) / static_cast<double>(warmup);
  if (scheduler == "constant" || total == warmup) return base;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Adam::Adam(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void Adam::step(const std::vector<NamedTensor>& params, double lr) {
  const bool any = std::any_of(params.begin(), params.end(),
                               [](const NamedTensor& p) { return p.tensor.requires_grad() && p.tensor.has_grad(); });
  if (!any) throw NoGradients("optimizer step without any populated gradient");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& p : params) {
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    auto tensor = p.tensor;
    auto values = tensor.mutable_data();
    const auto grad = tensor.grad();
    auto& [m, v] = moments_[p.name];
    if (m.empty()) {
      m.assign(values.size(), 0.0);
      v.assign(values.size(), 0.0);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      values[i] -= lr * (update + weight_decay_ * values[i]);
    }
  }
}

// ---- stages ---------------------------------------------------------------

StageResult run_stage(ModelBundle& bundle, const StageConfig& config, const std::vector<CorpusRecord>& corpus,
                      std::uint64_t seed, const ProgressFn& progress) {
  config.validate();
  check_stage_data(config, corpus);
  const auto start = std::chrono::steady_clock::now();
  bundle.set_frozen(config.freeze_flags());
  bundle.zero_grads();

  const bool stratified = config.stage_id == 3;
  std::vector<Sample> pool_a, pool_b;
  if (stratified) {
    if (config.alphas[0] > 0) pool_a = training_samples(corpus, config.report_kinds, bundle.vocab);
    if (config.alphas[1] > 0) pool_b = training_samples(corpus, config.instruction_kinds, bundle.vocab);
  } else {
    pool_a = training_samples(corpus, config.kinds, bundle.vocab);
  }
  const auto pool_size = pool_a.size() + pool_b.size();
  const std::size_t total =
      config.steps > 0 ? config.steps
                       : static_cast<std::size_t>(std::ceil(config.epochs * static_cast<double>(pool_size) /
                                                            static_cast<double>(config.batch_size)));

  const auto stream_seed = sub_seed(seed, "shuffle-stage" + std::to_string(config.stage_id));
  Stream stream_a(std::max<std::size_t>(pool_a.size(), 1), sub_seed(stream_seed, "a"));
  Stream stream_b(std::max<std::size_t>(pool_b.size(), 1), sub_seed(stream_seed, "b"));

  // With E frozen its output depends on the image alone.
  std::unordered_map<std::size_t, Tensor> encoded;
  auto visual = [&](const Sample& s) {
    if (!bundle.frozen.encoder) return bundle.visual_prefix(*s.image);
    auto it = encoded.find(s.record_id);
    if (it == encoded.end()) {
      NoGradGuard guard;
      it = encoded.emplace(s.record_id, bundle.encoder.encode(*s.image)).first;
    }
    return bundle.projector.project(it->second);
  };

  Adam adam(0.9, 0.999, 1e-8, config.weight_decay);
  const auto params = bundle.parameters();
  StageResult result;
  result.stage_id = config.stage_id;
  result.steps = total;
  result.losses.reserve(total);
  for (std::size_t step = 0; step < total; ++step) {
    bundle.zero_grads();
    double step_loss = 0.0;
    auto accumulate = [&](const Sample& s, double weight) {
      auto loss = scale(sample_nll(bundle, visual(s), s.instruction, s.target), weight);
      step_loss += loss.item();
      backward(loss);
    };
    if (stratified) {
      std::size_t n_a = pool_a.empty() ? 0 : pool_b.empty() ? config.batch_size : (config.batch_size + 1) / 2;
      std::size_t n_b = config.batch_size - n_a;
      if (n_b == 0 && !pool_b.empty()) n_a -= 1, n_b = 1;
      for (std::size_t i = 0; i < n_a; ++i) accumulate(pool_a[stream_a.next()], config.alphas[0] / static_cast<double>(n_a));
      for (std::size_t i = 0; i < n_b; ++i) accumulate(pool_b[stream_b.next()], config.alphas[1] / static_cast<double>(n_b));
    } else {
      for (std::size_t i = 0; i < config.batch_size; ++i)
        accumulate(pool_a[stream_a.next()], 1.0 / static_cast<double>(config.batch_size));
    }
    const double reg_weight = config.stage_id == 1 ? 0.0 : config.stage_id == 2 ? config.lambda : config.alphas[2];
    if (reg_weight > 0) {
      auto reg = scale(regularizer(bundle), reg_weight);
      step_loss += reg.item();
      backward(reg);
    }
    adam.step(params, learning_rate_at(step, total, config.learning_rate, config.warmup_ratio, config.scheduler));
    result.losses.push_back(step_loss);
    if (progress) progress(config.stage_id, step, total, step_loss);
  }
  bundle.zero_grads();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

ModelBundle initial_bundle(const TrainConfig& config, const std::vector<CorpusRecord>& corpus) {
  auto vocab = build_corpus_vocab(corpus, config.vocab_size);
  return ModelBundle::create(config.model, std::move(vocab), sub_seed(config.seed, "init"));
}

PipelineResult run_pipeline(const TrainConfig& config, const std::vector<CorpusRecord>& corpus,
                            const std::optional<std::filesystem::path>& out_dir, const ProgressFn& progress,
                            const std::function<void(int, const ModelBundle&)>& after_stage) {
  for (const auto& stage : config.stages) {
    stage.validate();
    check_stage_data(stage, corpus);
  }
  PipelineResult result;
  result.bundle = initial_bundle(config, corpus);
  result.initial = result.bundle.clone();
  if (after_stage) after_stage(0, result.bundle);
  for (const auto& stage : config.stages) {
    auto stage_result = run_stage(result.bundle, stage, corpus, config.seed, progress);
    if (out_dir) {
      stage_result.checkpoint = *out_dir / ("stage" + std::to_string(stage.stage_id) + ".ckpt");
      save_checkpoint(result.bundle, stage_result.checkpoint);
    }
    result.stages.push_back(std::move(stage_result));
    if (after_stage) after_stage(stage.stage_id, result.bundle);
  }
  return result;
}

}  // namespace re3
