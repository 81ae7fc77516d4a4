#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "re3/image.hpp"
#include "re3/tensor.hpp"
#include "re3/tokenizer.hpp"

namespace re3 {

struct ModelConfig {
  std::size_t image_side = 32;
  std::size_t patch_size = 4;
  std::size_t vision_dim = 64;
  std::size_t vision_layers = 2;
  std::size_t vision_heads = 4;
  std::size_t projector_hidden = 64;
  std::size_t lm_dim = 64;
  std::size_t lm_layers = 2;
  std::size_t lm_heads = 4;
  std::size_t max_context = 256;
  std::size_t mlp_ratio = 4;
  double init_std = 0.02;
  double ln_eps = 1e-5;
  // Pixels enter the patch embedding as (x - pixel_mean) / pixel_std; the
  // defaults are the synthetic corpus statistics.
  double pixel_mean = 0.32;
  double pixel_std = 0.15;

  std::size_t n_patches() const { return (image_side / patch_size) * (image_side / patch_size); }
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& values);
  bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Pre-norm transformer block weights. Keys carry no bias: it would shift
// every score of a row equally and cancel in the softmax.
struct BlockParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor w_qkv, b_q, b_v;
  Tensor w_out, b_out;
  Tensor ln2_gamma, ln2_beta;
  Tensor w_fc, b_fc;
  Tensor w_proj, b_proj;

  static BlockParams init(std::size_t dim, std::size_t mlp_ratio, double std, std::mt19937_64& rng);
  void append_to(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

// x + attn(ln1(x)), then + mlp(ln2(x)).
Tensor transformer_block(const Tensor& x, const BlockParams& p, std::size_t heads, bool causal,
                         double eps);

// E: patch embedding plus non-causal transformer blocks.
class VisionEncoder {
 public:
  VisionEncoder() = default;
  VisionEncoder(const ModelConfig& config, std::mt19937_64& rng);

  // Returns [n_patches, vision_dim]. Throws BadImageShape.
  Tensor encode(const Image& image) const;
  std::vector<NamedTensor> parameters() const;

  // Patches in row-major patch order, each flattened row-major: [n_patches, patch^2].
  static Tensor patchify(const Image& image, std::size_t patch_size);

 private:
  ModelConfig config_;
  Tensor patch_w_, patch_b_, pos_;
  std::vector<BlockParams> blocks_;
  Tensor ln_gamma_, ln_beta_;
};

// P: per-token two-layer MLP with gelu, vision_dim -> lm_dim.
class Projector {
 public:
  Projector() = default;
  Projector(const ModelConfig& config, std::mt19937_64& rng);

  Tensor project(const Tensor& visual) const;
  std::vector<NamedTensor> parameters() const;

 private:
  Tensor w1_, b1_, w2_, b2_;
};

// Prefix fed to the language model ahead of the teacher-forced target:
// [visual tokens][SEP][instruction][SEP]. `visual` may be undefined.
struct LmPrefix {
  Tensor visual;
  std::vector<TokenId> instruction;
};

// L: causal decoder with learned positions and an output head tied to the
// token embedding.
class LanguageModel {
 public:
  LanguageModel() = default;
  LanguageModel(const ModelConfig& config, std::size_t vocab_size, std::mt19937_64& rng);

  std::size_t vocab_size() const { return tok_emb_.rows(); }
  std::size_t prefix_length(const LmPrefix& prefix) const;

  // Final-layer-normed hidden states for prefix followed by `inputs`.
  Tensor hidden_states(const LmPrefix& prefix, std::span<const TokenId> inputs) const;
  // Projects hidden rows onto the vocabulary through the tied embedding.
  Tensor logits(const Tensor& hidden) const;
  std::vector<NamedTensor> parameters() const;

 private:
  ModelConfig config_;
  Tensor tok_emb_, pos_emb_;
  std::vector<BlockParams> blocks_;
  Tensor ln_gamma_, ln_beta_;
};

// Logits [T, V] whose row t predicts targets[t]; the inputs are the prefix
// followed by targets[0..T-1). Throws ContextOverflow / EmptySequence.
Tensor forward_lm(const LanguageModel& lm, const LmPrefix& prefix, std::span<const TokenId> targets);

struct FreezeFlags {
  bool encoder = false;
  bool projector = false;
  bool language = false;
  bool operator==(const FreezeFlags&) const = default;
};

struct ModelBundle {
  ModelConfig config;
  Vocab vocab;
  VisionEncoder encoder;
  Projector projector;
  LanguageModel language;
  FreezeFlags frozen;

  static ModelBundle create(const ModelConfig& config, Vocab vocab, std::uint64_t seed);

  // Applies freeze flags: frozen components get requires_grad=false.
  void set_frozen(const FreezeFlags& flags);
  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> component_parameters(char component) const;  // 'E', 'P' or 'L'
  std::size_t parameter_count() const;
  void zero_grads();
  ModelBundle clone() const;

  // E then P on one image.
  Tensor visual_prefix(const Image& image) const;
};

struct GenerateOptions {
  std::size_t max_new_tokens = 64;
  bool stop_at_eos = true;
};

// Greedy decoding. The returned ids include the terminating EOS when one was
// produced, and never exceed max_new_tokens.
std::vector<TokenId> generate_ids(const ModelBundle& bundle, const Image& image,
                                  std::span<const TokenId> instruction, const GenerateOptions& options);
std::string generate(const ModelBundle& bundle, const Image& image, const std::string& instruction,
                     std::size_t max_new_tokens);

// Checkpoint container; see docs/formats.md for the byte layout.
void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace re3
