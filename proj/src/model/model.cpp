#include "re3/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace re3 {

namespace {

Tensor normal_param(Shape shape, double std, std::mt19937_64& rng) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  std::normal_distribution<double> dist(0.0, std);
  std::vector<double> values(n);
  for (auto& v : values) v = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(values), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones_param(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row(matmul(x, w), b); }

Tensor attention(const Tensor& x, const BlockParams& p, std::size_t heads, bool causal) {
  const auto dim = x.cols();
  const auto head_dim = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  auto qkv = matmul(x, p.w_qkv);
  auto q_all = add_row(slice_cols(qkv, 0, dim), p.b_q);
  auto k_all = slice_cols(qkv, dim, dim);
  auto v_all = add_row(slice_cols(qkv, 2 * dim, dim), p.b_v);
  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto q = slice_cols(q_all, h * head_dim, head_dim);
    auto k = slice_cols(k_all, h * head_dim, head_dim);
    auto v = slice_cols(v_all, h * head_dim, head_dim);
    auto scores = scale(matmul(q, transpose(k)), inv_sqrt);
    outputs.push_back(matmul(softmax_rows(scores, causal), v));
  }
  return linear(concat_cols(outputs), p.w_out, p.b_out);
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_map() const {
  auto fmt = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {
      {"image_side", std::to_string(image_side)},   {"patch_size", std::to_string(patch_size)},
      {"vision_dim", std::to_string(vision_dim)},   {"vision_layers", std::to_string(vision_layers)},
      {"vision_heads", std::to_string(vision_heads)}, {"projector_hidden", std::to_string(projector_hidden)},
      {"lm_dim", std::to_string(lm_dim)},           {"lm_layers", std::to_string(lm_layers)},
      {"lm_heads", std::to_string(lm_heads)},       {"max_context", std::to_string(max_context)},
      {"mlp_ratio", std::to_string(mlp_ratio)},     {"init_std", fmt(init_std)},
      {"ln_eps", fmt(ln_eps)},                      {"pixel_mean", fmt(pixel_mean)},
      {"pixel_std", fmt(pixel_std)},
  };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& values) {
  ModelConfig c;
  auto size = [&](const char* key, std::size_t& field) {
    if (auto it = values.find(key); it != values.end()) field = std::stoul(it->second);
  };
  auto real = [&](const char* key, double& field) {
    if (auto it = values.find(key); it != values.end()) field = std::stod(it->second);
  };
  size("image_side", c.image_side);
  size("patch_size", c.patch_size);
  size("vision_dim", c.vision_dim);
  size("vision_layers", c.vision_layers);
  size("vision_heads", c.vision_heads);
  size("projector_hidden", c.projector_hidden);
  size("lm_dim", c.lm_dim);
  size("lm_layers", c.lm_layers);
  size("lm_heads", c.lm_heads);
  size("max_context", c.max_context);
  size("mlp_ratio", c.mlp_ratio);
  real("init_std", c.init_std);
  real("ln_eps", c.ln_eps);
  real("pixel_mean", c.pixel_mean);
  real("pixel_std", c.pixel_std);
  return c;
}

BlockParams BlockParams::init(std::size_t dim, std::size_t mlp_ratio, double std, std::mt19937_64& rng) {
  BlockParams p;
  p.ln1_gamma = ones_param({dim});
  p.ln1_beta = zeros_param({dim});
  p.w_qkv = normal_param({dim, 3 * dim}, std, rng);
  p.b_q = zeros_param({dim});
  p.b_v = zeros_param({dim});
  p.w_out = normal_param({dim, dim}, std, rng);
  p.b_out = zeros_param({dim});
  p.ln2_gamma = ones_param({dim});
  p.ln2_beta = zeros_param({dim});
  p.w_fc = normal_param({dim, mlp_ratio * dim}, std, rng);
  p.b_fc = zeros_param({mlp_ratio * dim});
  p.w_proj = normal_param({mlp_ratio * dim, dim}, std, rng);
  p.b_proj = zeros_param({dim});
  return p;
}

void BlockParams::append_to(std::vector<NamedTensor>& out, const std::string& prefix) const {
  out.push_back({prefix + "ln1_gamma", ln1_gamma});
  out.push_back({prefix + "ln1_beta", ln1_beta});
  out.push_back({prefix + "w_qkv", w_qkv});
  out.push_back({prefix + "b_q", b_q});
  out.push_back({prefix + "b_v", b_v});
  out.push_back({prefix + "w_out", w_out});
  out.push_back({prefix + "b_out", b_out});
  out.push_back({prefix + "ln2_gamma", ln2_gamma});
  out.push_back({prefix + "ln2_beta", ln2_beta});
  out.push_back({prefix + "w_fc", w_fc});
  out.push_back({prefix + "b_fc", b_fc});
  out.push_back({prefix + "w_proj", w_proj});
  out.push_back({prefix + "b_proj", b_proj});
}

Tensor transformer_block(const Tensor& x, const BlockParams& p, std::size_t heads, bool causal,
                         double eps) {
  auto h = add(x, attention(layernorm(x, p.ln1_gamma, p.ln1_beta, eps), p, heads, causal));
  auto mlp = linear(gelu(linear(layernorm(h, p.ln2_gamma, p.ln2_beta, eps), p.w_fc, p.b_fc)), p.w_proj,
                    p.b_proj);
  return add(h, mlp);
}

// ---- VisionEncoder --------------------------------------------------------

VisionEncoder::VisionEncoder(const ModelConfig& config, std::mt19937_64& rng) : config_(config) {
  if (config.patch_size == 0 || config.image_side % config.patch_size != 0) {
    throw BadImageShape("image side " + std::to_string(config.image_side) + " not divisible by patch " +
                        std::to_string(config.patch_size));
  }
  if (!(config.pixel_std > 0)) throw ConfigError("pixel_std must be positive");
  if (config.vision_dim % config.vision_heads != 0) {
    throw ShapeMismatch("vision_dim must be divisible by vision_heads");
  }
  const auto patch_area = config.patch_size * config.patch_size;
  patch_w_ = normal_param({patch_area, config.vision_dim}, config.init_std, rng);
  patch_b_ = zeros_param({config.vision_dim});
  pos_ = normal_param({config.n_patches(), config.vision_dim}, config.init_std, rng);
  for (std::size_t i = 0; i < config.vision_layers; ++i) {
    blocks_.push_back(BlockParams::init(config.vision_dim, config.mlp_ratio, config.init_std, rng));
  }
  ln_gamma_ = ones_param({config.vision_dim});
  ln_beta_ = zeros_param({config.vision_dim});
}

Tensor VisionEncoder::patchify(const Image& image, std::size_t patch_size) {
  const auto per_side = image.side / patch_size;
  const auto area = patch_size * patch_size;
  std::vector<double> out(per_side * per_side * area);
  std::size_t k = 0;
  for (std::size_t pr = 0; pr < per_side; ++pr)
    for (std::size_t pc = 0; pc < per_side; ++pc)
      for (std::size_t r = 0; r < patch_size; ++r)
        for (std::size_t c = 0; c < patch_size; ++c) out[k++] = image.at(pr * patch_size + r, pc * patch_size + c);
  return Tensor::from_data({per_side * per_side, area}, std::move(out));
}

Tensor VisionEncoder::encode(const Image& image) const {
  if (image.side != config_.image_side || image.pixels.size() != image.side * image.side) {
    throw BadImageShape("expected a " + std::to_string(config_.image_side) + "x" +
                        std::to_string(config_.image_side) + " image, got side " + std::to_string(image.side));
  }
  for (double v : image.pixels) {
    if (!(v >= 0.0 && v <= 1.0)) throw BadImageShape("pixel value outside [0,1]");
  }
  // Centering keeps flat bright and flat dark patches apart after layer norm.
  auto patches = patchify(image, config_.patch_size);
  auto values = patches.mutable_data();
  for (auto& v : values) v = (v - config_.pixel_mean) / config_.pixel_std;
  auto x = add(add_row(matmul(patches, patch_w_), patch_b_), pos_);
  for (const auto& block : blocks_) x = transformer_block(x, block, config_.vision_heads, false, config_.ln_eps);
  return layernorm(x, ln_gamma_, ln_beta_, config_.ln_eps);
}

std::vector<NamedTensor> VisionEncoder::parameters() const {
  std::vector<NamedTensor> out{{"encoder.patch_w", patch_w_}, {"encoder.patch_b", patch_b_}, {"encoder.pos", pos_}};
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].append_to(out, "encoder.block" + std::to_string(i) + ".");
  }
  out.push_back({"encoder.ln_gamma", ln_gamma_});
  out.push_back({"encoder.ln_beta", ln_beta_});
  return out;
}

// ---- Projector ------------------------------------------------------------

Projector::Projector(const ModelConfig& config, std::mt19937_64& rng) {
  w1_ = normal_param({config.vision_dim, config.projector_hidden}, config.init_std, rng);
  b1_ = zeros_param({config.projector_hidden});
  w2_ = normal_param({config.projector_hidden, config.lm_dim}, config.init_std, rng);
  b2_ = zeros_param({config.lm_dim});
}

Tensor Projector::project(const Tensor& visual) const {
  if (visual.rank() != 2 || visual.cols() != w1_.rows()) {
    throw ShapeMismatch("projector expects width " + std::to_string(w1_.rows()));
  }
  return linear(gelu(linear(visual, w1_, b1_)), w2_, b2_);
}

std::vector<NamedTensor> Projector::parameters() const {
  return {{"projector.w1", w1_}, {"projector.b1", b1_}, {"projector.w2", w2_}, {"projector.b2", b2_}};
}

// ---- LanguageModel --------------------------------------------------------

LanguageModel::LanguageModel(const ModelConfig& config, std::size_t vocab_size, std::mt19937_64& rng)
    : config_(config) {
  if (config.max_context > kMaxTokenLength) {
    throw ContextOverflow("max_context " + std::to_string(config.max_context) + " exceeds " +
                          std::to_string(kMaxTokenLength));
  }
  if (config.lm_dim % config.lm_heads != 0) throw ShapeMismatch("lm_dim must be divisible by lm_heads");
  tok_emb_ = normal_param({vocab_size, config.lm_dim}, config.init_std, rng);
  pos_emb_ = normal_param({config.max_context, config.lm_dim}, config.init_std, rng);
  for (std::size_t i = 0; i < config.lm_layers; ++i) {
    blocks_.push_back(BlockParams::init(config.lm_dim, config.mlp_ratio, config.init_std, rng));
  }
  ln_gamma_ = ones_param({config.lm_dim});
  ln_beta_ = zeros_param({config.lm_dim});
}

std::size_t LanguageModel::prefix_length(const LmPrefix& prefix) const {
  return (prefix.visual ? prefix.visual.rows() : 0) + prefix.instruction.size() + 2;
}

Tensor LanguageModel::hidden_states(const LmPrefix& prefix, std::span<const TokenId> inputs) const {
  const auto total = prefix_length(prefix) + inputs.size();
  if (total > config_.max_context) {
    throw ContextOverflow("sequence of " + std::to_string(total) + " exceeds context " +
                          std::to_string(config_.max_context));
  }
  std::vector<TokenId> text;
  text.push_back(kSep);
  text.insert(text.end(), prefix.instruction.begin(), prefix.instruction.end());
  text.push_back(kSep);
  text.insert(text.end(), inputs.begin(), inputs.end());

  std::vector<Tensor> parts;
  if (prefix.visual) {
    if (prefix.visual.cols() != config_.lm_dim) throw ShapeMismatch("visual prefix width differs from lm_dim");
    parts.push_back(prefix.visual);
  }
  parts.push_back(embedding_lookup(tok_emb_, text));
  auto x = parts.size() == 1 ? parts[0] : concat_rows(parts);
  x = add(x, slice_rows(pos_emb_, 0, total));
  for (const auto& block : blocks_) x = transformer_block(x, block, config_.lm_heads, true, config_.ln_eps);
  return layernorm(x, ln_gamma_, ln_beta_, config_.ln_eps);
}

Tensor LanguageModel::logits(const Tensor& hidden) const { return matmul(hidden, transpose(tok_emb_)); }

std::vector<NamedTensor> LanguageModel::parameters() const {
  std::vector<NamedTensor> out{{"language.tok_emb", tok_emb_}, {"language.pos_emb", pos_emb_}};
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].append_to(out, "language.block" + std::to_string(i) + ".");
  }
  out.push_back({"language.ln_gamma", ln_gamma_});
  out.push_back({"language.ln_beta", ln_beta_});
  return out;
}

Tensor forward_lm(const LanguageModel& lm, const LmPrefix& prefix, std::span<const TokenId> targets) {
  if (targets.empty()) throw EmptySequence("forward_lm needs at least one target token");
  auto hidden = lm.hidden_states(prefix, targets.first(targets.size() - 1));
  const auto start = lm.prefix_length(prefix) - 1;
  return lm.logits(slice_rows(hidden, start, targets.size()));
}

// ---- ModelBundle ----------------------------------------------------------

ModelBundle ModelBundle::create(const ModelConfig& config, Vocab vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelBundle b;
  b.config = config;
  b.encoder = VisionEncoder(config, rng);
  b.projector = Projector(config, rng);
  b.language = LanguageModel(config, vocab.size(), rng);
  b.vocab = std::move(vocab);
  return b;
}

void ModelBundle::set_frozen(const FreezeFlags& flags) {
  frozen = flags;
  for (auto& p : encoder.parameters()) p.tensor.set_requires_grad(!flags.encoder);
  for (auto& p : projector.parameters()) p.tensor.set_requires_grad(!flags.projector);
  for (auto& p : language.parameters()) p.tensor.set_requires_grad(!flags.language);
}

std::vector<NamedTensor> ModelBundle::parameters() const {
  auto out = encoder.parameters();
  for (auto& p : projector.parameters()) out.push_back(p);
  for (auto& p : language.parameters()) out.push_back(p);
  return out;
}

std::vector<NamedTensor> ModelBundle::component_parameters(char component) const {
  switch (component) {
    case 'E': return encoder.parameters();
    case 'P': return projector.parameters();
    case 'L': return language.parameters();
    default: throw ShapeMismatch(std::string("unknown component '") + component + "'");
  }
}

std::size_t ModelBundle::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

void ModelBundle::zero_grads() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

ModelBundle ModelBundle::clone() const {
  // Same architecture with fresh leaves, then copy the values across.
  ModelBundle copy;
  copy.config = config;
  copy.vocab = vocab;
  std::mt19937_64 rng(0);
  copy.encoder = VisionEncoder(config, rng);
  copy.projector = Projector(config, rng);
  copy.language = LanguageModel(config, vocab.size(), rng);
  auto src = parameters();
  auto dst = copy.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto values = dst[i].tensor.mutable_data();
    std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), values.begin());
  }
  copy.set_frozen(frozen);
  return copy;
}

Tensor ModelBundle::visual_prefix(const Image& image) const { return projector.project(encoder.encode(image)); }

// ---- decoding -------------------------------------------------------------

std::vector<TokenId> generate_ids(const ModelBundle& bundle, const Image& image,
                                  std::span<const TokenId> instruction, const GenerateOptions& options) {
  if (options.max_new_tokens == 0) throw EmptySequence("max_new_tokens must be at least 1");
  NoGradGuard no_grad;
  LmPrefix prefix{bundle.visual_prefix(image), {instruction.begin(), instruction.end()}};
  const auto needed = bundle.language.prefix_length(prefix) + options.max_new_tokens - 1;
  if (needed > bundle.config.max_context) {
    throw ContextOverflow("generation needs " + std::to_string(needed) + " positions, context is " +
                          std::to_string(bundle.config.max_context));
  }
  std::vector<TokenId> out;
  while (out.size() < options.max_new_tokens) {
    auto hidden = bundle.language.hidden_states(prefix, out);
    auto row = bundle.language.logits(slice_rows(hidden, hidden.rows() - 1, 1));
    const auto scores = row.data();
    TokenId best = -1;
    for (std::size_t v = 0; v < scores.size(); ++v) {
      const auto id = static_cast<TokenId>(v);
      if (id == kPad || id == kBos || id == kImg || id == kSep) continue;
      if (id == kEos && !options.stop_at_eos) continue;
      if (best < 0 || scores[v] > scores[static_cast<std::size_t>(best)]) best = id;
    }
    out.push_back(best);
    if (best == kEos) break;
  }
  return out;
}

std::string generate(const ModelBundle& bundle, const Image& image, const std::string& instruction,
                     std::size_t max_new_tokens) {
  auto ids = generate_ids(bundle, image, bundle.vocab.encode(instruction), {max_new_tokens, true});
  return bundle.vocab.decode(ids);
}

}  // namespace re3
