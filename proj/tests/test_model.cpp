#include <cmath>
#include <cstring>
#include <fstream>
#include <filesystem>
#include <map>
#include <random>

#include "doctest.h"
#include "re3/model.hpp"
#include "test_util.hpp"

using namespace re3;

namespace {

// Plain row-major matrices for the straight-line forward pass.
struct Mat {
  std::size_t r = 0, c = 0;
  std::vector<double> v;
  double& operator()(std::size_t i, std::size_t j) { return v[i * c + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * c + j]; }
};

Mat from(const Tensor& t) {
  if (t.rank() == 1) return {1, t.size(), {t.data().begin(), t.data().end()}};
  return {t.rows(), t.cols(), {t.data().begin(), t.data().end()}};
}

Mat mm(const Mat& a, const Mat& b) {
  Mat out{a.r, b.c, std::vector<double>(a.r * b.c, 0.0)};
  for (std::size_t i = 0; i < a.r; ++i)
    for (std::size_t j = 0; j < b.c; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.c; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

Mat plus_bias(Mat x, const Mat& b) {
  for (std::size_t i = 0; i < x.r; ++i)
    for (std::size_t j = 0; j < x.c; ++j) x(i, j) += b.v[j];
  return x;
}

Mat plus(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  return a;
}

Mat ln(const Mat& x, const Mat& g, const Mat& b, double eps) {
  Mat out = x;
  for (std::size_t i = 0; i < x.r; ++i) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < x.c; ++j) mu += x(i, j);
    mu /= static_cast<double>(x.c);
    for (std::size_t j = 0; j < x.c; ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= static_cast<double>(x.c);
    for (std::size_t j = 0; j < x.c; ++j) out(i, j) = (x(i, j) - mu) / std::sqrt(var + eps) * g.v[j] + b.v[j];
  }
  return out;
}

Mat block(const Mat& x, std::map<std::string, Mat>& p, const std::string& pre, std::size_t heads, bool causal,
          double eps) {
  const auto d = x.c, dh = d / heads, n = x.r;
  auto h = ln(x, p[pre + "ln1_gamma"], p[pre + "ln1_beta"], eps);
  auto qkv = mm(h, p[pre + "w_qkv"]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      qkv(i, j) += p[pre + "b_q"].v[j];
      qkv(i, 2 * d + j) += p[pre + "b_v"].v[j];
    }
  Mat att{n, d, std::vector<double>(n * d, 0.0)};
  for (std::size_t head = 0; head < heads; ++head) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> w(n, 0.0);
      double mx = -1e300;
      const auto limit = causal ? i + 1 : n;
      for (std::size_t j = 0; j < limit; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < dh; ++k) s += qkv(i, head * dh + k) * qkv(j, d + head * dh + k);
        w[j] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, w[j]);
      }
      double z = 0;
      for (std::size_t j = 0; j < limit; ++j) z += (w[j] = std::exp(w[j] - mx));
      for (std::size_t j = 0; j < limit; ++j)
        for (std::size_t k = 0; k < dh; ++k) att(i, head * dh + k) += w[j] / z * qkv(j, 2 * d + head * dh + k);
    }
  }
  auto x1 = plus(x, plus_bias(mm(att, p[pre + "w_out"]), p[pre + "b_out"]));
  auto f = plus_bias(mm(ln(x1, p[pre + "ln2_gamma"], p[pre + "ln2_beta"], eps), p[pre + "w_fc"]), p[pre + "b_fc"]);
  for (auto& v : f.v) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  return plus(x1, plus_bias(mm(f, p[pre + "w_proj"]), p[pre + "b_proj"]));
}

// Independent forward pass: image + instruction + targets -> logits.
Mat oracle_logits(const ModelBundle& b, const Image& img, const std::vector<TokenId>& instr,
                  const std::vector<TokenId>& targets) {
  std::map<std::string, Mat> p;
  for (const auto& nt : b.parameters()) p[nt.name] = from(nt.tensor);
  const auto& cfg = b.config;
  const auto per = cfg.image_side / cfg.patch_size;
  Mat patches{per * per, cfg.patch_size * cfg.patch_size, {}};
  for (std::size_t pr = 0; pr < per; ++pr)
    for (std::size_t pc = 0; pc < per; ++pc)
      for (std::size_t r = 0; r < cfg.patch_size; ++r)
        for (std::size_t c = 0; c < cfg.patch_size; ++c)
          patches.v.push_back((img.pixels[(pr * cfg.patch_size + r) * img.side + pc * cfg.patch_size + c] -
                               cfg.pixel_mean) / cfg.pixel_std);
  auto x = plus(plus_bias(mm(patches, p["encoder.patch_w"]), p["encoder.patch_b"]), p["encoder.pos"]);
  for (std::size_t l = 0; l < cfg.vision_layers; ++l)
    x = block(x, p, "encoder.block" + std::to_string(l) + ".", cfg.vision_heads, false, cfg.ln_eps);
  x = ln(x, p["encoder.ln_gamma"], p["encoder.ln_beta"], cfg.ln_eps);
  auto hidden = plus_bias(mm(x, p["projector.w1"]), p["projector.b1"]);
  for (auto& v : hidden.v) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  auto vis = plus_bias(mm(hidden, p["projector.w2"]), p["projector.b2"]);

  std::vector<TokenId> text{kSep};
  text.insert(text.end(), instr.begin(), instr.end());
  text.push_back(kSep);
  text.insert(text.end(), targets.begin(), targets.end() - 1);
  const auto& emb = p["language.tok_emb"];
  Mat seq{vis.r + text.size(), cfg.lm_dim, vis.v};
  for (auto id : text)
    for (std::size_t j = 0; j < cfg.lm_dim; ++j) seq.v.push_back(emb(static_cast<std::size_t>(id), j));
  for (std::size_t i = 0; i < seq.r; ++i)
    for (std::size_t j = 0; j < seq.c; ++j) seq(i, j) += p["language.pos_emb"](i, j);
  for (std::size_t l = 0; l < cfg.lm_layers; ++l)
    seq = block(seq, p, "language.block" + std::to_string(l) + ".", cfg.lm_heads, true, cfg.ln_eps);
  seq = ln(seq, p["language.ln_gamma"], p["language.ln_beta"], cfg.ln_eps);

  const auto start = vis.r + instr.size() + 1;
  Mat out{targets.size(), emb.r, {}};
  for (std::size_t t = 0; t < targets.size(); ++t)
    for (std::size_t v = 0; v < emb.r; ++v) {
      double s = 0;
      for (std::size_t j = 0; j < cfg.lm_dim; ++j) s += seq(start + t, j) * emb(v, j);
      out.v.push_back(s);
    }
  return out;
}

ModelConfig small_config() {
  ModelConfig c;
  c.image_side = 8;
  c.patch_size = 4;
  c.vision_dim = 8;
  c.vision_heads = 2;
  c.projector_hidden = 12;
  c.lm_dim = 8;
  c.lm_heads = 2;
  c.max_context = 32;
  c.mlp_ratio = 2;
  c.init_std = 0.3;
  return c;
}

Vocab toy_vocab() {
  std::vector<std::string> corpus{"the heart size is within normal limits . no acute cardiopulmonary abnormality"};
  return Vocab::build(corpus, 64);
}

Image random_image(std::size_t side, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img = Image::blank(side, 0.0);
  for (auto& v : img.pixels) v = u(rng);
  return img;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("encoder output shape, determinism and errors") {
  ModelConfig cfg;
  cfg.image_side = 16;
  std::mt19937_64 rng(1);
  VisionEncoder enc(cfg, rng);
  auto img = random_image(16, rng);
  auto a = enc.encode(img);
  CHECK(a.shape() == Shape{16, cfg.vision_dim});
  auto b = enc.encode(img);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));

  auto z1 = enc.encode(Image::blank(16, 0.0));
  auto z2 = enc.encode(Image::blank(16, 0.0));
  CHECK(std::equal(z1.data().begin(), z1.data().end(), z2.data().begin()));

  CHECK_THROWS_AS(enc.encode(Image::blank(12, 0.0)), BadImageShape);
  auto bright = Image::blank(16, 0.5);
  bright.pixels[3] = 1.5;
  CHECK_THROWS_AS(enc.encode(bright), BadImageShape);
  cfg.image_side = 18;
  CHECK_THROWS_AS(VisionEncoder(cfg, rng), BadImageShape);
}

TEST_CASE("projector is per-token and affine") {
  auto cfg = small_config();
  std::mt19937_64 rng(2);
  Projector proj(cfg, rng);
  auto x = testing::random_tensor({5, cfg.vision_dim}, rng);
  auto y = proj.project(x);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<double> permuted;
  for (auto r : perm)
    for (std::size_t c = 0; c < cfg.vision_dim; ++c) permuted.push_back(x.at(r, c));
  auto yp = proj.project(Tensor::from_data({5, cfg.vision_dim}, permuted));
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < cfg.lm_dim; ++c) CHECK(yp.at(i, c) == doctest::Approx(y.at(perm[i], c)).epsilon(1e-13));

  auto params = proj.parameters();
  for (auto& nt : params)
    if (nt.name[nt.name.size() - 2] == 'w') std::fill(nt.tensor.mutable_data().begin(), nt.tensor.mutable_data().end(), 0.0);
  auto& b2 = params[3].tensor;
  for (std::size_t i = 0; i < b2.size(); ++i) b2.mutable_data()[i] = 0.1 * static_cast<double>(i);
  auto yb = proj.project(x);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < cfg.lm_dim; ++c) CHECK(yb.at(r, c) == doctest::Approx(0.1 * c).epsilon(1e-15));

  CHECK_THROWS_AS(proj.project(Tensor::zeros({2, cfg.vision_dim + 1})), ShapeMismatch);
}

TEST_CASE("projector gradient matches finite differences") {
  auto cfg = small_config();
  std::mt19937_64 rng(3);
  Projector proj(cfg, rng);
  auto x = testing::random_tensor({4, cfg.vision_dim}, rng);
  auto f = [&](const Tensor& v) { return l2_norm_sq(proj.project(v)); };
  CHECK(finite_diff_check(f, x) < 1e-4);
  for (auto& nt : proj.parameters()) {
    auto leaf = nt.tensor;
    CHECK(finite_diff_check_in_place([&] { return l2_norm_sq(proj.project(x)); }, leaf) < 1e-4);
  }
}

TEST_CASE("language model is causal") {
  auto bundle = ModelBundle::create(small_config(), toy_vocab(), 4);
  std::mt19937_64 rng(4);
  auto img = random_image(8, rng);
  LmPrefix prefix{bundle.visual_prefix(img), {7, 8}};
  std::vector<TokenId> targets{9, 10, 11, 12, 13};
  auto base = forward_lm(bundle.language, prefix, targets);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto changed = targets;
    for (std::size_t k = t; k < changed.size(); ++k) changed[k] = 6 + static_cast<TokenId>((k * 7 + 3) % 12);
    auto other = forward_lm(bundle.language, prefix, changed);
    // Row r sees targets[0..r), so rows 0..t are unaffected.
    for (std::size_t r = 0; r <= t; ++r)
      for (std::size_t v = 0; v < base.cols(); ++v) REQUIRE(other.at(r, v) == base.at(r, v));
  }
}

TEST_CASE("text-only prefix and context overflow") {
  auto bundle = ModelBundle::create(small_config(), toy_vocab(), 5);
  std::vector<TokenId> targets{9, 10, 11};
  LmPrefix text_only{Tensor(), {7}};
  auto logits = forward_lm(bundle.language, text_only, targets);
  CHECK(logits.shape() == Shape{3, bundle.vocab.size()});
  CHECK(bundle.language.prefix_length(text_only) == 3);

  std::vector<TokenId> long_targets(40, 9);
  CHECK_THROWS_AS(forward_lm(bundle.language, text_only, long_targets), ContextOverflow);
  std::vector<TokenId> none;
  CHECK_THROWS_AS(forward_lm(bundle.language, text_only, none), EmptySequence);
  auto cfg = small_config();
  cfg.max_context = 4096;
  CHECK_THROWS_AS(ModelBundle::create(cfg, toy_vocab(), 1), ContextOverflow);
}

TEST_CASE("forward pass matches the straight-line oracle") {
  auto cfg = small_config();
  auto bundle = ModelBundle::create(cfg, toy_vocab(), 6);
  std::mt19937_64 rng(6);
  auto img = random_image(8, rng);
  std::vector<TokenId> instr{7, 8, 9};
  std::vector<TokenId> targets{10, 11, 12, 2};
  auto logits = forward_lm(bundle.language, {bundle.visual_prefix(img), instr}, targets);
  auto expected = oracle_logits(bundle, img, instr, targets);
  REQUIRE(logits.size() == expected.v.size());
  double worst = 0;
  for (std::size_t i = 0; i < expected.v.size(); ++i) worst = std::max(worst, std::abs(logits.data()[i] - expected.v[i]));
  CHECK(worst < 1e-10);
}

TEST_CASE("every parameter gradient matches finite differences") {
  auto bundle = ModelBundle::create(small_config(), toy_vocab(), 7);
  std::mt19937_64 rng(7);
  auto img = random_image(8, rng);
  std::vector<TokenId> instr{7};
  std::vector<TokenId> targets{10, 11, 2};
  auto loss = [&] {
    return softmax_cross_entropy(forward_lm(bundle.language, {bundle.visual_prefix(img), instr}, targets), targets);
  };
  double worst = 0;
  for (auto& nt : bundle.parameters()) {
    auto leaf = nt.tensor;
    bundle.zero_grads();
    worst = std::max(worst, finite_diff_check_in_place(loss, leaf));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("default configuration is desk scale") {
  std::vector<std::string> corpus;
  std::string words;
  for (int i = 0; i < 600; ++i) words += "w" + std::to_string(i) + " ";
  corpus.push_back(words);
  auto bundle = ModelBundle::create(ModelConfig{}, Vocab::build(corpus, 512), 1);
  CHECK(bundle.vocab.size() == 512);
  CHECK(bundle.parameter_count() < 5'000'000);
  CHECK(bundle.config.n_patches() == 64);
}

TEST_CASE("freeze flags and clone") {
  auto bundle = ModelBundle::create(small_config(), toy_vocab(), 8);
  bundle.set_frozen({true, false, true});
  for (auto& nt : bundle.component_parameters('E')) CHECK_FALSE(nt.tensor.requires_grad());
  for (auto& nt : bundle.component_parameters('L')) CHECK_FALSE(nt.tensor.requires_grad());
  for (auto& nt : bundle.component_parameters('P')) CHECK(nt.tensor.requires_grad());

  auto copy = bundle.clone();
  CHECK(copy.frozen == bundle.frozen);
  auto a = bundle.parameters(), b = copy.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].tensor.node() != b[i].tensor.node());
    CHECK(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
  }
  copy.parameters()[0].tensor.mutable_data()[0] += 1.0;
  CHECK(bundle.parameters()[0].tensor.data()[0] != copy.parameters()[0].tensor.data()[0]);
}

TEST_CASE("generation cap, determinism and context check") {
  auto bundle = ModelBundle::create(small_config(), toy_vocab(), 9);
  std::mt19937_64 rng(9);
  auto img = random_image(8, rng);
  std::vector<TokenId> instr{7, 8};
  auto one = generate_ids(bundle, img, instr, {1, true});
  CHECK(one.size() == 1);
  auto a = generate_ids(bundle, img, instr, {6, false});
  auto b = generate_ids(bundle, img, instr, {6, false});
  CHECK(a == b);
  CHECK(a.size() == 6);
  for (auto id : a) {
    CHECK(id != kEos);
    CHECK(id != kPad);
    CHECK(id != kBos);
    CHECK(id != kImg);
    CHECK(id != kSep);
  }
  CHECK(generate(bundle, img, "the heart", 6) == generate(bundle, img, "the heart", 6));
  CHECK_THROWS_AS(generate_ids(bundle, img, instr, {40, true}), ContextOverflow);
  CHECK_THROWS_AS(generate_ids(bundle, img, instr, {0, true}), EmptySequence);
}

TEST_CASE("checkpoint round trip is bit exact") {
  auto bundle = ModelBundle::create(small_config(), toy_vocab(), 10);
  bundle.set_frozen({true, false, true});
  std::mt19937_64 rng(10);
  for (auto& nt : bundle.parameters())
    for (auto& v : nt.tensor.mutable_data()) v = std::ldexp(static_cast<double>(rng() >> 11), -40) - 1e6;
  const auto path = std::filesystem::temp_directory_path() / "re3_model_roundtrip.ckpt";
  save_checkpoint(bundle, path);
  auto loaded = load_checkpoint(path);
  CHECK(loaded.config == bundle.config);
  CHECK(loaded.vocab == bundle.vocab);
  CHECK(loaded.frozen == bundle.frozen);
  auto a = bundle.parameters(), b = loaded.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tensor.shape() == b[i].tensor.shape());
    CHECK(std::memcmp(a[i].tensor.data().data(), b[i].tensor.data().data(), a[i].tensor.size() * 8) == 0);
  }
  save_checkpoint(loaded, path.string() + ".2");
  std::ifstream f1(path, std::ios::binary), f2(path.string() + ".2", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);

  std::ofstream(path, std::ios::binary) << "RE3CKPT\nversion=9\n\n";
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(path.string() + ".missing"), CheckpointError);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".2");
}

}  // TEST_SUITE
