// Acceptance run: one PASS/FAIL line per criterion. Arguments, if given,
// select criteria by name (e.g. `re3_acceptance gradients metrics`).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <tuple>

#include "oracles.hpp"
#include "re3/app.hpp"
#include "re3/error.hpp"
#include "re3/seed.hpp"
#include "test_util.hpp"

using namespace re3;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(RE3_SOURCE_DIR) / "configs";
const fs::path kRecipe = kConfigs / "desk.ini";

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<double>> snapshot(const std::vector<NamedTensor>& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

// ---- gradients ------------------------------------------------------------

ModelConfig fd_config() {
  ModelConfig c;
  c.image_side = 8;
  c.patch_size = 4;
  c.vision_dim = 8;
  c.vision_heads = 2;
  c.projector_hidden = 12;
  c.lm_dim = 8;
  c.lm_heads = 2;
  c.max_context = 48;
  c.mlp_ratio = 2;
  c.init_std = 0.3;
  return c;
}

// The element behind a failed parameter check, with the float64 spacing of
// the loss value for scale.
std::string worst_element(const std::function<Tensor()>& loss, Tensor& leaf) {
  const double h = 1e-5;
  backward(loss());
  const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
  leaf.zero_grad();
  NoGradGuard guard;
  auto values = leaf.mutable_data();
  double rel = 0, g = 0, diff = 0, level = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = loss().item();
    values[i] = saved - h;
    const double down = loss().item();
    values[i] = saved;
    const double fd = (up - down) / (2 * h);
    const double r = std::abs(analytic[i] - fd) / (std::abs(fd) + 1e-8);
    if (r > rel) std::tie(rel, g, diff, level) = std::tuple{r, fd, std::abs(analytic[i] - fd), up};
  }
  return "rel " + fmt("%.2e", rel) + " at |g_fd| " + fmt("%.2e", std::abs(g)) + ", |g - g_fd| " + fmt("%.1e", diff) +
         ", loss " + fmt("%.3f", level) + " (one ulp of the loss over 2h is " +
         fmt("%.1e", (std::nextafter(level, 1e300) - level) / (2 * h)) + ")";
}

Outcome gradients() {
  using testing::random_ids;
  using testing::random_tensor;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::size_t checks = 0;
  auto note = [&](double err) {
    worst = std::max(worst, err);
    ++checks;
  };
  std::string diagnostics;
  double untimed = 0;
  const std::vector<std::string> text{"no acute cardiopulmonary abnormality . small left pleural effusion"};
  const auto vocab = Vocab::build(text, 24);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), same = random_tensor({3, 4}, rng);
    auto bias = random_tensor({4}, rng), square = random_tensor({4, 4}, rng), w = random_tensor({3, 4}, rng);
    auto read = [&](const Tensor& t) { return t.shape() == w.shape() ? sum(mul(t, w)) : sum(mul(t, t)); };
    const std::vector<TokenId> ids{1, 3, 1};
    const auto ce_ids = random_ids(3, 5, rng);
    const std::vector<std::pair<std::function<Tensor(const Tensor&)>, Tensor>> ops{
        {[&](const Tensor& t) { return read(matmul(t, b)); }, a},
        {[&](const Tensor& t) { return read(matmul(a, t)); }, b},
        {[&](const Tensor& t) { return read(add(t, same)); }, a},
        {[&](const Tensor& t) { return read(mul(t, same)); }, a},
        {[&](const Tensor& t) { return read(add_row(a, t)); }, bias},
        {[&](const Tensor& t) { return read(scale(t, -1.7)); }, a},
        {[&](const Tensor& t) { return read(gelu(t)); }, a},
        {[&](const Tensor& t) { return read(layernorm(t, bias, bias)); }, a},
        {[&](const Tensor& t) { return read(layernorm(a, t, bias)); }, bias},
        {[&](const Tensor& t) { return read(layernorm(a, bias, t)); }, bias},
        {[&](const Tensor& t) { return read(embedding_lookup(t, ids)); }, random_tensor({5, 4}, rng)},
        {[&](const Tensor& t) { return read(reshape(t, {4, 3})); }, a},
        {[&](const Tensor& t) { return read(transpose(t)); }, a},
        {[&](const Tensor& t) { return mean(mul(t, same)); }, a},
        {[&](const Tensor& t) { return l2_norm_sq(t); }, a},
        {[&](const Tensor& t) { return read(softmax_rows(t, false)); }, a},
        {[&](const Tensor& t) { return read(softmax_rows(t, true)); }, square},
        {[&](const Tensor& t) { return read(slice_rows(t, 1, 2)); }, a},
        {[&](const Tensor& t) { return read(slice_cols(t, 1, 2)); }, a},
        {[&](const Tensor& t) {
           std::vector<Tensor> parts{t, same};
           return read(concat_rows(parts));
         }, a},
        {[&](const Tensor& t) {
           std::vector<Tensor> parts{same, t};
           return read(concat_cols(parts));
         }, a},
        {[&](const Tensor& t) { return softmax_cross_entropy(t, ce_ids); }, random_tensor({3, 5}, rng, 2.0)},
    };
    for (const auto& [f, x] : ops) note(finite_diff_check(f, x));

    // Stage losses against every trainable parameter of a small bundle.
    auto bundle = ModelBundle::create(fd_config(), vocab, seed);
    // Rendered studies, block-averaged down to the bundle's resolution.
    std::vector<Image> images;
    for (std::uint64_t k = 0; k < 4; ++k) {
      const auto full = render_image(sample_findings(rng), seed * 4 + k);
      const std::size_t f = full.side / 8;
      auto img = Image::blank(8);
      for (std::size_t r = 0; r < full.side; ++r)
        for (std::size_t c = 0; c < full.side; ++c) img.at(r / f, c / f) += full.at(r, c) / double(f * f);
      images.push_back(img);
    }
    auto sample = [&](std::size_t i, std::size_t instr_len) {
      Sample s;
      s.image = &images[i];
      s.instruction = random_ids(instr_len, static_cast<TokenId>(vocab.size()), rng);
      s.target = random_ids(3, static_cast<TokenId>(vocab.size()), rng);
      s.target.push_back(kEos);
      return s;
    };
    const auto cap = sample(0, 0), ins = sample(1, 3);
    const std::vector<Sample> reports{sample(2, 2)}, instructions{sample(3, 3), ins};

    auto check_all = [&](const std::function<Tensor()>& loss) {
      for (auto& p : bundle.parameters()) {
        if (!p.tensor.requires_grad()) continue;
        auto leaf = p.tensor;
        bundle.zero_grads();
        const double err = finite_diff_check_in_place(loss, leaf);
        note(err);
        if (err >= 1e-4) {
          const auto d0 = std::chrono::steady_clock::now();
          diagnostics += "; seed " + std::to_string(seed) + " " + p.name + ": " + worst_element(loss, leaf);
          untimed += seconds_since(d0);
        }
      }
    };
    bundle.set_frozen({true, false, true});
    check_all([&] { return loss_stage1(bundle, *cap.image, cap.target); });
    bundle.set_frozen({});
    check_all([&] { return loss_stage2(bundle, *ins.image, ins.instruction, ins.target, 0.01); });
    check_all([&] { return loss_stage3(bundle, reports, instructions, {1.0, 0.7, 0.01}); });
  }
  const double secs = seconds_since(t0) - untimed;
  const std::string detail = std::to_string(checks) + " checks, max rel err " + fmt("%.2e", worst) + " (< 1e-4), " +
                       fmt("%.1f", secs) + " s (< 60 s)" + diagnostics;
  return {worst < 1e-4 && secs < 60.0, detail};
}

// ---- freeze ---------------------------------------------------------------

Outcome freeze() {
  RuleBasedClient client;
  const auto corpus = build_corpus(200, KindMix{}, 1, client);
  TrainConfig config;
  auto bundle = initial_bundle(config, corpus);
  const auto e0 = snapshot(bundle.component_parameters('E'));
  const auto l0 = snapshot(bundle.component_parameters('L'));
  const auto p0 = snapshot(bundle.component_parameters('P'));
  auto stage = config.stages[0];
  stage.steps = 100;
  run_stage(bundle, stage, corpus, 1);
  const bool e_same = snapshot(bundle.component_parameters('E')) == e0;
  const bool l_same = snapshot(bundle.component_parameters('L')) == l0;
  const auto p1 = snapshot(bundle.component_parameters('P'));
  std::size_t unchanged = 0, total = 0;
  for (std::size_t i = 0; i < p0.size(); ++i)
    for (std::size_t k = 0; k < p0[i].size(); ++k, ++total) unchanged += p0[i][k] == p1[i][k];
  return {e_same && l_same && unchanged == 0,
          std::string("E ") + (e_same ? "bit-identical" : "CHANGED") + ", L " + (l_same ? "bit-identical" : "CHANGED") +
              ", P values changed " + std::to_string(total - unchanged) + "/" + std::to_string(total)};
}

// ---- loss composition -----------------------------------------------------

Outcome composition() {
  RuleBasedClient client;
  const auto corpus = build_corpus(120, KindMix{}, 2, client);
  auto bundle = initial_bundle(TrainConfig{}, corpus);
  bundle.set_frozen({});
  std::vector<Sample> reports, instructions;
  double ce_err = 0;
  NoGradGuard guard;
  for (const auto& r : corpus) {
    auto s = make_sample(r, bundle.vocab);
    if (r.kind == SampleKind::Report && reports.size() < 4) reports.push_back(s);
    if (r.kind != SampleKind::Instruction || instructions.size() >= 10) continue;
    instructions.push_back(s);
    // Plain cross-entropy from the logits, by hand.
    const auto logits = forward_lm(bundle.language, {bundle.visual_prefix(r.image), s.instruction}, s.target);
    double ce = 0;
    for (std::size_t t = 0; t < s.target.size(); ++t) {
      double mx = -1e300;
      for (std::size_t v = 0; v < logits.cols(); ++v) mx = std::max(mx, logits.at(t, v));
      double z = 0;
      for (std::size_t v = 0; v < logits.cols(); ++v) z += std::exp(logits.at(t, v) - mx);
      ce += mx + std::log(z) - logits.at(t, static_cast<std::size_t>(s.target[t]));
    }
    ce /= static_cast<double>(s.target.size());
    ce_err = std::max(ce_err, std::abs(loss_stage2(bundle, r.image, s.instruction, s.target, 0.0).item() - ce));
  }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  const std::span<const Sample> ins(instructions.data(), 4);
  double lin_err = 0;
  for (int k = 0; k < 20; ++k) {
    const std::array<double, 3> a{u(rng), u(rng), u(rng) * 0.01}, b{u(rng), u(rng), u(rng) * 0.01};
    const double lhs = loss_stage3(bundle, reports, ins, {a[0] + b[0], a[1] + b[1], a[2] + b[2]}).item();
    const double rhs = loss_stage3(bundle, reports, ins, a).item() + loss_stage3(bundle, reports, ins, b).item();
    lin_err = std::max(lin_err, std::abs(lhs - rhs));
  }
  return {ce_err <= 1e-12 && lin_err <= 1e-9,
          "lambda=0 vs hand CE max diff " + fmt("%.1e", ce_err) + " (<= 1e-12); alpha additivity max diff " +
              fmt("%.1e", lin_err) + " over 20 pairs (<= 1e-9)"};
}

// ---- overfit --------------------------------------------------------------

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  RuleBasedClient client;
  const auto corpus = build_corpus(200, KindMix{}, 4, client);
  std::vector<CorpusRecord> memo;
  std::set<std::string> seen;
  for (const auto& r : corpus)
    if (r.kind == SampleKind::Caption && r.split == Split::Train && memo.size() < 8 && seen.insert(r.target).second) memo.push_back(r);

  TrainConfig config;  // default toy bundle
  auto bundle = initial_bundle(config, memo);
  bundle.set_frozen({});
  std::vector<Sample> samples;
  std::size_t tokens = 0;
  for (const auto& r : memo) {
    samples.push_back(make_sample(r, bundle.vocab));
    tokens += samples.back().target.size();
  }
  Adam adam;
  const auto params = bundle.parameters();
  double nll = 1e9;
  std::size_t step = 0;
  for (; step < 2000 && nll >= 0.01; ++step) {
    bundle.zero_grads();
    double total = 0;
    for (const auto& s : samples) {
      const auto loss = sample_nll(bundle, bundle.visual_prefix(*s.image), s.instruction, s.target);
      // Token-weighted so the tracked value is the mean NLL per token.
      const double w = static_cast<double>(s.target.size()) / static_cast<double>(tokens);
      total += w * loss.item();
      backward(scale(loss, w));
    }
    nll = total;
    if (nll >= 0.01) adam.step(params, 1e-3);
  }
  bundle.zero_grads();
  std::size_t reproduced = 0;
  for (const auto& s : samples) {
    const auto ids = generate_ids(bundle, *s.image, s.instruction, {s.target.size() + 8, true});
    reproduced += ids == s.target;
  }
  const double secs = seconds_since(t0);
  return {nll < 0.01 && secs < 300 && reproduced == samples.size(),
          "NLL/token " + fmt("%.2e", nll) + " after " + std::to_string(step) + " steps (< 0.01 within 2000), " +
              std::to_string(reproduced) + "/" + std::to_string(samples.size()) + " captions decoded verbatim, " +
              fmt("%.0f", secs) + " s (< 300 s)"};
}

// ---- ablation -------------------------------------------------------------

Outcome ablation() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto base = TrainConfig::load(kConfigs / "ablation.ini");
  std::size_t ordered = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RuleBasedClient client;
    const auto corpus = build_corpus(2000, KindMix{}, sub_seed(seed, "corpus"), client);
    auto config = base;
    config.seed = seed;
    const auto result = run_ablation(config, corpus);
    ordered += result.ordered();
    detail += " s" + std::to_string(seed) + (result.ordered() ? "[ok " : "[no ");
    for (const char* name : {"baseline", "(a)", "(b)", "full"})
      detail += fmt("%.3f", result.row(name).generation.rouge_l) + (std::string(name) == "full" ? "]" : "<");
  }
  const double secs = seconds_since(t0);
  return {ordered >= 4 && secs < 1800, std::to_string(ordered) + "/5 seeds ordered (>= 4), " + fmt("%.0f", secs) +
                                           " s (< 1800 s); R-L baseline<(a)<(b)<full:" + detail};
}

// ---- metrics --------------------------------------------------------------

Outcome metrics() {
  using namespace re3::oracle;
  std::mt19937_64 rng(100);
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    const auto ref = random_words(rng, 1, 14), hyp = random_words(rng, 1, 14);
    worst = std::max(worst, std::abs(rouge_l(join(ref), join(hyp)).f - rouge_oracle(ref, hyp)));
    worst = std::max(worst, std::abs(bleu_2(join(ref), join(hyp)) - bleu_oracle(ref, hyp)));
    worst = std::max(worst, std::abs(meteor_simplified(join(ref), join(hyp)) - meteor_oracle(ref, hyp)));
  }
  std::uniform_int_distribution<int> level(0, 5);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> s(30);
    std::vector<bool> y(30);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = level(rng) / 5.0;
      y[i] = i % 3 == 0 ? true : i % 3 == 1 ? false : level(rng) > 2;
    }
    worst = std::max(worst, std::abs(auc(s, y) - auc_oracle(s, y)));
  }
  const Labeler labeler;
  for (int k = 0; k < 100; ++k) {
    const auto ref = planted_graph(rng), hyp = planted_graph(rng);
    worst = std::max(worst, std::abs(radgraph_f1_proxy(ref.text, hyp.text, labeler) - graph_f1(ref, hyp)));
  }
  const double fixture = rouge_l("no acute cardiopulmonary abnormality", "no acute abnormality").f;
  const double fixture_oracle = rouge_oracle({"no", "acute", "cardiopulmonary", "abnormality"}, {"no", "acute", "abnormality"});
  const double fixture_err = std::abs(fixture - fixture_oracle);
  return {worst <= 1e-10 && fixture_err <= 1e-6,
          "5 metrics x 100 cases max diff " + fmt("%.1e", worst) + " (<= 1e-10); fixture R-L F " + fmt("%.6f", fixture) +
              " vs oracle diff " + fmt("%.1e", fixture_err) + " (<= 1e-6)"};
}

// ---- end-to-end runs (shared by labeler, determinism and latency) ------------

struct EndToEnd {
  fs::path dir_a, dir_b;
  int exit_a = -1, exit_b = -1;
  double seconds_a = 0;
  std::string error;
};

EndToEnd& end_to_end() {
  static EndToEnd run = [] {
    EndToEnd r;
    const auto root = fs::temp_directory_path() / "re3_acceptance";
    fs::remove_all(root);
    r.dir_a = root / "run_a";
    r.dir_b = root / "run_b";
    std::ostringstream out, err;
    const auto t0 = std::chrono::steady_clock::now();
    r.exit_a = dispatch({"pipeline", "--seed", "1", "--config", kRecipe.string(), "--out", r.dir_a.string()}, out, err);
    r.seconds_a = seconds_since(t0);
    r.exit_b = dispatch({"pipeline", "--seed", "1", "--config", kRecipe.string(), "--out", r.dir_b.string()}, out, err);
    r.error = err.str();
    return r;
  }();
  return run;
}

Outcome labeler() {
  // Rule-based labels on freshly synthesized reports.
  std::mt19937_64 rng(500);
  RuleBasedClient client;
  const Labeler lab;
  std::size_t exact = 0;
  for (int k = 0; k < 500; ++k) {
    const auto findings = sample_findings(rng);
    const auto note = synthesize_note(case_sections(findings, rng), client);
    const auto v = lab.label(note.findings_text);
    std::array<bool, kNumFindings> planted{};
    for (const auto& f : findings) planted[static_cast<std::size_t>(f.finding)] = true;
    bool same = true;
    for (std::size_t f = 0; f < kNumFindings; ++f) same = same && v.flagged(finding_at(f)) == planted[f];
    exact += same;
  }
  const double agreement = static_cast<double>(exact) / 500.0;

  // Per-finding AUC from the end-to-end metric report.
  auto& run = end_to_end();
  if (run.exit_a != 0) return {false, "pipeline failed (exit " + std::to_string(run.exit_a) + "): " + run.error};
  std::istringstream in(slurp(run.dir_a / "metrics.txt"));
  std::string line, failing;
  bool in_auc = false;
  std::size_t eligible = 0;
  double lowest = 1.0;
  while (std::getline(in, line)) {
    if (line == "[auc]") {
      in_auc = true;
      std::getline(in, line);  // header
      continue;
    }
    if (!in_auc) continue;
    if (line.empty()) break;
    std::istringstream row(line);
    std::string name, pos, neg, value;
    std::getline(row, name, '\t');
    std::getline(row, pos, '\t');
    std::getline(row, neg, '\t');
    std::getline(row, value, '\t');
    if (std::stoul(pos) < 20 || value == "n/a") continue;
    ++eligible;
    const double a = std::stod(value);
    lowest = std::min(lowest, a);
    if (!(a > 0.80)) failing += " " + name + "=" + value.substr(0, 5);
  }
  return {agreement >= 0.95 && eligible > 0 && failing.empty(),
          "exact agreement " + fmt("%.3f", agreement) + " on 500 reports (>= 0.95); " + std::to_string(eligible) +
              " findings with >= 20 positives, min AUC " + fmt("%.3f", lowest) + " (> 0.80)" +
              (failing.empty() ? "" : "; below:" + failing)};
}

Outcome radcliq() {
  std::mt19937_64 rng(1000);
  std::uniform_real_distribution<double> u(0.0, 1.0), step(1e-6, 0.5);
  std::size_t violations = 0;
  for (int k = 0; k < 1000; ++k) {
    std::array<double, 4> v{u(rng), u(rng), u(rng), u(rng)};
    const double base = radcliq_proxy({v[0], v[1], v[2], v[3]});
    for (std::size_t i = 0; i < 4; ++i) {
      auto w = v;
      w[i] += step(rng);
      violations += !(radcliq_proxy({w[0], w[1], w[2], w[3]}) < base);
    }
  }
  return {violations == 0, "1000 vectors x 4 components, " + std::to_string(violations) + " non-decreasing cases"};
}

Outcome determinism() {
  auto& run = end_to_end();
  if (run.exit_a != 0 || run.exit_b != 0) return {false, "pipeline failed: " + run.error};
  const auto a = slurp(run.dir_a / "metrics.txt"), b = slurp(run.dir_b / "metrics.txt");
  std::set<std::string> files;
  for (const auto& e : fs::directory_iterator(run.dir_a)) files.insert(e.path().filename().string());
  std::string listing;
  for (const auto& f : files) listing += (listing.empty() ? "" : ",") + f;
  return {!a.empty() && a == b, std::string(a == b ? "metric reports byte-identical" : "metric reports DIFFER") +
                                    " (" + std::to_string(a.size()) + " bytes); artifacts " + listing +
                                    "; one pipeline run " + fmt("%.0f", run.seconds_a) + " s"};
}

Outcome latency() {
  auto& run = end_to_end();
  if (run.exit_a != 0) return {false, "pipeline failed: " + run.error};
  const auto bundle = load_checkpoint(run.dir_a / "stage3.ckpt");
  const auto corpus = read_corpus(run.dir_a / "corpus.jsonl");
  LatencyOptions shorter{16, 1, false, 10}, longer{32, 1, false, 10};
  const auto s = measure_latency(bundle, corpus, shorter), l = measure_latency(bundle, corpus, longer);
  bool ok = true;
  std::string detail;
  for (std::size_t t = 0; t < s.size(); ++t) {
    for (const auto* x : {&s[t], &l[t]}) ok = ok && x->min <= x->mean && x->mean <= x->max && !x->samples.empty();
    ok = ok && l[t].mean >= s[t].mean;
    detail += std::string(task_name(s[t].task)) + " mean " + fmt("%.4f", s[t].mean) + " s in [" +
              fmt("%.4f", s[t].min) + ", " + fmt("%.4f", s[t].max) + "], doubled length " +
              fmt("%.4f", l[t].mean) + " s; ";
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradients", gradients}, {"freeze", freeze},     {"composition", composition},
      {"overfit", overfit},     {"ablation", ablation}, {"metrics", metrics},
      {"labeler", labeler},     {"radcliq", radcliq},   {"determinism", determinism},
      {"latency", latency},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
