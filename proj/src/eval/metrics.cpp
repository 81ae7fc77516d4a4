#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "re3/error.hpp"
#include "re3/eval.hpp"

namespace re3 {

std::vector<std::string> metric_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (auto& tok : word_tokens(text)) {
    if (std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isalnum(c); }))
      out.push_back(std::move(tok));
  }
  return out;
}

Prf rouge_l(std::string_view reference, std::string_view hypothesis) {
  const auto ref = metric_tokens(reference), hyp = metric_tokens(hypothesis);
  if (ref.empty() || hyp.empty()) return {};
  std::vector<std::size_t> prev(hyp.size() + 1, 0), cur(hyp.size() + 1, 0);
  for (const auto& r : ref) {
    for (std::size_t j = 0; j < hyp.size(); ++j)
      cur[j + 1] = r == hyp[j] ? prev[j] + 1 : std::max(prev[j + 1], cur[j]);
    std::swap(prev, cur);
  }
  const auto lcs = static_cast<double>(prev.back());
  Prf out;
  out.precision = lcs / static_cast<double>(hyp.size());
  out.recall = lcs / static_cast<double>(ref.size());
  if (out.precision + out.recall > 0) out.f = 2 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& toks, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[{toks.begin() + i, toks.begin() + i + n}];
  return out;
}

}  // namespace

double bleu_2(std::span<const std::string> references, std::string_view hypothesis) {
  const auto hyp = metric_tokens(hypothesis);
  if (hyp.empty() || references.empty()) return 0.0;
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : references) refs.push_back(metric_tokens(r));

  double log_p = 0.0;
  for (std::size_t n = 1; n <= 2; ++n) {
    std::size_t clipped = 0, total = 0;
    std::vector<NgramCounts> ref_counts;
    for (const auto& r : refs) ref_counts.push_back(ngrams(r, n));
    for (const auto& [gram, count] : ngrams(hyp, n)) {
      std::size_t best = 0;
      for (const auto& rc : ref_counts)
        if (auto it = rc.find(gram); it != rc.end()) best = std::max(best, it->second);
      clipped += std::min(count, best);
      total += count;
    }
    const double p = clipped > 0 ? static_cast<double>(clipped) / static_cast<double>(total) : kBleuEpsilon;
    log_p += 0.5 * std::log(p);
  }

  // Closest reference length, shorter on ties.
  const auto c = hyp.size();
  std::size_t r = refs.front().size();
  for (const auto& ref : refs) {
    const auto d = [&](std::size_t len) { return len > c ? len - c : c - len; };
    if (d(ref.size()) < d(r) || (d(ref.size()) == d(r) && ref.size() < r)) r = ref.size();
  }
  const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
  return bp * std::exp(log_p);
}

double bleu_2(std::string_view reference, std::string_view hypothesis) {
  const std::string ref(reference);
  return bleu_2(std::span<const std::string>(&ref, 1), hypothesis);
}

double meteor_simplified(std::string_view reference, std::string_view hypothesis) {
  const auto ref = metric_tokens(reference), hyp = metric_tokens(hypothesis);
  if (ref.empty() || hyp.empty()) return 0.0;
  std::vector<bool> used(ref.size(), false);
  std::vector<long> align(hyp.size(), -1);
  std::size_t matches = 0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && ref[j] == hyp[i]) {
        used[j] = true;
        align[i] = static_cast<long>(j);
        ++matches;
        break;
      }
    }
  }
  if (matches == 0) return 0.0;
  std::size_t chunks = 0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (align[i] < 0) continue;
    if (i == 0 || align[i - 1] < 0 || align[i - 1] + 1 != align[i]) ++chunks;
  }
  const double m = static_cast<double>(matches);
  const double p = m / static_cast<double>(hyp.size()), r = m / static_cast<double>(ref.size());
  const double fmean = 10 * p * r / (r + 9 * p);
  const double penalty = 0.5 * std::pow(static_cast<double>(chunks) / m, 3);
  return fmean * (1.0 - penalty);
}

// ---- embeddings -------------------------------------------------------------

Embedder Embedder::from_bundle(const ModelBundle& bundle) {
  Embedder e;
  e.vocab_ = bundle.vocab;
  for (const auto& p : bundle.language.parameters()) {
    if (p.name != "language.tok_emb") continue;
    e.dim_ = p.tensor.cols();
    e.table_.assign(p.tensor.data().begin(), p.tensor.data().end());
  }
  if (e.dim_ == 0) throw EmbedderMissing("bundle has no token embedding table");
  return e;
}

std::vector<std::vector<double>> Embedder::token_vectors(std::string_view text) const {
  if (empty()) throw EmbedderMissing("embedder is not loaded");
  std::vector<std::vector<double>> out;
  for (const auto& tok : metric_tokens(text)) {
    const auto row = static_cast<std::size_t>(vocab_.id(tok));
    out.emplace_back(table_.begin() + static_cast<long>(row * dim_), table_.begin() + static_cast<long>((row + 1) * dim_));
  }
  return out;
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const double ab = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double aa = std::inner_product(a.begin(), a.end(), a.begin(), 0.0);
  const double bb = std::inner_product(b.begin(), b.end(), b.begin(), 0.0);
  if (aa == 0 || bb == 0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

std::vector<double> mean_pool(const std::vector<std::vector<double>>& vs) {
  std::vector<double> out(vs.front().size(), 0.0);
  for (const auto& v : vs)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += v[i];
  for (auto& x : out) x /= static_cast<double>(vs.size());
  return out;
}

}  // namespace

double embed_similarity(std::string_view reference, std::string_view hypothesis, const Embedder& embedder) {
  const auto ref = embedder.token_vectors(reference), hyp = embedder.token_vectors(hypothesis);
  if (ref.empty() || hyp.empty()) return 0.0;
  std::vector<double> best_h(hyp.size(), -1.0), best_r(ref.size(), -1.0);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    for (std::size_t j = 0; j < hyp.size(); ++j) {
      const double c = cosine(ref[i], hyp[j]);
      best_r[i] = std::max(best_r[i], c);
      best_h[j] = std::max(best_h[j], c);
    }
  }
  const double p = std::accumulate(best_h.begin(), best_h.end(), 0.0) / static_cast<double>(hyp.size());
  const double r = std::accumulate(best_r.begin(), best_r.end(), 0.0) / static_cast<double>(ref.size());
  // The harmonic mean is only meaningful for positive parts.
  return p > 0 && r > 0 ? 2 * p * r / (p + r) : 0.5 * (p + r);
}

double chex_similarity(std::string_view reference, std::string_view hypothesis, const Embedder& embedder) {
  const auto ref = embedder.token_vectors(reference), hyp = embedder.token_vectors(hypothesis);
  if (ref.empty() || hyp.empty()) return 0.0;
  return cosine(mean_pool(ref), mean_pool(hyp));
}

// ---- composite and AUC ---------------------------------------------------------

double radcliq_proxy(const RadCliqInputs& in, const RadCliqWeights& weights) {
  for (double w : weights.w)
    if (w < 0) throw ConfigError("radcliq weights must be nonnegative");
  if (!in.bleu) throw MissingComponent("radcliq needs bleu");
  if (!in.embed_sim) throw MissingComponent("radcliq needs embed_sim");
  if (!in.chex_sim) throw MissingComponent("radcliq needs chex_sim");
  if (!in.radgraph_f1) throw MissingComponent("radcliq needs radgraph_f1");
  return weights.c0 - weights.w[0] * *in.bleu - weights.w[1] * *in.embed_sim - weights.w[2] * *in.chex_sim -
         weights.w[3] * *in.radgraph_f1;
}

double auc(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ShapeMismatch("auc needs one label per score");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double concordant = 0, ties = 0, negatives_below = 0, positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double pos = 0, neg = 0;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) (labels[order[j]] ? pos : neg) += 1;
    concordant += pos * negatives_below;
    ties += pos * neg;
    negatives_below += neg;
    positives += pos;
    i = j;
  }
  if (positives == 0 || negatives_below == 0)
    throw DegenerateLabels("auc needs at least one positive and one negative label");
  return (concordant + 0.5 * ties) / (positives * negatives_below);
}

}  // namespace re3
