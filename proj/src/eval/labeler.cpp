#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "re3/error.hpp"
#include "re3/eval.hpp"

namespace re3 {

std::string_view mention_name(Mention m) {
  switch (m) {
    case Mention::Absent: return "absent";
    case Mention::Negative: return "negative";
    case Mention::Uncertain: return "uncertain";
    case Mention::Positive: return "positive";
  }
  return "?";
}

bool LabelVector::flagged(Finding f) const {
  const auto m = (*this)[f];
  return m == Mention::Positive || m == Mention::Uncertain;
}

Lexicon Lexicon::parse(std::string_view text) {
  static const std::set<std::string> kinds{"finding", "anatomy", "negation", "uncertainty"};
  Lexicon lex;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, '\t');) cols.push_back(col);
    const auto where = "lexicon line " + std::to_string(line_no);
    if (cols.size() != 3) throw ConfigError(where + ": expected kind<TAB>label<TAB>phrase");
    if (!kinds.count(cols[0])) throw ConfigError(where + ": unknown kind '" + cols[0] + "'");
    if (cols[0] == "finding" && !finding_from_name(cols[1]))
      throw ConfigError(where + ": unknown finding '" + cols[1] + "'");
    if (metric_tokens(cols[2]).empty()) throw ConfigError(where + ": empty phrase");
    lex.entries_.push_back({cols[0], cols[1], cols[2]});
  }
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact("cannot read lexicon " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const Lexicon& Lexicon::standard() {
  static const Lexicon lex = parse(standard_text());
  return lex;
}

std::vector<std::vector<std::string>> sentences(std::string_view text) {
  std::vector<std::vector<std::string>> out;
  std::string current;
  auto flush = [&] {
    if (auto toks = metric_tokens(current); !toks.empty()) out.push_back(std::move(toks));
    current.clear();
  };
  for (char c : text) {
    if (c == '.' || c == '!' || c == '?' || c == ';' || c == '\n') flush();
    else current.push_back(c);
  }
  flush();
  return out;
}

Labeler::Labeler(const Lexicon& lexicon) : entries_(lexicon.entries()) {
  for (const auto& e : entries_) phrases_.push_back(metric_tokens(e.phrase));
}

std::vector<Labeler::Span> Labeler::spans(const std::vector<std::string>& sentence) const {
  std::vector<Span> out;
  for (std::size_t i = 0; i < sentence.size();) {
    std::size_t best = phrases_.size(), best_len = 0;
    for (std::size_t k = 0; k < phrases_.size(); ++k) {
      const auto& p = phrases_[k];
      if (p.size() <= best_len || i + p.size() > sentence.size()) continue;
      if (std::equal(p.begin(), p.end(), sentence.begin() + static_cast<long>(i))) {
        best = k;
        best_len = p.size();
      }
    }
    if (best == phrases_.size()) {
      ++i;
      continue;
    }
    Span s{i, i + best_len, &entries_[best], ""};
    for (std::size_t t = i; t < s.end; ++t) s.text += (t > i ? " " : "") + sentence[t];
    out.push_back(std::move(s));
    i += best_len;
  }
  return out;
}

Mention Labeler::status(const std::vector<Span>& spans, std::size_t index) {
  const auto& target = spans[index];
  for (const auto& s : spans)
    if (s.entry->kind == "negation" && s.end <= target.begin) return Mention::Negative;
  for (const auto& s : spans)
    if (s.entry->kind == "uncertainty") return Mention::Uncertain;
  return Mention::Positive;
}

LabelVector Labeler::label(std::string_view report) const {
  LabelVector out;
  for (const auto& sentence : sentences(report)) {
    const auto found = spans(sentence);
    for (std::size_t i = 0; i < found.size(); ++i) {
      if (found[i].entry->kind != "finding") continue;
      const auto idx = static_cast<std::size_t>(*finding_from_name(found[i].entry->label));
      out.values[idx] = std::max(out.values[idx], status(found, i));
    }
  }
  const bool any = std::any_of(kFindingNames.begin() + 1, kFindingNames.end(), [&](std::string_view name) {
    return out.flagged(*finding_from_name(name));
  });
  out.values[0] = any ? Mention::Absent : Mention::Positive;
  for (std::size_t i = 0; i < kNumFindings; ++i) {
    out.scores[i] = out.values[i] == Mention::Positive ? 1.0 : out.values[i] == Mention::Uncertain ? 0.5 : 0.0;
  }
  return out;
}

// ---- graph proxy -------------------------------------------------------------

Graph extract_graph(std::string_view text, const Labeler& labeler) {
  std::set<Entity> entities;
  std::set<Relation> relations;
  for (const auto& sentence : sentences(text)) {
    const auto found = labeler.spans(sentence);
    std::vector<Entity> obs, anat;
    for (std::size_t i = 0; i < found.size(); ++i) {
      const auto& kind = found[i].entry->kind;
      if (kind == "anatomy") {
        anat.push_back({found[i].text, "ANAT"});
      } else if (kind == "finding") {
        const auto m = Labeler::status(found, i);
        obs.push_back({found[i].text, m == Mention::Negative ? "OBS-DA" : m == Mention::Uncertain ? "OBS-U" : "OBS-DP"});
      }
    }
    entities.insert(obs.begin(), obs.end());
    entities.insert(anat.begin(), anat.end());
    for (const auto& o : obs)
      for (const auto& a : anat) relations.insert({o, a});
  }
  return {{entities.begin(), entities.end()}, {relations.begin(), relations.end()}};
}

namespace {

template <typename T>
double set_f1(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<T> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return 2.0 * static_cast<double>(common.size()) / static_cast<double>(a.size() + b.size());
}

}  // namespace

double radgraph_f1_proxy(std::string_view reference, std::string_view hypothesis, const Labeler& labeler) {
  const auto ref = extract_graph(reference, labeler), hyp = extract_graph(hypothesis, labeler);
  const double fe = set_f1(ref.entities, hyp.entities);
  if (ref.relations.empty() && hyp.relations.empty()) return fe;
  return 0.5 * (fe + set_f1(ref.relations, hyp.relations));
}

}  // namespace re3
