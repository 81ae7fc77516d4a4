#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "re3/radex.hpp"
#include "re3/seed.hpp"

namespace re3 {

namespace {

using json = nlohmann::ordered_json;

constexpr std::array<std::string_view, 4> kKindNames{"caption", "instruction", "report", "summarization-pair"};

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

template <typename T>
const T& pick(const std::vector<T>& items, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, items.size() - 1);
  return items[d(rng)];
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) s.replace(pos, from.size(), to);
  return s;
}

std::string join_phrases(const std::vector<std::string>& phrases) {
  std::string out;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (i > 0) out += (i + 1 == phrases.size()) ? " and " : ", ";
    out += phrases[i];
  }
  return out;
}

std::vector<FindingSpec> sorted(std::vector<FindingSpec> f) {
  std::sort(f.begin(), f.end(), [](const FindingSpec& a, const FindingSpec& b) { return a.finding < b.finding; });
  return f;
}

// Fills instruction and target for an instruction-kind record.
void conversational_sample(CorpusRecord& rec, const Note& note, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double task = u(rng);
  const bool normal = rec.findings.front().finding == Finding::NoFinding;
  if (task < 0.3) {
    rec.instruction = pick(generation_instructions(), rng);
    rec.target = note.findings_text;
  } else if (task < 0.6) {
    FindingSpec asked;
    const auto labels = rec.labels();
    if (!normal && u(rng) < 0.5) {
      asked = pick(rec.findings, rng);
    } else {
      std::vector<std::size_t> absent;
      for (std::size_t i = 1; i < kNumFindings; ++i)
        if (!labels[i]) absent.push_back(i);
      asked.finding = finding_at(pick(absent, rng));
    }
    const auto name = lower(std::string(finding_name(asked.finding)));
    rec.instruction = replace_all(pick(presence_instructions(), rng), "{finding}", name);
    if (labels[static_cast<std::size_t>(asked.finding)]) {
      rec.target = "Yes, " + finding_phrase(asked) + " is seen.";
    } else {
      rec.target = "No, there is no " + name + ".";
    }
  } else if (task < 0.8) {
    rec.instruction = pick(abnormality_instructions(), rng);
    if (normal) {
      rec.target = "No acute abnormality is seen.";
    } else {
      std::vector<std::string> phrases;
      for (const auto& f : sorted(rec.findings)) phrases.push_back(finding_phrase(f));
      rec.target = "The image shows " + join_phrases(phrases) + ".";
    }
  } else {
    rec.instruction = pick(impression_instructions(), rng);
    rec.target = note.impression_text;
  }
}

std::string hex_image(const Image& img) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(img.pixels.size() * 2);
  for (double v : img.pixels) {
    const auto b = static_cast<unsigned>(std::lround(v * 255.0));
    out += digits[b >> 4];
    out += digits[b & 15];
  }
  return out;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace

std::string_view kind_name(SampleKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

std::optional<SampleKind> kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == name) return static_cast<SampleKind>(i);
  return std::nullopt;
}

std::string_view split_name(Split s) { return s == Split::Train ? "train" : "test"; }

const std::vector<std::string>& generation_instructions() {
  static const std::vector<std::string> v{
      "Describe the findings in this chest x-ray.",   "Write the findings section for this image.",
      "What are the findings on this radiograph?",    "Generate a findings report for this chest x-ray.",
      "Provide the findings for this study.",         "Report the findings seen in this image.",
      "Describe what you see in this chest radiograph.", "Create the findings section from the provided image.",
  };
  return v;
}

const std::vector<std::string>& summarization_instructions() {
  static const std::vector<std::string> v{
      "Summarize the following findings into an impression:", "Write the impression for these findings:",
      "Formulate the impression section using the findings:", "Provide a concise impression based on these findings:",
      "What is the impression given the following findings?", "Condense these findings into an impression:",
      "Generate the impression from the findings below:",    "Create an impression statement for these findings:",
  };
  return v;
}

const std::vector<std::string>& presence_instructions() {
  static const std::vector<std::string> v{
      "Is there evidence of {finding} in this image?", "Does this chest x-ray show {finding}?",
      "Can you see {finding} on this radiograph?",     "Is {finding} present?",
      "Do you observe any {finding}?",                 "Is there any sign of {finding}?",
      "Does the image demonstrate {finding}?",         "Check this x-ray for {finding}.",
  };
  return v;
}

const std::vector<std::string>& abnormality_instructions() {
  static const std::vector<std::string> v{
      "What abnormalities are visible in this image?", "List the abnormal findings.",
      "Which abnormalities does this chest x-ray show?", "What is abnormal in this radiograph?",
      "Identify any abnormalities in this image.",      "Are there any abnormalities? Describe them.",
      "Name the abnormal findings on this study.",      "Point out the abnormalities in this chest x-ray.",
  };
  return v;
}

const std::vector<std::string>& impression_instructions() {
  static const std::vector<std::string> v{
      "What is the impression for this chest x-ray?", "Give the impression for this study.",
      "Summarize this image in an impression.",       "Provide the radiological impression.",
      "What is your overall impression of this radiograph?", "Write the impression section for this image.",
      "State the impression for this chest x-ray.",   "Offer a brief impression of this study.",
  };
  return v;
}

KindMix KindMix::parse(std::string_view text) {
  KindMix mix{0, 0, 0, 0};
  std::stringstream ss{std::string(text)};
  for (std::string item; std::getline(ss, item, ',');) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw BadProportions("expected kind=value, got '" + item + "'");
    const auto key = item.substr(0, eq);
    double value = 0;
    try {
      value = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw BadProportions("bad proportion '" + item + "'");
    }
    if (key == "caption") mix.caption = value;
    else if (key == "instruction") mix.instruction = value;
    else if (key == "report") mix.report = value;
    else if (key == "summarization" || key == "summarization-pair") mix.summarization = value;
    else throw BadProportions("unknown sample kind '" + key + "'");
  }
  mix.validate();
  return mix;
}

std::string KindMix::to_string() const {
  std::ostringstream os;
  os << "caption=" << caption << ",instruction=" << instruction << ",report=" << report
     << ",summarization=" << summarization;
  return os.str();
}

void KindMix::validate() const {
  for (double p : {caption, instruction, report, summarization})
    if (!(p >= 0.0)) throw BadProportions("proportions must be nonnegative");
  if (std::abs(caption + instruction + report + summarization - 1.0) > 1e-9) {
    throw BadProportions("proportions sum to " + std::to_string(caption + instruction + report + summarization));
  }
}

std::vector<FindingSpec> sample_findings(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < 0.3) return {FindingSpec{}};
  std::vector<std::size_t> pool;
  for (std::size_t i = 1; i < kNumFindings; ++i) pool.push_back(i);
  std::uniform_int_distribution<int> extra(0, 2);
  const auto count = 1 + static_cast<std::size_t>(extra(rng));
  std::vector<FindingSpec> out;
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
    const auto at = d(rng);
    FindingSpec spec;
    spec.finding = finding_at(pool[at]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(at));
    std::uniform_int_distribution<int> sev(1, 3);
    spec.severity = static_cast<Severity>(sev(rng));
    if (spec.finding == Finding::Edema) {
      spec.laterality = Laterality::Bilateral;
    } else if (is_lateral(spec.finding)) {
      const double side = u(rng);
      spec.laterality = side < 0.45 ? Laterality::Left : side < 0.9 ? Laterality::Right : Laterality::Bilateral;
      if (spec.finding != Finding::PleuralEffusion && spec.laterality == Laterality::Bilateral)
        spec.laterality = Laterality::Right;
    }
    out.push_back(spec);
  }
  return out;
}

std::vector<CorpusRecord> build_corpus(std::size_t n, const KindMix& mix, std::uint64_t seed,
                                       GenerationClient& client) {
  mix.validate();
  if (n < 10) throw ConfigError("corpus needs at least 10 records, got " + std::to_string(n));

  // Exact kind counts by largest remainder.
  const std::array<double, 4> props{mix.caption, mix.instruction, mix.report, mix.summarization};
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> rest{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double exact = props[k] * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    rest[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  while (assigned < n) {
    const auto k = static_cast<std::size_t>(std::max_element(rest.begin(), rest.end()) - rest.begin());
    ++counts[k];
    rest[k] = -1.0;
    ++assigned;
  }
  std::vector<SampleKind> kinds;
  for (std::size_t k = 0; k < 4; ++k) kinds.insert(kinds.end(), counts[k], static_cast<SampleKind>(k));
  std::mt19937_64 kind_rng(sub_seed(seed, "kinds"));
  std::shuffle(kinds.begin(), kinds.end(), kind_rng);

  std::vector<CorpusRecord> records(n);
  for (std::size_t id = 0; id < n; ++id) {
    auto& rec = records[id];
    const auto record_seed = sub_seed(seed, static_cast<std::uint64_t>(id));
    std::mt19937_64 rng(record_seed);
    rec.record_id = id;
    rec.kind = kinds[id];
    rec.findings = sample_findings(rng);
    rec.image = render_image(rec.findings, sub_seed(record_seed, "image"));
    auto sections = case_sections(rec.findings, rng);
    const auto note = synthesize_note(sections, client);
    sections.findings_text = note.findings_text;
    sections.impression_text = note.impression_text;
    switch (rec.kind) {
      case SampleKind::Caption:
        rec.target = caption_for(rec.findings);
        break;
      case SampleKind::Report:
        rec.instruction = pick(generation_instructions(), rng);
        rec.target = note.findings_text;
        rec.sections = sections;
        break;
      case SampleKind::Summarization:
        rec.instruction = pick(summarization_instructions(), rng) + " " + note.findings_text;
        rec.target = note.impression_text;
        rec.sections = sections;
        break;
      case SampleKind::Instruction:
        conversational_sample(rec, note, rng);
        break;
    }
  }

  // 80/20 split stratified by (kind, primary finding).
  std::map<std::pair<int, int>, std::vector<std::size_t>> strata;
  for (const auto& rec : records)
    strata[{static_cast<int>(rec.kind), static_cast<int>(rec.findings.front().finding)}].push_back(rec.record_id);
  std::mt19937_64 split_rng(sub_seed(seed, "split"));
  for (auto& [key, ids] : strata) {
    std::shuffle(ids.begin(), ids.end(), split_rng);
    const auto test = static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(ids.size())));
    for (std::size_t i = 0; i < ids.size(); ++i) records[ids[i]].split = i < test ? Split::Test : Split::Train;
  }
  // Any finding seen at least five times must reach the test split.
  for (std::size_t f = 0; f < kNumFindings; ++f) {
    std::size_t total = 0, in_test = 0;
    for (const auto& rec : records)
      if (rec.labels()[f]) {
        ++total;
        in_test += rec.split == Split::Test;
      }
    if (total < 5 || in_test > 0) continue;
    for (auto it = records.rbegin(); it != records.rend(); ++it)
      if (it->labels()[f]) {
        it->split = Split::Test;
        break;
      }
  }
  return records;
}

std::string record_to_json(const CorpusRecord& rec) {
  json j;
  j["format_version"] = kCorpusFormatVersion;
  j["record_id"] = rec.record_id;
  j["kind"] = kind_name(rec.kind);
  j["split"] = split_name(rec.split);
  j["instruction"] = rec.instruction;
  j["target"] = rec.target;
  json findings = json::array();
  for (const auto& f : rec.findings) {
    findings.push_back({{"finding", finding_name(f.finding)},
                        {"laterality", laterality_name(f.laterality)},
                        {"severity", severity_name(f.severity)}});
  }
  j["findings"] = findings;
  if (rec.sections) {
    j["sections"] = {{"case_description", rec.sections->case_description},
                     {"case_presentation", rec.sections->case_presentation},
                     {"case_discussion", rec.sections->case_discussion},
                     {"findings_text", rec.sections->findings_text},
                     {"impression_text", rec.sections->impression_text}};
  } else {
    j["sections"] = nullptr;
  }
  j["image"] = {{"side", rec.image.side}, {"hex", hex_image(rec.image)}};
  return j.dump();
}

CorpusRecord record_from_json(std::string_view line) {
  CorpusRecord rec;
  json j;
  try {
    j = json::parse(line);
  } catch (const std::exception& e) {
    throw CorpusFormatError(std::string("malformed JSON: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kCorpusFormatVersion) {
      throw CorpusFormatError("unsupported format_version " + j.at("format_version").dump());
    }
    rec.record_id = j.at("record_id").get<std::size_t>();
    const auto where = "record " + std::to_string(rec.record_id) + ": ";
    const auto kind = kind_from_name(j.at("kind").get<std::string>());
    if (!kind) throw CorpusFormatError(where + "unknown kind " + j.at("kind").dump());
    rec.kind = *kind;
    const auto split = j.at("split").get<std::string>();
    if (split != "train" && split != "test") throw CorpusFormatError(where + "unknown split '" + split + "'");
    rec.split = split == "train" ? Split::Train : Split::Test;
    rec.instruction = j.at("instruction").get<std::string>();
    rec.target = j.at("target").get<std::string>();
    for (const auto& f : j.at("findings")) {
      const auto finding = finding_from_name(f.at("finding").get<std::string>());
      const auto lat = laterality_from_name(f.at("laterality").get<std::string>());
      const auto sev = severity_from_name(f.at("severity").get<std::string>());
      if (!finding || !lat || !sev) throw CorpusFormatError(where + "bad finding entry " + f.dump());
      rec.findings.push_back({*finding, *lat, *sev});
    }
    if (!j.at("sections").is_null()) {
      const auto& s = j.at("sections");
      rec.sections = NoteSections{s.at("case_description").get<std::string>(), s.at("case_presentation").get<std::string>(),
                                  s.at("case_discussion").get<std::string>(), s.at("findings_text").get<std::string>(),
                                  s.at("impression_text").get<std::string>()};
    }
    const auto side = j.at("image").at("side").get<std::size_t>();
    const auto hex = j.at("image").at("hex").get<std::string>();
    if (hex.size() != side * side * 2) throw CorpusFormatError(where + "image payload has wrong length");
    rec.image = Image::blank(side);
    for (std::size_t i = 0; i < side * side; ++i) {
      const int hi = hex_value(hex[2 * i]), lo = hex_value(hex[2 * i + 1]);
      if (hi < 0 || lo < 0) throw CorpusFormatError(where + "image payload is not lowercase hex");
      rec.image.pixels[i] = static_cast<double>(hi * 16 + lo) / 255.0;
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorpusFormatError(std::string("missing or mistyped field: ") + e.what());
  }
  return rec;
}

void write_corpus(const std::vector<CorpusRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusFormatError("cannot open " + path.string() + " for writing");
  for (const auto& rec : records) out << record_to_json(rec) << '\n';
  if (!out) throw CorpusFormatError("write failed for " + path.string());
}

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusFormatError("cannot open " + path.string());
  std::vector<CorpusRecord> records;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(line));
    } catch (const CorpusFormatError& e) {
      throw CorpusFormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void validate_corpus(const std::vector<CorpusRecord>& records) {
  if (records.empty()) throw CorpusFormatError("corpus is empty");
  std::vector<bool> seen(records.size(), false);
  for (const auto& rec : records) {
    const auto where = "record " + std::to_string(rec.record_id) + ": ";
    if (rec.record_id >= records.size() || seen[rec.record_id]) throw CorpusFormatError(where + "duplicate or out-of-range id");
    seen[rec.record_id] = true;
    if (rec.image.side != kImageSide || rec.image.pixels.size() != kImageSide * kImageSide)
      throw CorpusFormatError(where + "image is not 32x32");
    for (double v : rec.image.pixels)
      if (!(v >= 0.0 && v <= 1.0)) throw CorpusFormatError(where + "pixel outside [0,1]");
    try {
      check_findings(rec.findings);
    } catch (const ConflictingFindings& e) {
      throw CorpusFormatError(where + e.what());
    }
    if (rec.target.empty()) throw CorpusFormatError(where + "empty target");
    const auto target = " " + lower(rec.target);
    for (const auto& p : stop_patterns())
      if (target.find(p) != std::string::npos) throw CorpusFormatError(where + "target contains '" + p + "'");
    switch (rec.kind) {
      case SampleKind::Caption:
        if (!rec.instruction.empty()) throw CorpusFormatError(where + "caption records carry no instruction");
        break;
      case SampleKind::Report:
        if (!rec.sections || rec.sections->findings_text.empty() || rec.sections->impression_text.empty())
          throw CorpusFormatError(where + "report records need findings and impression text");
        break;
      case SampleKind::Summarization:
        if (!rec.sections || rec.sections->findings_text.empty() ||
            rec.instruction.find(rec.sections->findings_text) == std::string::npos)
          throw CorpusFormatError(where + "summarization instruction must carry the findings text");
        break;
      case SampleKind::Instruction:
        if (rec.instruction.empty()) throw CorpusFormatError(where + "instruction records need an instruction");
        break;
    }
  }
}

}  // namespace re3
