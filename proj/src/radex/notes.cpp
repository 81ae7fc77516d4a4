#include <algorithm>
#include <cctype>
#include <sstream>

#include "re3/radex.hpp"

namespace re3 {

namespace {

const char* kPromptInstructions =
    "You are an expert medical assistant AI capable of modifying clinical documents to user specifications. "
    "You make minimal changes to the original document to satisfy user requests. You never add information "
    "that is not already directly stated in the original document. Restructure the given text into a radiology "
    "report finding. Remove any information not directly observable from the current imaging study. For "
    "instance, remove any patient demographic data, past medical history, or comparison to prior images or "
    "studies. ";

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    line = trim(line);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// Sentences end at ". " or at the end of the text.
std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (std::size_t i = 0; i < text.size(); ++i) {
    current += text[i];
    if ((text[i] == '.' || text[i] == '?' || text[i] == '!') && (i + 1 == text.size() || text[i + 1] == ' ')) {
      if (auto t = trim(current); !t.empty()) out.push_back(t);
      current.clear();
    }
  }
  if (auto t = trim(current); !t.empty()) out.push_back(t);
  return out;
}

bool has_stop_pattern(const std::string& sentence) {
  const auto s = " " + lower(sentence);
  return std::any_of(stop_patterns().begin(), stop_patterns().end(),
                     [&](const std::string& p) { return s.find(p) != std::string::npos; });
}

// "X is noted along Y." -> "Chest X-ray demonstrates x along Y."
std::optional<std::string> as_demonstrates(const std::string& sentence) {
  static const std::vector<std::string> verbs{" is noted", " are noted", " is seen", " are seen",
                                              " is identified", " are identified", " is present", " are present"};
  for (const auto& v : verbs) {
    const auto pos = sentence.find(v);
    if (pos == std::string::npos || pos == 0) continue;
    const auto rest = sentence.substr(pos + v.size());
    if (!rest.empty() && rest[0] != ' ' && rest[0] != '.') continue;
    auto subject = sentence.substr(0, pos);
    subject[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(subject[0])));
    return "Chest X-ray demonstrates " + subject + rest;
  }
  return std::nullopt;
}

std::string section_between(const std::vector<std::string>& lines, const std::string& start,
                            const std::vector<std::string>& stops) {
  std::string out;
  bool inside = false;
  for (const auto& line : lines) {
    if (line == start) {
      inside = true;
      continue;
    }
    if (inside && std::find(stops.begin(), stops.end(), line) != stops.end()) break;
    if (inside) out += (out.empty() ? "" : "\n") + line;
  }
  return out;
}

std::string join_phrases(const std::vector<std::string>& phrases) {
  std::string out;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (i > 0) out += (i + 1 == phrases.size()) ? " and " : ", ";
    out += phrases[i];
  }
  return out;
}

std::string side_word(Laterality l) {
  switch (l) {
    case Laterality::Left: return "left";
    case Laterality::Right: return "right";
    case Laterality::Bilateral: return "bilateral";
    default: return "";
  }
}

std::string size_word(Severity s, const char* small, const char* moderate, const char* large) {
  return s == Severity::Small ? small : s == Severity::Large ? large : moderate;
}

std::vector<FindingSpec> canonical_order(std::vector<FindingSpec> findings) {
  std::sort(findings.begin(), findings.end(),
            [](const FindingSpec& a, const FindingSpec& b) { return a.finding < b.finding; });
  return findings;
}

bool has(const std::vector<FindingSpec>& findings, Finding f) {
  return std::any_of(findings.begin(), findings.end(), [&](const FindingSpec& s) { return s.finding == f; });
}

// Verb used when the finding is stated in a case description.
const char* observation_verb(Finding f) {
  switch (f) {
    case Finding::Cardiomegaly:
    case Finding::Edema: return "present";
    case Finding::Consolidation:
    case Finding::Atelectasis:
    case Finding::PleuralOther: return "noted";
    case Finding::Pneumonia:
    case Finding::Pneumothorax:
    case Finding::Fracture: return "identified";
    default: return "seen";
  }
}

bool plural_phrase(Finding f) { return f == Finding::LungOpacity; }

}  // namespace

const std::vector<std::string>& stop_patterns() {
  static const std::vector<std::string> patterns{
      "year-old", "year old", "history", "prior", "comparison", "compared", " male", " female",
      "patient",  "previous", "presents", "admitted", "follow-up"};
  return patterns;
}

std::string finding_phrase(const FindingSpec& spec) {
  const auto side = side_word(spec.laterality);
  const auto sev = spec.severity;
  const bool both = spec.laterality == Laterality::Bilateral;
  switch (spec.finding) {
    case Finding::NoFinding: return "no acute abnormality";
    case Finding::EnlargedCardiomediastinum: return "a widened mediastinum";
    case Finding::Cardiomegaly: return size_word(sev, "mild", "moderate", "marked") + " cardiomegaly";
    case Finding::LungLesion:
      return both ? size_word(sev, "small", "moderate-sized", "large") + " bilateral upper lobe nodules"
                  : "a " + size_word(sev, "small", "moderate-sized", "large") + " " + side + " upper lobe nodule";
    case Finding::LungOpacity: return "patchy " + side + " mid lung opacities";
    case Finding::Edema: return size_word(sev, "mild", "moderate", "severe") + " pulmonary edema";
    case Finding::Consolidation: return side + " lower lobe consolidation";
    case Finding::Pneumonia: return side + " lower lung pneumonia";
    case Finding::Atelectasis: return side + " basilar atelectasis";
    case Finding::Pneumothorax:
      return both ? size_word(sev, "small", "moderate", "large") + " bilateral apical pneumothoraces"
                  : "a " + size_word(sev, "small", "moderate", "large") + " " + side + " apical pneumothorax";
    case Finding::PleuralEffusion:
      return both ? size_word(sev, "small", "moderate", "large") + " bilateral pleural effusions"
                  : "a " + size_word(sev, "small", "moderate", "large") + " " + side + " pleural effusion";
    case Finding::PleuralOther: return side + " pleural thickening";
    case Finding::Fracture: return both ? "bilateral rib fractures" : "a " + side + " rib fracture";
    case Finding::SupportDevices: return "a central venous catheter";
  }
  return "";
}

std::string caption_for(const std::vector<FindingSpec>& findings) {
  if (has(findings, Finding::NoFinding)) return "Chest X-ray with no acute abnormality.";
  std::vector<std::string> phrases;
  for (const auto& f : canonical_order(findings)) phrases.push_back(finding_phrase(f));
  return "Chest X-ray showing " + join_phrases(phrases) + ".";
}

NoteSections case_sections(const std::vector<FindingSpec>& findings, std::mt19937_64& rng) {
  static const std::vector<std::string> kAside{
      "The patient has a past medical history of diabetes.",
      "Comparison is made to a prior study from last year.",
      "A 67-year-old male was imaged in the emergency department.",
      "The patient is a 45 year old female with a history of smoking.",
      "Compared with the previous radiograph there is little change.",
  };
  static const std::vector<std::string> kPresentation{
      "Shortness of breath and productive cough for three days.",
      "Right sided pleuritic chest pain and fever.",
      "Routine preoperative assessment.",
      "Worsening dyspnea on exertion.",
      "Chest pain after a fall.",
      "Fatigue and low grade fever.",
  };
  static const std::vector<std::string> kCause{
      "Infection is the most common cause.",      "Heart failure is a frequent cause.",
      "Trauma should be considered.",             "Clinical correlation is recommended.",
  };
  std::uniform_int_distribution<std::size_t> coin(0, 1);
  NoteSections s;
  const auto ordered = canonical_order(findings);
  std::vector<std::string> lines;
  if (!has(findings, Finding::NoFinding)) {
    for (const auto& f : ordered) {
      const auto verb = plural_phrase(f.finding) ? " are " : " is ";
      lines.push_back(capitalize(finding_phrase(f)) + verb + observation_verb(f.finding) + ".");
    }
  }
  const bool effusion = has(findings, Finding::PleuralEffusion), ptx = has(findings, Finding::Pneumothorax);
  if (!has(findings, Finding::Cardiomegaly)) lines.push_back("The heart size is within normal limits.");
  if (!effusion && !ptx) lines.push_back("No evidence of pneumothorax or pleural effusion.");
  if (effusion && !ptx) lines.push_back("No pneumothorax is seen.");
  if (!effusion && ptx) lines.push_back("No pleural effusion is seen.");
  const bool lung_clear = std::none_of(ordered.begin(), ordered.end(), [](const FindingSpec& f) {
    return f.finding >= Finding::LungLesion && f.finding <= Finding::Atelectasis;
  });
  if (lung_clear) lines.push_back("Lung fields appear clear.");
  if (!has(findings, Finding::Fracture)) lines.push_back("No concerning bony abnormality identified.");
  if (coin(rng) == 1) {
    std::uniform_int_distribution<std::size_t> pick(0, kAside.size() - 1);
    lines.insert(lines.begin() + 1, kAside[pick(rng)]);
  }
  for (const auto& l : lines) s.case_description += (s.case_description.empty() ? "" : "\n") + l;

  std::uniform_int_distribution<std::size_t> pick_p(0, kPresentation.size() - 1);
  s.case_presentation = kPresentation[pick_p(rng)];

  if (has(findings, Finding::NoFinding)) {
    s.case_discussion = "The study shows no acute abnormality.\nNo further imaging is required.";
  } else {
    std::vector<std::string> phrases;
    for (const auto& f : ordered) phrases.push_back(finding_phrase(f));
    std::uniform_int_distribution<std::size_t> pick_c(0, kCause.size() - 1);
    s.case_discussion = "This is a typical case of " + join_phrases(phrases) + ".\n" + kCause[pick_c(rng)];
  }
  return s;
}

std::string build_note_prompt(const NoteSections& sections) {
  std::string prompt = "[Instructions]: \n";
  prompt += kPromptInstructions;
  prompt += "\n\n[Input]: \n<Case Description> \n";
  prompt += sections.case_description + "\n";
  prompt += "<Case Presentation>\n" + sections.case_presentation + "\n";
  prompt += "<Case Discussion>\n" + sections.case_discussion + "\n";
  prompt += "\n[Output]: \n";
  return prompt;
}

std::string RuleBasedClient::call(const std::string& prompt) {
  const auto lines = split_lines(prompt);
  if (std::find(lines.begin(), lines.end(), "<Case Description>") == lines.end()) {
    throw ClientFailure("prompt has no <Case Description> section");
  }
  const auto description = section_between(lines, "<Case Description>", {"<Case Presentation>", "<Case Discussion>", "[Output]:"});
  const auto discussion = section_between(lines, "<Case Discussion>", {"[Output]:"});

  std::vector<std::string> kept;
  for (const auto& line : split_lines(description))
    for (const auto& sentence : split_sentences(line))
      if (!has_stop_pattern(sentence)) kept.push_back(sentence);
  for (auto& sentence : kept) {
    if (auto rewritten = as_demonstrates(sentence)) {
      sentence = *rewritten;
      break;
    }
  }
  std::string findings;
  for (const auto& s : kept) findings += (findings.empty() ? "" : " ") + s;
  if (findings.empty()) findings = "No acute cardiopulmonary abnormality is identified.";

  std::string impression = "No acute cardiopulmonary abnormality.";
  const auto lowered = lower(discussion);
  if (auto at = lowered.find("case of "); at != std::string::npos) {
    auto diagnosis = discussion.substr(at + 8);
    for (const char* cut : {" and its ", ".", "\n"}) {
      if (auto e = diagnosis.find(cut); e != std::string::npos) diagnosis = diagnosis.substr(0, e);
    }
    for (const char* article : {"a ", "an "}) {
      if (diagnosis.rfind(article, 0) == 0) diagnosis = diagnosis.substr(std::string(article).size());
    }
    diagnosis = trim(diagnosis);
    if (!diagnosis.empty()) {
      impression = capitalize(diagnosis) + " present. No other acute cardiopulmonary abnormality.";
    }
  }
  return "Findings: " + findings + "\nImpression: " + impression;
}

Note parse_note_response(const std::string& response) {
  const auto f = response.find("Findings:");
  const auto i = response.find("Impression:");
  if (f == std::string::npos || i == std::string::npos || i < f) {
    throw ClientFailure("response lacks Findings/Impression sections: '" + response + "'");
  }
  Note note{trim(response.substr(f + 9, i - f - 9)), trim(response.substr(i + 11))};
  if (note.findings_text.empty() || note.impression_text.empty()) {
    throw ClientFailure("empty Findings or Impression in response");
  }
  return note;
}

Note synthesize_note(const NoteSections& sections, GenerationClient& client) {
  if (trim(sections.case_description).empty() && trim(sections.case_discussion).empty()) {
    throw ClientFailure("no case text to restructure");
  }
  const auto prompt = build_note_prompt(sections);
  try {
    return parse_note_response(client.call(prompt));
  } catch (const std::exception& e) {
    throw ClientFailure(std::string(e.what()) + "\n--- prompt ---\n" + prompt);
  }
}

}  // namespace re3
