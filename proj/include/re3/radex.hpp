#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "re3/error.hpp"
#include "re3/findings.hpp"
#include "re3/image.hpp"

namespace re3 {

inline constexpr std::size_t kImageSide = 32;
inline constexpr int kCorpusFormatVersion = 1;

enum class SampleKind { Caption, Instruction, Report, Summarization };
enum class Split { Train, Test };

std::string_view kind_name(SampleKind k);  // "caption", ..., "summarization-pair"
std::optional<SampleKind> kind_from_name(std::string_view name);
std::string_view split_name(Split s);

struct NoteSections {
  std::string case_description;
  std::string case_presentation;
  std::string case_discussion;
  std::string findings_text;
  std::string impression_text;
  bool operator==(const NoteSections&) const = default;
};

struct CorpusRecord {
  std::size_t record_id = 0;
  Image image;
  SampleKind kind = SampleKind::Caption;
  std::string instruction;
  std::string target;
  std::vector<FindingSpec> findings;
  Split split = Split::Train;
  std::optional<NoteSections> sections;

  // Planted positives in finding order.
  std::array<bool, kNumFindings> labels() const;
  bool operator==(const CorpusRecord&) const = default;
};

// ---- images ---------------------------------------------------------------

// Throws ConflictingFindings for No Finding mixed with a positive finding,
// repeated findings, or a laterality that the finding cannot take.
void check_findings(const std::vector<FindingSpec>& findings);

// Draws a 32x32 chest-like image: a left/right symmetric seeded background
// plus one additive motif per finding (see docs/formats.md for the table).
// Pixels are quantized to multiples of 1/255.
Image render_image(const std::vector<FindingSpec>& findings, std::uint64_t seed);

// The noise-free, motif-free background.
Image render_base();

// ---- notes ----------------------------------------------------------------

class GenerationClient {
 public:
  virtual ~GenerationClient() = default;
  virtual std::string id() const = 0;
  virtual std::string call(const std::string& prompt) = 0;
};

// Offline, deterministic stand-in for the note-restructuring LLM call.
class RuleBasedClient : public GenerationClient {
 public:
  std::string id() const override { return "rule-based-v1"; }
  std::string call(const std::string& prompt) override;
};

// Sentences containing any of these (case-insensitive) are removed from notes.
const std::vector<std::string>& stop_patterns();

std::string build_note_prompt(const NoteSections& sections);

struct Note {
  std::string findings_text;
  std::string impression_text;
};

// Splits a "Findings: ... Impression: ..." response. Throws ClientFailure.
Note parse_note_response(const std::string& response);

// Prompts the client with the restructuring template. Errors from the client
// (or an unparseable reply) surface as ClientFailure carrying the prompt.
Note synthesize_note(const NoteSections& sections, GenerationClient& client);

// Case description, presentation and discussion for a set of planted findings.
NoteSections case_sections(const std::vector<FindingSpec>& findings, std::mt19937_64& rng);

// Short noun phrase for one finding, e.g. "a small left pleural effusion".
std::string finding_phrase(const FindingSpec& spec);
std::string caption_for(const std::vector<FindingSpec>& findings);

// ---- corpus ---------------------------------------------------------------

struct KindMix {
  double caption = 0.25;
  double instruction = 0.45;
  double report = 0.20;
  double summarization = 0.10;

  // "caption=0.25,instruction=0.45,report=0.2,summarization=0.1"
  static KindMix parse(std::string_view text);
  std::string to_string() const;
  void validate() const;  // BadProportions
};

// Instruction phrasings per task; every list has at least eight entries.
const std::vector<std::string>& generation_instructions();
const std::vector<std::string>& summarization_instructions();
const std::vector<std::string>& presence_instructions();   // contains "{finding}"
const std::vector<std::string>& abnormality_instructions();
const std::vector<std::string>& impression_instructions();

// 30% No Finding; otherwise one uniform finding plus 0-2 distinct co-findings.
std::vector<FindingSpec> sample_findings(std::mt19937_64& rng);

std::vector<CorpusRecord> build_corpus(std::size_t n, const KindMix& mix, std::uint64_t seed,
                                       GenerationClient& client);

std::string record_to_json(const CorpusRecord& record);
CorpusRecord record_from_json(std::string_view line);
void write_corpus(const std::vector<CorpusRecord>& records, const std::filesystem::path& path);
std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path);

// Structural checks over a whole corpus; throws CorpusFormatError naming the
// offending record.
void validate_corpus(const std::vector<CorpusRecord>& records);

}  // namespace re3
