#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace re3 {

// The 14 report labels, in the fixed column order used by every label table.
enum class Finding : int {
  NoFinding = 0,
  EnlargedCardiomediastinum,
  Cardiomegaly,
  LungLesion,
  LungOpacity,
  Edema,
  Consolidation,
  Pneumonia,
  Atelectasis,
  Pneumothorax,
  PleuralEffusion,
  PleuralOther,
  Fracture,
  SupportDevices,
};

inline constexpr std::size_t kNumFindings = 14;

inline constexpr std::array<std::string_view, kNumFindings> kFindingNames{
    "No Finding",   "Enlarged Cardiomediastinum", "Cardiomegaly",     "Lung Lesion", "Lung Opacity",
    "Edema",        "Consolidation",              "Pneumonia",        "Atelectasis", "Pneumothorax",
    "Pleural Effusion", "Pleural Other",          "Fracture",         "Support Devices",
};

inline std::string_view finding_name(Finding f) { return kFindingNames[static_cast<std::size_t>(f)]; }
inline Finding finding_at(std::size_t index) { return static_cast<Finding>(index); }

inline std::optional<Finding> finding_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumFindings; ++i)
    if (kFindingNames[i] == name) return finding_at(i);
  return std::nullopt;
}

// Radiographic convention: the patient's left appears on the image's right.
enum class Laterality { None, Left, Right, Bilateral };
enum class Severity { None, Small, Moderate, Large };

std::string_view laterality_name(Laterality l);
std::string_view severity_name(Severity s);
std::optional<Laterality> laterality_from_name(std::string_view name);
std::optional<Severity> severity_from_name(std::string_view name);

// Whether a finding is drawn on one side of the chest (and so carries a
// left/right/bilateral laterality).
bool is_lateral(Finding f);

struct FindingSpec {
  Finding finding = Finding::NoFinding;
  Laterality laterality = Laterality::None;
  Severity severity = Severity::None;
  bool operator==(const FindingSpec&) const = default;
};

}  // namespace re3
