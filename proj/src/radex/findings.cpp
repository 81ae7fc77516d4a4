#include "re3/findings.hpp"

namespace re3 {

namespace {
constexpr std::array<std::string_view, 4> kLateralityNames{"none", "left", "right", "bilateral"};
constexpr std::array<std::string_view, 4> kSeverityNames{"none", "small", "moderate", "large"};
}  // namespace

std::string_view laterality_name(Laterality l) { return kLateralityNames[static_cast<std::size_t>(l)]; }
std::string_view severity_name(Severity s) { return kSeverityNames[static_cast<std::size_t>(s)]; }

std::optional<Laterality> laterality_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kLateralityNames.size(); ++i)
    if (kLateralityNames[i] == name) return static_cast<Laterality>(i);
  return std::nullopt;
}

std::optional<Severity> severity_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kSeverityNames.size(); ++i)
    if (kSeverityNames[i] == name) return static_cast<Severity>(i);
  return std::nullopt;
}

bool is_lateral(Finding f) {
  switch (f) {
    case Finding::LungLesion:
    case Finding::LungOpacity:
    case Finding::Consolidation:
    case Finding::Pneumonia:
    case Finding::Atelectasis:
    case Finding::Pneumothorax:
    case Finding::PleuralEffusion:
    case Finding::PleuralOther:
    case Finding::Fracture:
      return true;
    default:
      return false;
  }
}

}  // namespace re3
