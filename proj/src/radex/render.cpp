#include <algorithm>
#include <cmath>
#include <random>

#include "re3/radex.hpp"

namespace re3 {

namespace {

constexpr int kSide = static_cast<int>(kImageSide);
constexpr int kHalf = kSide / 2;

// Distance-from-midline column: 0 at the outer edge, kHalf-1 at the midline.
int mirror_col(int c) { return c < kHalf ? c : kSide - 1 - c; }

bool in_lung(int r, int c) {
  const double dr = (r - 15.0) / 12.0, dc = (mirror_col(c) - 8.0) / 6.0;
  return dr * dr + dc * dc <= 1.0;
}

bool in_ellipse(int r, int c, double cr, double cc, double rr, double rc) {
  const double dr = (r - cr) / rr, dc = (c - cc) / rc;
  return dr * dr + dc * dc <= 1.0;
}

double severity_scale(Severity s) {
  switch (s) {
    case Severity::Small: return 0.75;
    case Severity::Large: return 1.25;
    default: return 1.0;
  }
}

// Motifs are described on the image-left half (the patient's right) and
// mirrored for the patient's left.
class Canvas {
 public:
  explicit Canvas(Image& img) : img_(img) {}

  void add(int r, int c, double delta, Laterality side) {
    if (side == Laterality::Right || side == Laterality::Bilateral || side == Laterality::None) bump(r, c, delta);
    if (side == Laterality::Left || side == Laterality::Bilateral) bump(r, kSide - 1 - c, delta);
  }
  void rect(int r0, int r1, int c0, int c1, double delta, Laterality side) {
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) add(r, c, delta, side);
  }
  void set(int r, int c, double value) { img_.at(r, c) = value; }

 private:
  void bump(int r, int c, double delta) { img_.at(r, c) += delta; }
  Image& img_;
};

void draw_motif(Canvas& cv, const FindingSpec& spec) {
  const double s = severity_scale(spec.severity);
  const auto side = spec.laterality;
  switch (spec.finding) {
    case Finding::NoFinding:
      break;
    case Finding::EnlargedCardiomediastinum:
      cv.rect(2, 14, 12, 13, 0.3 * s, Laterality::Bilateral);
      break;
    case Finding::Cardiomegaly:
      for (int r = 0; r < kSide; ++r)
        for (int c = 0; c < kSide; ++c)
          if (in_ellipse(r, c, 23.0, 15.5, 6.0, 7.5) && !in_ellipse(r, c, 23.0, 15.5, 4.5, 4.5))
            cv.add(r, c, 0.35 * s, Laterality::None);
      break;
    case Finding::LungLesion:
      for (int r = 3; r <= 7; ++r)
        for (int c = 7; c <= 11; ++c)
          if (in_ellipse(r, c, 5.0, 9.0, 1.6, 1.6)) cv.add(r, c, 0.5 * s, side);
      break;
    case Finding::LungOpacity:
      for (int r = 13; r <= 17; ++r)
        for (int c = 3; c <= 8; ++c)
          if ((r + c) % 2 == 0) cv.add(r, c, 0.35 * s, side);
      break;
    case Finding::Edema:
      for (int r = 0; r < kSide; ++r)
        for (int c = 0; c < kHalf; ++c)
          if (in_lung(r, c)) cv.add(r, c, 0.12 * s, Laterality::Bilateral);
      cv.rect(9, 18, 10, 13, 0.1 * s, Laterality::Bilateral);
      break;
    case Finding::Consolidation:
      cv.rect(19, 22, 3, 7, 0.45 * s, side);
      break;
    case Finding::Pneumonia:
      cv.rect(13, 18, 10, 10, 0.4 * s, side);
      cv.rect(13, 18, 12, 12, 0.4 * s, side);
      break;
    case Finding::Atelectasis:
      cv.rect(24, 25, 2, 9, 0.45 * s, side);
      break;
    case Finding::Pneumothorax:
      cv.rect(2, 7, 1, 3, -0.3, side);
      cv.rect(2, 7, 4, 4, 0.35 * s, side);
      break;
    case Finding::PleuralEffusion: {
      const int top = spec.severity == Severity::Small ? 29 : spec.severity == Severity::Moderate ? 28 : 27;
      cv.rect(top, 30, 1, 11, 0.5, side);
      break;
    }
    case Finding::PleuralOther:
      cv.rect(8, 24, 0, 0, 0.5 * s, side);
      break;
    case Finding::Fracture:
      cv.rect(10, 10, 2, 6, 0.45 * s, side);
      cv.rect(11, 11, 8, 12, 0.45 * s, side);
      break;
    case Finding::SupportDevices:
      for (int r = 0; r <= 18; ++r) cv.set(r, 15, 0.95);
      for (int r = 1; r <= 3; ++r)
        for (int c = 26; c <= 28; ++c) cv.set(r, c, 0.95);
      break;
  }
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

std::array<bool, kNumFindings> CorpusRecord::labels() const {
  std::array<bool, kNumFindings> out{};
  for (const auto& f : findings) out[static_cast<std::size_t>(f.finding)] = true;
  return out;
}

void check_findings(const std::vector<FindingSpec>& findings) {
  if (findings.empty()) throw ConflictingFindings("empty finding list");
  std::array<bool, kNumFindings> seen{};
  for (const auto& f : findings) {
    const auto idx = static_cast<std::size_t>(f.finding);
    const std::string name(finding_name(f.finding));
    if (seen[idx]) throw ConflictingFindings(name + " listed twice");
    seen[idx] = true;
    if (f.finding == Finding::NoFinding) {
      if (findings.size() != 1) throw ConflictingFindings("No Finding together with a positive finding");
      if (f.laterality != Laterality::None || f.severity != Severity::None)
        throw ConflictingFindings("No Finding carries no laterality or severity");
      continue;
    }
    if (f.severity == Severity::None) throw ConflictingFindings(name + " needs a severity");
    if (f.finding == Finding::Edema) {
      if (f.laterality != Laterality::Bilateral) throw ConflictingFindings("Edema is always bilateral");
    } else if (is_lateral(f.finding)) {
      if (f.laterality == Laterality::None) throw ConflictingFindings(name + " needs a side");
    } else if (f.laterality != Laterality::None) {
      throw ConflictingFindings(name + " takes no laterality");
    }
  }
}

Image render_base() {
  Image img = Image::blank(kImageSide, 0.35);
  for (int r = 0; r < kSide; ++r)
    for (int c = 0; c < kSide; ++c) {
      double v = 0.35;
      if (in_lung(r, c)) v = (r % 4 == 2 && r >= 6 && r <= 22) ? 0.21 : 0.15;
      const int m = mirror_col(c);
      if (m >= 14 && r >= 1 && r <= 16) v = 0.55;
      if (in_ellipse(r, c, 23.0, 15.5, 4.5, 4.5)) v = 0.6;
      img.at(r, c) = v;
    }
  return img;
}

Image render_image(const std::vector<FindingSpec>& findings, std::uint64_t seed) {
  check_findings(findings);
  Image img = render_base();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.02);
  for (int r = 0; r < kSide; ++r)
    for (int c = 0; c < kHalf; ++c) {
      const double n = noise(rng);
      img.at(r, c) += n;
      img.at(r, kSide - 1 - c) += n;
    }
  Canvas cv(img);
  for (const auto& f : findings) draw_motif(cv, f);
  for (auto& v : img.pixels) v = quantize(v);
  return img;
}

}  // namespace re3
