#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "backmix/data.hpp"
#include "backmix/rng.hpp"

namespace backmix {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr int kGlyphCells = 5;

// Hand-drawn 5x5 bitmaps; all pairwise distinct.
constexpr std::array<std::array<std::uint8_t, 25>, kGlyphAlphabetCapacity> kGlyphs{{
    {1, 1, 1, 1, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 1, 1, 1, 1, 1},  // square
    {0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 1, 1, 1, 1, 1, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0},  // plus
    {1, 0, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 1},  // cross
    {1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1},  // bars
    {1, 0, 1, 0, 1, 1, 0, 1, 0, 1, 1, 0, 1, 0, 1, 1, 0, 1, 0, 1, 1, 0, 1, 0, 1},  // columns
    {1, 0, 0, 0, 0, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1, 1},  // wedge
    {0, 0, 1, 0, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 1, 0, 0},  // diamond
    {1, 1, 1, 1, 1, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0},  // T
    {1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1},  // checker
    {1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0},  // block
    {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 1, 1, 1},  // L
    {0, 1, 1, 1, 0, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1, 1, 0},  // ring
}};

struct Ellipse {
  double cx, cy, a, b;  // in layout units
};

// Chamber arrangements, one per class.
const std::vector<std::vector<Ellipse>>& chamber_layouts() {
  static const std::vector<std::vector<Ellipse>> layouts{
      {{0.0, 0.0, 1.6, 1.0}},
      {{-1.0, 0.0, 0.75, 1.1}, {1.0, 0.0, 0.75, 1.1}},
      {{0.0, -0.95, 1.1, 0.65}, {0.0, 0.95, 1.1, 0.65}},
      {{-0.9, -0.9, 0.55, 0.55}, {0.9, -0.9, 0.55, 0.55}, {-0.9, 0.9, 0.55, 0.55}, {0.9, 0.9, 0.55, 0.55}},
      {{-1.3, 0.0, 0.5, 0.8}, {0.0, 0.0, 0.5, 0.8}, {1.3, 0.0, 0.5, 0.8}},
      {{0.0, -1.2, 0.8, 0.45}, {0.0, 0.0, 0.8, 0.45}, {0.0, 1.2, 0.8, 0.45}},
      {{0.0, -1.0, 0.6, 0.6}, {-0.95, 0.7, 0.6, 0.6}, {0.95, 0.7, 0.6, 0.6}},
      {{-0.8, 0.0, 0.9, 0.9}, {1.1, 0.0, 0.35, 0.35}},
  };
  return layouts;
}

struct SectorGeometry {
  double apex_x, apex_y, half_angle, radius;

  bool contains(double px, double py) const {
    const double dx = px - apex_x;
    const double dy = py - apex_y;
    if (dy <= 0.0) return false;
    if (dx * dx + dy * dy > radius * radius) return false;
    return std::abs(std::atan2(dx, dy)) <= half_angle;
  }
};

struct GlyphBox {
  int y, x, size;
};

bool box_clear(const SectorMask& mask, const std::vector<GlyphBox>& taken, int y, int x, int size, int margin) {
  const int h = mask.height();
  const int w = mask.width();
  if (y < 1 || x < 1 || y + size > h - 1 || x + size > w - 1) return false;
  for (int yy = std::max(0, y - margin); yy < std::min(h, y + size + margin); ++yy)
    for (int xx = std::max(0, x - margin); xx < std::min(w, x + size + margin); ++xx)
      if (mask.at(yy, xx)) return false;
  for (const auto& b : taken) {
    const bool apart = y + size + margin <= b.y || b.y + b.size + margin <= y ||
                       x + size + margin <= b.x || b.x + b.size + margin <= x;
    if (!apart) return false;
  }
  return true;
}

GlyphBox place_glyph(const SectorMask& mask, const std::vector<GlyphBox>& taken, int size, int margin, int y_lo,
                     int y_hi, Rng& rng) {
  const int w = mask.width();
  for (int attempt = 0; attempt < 500; ++attempt) {
    const int y = std::uniform_int_distribution<int>(y_lo, std::max(y_lo, y_hi - size))(rng);
    const int x = std::uniform_int_distribution<int>(1, std::max(1, w - size - 1))(rng);
    if (box_clear(mask, taken, y, x, size, margin)) return {y, x, size};
  }
  std::vector<GlyphBox> free;
  for (int y = y_lo; y <= std::max(y_lo, y_hi - size); ++y)
    for (int x = 1; x <= std::max(1, w - size - 1); ++x)
      if (box_clear(mask, taken, y, x, size, margin)) free.push_back({y, x, size});
  if (!free.empty()) return free[uniform_index(rng, free.size())];
  throw ConfigError("synthetic: no background room for a " + std::to_string(size) + "px glyph; "
                    "shrink the sector or glyph scale");
}

void draw_glyph(Image& image, const GlyphBox& box, int id, int scale, float intensity,
                std::vector<std::uint32_t>& pixels) {
  const auto& bm = kGlyphs[static_cast<std::size_t>(id)];
  for (int cy = 0; cy < kGlyphCells; ++cy)
    for (int cx = 0; cx < kGlyphCells; ++cx) {
      if (!bm[static_cast<std::size_t>(cy * kGlyphCells + cx)]) continue;
      for (int sy = 0; sy < scale; ++sy)
        for (int sx = 0; sx < scale; ++sx) {
          const int y = box.y + cy * scale + sy;
          const int x = box.x + cx * scale + sx;
          image.at(y, x) = intensity;
          pixels.push_back(static_cast<std::uint32_t>(y * image.width() + x));
        }
    }
}

struct GeneratedFrame {
  Frame frame;
  FrameProvenance provenance;
};

GeneratedFrame generate_frame(const SyntheticSpec& spec, Domain domain, int label, std::string patient_id,
                              Rng& rng) {
  const int res = spec.resolution;
  const double r = res;
  SectorGeometry geo{
      r / 2.0 + uniform(rng, -spec.apex_x_jitter, spec.apex_x_jitter) * r,
      uniform(rng, spec.apex_y.lo, spec.apex_y.hi) * r,
      uniform(rng, spec.half_angle_deg.lo, spec.half_angle_deg.hi) * kDegToRad,
      uniform(rng, spec.radius.lo, spec.radius.hi) * r,
  };

  GeneratedFrame out;
  Frame& f = out.frame;
  f.image = Image(res, res, 0.0f);
  f.label = label;
  f.patient_id = std::move(patient_id);
  f.domain = domain;
  SectorMask mask(res, res, 0);

  // chamber layout frame: centered on the fan axis, rotated and jittered
  const double unit = 0.14 * geo.radius;
  const double theta = uniform(rng, -15.0, 15.0) * kDegToRad;
  const double ccx = geo.apex_x + uniform(rng, -spec.pattern_jitter, spec.pattern_jitter) * unit;
  const double ccy = geo.apex_y + 0.55 * geo.radius + uniform(rng, -spec.pattern_jitter, spec.pattern_jitter) * unit;
  std::vector<Ellipse> chambers = chamber_layouts()[static_cast<std::size_t>(label)];
  for (auto& e : chambers) {
    e.a *= uniform(rng, 0.85, 1.15);
    e.b *= uniform(rng, 0.85, 1.15);
  }
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);

  const double sigma = 1.0 / std::sqrt(std::numbers::pi / 2.0);  // unit-mean Rayleigh
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double px = x + 0.5;
      const double py = y + 0.5;
      if (!geo.contains(px, py)) continue;
      mask.set(y, x, true);
      const double depth = std::hypot(px - geo.apex_x, py - geo.apex_y) / geo.radius;
      const double base = spec.tissue_level * (1.0 - spec.depth_attenuation * depth);
      const double rayleigh = sigma * std::sqrt(-2.0 * std::log(1.0 - u01(rng)));
      double v = base * (1.0 + spec.speckle_strength * (rayleigh - 1.0) / sigma);
      v = std::clamp(v, spec.tissue_floor, 1.0);

      const double lx = ((px - ccx) * cos_t + (py - ccy) * sin_t) / unit;
      const double ly = (-(px - ccx) * sin_t + (py - ccy) * cos_t) / unit;
      for (const auto& e : chambers) {
        const double nx = (lx - e.cx) / e.a;
        const double ny = (ly - e.cy) / e.b;
        if (nx * nx + ny * ny <= 1.0) {
          v *= (1.0 - spec.pattern_contrast);
          out.provenance.pattern_pixels.push_back(static_cast<std::uint32_t>(y * res + x));
          break;
        }
      }
      f.image.at(y, x) = static_cast<float>(v);
    }
  }

  // background glyphs
  const int scale = spec.effective_glyph_scale();
  const int size = kGlyphCells * scale;
  const bool ood = domain == Domain::OutDist;
  const float intensity = static_cast<float>(ood ? spec.ood_glyph_intensity : spec.glyph_intensity);
  int glyph_id;
  if (!ood && u01(rng) < spec.shortcut_correlation) {
    glyph_id = label;
  } else {
    glyph_id = spec.num_classes + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(spec.num_distractor_glyphs)));
  }
  out.provenance.glyph_id = glyph_id;
  std::vector<GlyphBox> taken;
  const int y_lo = ood ? res / 2 : 1;
  const int y_hi = ood ? res - 1 : res / 2;
  taken.push_back(place_glyph(mask, taken, size, spec.glyph_margin, y_lo, y_hi, rng));
  draw_glyph(f.image, taken.back(), glyph_id, scale, intensity, out.provenance.glyph_pixels);
  for (int c = 0; c < spec.clutter_glyphs; ++c) {
    const int id = spec.num_classes + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(spec.num_distractor_glyphs)));
    taken.push_back(place_glyph(mask, taken, size, spec.glyph_margin, 1, res - 1, rng));
    draw_glyph(f.image, taken.back(), id, scale, intensity, out.provenance.glyph_pixels);
  }

  quantize_u8(f.image);
  f.mask = std::move(mask);
  return out;
}

}  // namespace

const std::array<std::uint8_t, 25>& glyph_bitmap(int id) {
  if (id < 0 || id >= kGlyphAlphabetCapacity) throw std::out_of_range("glyph id out of range");
  return kGlyphs[static_cast<std::size_t>(id)];
}

int SyntheticSpec::effective_glyph_scale() const {
  if (glyph_scale > 0) return glyph_scale;
  return std::max(1, static_cast<int>(std::lround(resolution / 40.0)));
}

void SyntheticSpec::validate() const {
  if (resolution < 16) throw ConfigError("synthetic: resolution must be at least 16");
  if (num_classes < 2) throw ConfigError("synthetic: num_classes must be at least 2");
  if (num_classes > static_cast<int>(chamber_layouts().size()))
    throw ConfigError("synthetic: at most " + std::to_string(chamber_layouts().size()) + " classes supported");
  if (num_distractor_glyphs < 0 || glyph_alphabet_size() > kGlyphAlphabetCapacity)
    throw ConfigError("synthetic: glyph alphabet exceeds " + std::to_string(kGlyphAlphabetCapacity) + " bitmaps");
  if (!(shortcut_correlation >= 0.0 && shortcut_correlation <= 1.0))
    throw ConfigError("synthetic: shortcut_correlation must lie in [0,1]");
  if (num_distractor_glyphs == 0 && (shortcut_correlation < 1.0 || num_ood_patients > 0 || clutter_glyphs > 0))
    throw ConfigError("synthetic: distractor glyphs are required for correlation < 1, clutter, or o.o.d frames");
  if (frames_per_patient < 1 || num_patients < 3 || num_ood_patients < 0 || clutter_glyphs < 0)
    throw ConfigError("synthetic: invalid patient/frame counts (need >= 3 in-distribution patients)");
  if (glyph_margin < 0) throw ConfigError("synthetic: glyph_margin must be non-negative");
  double total = 0.0;
  for (double v : split_ratios) {
    if (v < 0.0) throw ConfigError("synthetic: split ratios must be non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("synthetic: split ratios must sum to 1");
  auto ordered = [](const Range& rg) { return rg.lo <= rg.hi; };
  if (!ordered(apex_y) || !ordered(half_angle_deg) || !ordered(radius) || apex_x_jitter < 0.0)
    throw ConfigError("synthetic: geometry ranges must satisfy lo <= hi");
  if (apex_y.lo <= 0.0 || radius.lo <= 0.0 || half_angle_deg.lo <= 0.0 || half_angle_deg.hi >= 90.0)
    throw ConfigError("synthetic: geometry ranges must be positive (half-angle below 90 degrees)");
  // worst case extents must stay strictly inside the image
  const double bottom = apex_y.hi + radius.hi;
  const double half_width = radius.hi * std::sin(half_angle_deg.hi * kDegToRad);
  if (bottom >= 1.0 - 1.0 / resolution)
    throw ConfigError("synthetic: apex_y + radius reaches the bottom edge of the image");
  if (0.5 + apex_x_jitter + half_width >= 1.0 - 1.0 / resolution)
    throw ConfigError("synthetic: sector fan reaches the side edges of the image");
  if (!(tissue_floor > 0.0 && tissue_floor < 1.0) || !(pattern_contrast > 0.0 && pattern_contrast <= 1.0) ||
      tissue_level <= 0.0 || speckle_strength < 0.0 || depth_attenuation < 0.0 || depth_attenuation >= 1.0)
    throw ConfigError("synthetic: texture parameters out of range");
  if (!(glyph_intensity > 0.0 && glyph_intensity <= 1.0) || !(ood_glyph_intensity > 0.0 && ood_glyph_intensity <= 1.0))
    throw ConfigError("synthetic: glyph intensities must lie in (0,1]");
}

GeneratedDataset generate_synthetic_dataset(const SyntheticSpec& spec) {
  spec.validate();
  GeneratedDataset ds;
  const auto total = static_cast<std::size_t>(spec.num_patients + spec.num_ood_patients) *
                     static_cast<std::size_t>(spec.frames_per_patient);
  ds.frames.reserve(total);
  ds.provenance.reserve(total);
  ds.manifest.records.reserve(total);

  auto emit = [&](Domain domain, int patient, const std::string& pid) {
    for (int k = 0; k < spec.frames_per_patient; ++k) {
      const int label = (patient * spec.frames_per_patient + k) % spec.num_classes;
      Rng rng = make_rng(spec.seed, {stream::kFrame, static_cast<std::uint64_t>(domain),
                                     static_cast<std::uint64_t>(patient), static_cast<std::uint64_t>(k)});
      auto g = generate_frame(spec, domain, label, pid, rng);
      ManifestRecord rec;
      rec.label = label;
      rec.patient_id = pid;
      rec.domain = domain;
      rec.split = Split::Test;
      ds.frames.push_back(std::move(g.frame));
      ds.provenance.push_back(std::move(g.provenance));
      ds.manifest.records.push_back(std::move(rec));
    }
  };
  auto pid = [](char prefix, int i) {
    std::string digits = std::to_string(i);
    return std::string(1, prefix) + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
  };
  for (int p = 0; p < spec.num_patients; ++p) emit(Domain::InDist, p, pid('P', p));

  // split the in-distribution part; o.o.d frames stay in the test split
  DatasetManifest in_dist;
  in_dist.records.assign(ds.manifest.records.begin(), ds.manifest.records.end());
  in_dist = split_by_patient(std::move(in_dist), spec.split_ratios, derive_seed(spec.seed, {stream::kSplit}));
  for (std::size_t i = 0; i < in_dist.records.size(); ++i) ds.manifest.records[i].split = in_dist.records[i].split;

  for (int p = 0; p < spec.num_ood_patients; ++p) emit(Domain::OutDist, p, pid('O', p));
  return ds;
}

}  // namespace backmix
