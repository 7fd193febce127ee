#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "backmix/image.hpp"

namespace backmix {

enum class Domain { InDist, OutDist };
enum class Split { Train, Val, Test };

std::string to_string(Domain d);
std::string to_string(Split s);
Domain parse_domain(const std::string& s);

/// One grayscale frame with its view label and optional sector mask.
struct Frame {
  Image image;
  int label = 0;
  std::string patient_id;
  Domain domain = Domain::InDist;
  std::optional<SectorMask> mask;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Parameters of the synthetic shortcut dataset.
///
/// Each frame holds a fan-shaped sector with speckle texture and a
/// class-specific arrangement of dark chambers, plus a "metadata" glyph drawn
/// in the background. Glyph ids 0..num_classes-1 are the class glyphs; ids
/// num_classes.. are distractors. With probability `shortcut_correlation` the
/// glyph is the frame's class glyph, otherwise a uniformly drawn distractor,
/// so P(glyph == class) equals the correlation and a correlation of 0 makes
/// glyph and class independent. Out-of-distribution frames always use
/// distractors, placed in the lower corners at a dimmer intensity.
struct SyntheticSpec {
  int resolution = 112;
  int num_classes = 4;
  int frames_per_patient = 8;
  int num_patients = 300;
  int num_ood_patients = 50;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  double shortcut_correlation = 1.0;
  int num_distractor_glyphs = 4;
  /// Background clutter glyphs drawn from the distractor set, independent of the label.
  int clutter_glyphs = 1;
  /// Pixels per glyph cell; 0 picks max(1, round(resolution / 40)).
  int glyph_scale = 0;
  /// Minimum background gap around each glyph; keep it above the mask estimator's closing bridge.
  int glyph_margin = 5;
  double glyph_intensity = 1.0;
  double ood_glyph_intensity = 0.7;

  // Sector geometry, as fractions of the resolution (angles in degrees).
  Range apex_y{0.04, 0.10};
  double apex_x_jitter = 0.03;
  Range half_angle_deg{28.0, 36.0};
  Range radius{0.58, 0.68};

  // Texture.
  double tissue_level = 0.55;
  double speckle_strength = 0.35;
  double depth_attenuation = 0.3;
  double tissue_floor = 0.12;
  /// Relative darkening of chamber pixels (0 = invisible, 1 = black).
  double pattern_contrast = 0.5;
  /// Chamber layout jitter as a fraction of the layout unit.
  double pattern_jitter = 0.3;

  std::uint64_t seed = 0;

  /// Throws ConfigError on invalid values or geometry that leaves the image.
  void validate() const;
  int effective_glyph_scale() const;
  int glyph_alphabet_size() const { return num_classes + num_distractor_glyphs; }
};

/// Debug/audit information kept alongside each generated frame.
struct FrameProvenance {
  int glyph_id = 0;
  std::vector<std::uint32_t> glyph_pixels;    // flat indices of drawn glyph pixels (all glyphs)
  std::vector<std::uint32_t> pattern_pixels;  // flat indices of chamber pixels
};

struct ManifestRecord {
  std::string path;
  int label = 0;
  std::string patient_id;
  Domain domain = Domain::InDist;
  std::string mask_path;
  Split split = Split::Train;
};

/// Records plus their split assignments. Written as one CSV per split.
struct DatasetManifest {
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> in_split(Split s) const;
  std::vector<std::string> patients(Split s) const;
};

struct GeneratedDataset {
  std::vector<Frame> frames;
  std::vector<FrameProvenance> provenance;
  DatasetManifest manifest;  // records[i] describes frames[i]; paths empty until saved
};

inline constexpr const char* kManifestHeader = "path,label,patient_id,domain,mask_path";

/// Generates frames, ground-truth masks, and a patient-level split.
/// Out-of-distribution frames are all assigned to the test split.
GeneratedDataset generate_synthetic_dataset(const SyntheticSpec& spec);

/// Assigns train/val/test per patient: round(ratio * patients) for train and
/// val, the remainder to test. Deterministic for a fixed seed.
DatasetManifest split_by_patient(DatasetManifest manifest, const std::array<double, 3>& ratios,
                                 std::uint64_t seed);

/// Writes images/masks as 8-bit PGM files plus train.csv, val.csv, test.csv
/// under `dir`; returns the manifest with paths filled in (relative to dir).
DatasetManifest save_dataset(const GeneratedDataset& dataset, const std::filesystem::path& dir);

void write_manifest_csv(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest_csv(const std::filesystem::path& path);
/// Reads train.csv, val.csv and test.csv from a dataset directory.
DatasetManifest read_manifest_dir(const std::filesystem::path& dir);
std::filesystem::path split_manifest_path(const std::filesystem::path& dir, Split s);

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loads every record of a split manifest, in file order. Paths resolve
/// relative to the manifest's directory. Throws LoadError naming the record.
std::vector<Frame> load_dataset(const std::filesystem::path& manifest_path);

/// The glyph bitmap for an id (5x5 cells, row-major, 1 = ink).
const std::array<std::uint8_t, 25>& glyph_bitmap(int id);
inline constexpr int kGlyphAlphabetCapacity = 12;

}  // namespace backmix
