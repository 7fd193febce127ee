#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "backmix/data.hpp"
#include "backmix/image.hpp"

namespace testutil {

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() /
            ("backmix_test_" + name + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline backmix::Image image2x2(float a, float b, float c, float d) { return backmix::Image(2, 2, {a, b, c, d}); }

inline backmix::SectorMask mask2x2(int a, int b, int c, int d) {
  return backmix::SectorMask(2, 2, {static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b),
                                    static_cast<std::uint8_t>(c), static_cast<std::uint8_t>(d)});
}

/// Small synthetic spec that generates quickly.
inline backmix::SyntheticSpec small_spec(int resolution = 32, int patients = 10, int ood = 3) {
  backmix::SyntheticSpec s;
  s.resolution = resolution;
  s.num_patients = patients;
  s.num_ood_patients = ood;
  s.frames_per_patient = 4;
  // 32 px cannot fit the default fan and margin with a glyph below it
  if (resolution < 48) {
    s.glyph_margin = 3;
    s.radius = {0.5, 0.55};
  }
  return s;
}

}  // namespace testutil
