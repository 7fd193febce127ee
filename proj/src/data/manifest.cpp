#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "backmix/data.hpp"
#include "backmix/pgm.hpp"
#include "backmix/rng.hpp"
#include "backmix/sector.hpp"

namespace backmix {

std::string to_string(Domain d) { return d == Domain::InDist ? "in_dist" : "out_dist"; }

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Domain parse_domain(const std::string& s) {
  if (s == "in_dist") return Domain::InDist;
  if (s == "out_dist") return Domain::OutDist;
  throw std::invalid_argument("unknown domain '" + s + "' (expected in_dist or out_dist)");
}

std::vector<ManifestRecord> DatasetManifest::in_split(Split s) const {
  std::vector<ManifestRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [s](const ManifestRecord& r) { return r.split == s; });
  return out;
}

std::vector<std::string> DatasetManifest::patients(Split s) const {
  std::set<std::string> ids;
  for (const auto& r : records)
    if (r.split == s) ids.insert(r.patient_id);
  return {ids.begin(), ids.end()};
}

DatasetManifest split_by_patient(DatasetManifest manifest, const std::array<double, 3>& ratios,
                                 std::uint64_t seed) {
  double total = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw ConfigError("split_by_patient: negative ratio");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split_by_patient: ratios must sum to 1");

  std::set<std::string> unique;
  for (const auto& r : manifest.records) unique.insert(r.patient_id);
  std::vector<std::string> patients(unique.begin(), unique.end());
  const auto n = static_cast<long>(patients.size());
  if (n < 3) throw ConfigError("split_by_patient: " + std::to_string(n) + " patients cannot fill 3 splits");

  const long n_train = std::lround(ratios[0] * static_cast<double>(n));
  const long n_val = std::lround(ratios[1] * static_cast<double>(n));
  const long n_test = n - n_train - n_val;
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw ConfigError("split_by_patient: ratios leave a split without patients (" + std::to_string(n_train) + "/" +
                      std::to_string(n_val) + "/" + std::to_string(n_test) + ")");

  Rng rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);
  std::map<std::string, Split> assignment;
  for (long i = 0; i < n; ++i)
    assignment[patients[static_cast<std::size_t>(i)]] =
        i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
  for (auto& r : manifest.records) r.split = assignment.at(r.patient_id);
  return manifest;
}

std::filesystem::path split_manifest_path(const std::filesystem::path& dir, Split s) {
  return dir / (to_string(s) + ".csv");
}

void write_manifest_csv(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : records) {
    if (r.patient_id.find(',') != std::string::npos || r.path.find(',') != std::string::npos ||
        r.mask_path.find(',') != std::string::npos)
      throw IoError("manifest fields may not contain commas: " + r.path);
    out << r.path << ',' << r.label << ',' << r.patient_id << ',' << to_string(r.domain) << ',' << r.mask_path
        << '\n';
  }
}

std::vector<ManifestRecord> read_manifest_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader)
    throw LoadError("manifest " + path.string() + " lacks the header '" + kManifestHeader + "'");
  Split split = Split::Train;
  const auto stem = path.stem().string();
  if (stem == "val") split = Split::Val;
  if (stem == "test") split = Split::Test;

  std::vector<ManifestRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 5)
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": expected 5 fields, got " +
                      std::to_string(fields.size()));
    ManifestRecord r;
    r.path = fields[0];
    try {
      std::size_t used = 0;
      r.label = std::stoi(fields[1], &used);
      if (used != fields[1].size()) throw std::invalid_argument(fields[1]);
      r.domain = parse_domain(fields[3]);
    } catch (const std::exception& e) {
      throw LoadError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    r.patient_id = fields[2];
    r.mask_path = fields[4];
    r.split = split;
    out.push_back(std::move(r));
  }
  return out;
}

DatasetManifest read_manifest_dir(const std::filesystem::path& dir) {
  DatasetManifest m;
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    auto recs = read_manifest_csv(split_manifest_path(dir, s));
    m.records.insert(m.records.end(), recs.begin(), recs.end());
  }
  return m;
}

DatasetManifest save_dataset(const GeneratedDataset& dataset, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  DatasetManifest m = dataset.manifest;
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    const Frame& f = dataset.frames[i];
    auto& r = m.records[i];
    const std::string name = f.patient_id + "_" + std::to_string(i) + ".pgm";
    r.path = "images/" + name;
    write_image(dir / r.path, f.image);
    if (f.mask) {
      r.mask_path = "masks/" + name;
      write_mask(dir / r.mask_path, *f.mask);
    }
  }
  for (Split s : {Split::Train, Split::Val, Split::Test}) write_manifest_csv(split_manifest_path(dir, s), m.in_split(s));
  return m;
}

std::vector<Frame> load_dataset(const std::filesystem::path& manifest_path) {
  const auto records = read_manifest_csv(manifest_path);
  const auto base = manifest_path.parent_path();
  std::vector<Frame> frames;
  frames.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    auto where = [&] { return "record " + std::to_string(i) + " (" + r.path + ")"; };
    if (r.label < 0) throw LoadError(where() + ": negative label");
    Frame f;
    try {
      f.image = read_image(base / r.path);
    } catch (const std::exception& e) {
      throw LoadError(where() + ": " + e.what());
    }
    if (f.image.height() != f.image.width())
      throw LoadError(where() + ": image is not square (" + std::to_string(f.image.height()) + "x" +
                      std::to_string(f.image.width()) + ")");
    if (!frames.empty() && !f.image.same_shape(frames.front().image.height(), frames.front().image.width()))
      throw LoadError(where() + ": resolution differs from the first record");
    if (!r.mask_path.empty()) {
      try {
        f.mask = read_mask(base / r.mask_path);
      } catch (const std::exception& e) {
        throw LoadError(where() + ": mask " + r.mask_path + ": " + e.what());
      }
      if (!f.mask->matches(f.image)) throw LoadError(where() + ": mask dimensions differ from image");
    }
    f.label = r.label;
    f.patient_id = r.patient_id;
    f.domain = r.domain;
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace backmix
