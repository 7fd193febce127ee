#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "backmix/harness.hpp"

namespace backmix {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw ConfigError("config: bad value for " + key + ": '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + text + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse_value<T>(key, item));
  return out;
}

Range parse_range(const std::string& key, const std::string& text) {
  const auto v = parse_list<double>(key, text);
  if (v.size() != 2) throw ConfigError("config: " + key + " expects 'lo, hi'");
  return {v[0], v[1]};
}

template <typename T>
std::string join(const T& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ", ";
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>)
      out += format_number(v);
    else
      out += std::to_string(v);
  }
  return out;
}

std::string fmt(double v) { return format_number(v); }
std::string fmt(Range r) { return format_number(r.lo) + ", " + format_number(r.hi); }

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
};

#define BMX_INT(KEY, MEMBER)                                                                       \
  Field {                                                                                          \
    KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },                       \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_value<int>(k, v); } \
  }
#define BMX_U64(KEY, MEMBER)                                                                       \
  Field {                                                                                          \
    KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },                       \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {                      \
          c.MEMBER = parse_value<std::uint64_t>(k, v);                                             \
        }                                                                                          \
  }
#define BMX_DBL(KEY, MEMBER)                                                                       \
  Field {                                                                                          \
    KEY, [](const ExperimentConfig& c) { return fmt(c.MEMBER); },                                  \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_value<double>(k, v); } \
  }
#define BMX_RANGE(KEY, MEMBER)                                                                     \
  Field {                                                                                          \
    KEY, [](const ExperimentConfig& c) { return fmt(c.MEMBER); },                                  \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.MEMBER = parse_range(k, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      BMX_INT("data.resolution", data.resolution),
      BMX_INT("data.num_classes", data.num_classes),
      BMX_INT("data.frames_per_patient", data.frames_per_patient),
      BMX_INT("data.num_patients", data.num_patients),
      BMX_INT("data.num_ood_patients", data.num_ood_patients),
      {"data.split_ratios", [](const ExperimentConfig& c) { return join(c.data.split_ratios); },
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         const auto r = parse_list<double>(k, v);
         if (r.size() != 3) throw ConfigError("config: " + k + " expects three ratios");
         c.data.split_ratios = {r[0], r[1], r[2]};
       }},
      BMX_DBL("data.shortcut_correlation", data.shortcut_correlation),
      BMX_INT("data.num_distractor_glyphs", data.num_distractor_glyphs),
      BMX_INT("data.clutter_glyphs", data.clutter_glyphs),
      BMX_INT("data.glyph_scale", data.glyph_scale),
      BMX_INT("data.glyph_margin", data.glyph_margin),
      BMX_DBL("data.glyph_intensity", data.glyph_intensity),
      BMX_DBL("data.ood_glyph_intensity", data.ood_glyph_intensity),
      BMX_RANGE("data.apex_y", data.apex_y),
      BMX_DBL("data.apex_x_jitter", data.apex_x_jitter),
      BMX_RANGE("data.half_angle_deg", data.half_angle_deg),
      BMX_RANGE("data.radius", data.radius),
      BMX_DBL("data.tissue_level", data.tissue_level),
      BMX_DBL("data.speckle_strength", data.speckle_strength),
      BMX_DBL("data.depth_attenuation", data.depth_attenuation),
      BMX_DBL("data.tissue_floor", data.tissue_floor),
      BMX_DBL("data.pattern_contrast", data.pattern_contrast),
      BMX_DBL("data.pattern_jitter", data.pattern_jitter),
      BMX_U64("data.seed", data.seed),
      {"data.dataset_dir", [](const ExperimentConfig& c) { return c.dataset_dir; },
       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.dataset_dir = trim(v); }},

      {"augmentation.kind", [](const ExperimentConfig& c) { return to_string(c.kind); },
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         try {
           c.kind = parse_background_kind(trim(v));
         } catch (const std::exception&) {
           throw ConfigError("config: bad value for " + k + ": '" + v + "'");
         }
       }},
      BMX_DBL("augmentation.f", fraction),
      BMX_U64("augmentation.seed", augmentation_seed),
      BMX_INT("augmentation.subset_count", subset_count),
      BMX_INT("augmentation.subset_index", subset_index),
      {"augmentation.standard", [](const ExperimentConfig& c) { return std::string(c.standard.enabled ? "true" : "false"); },
       [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.standard.enabled = parse_bool(k, v); }},
      BMX_DBL("augmentation.max_rotation_deg", standard.max_rotation_deg),
      BMX_DBL("augmentation.max_brightness_delta", standard.max_brightness_delta),
      BMX_RANGE("augmentation.contrast", standard.contrast),
      BMX_DBL("augmentation.flip_probability", standard.flip_probability),

      BMX_DBL("objective.lambda", lambda),

      BMX_INT("model.resolution", model.resolution),
      {"model.widths", [](const ExperimentConfig& c) { return join(c.model.widths); },
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         const auto w = parse_list<int>(k, v);
         if (w.size() != 4) throw ConfigError("config: " + k + " expects four stage widths");
         c.model.widths = {w[0], w[1], w[2], w[3]};
       }},
      BMX_INT("model.num_classes", model.num_classes),

      BMX_INT("train.epochs", train.epochs),
      BMX_INT("train.batch_size", train.batch_size),
      BMX_DBL("train.lr", train.learning_rate),
      {"train.seeds", [](const ExperimentConfig& c) { return join(c.train.seeds); },
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.seeds = parse_list<std::uint64_t>(k, v);
       }},

      {"output.dir", [](const ExperimentConfig& c) { return c.output_dir; },
       [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = trim(v); }},
      BMX_INT("output.heatmaps", heatmaps),
  };
  return table;
}

#undef BMX_INT
#undef BMX_U64
#undef BMX_DBL
#undef BMX_RANGE

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset_dir.empty()) {
    data.validate();
    if (data.resolution != model.resolution)
      throw ConfigError("config: data.resolution (" + std::to_string(data.resolution) +
                        ") must equal model.resolution (" + std::to_string(model.resolution) + ")");
    if (data.num_classes != model.num_classes)
      throw ConfigError("config: data.num_classes must equal model.num_classes");
  }
  model.validate();
  train.validate();
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("config: augmentation.f must lie in [0, 1]");
  WeightingConfig{effective_fraction(), lambda}.validate();
  if (subset_count < 0) throw ConfigError("config: augmentation.subset_count must be >= 0");
  if (subset_count > 0 && (subset_index < 0 || subset_index >= subset_count))
    throw ConfigError("config: augmentation.subset_index must lie in [0, subset_count)");
  if (heatmaps < 0) throw ConfigError("config: output.heatmaps must be >= 0");
  if (output_dir.empty()) throw ConfigError("config: output.dir is empty");
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.data.resolution = 64;
  c.model = ModelSpec::desk_scale(c.data.num_classes);
  c.model.resolution = 64;
  c.train.epochs = 10;
  return c;
}

void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const std::string k = trim(key);
  for (const auto& f : fields()) {
    if (k == f.key) {
      f.set(config, k, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + k + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

std::string format_config(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const std::string prefix = key.substr(0, key.find('.'));
    if (prefix != section) {
      if (!section.empty()) out += '\n';
      section = prefix;
    }
    out += key + " = " + f.get(config) + '\n';
  }
  return out;
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    try {
      set_config_value(base, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

ExperimentConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void write_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << format_config(config);
}

}  // namespace backmix
