#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "backmix/augment.hpp"
#include "backmix/classifier.hpp"
#include "backmix/data.hpp"
#include "backmix/evaluation.hpp"
#include "backmix/model.hpp"

namespace backmix {

/// Everything needed to reproduce one experiment arm.
struct ExperimentConfig {
  SyntheticSpec data;
  /// Directory holding train.csv/val.csv/test.csv; when empty the synthetic
  /// generator is used instead.
  std::string dataset_dir;

  BackgroundKind kind = BackgroundKind::None;
  double fraction = 1.0;  // f
  double lambda = 0.0;
  std::uint64_t augmentation_seed = 0;
  StandardAugmentConfig standard;
  /// When subset_count > 0 the supervised subset is the subset_index-th of
  /// subset_count disjoint subsets instead of a single random draw.
  int subset_count = 0;
  int subset_index = 0;

  ModelSpec model = ModelSpec::desk_scale();
  TrainConfig train;

  std::string output_dir = "runs/experiment";
  int heatmaps = 8;  // frames per test domain exported for the median seed

  /// Effective f: the baseline arm has no supervised subset.
  double effective_fraction() const { return kind == BackgroundKind::None ? 0.0 : fraction; }
  void validate() const;
};

/// Desk-scale defaults: 64x64 inputs, narrow ResNet, short schedule.
ExperimentConfig default_config();

/// Applies one `key = value` setting; throws ConfigError for unknown keys or bad values.
void set_config_value(ExperimentConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

/// Flat text, one `key = value` per line; `#` starts a comment.
std::string format_config(const ExperimentConfig& config);
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = default_config());
ExperimentConfig read_config(const std::filesystem::path& path);
void write_config(const std::filesystem::path& path, const ExperimentConfig& config);

/// Ordered key/value lines used by the machine-readable report files.
class KeyValues {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, long long value);
  const std::string* find(const std::string& key) const;
  const std::string& at(const std::string& key) const;
  double number(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string format() const;
  static KeyValues parse(const std::string& text);
  static KeyValues read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest round-trip decimal form.
std::string format_number(double v);

struct ExperimentData {
  std::vector<Frame> train, val, test_id, test_ood;
};

/// Generates or loads the dataset described by the config. Test frames are
/// separated by domain; training code only ever receives train and val.
ExperimentData load_experiment_data(const ExperimentConfig& config);

struct DomainReport {
  std::size_t frames = 0;  // 0 when the domain has no test frames
  ClassificationReport classification;
  FocusReport focus;
};

/// The six table columns, all in percent.
struct MetricRow {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double energy = 0.0;
  double focus = 0.0;
};

MetricRow metric_row(const DomainReport& r);

/// Classification plus GradCAM focus metrics (predicted-class maps).
DomainReport evaluate_domain(const ResNet& model, const std::vector<Frame>& frames);

struct SeedReport {
  std::uint64_t seed = 0;
  bool complete = false;
  std::string error;
  int best_epoch = 0;
  DomainReport id, ood;
};

struct ExperimentReport {
  std::vector<SeedReport> seeds;
  MetricRow mean_id, mean_ood;
  bool has_ood = false;
  std::optional<std::uint64_t> median_seed;

  std::size_t complete_count() const;
  bool complete() const { return !seeds.empty() && complete_count() == seeds.size(); }
};

/// Index of the median of `values` (lower median for even counts, stable
/// for ties).
std::size_t median_index(const std::vector<double>& values);

/// Means over complete seeds and the median-accuracy seed (o.o.d accuracy
/// when an o.o.d test set exists, otherwise i.d).
ExperimentReport aggregate(std::vector<SeedReport> seeds);

KeyValues seed_report_kv(const SeedReport& r);
SeedReport parse_seed_report(const KeyValues& kv);
KeyValues experiment_report_kv(const ExperimentReport& r);
ExperimentReport parse_experiment_report(const KeyValues& kv);
std::string format_report_table(const ExperimentConfig& config, const ExperimentReport& r);

struct RunOptions {
  /// Reuse seed directories (and experiment directories in sweeps) whose
  /// report.kv is marked complete.
  bool resume = true;
  std::ostream* log = nullptr;
};

std::filesystem::path seed_dir(const ExperimentConfig& config, std::uint64_t seed);

/// Trains and evaluates one seed, writing history.csv, checkpoint.bin and
/// report.kv under seed_dir(). Errors are caught and recorded in the report.
SeedReport run_seed(const ExperimentConfig& config, const ExperimentData& data, std::uint64_t seed,
                    const RunOptions& options = {});

/// Writes report.txt/report.kv and, when possible, heatmaps of the median seed.
void write_experiment_outputs(const ExperimentConfig& config, const ExperimentData& data,
                              const ExperimentReport& report, const RunOptions& options = {});

/// All seeds, aggregation and outputs. Incomplete seeds are marked, not fatal.
ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});
/// Same, with data already in memory (shared by sweeps and ablations).
ExperimentReport run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                const RunOptions& options = {});

/// Aggregates existing seed directories without training.
ExperimentReport collect_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                    const RunOptions& options = {});

struct SweepCell {
  std::string name;
  BackgroundKind kind = BackgroundKind::None;
  double fraction = 0.0;
  double lambda = 0.0;
  std::optional<ExperimentReport> report;
  std::string error;
};

/// Baseline row plus one BackMix run per (f, lambda); an empty lambda list
/// means {0}. Cell failures are recorded and the sweep continues.
std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::vector<double>& fractions,
                                 std::vector<double> lambdas, const RunOptions& options = {});
std::string format_sweep_table(const std::vector<SweepCell>& cells, bool out_of_distribution);
KeyValues sweep_kv(const std::vector<SweepCell>& cells);

struct Dispersion {
  double accuracy = 0.0;
  double f1 = 0.0;
  double energy = 0.0;
  double focus = 0.0;
};

struct AblationResult {
  std::vector<std::vector<std::size_t>> subsets;
  std::vector<ExperimentReport> runs;
  Dispersion std_id, std_ood;
  std::size_t complete_runs = 0;
};

/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_stddev(const std::vector<double>& values);

/// k BackMix runs on pairwise-disjoint supervised subsets of size round(f n),
/// seeds fixed. Throws ConfigError when k f > 1.
AblationResult run_subset_ablation(const ExperimentConfig& config, int k, const RunOptions& options = {});
KeyValues ablation_kv(const AblationResult& r);

}  // namespace backmix
