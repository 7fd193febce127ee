#include <fstream>
#include <ostream>

#include "backmix/attribution.hpp"
#include "backmix/harness.hpp"
#include "backmix/pgm.hpp"
#include "backmix/rng.hpp"

namespace backmix {
namespace fs = std::filesystem;

namespace {

void log_line(const RunOptions& options, const std::string& line) {
  if (options.log) *options.log << line << std::endl;
}

void check_frames(const std::vector<Frame>& frames, const ExperimentConfig& config, const char* split) {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (!f.image.same_shape(config.model.resolution, config.model.resolution))
      throw ConfigError(std::string(split) + " frame " + std::to_string(i) + " (" + f.patient_id +
                        ") does not match model.resolution " + std::to_string(config.model.resolution));
    if (f.label < 0 || f.label >= config.model.num_classes)
      throw ConfigError(std::string(split) + " frame " + std::to_string(i) + " has label " +
                        std::to_string(f.label) + " outside model.num_classes");
  }
}

bool report_complete(const fs::path& path) {
  if (!fs::exists(path)) return false;
  const auto kv = KeyValues::read(path);
  const auto* status = kv.find("status");
  return status && *status == "complete";
}

AugmentationPlan plan_for(const ExperimentConfig& config, const std::vector<Frame>& train, std::uint64_t seed) {
  const std::uint64_t plan_seed = derive_seed(config.augmentation_seed, {seed});
  if (config.subset_count > 0 && config.kind != BackgroundKind::None) {
    auto subsets = disjoint_subsets(train.size(), config.fraction, config.subset_count, plan_seed);
    return make_plan_with_subset(train, std::move(subsets[static_cast<std::size_t>(config.subset_index)]),
                                 config.fraction, config.kind, plan_seed, config.standard);
  }
  return make_plan(train, config.effective_fraction(), config.kind, plan_seed, config.standard);
}

void export_heatmaps(const ExperimentConfig& config, const ExperimentData& data, std::uint64_t seed,
                     const RunOptions& options) {
  if (config.heatmaps == 0) return;
  const fs::path dir = fs::path(config.output_dir) / "heatmaps";
  fs::create_directories(dir);
  const auto [model, meta] = load_checkpoint(seed_dir(config, seed) / "checkpoint.bin");
  auto panel = [&](const std::vector<Frame>& frames, const std::string& domain) {
    const std::size_t n = std::min(frames.size(), static_cast<std::size_t>(config.heatmaps));
    const std::vector<Frame> chosen(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(n));
    const auto maps = gradcam_batch(model, chosen, true);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string stem = domain + "_" + std::to_string(i);
      write_image(dir / (stem + "_image.pgm"), chosen[i].image);
      write_activation_map(dir / (stem + "_map.pgm"), maps[i]);
      write_overlay(dir / (stem + "_overlay.ppm"), chosen[i].image, maps[i]);
    }
  };
  panel(data.test_id, "id");
  panel(data.test_ood, "ood");
  log_line(options, "heatmaps of seed " + std::to_string(seed) + " written to " + dir.string());
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  ExperimentData d;
  if (config.dataset_dir.empty()) {
    auto ds = generate_synthetic_dataset(config.data);
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
      auto& frame = ds.frames[i];
      switch (ds.manifest.records[i].split) {
        case Split::Train: d.train.push_back(std::move(frame)); break;
        case Split::Val: d.val.push_back(std::move(frame)); break;
        case Split::Test:
          (frame.domain == Domain::InDist ? d.test_id : d.test_ood).push_back(std::move(frame));
          break;
      }
    }
  } else {
    const fs::path dir = config.dataset_dir;
    d.train = load_dataset(split_manifest_path(dir, Split::Train));
    d.val = load_dataset(split_manifest_path(dir, Split::Val));
    for (auto& f : load_dataset(split_manifest_path(dir, Split::Test)))
      (f.domain == Domain::InDist ? d.test_id : d.test_ood).push_back(std::move(f));
  }
  check_frames(d.train, config, "train");
  check_frames(d.val, config, "val");
  check_frames(d.test_id, config, "test");
  check_frames(d.test_ood, config, "test");
  if (d.test_id.empty() && d.test_ood.empty()) throw ConfigError("dataset has no test frames");
  return d;
}

DomainReport evaluate_domain(const ResNet& model, const std::vector<Frame>& frames) {
  DomainReport r;
  r.frames = frames.size();
  if (frames.empty()) return r;
  std::vector<int> labels;
  std::vector<SectorMask> masks;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    labels.push_back(frames[i].label);
    if (!frames[i].mask)
      throw ConfigError("focus metrics need a sector mask for every test frame; frame " + std::to_string(i) + " (" +
                        frames[i].patient_id + ") has none");
    masks.push_back(*frames[i].mask);
  }
  const auto pred = predict(model, images_of(frames));
  r.classification = classification_metrics(pred.labels, labels, model.num_classes());
  r.focus = focus_report(gradcam_batch(model, frames, true), masks);
  return r;
}

fs::path seed_dir(const ExperimentConfig& config, std::uint64_t seed) {
  return fs::path(config.output_dir) / ("seed_" + std::to_string(seed));
}

SeedReport run_seed(const ExperimentConfig& config, const ExperimentData& data, std::uint64_t seed,
                    const RunOptions& options) {
  const fs::path dir = seed_dir(config, seed);
  const fs::path report_path = dir / "report.kv";
  if (options.resume && report_complete(report_path) && fs::exists(dir / "checkpoint.bin")) {
    log_line(options, "seed " + std::to_string(seed) + ": reusing " + report_path.string());
    return parse_seed_report(KeyValues::read(report_path));
  }
  fs::create_directories(dir);
  SeedReport r;
  r.seed = seed;
  try {
    const auto plan = plan_for(config, data.train, seed);
    const WeightingConfig weighting{config.effective_fraction(), config.lambda};
    auto on_epoch = [&](const EpochRecord& e) {
      log_line(options, "seed " + std::to_string(seed) + " epoch " + std::to_string(e.epoch) + "/" +
                            std::to_string(config.train.epochs) + " loss " + format_number(e.train_loss) +
                            " val_acc " + format_number(e.val_accuracy));
    };
    auto result = train(ResNet(config.model, seed), plan, weighting, config.train, seed, data.train, data.val,
                        on_epoch);
    write_history_csv(dir / "history.csv", result.history);
    save_checkpoint(dir / "checkpoint.bin", result.model, {config.model, config.train, seed, result.best_epoch});
    r.best_epoch = result.best_epoch;
    r.id = evaluate_domain(result.model, data.test_id);
    r.ood = evaluate_domain(result.model, data.test_ood);
    r.complete = true;
  } catch (const std::exception& e) {
    r.complete = false;
    r.error = e.what();
    log_line(options, "seed " + std::to_string(seed) + " failed: " + r.error);
  }
  seed_report_kv(r).write(report_path);
  return r;
}

void write_experiment_outputs(const ExperimentConfig& config, const ExperimentData& data,
                              const ExperimentReport& report, const RunOptions& options) {
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  write_config(dir / "config.txt", config);
  experiment_report_kv(report).write(dir / "report.kv");
  std::ofstream(dir / "report.txt") << format_report_table(config, report);
  if (report.median_seed) {
    try {
      export_heatmaps(config, data, *report.median_seed, options);
    } catch (const std::exception& e) {
      log_line(options, std::string("heatmap export failed: ") + e.what());
    }
  }
}

ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  return run_experiment(config, load_experiment_data(config), options);
}

ExperimentReport run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                const RunOptions& options) {
  config.validate();
  std::vector<SeedReport> seeds;
  for (const auto seed : config.train.seeds) seeds.push_back(run_seed(config, data, seed, options));
  auto report = aggregate(std::move(seeds));
  write_experiment_outputs(config, data, report, options);
  return report;
}

ExperimentReport collect_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                    const RunOptions& options) {
  std::vector<SeedReport> seeds;
  for (const auto seed : config.train.seeds) {
    const fs::path path = seed_dir(config, seed) / "report.kv";
    if (fs::exists(path)) {
      seeds.push_back(parse_seed_report(KeyValues::read(path)));
    } else {
      SeedReport missing;
      missing.seed = seed;
      missing.error = "no report at " + path.string();
      seeds.push_back(missing);
    }
  }
  auto report = aggregate(std::move(seeds));
  write_experiment_outputs(config, data, report, options);
  return report;
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::vector<double>& fractions,
                                 std::vector<double> lambdas, const RunOptions& options) {
  if (fractions.empty()) throw ConfigError("sweep: the f list is empty");
  if (lambdas.empty()) lambdas = {0.0};
  const BackgroundKind kind = base.kind == BackgroundKind::None ? BackgroundKind::BackMix : base.kind;

  std::vector<SweepCell> cells;
  cells.push_back({"baseline", BackgroundKind::None, 0.0, 0.0, std::nullopt, {}});
  for (double f : fractions)
    for (double l : lambdas)
      cells.push_back({to_string(kind) + "_f" + format_number(f) + "_lambda" + format_number(l), kind, f, l,
                       std::nullopt, {}});

  std::optional<ExperimentData> data;
  for (auto& c : cells) {
    ExperimentConfig cfg = base;
    cfg.kind = c.kind;
    cfg.fraction = c.kind == BackgroundKind::None ? base.fraction : c.fraction;
    cfg.lambda = c.lambda;
    cfg.output_dir = (fs::path(base.output_dir) / c.name).string();
    const fs::path report_path = fs::path(cfg.output_dir) / "report.kv";
    try {
      if (options.resume && report_complete(report_path)) {
        log_line(options, "sweep: " + c.name + " already complete");
        c.report = parse_experiment_report(KeyValues::read(report_path));
        continue;
      }
      cfg.validate();
      if (!data) data = load_experiment_data(base);
      log_line(options, "sweep: running " + c.name);
      c.report = run_experiment(cfg, *data, options);
    } catch (const std::exception& e) {
      c.error = e.what();
      log_line(options, "sweep: " + c.name + " failed: " + c.error);
    }
  }
  fs::create_directories(base.output_dir);
  std::ofstream(fs::path(base.output_dir) / "sweep.txt")
      << format_sweep_table(cells, true) << '\n'
      << format_sweep_table(cells, false);
  sweep_kv(cells).write(fs::path(base.output_dir) / "sweep.kv");
  return cells;
}

AblationResult run_subset_ablation(const ExperimentConfig& config, int k, const RunOptions& options) {
  if (k < 1) throw ConfigError("ablation: need at least one subset");
  ExperimentConfig base = config;
  if (base.kind == BackgroundKind::None) base.kind = BackgroundKind::BackMix;
  base.validate();
  const auto data = load_experiment_data(base);

  AblationResult result;
  result.subsets = disjoint_subsets(data.train.size(), base.fraction, k,
                                    derive_seed(base.augmentation_seed, {base.train.seeds.front()}));
  std::vector<double> acc_id, f1_id, e_id, foc_id, acc_ood, f1_ood, e_ood, foc_ood;
  for (int i = 0; i < k; ++i) {
    ExperimentConfig cfg = base;
    cfg.subset_count = k;
    cfg.subset_index = i;
    cfg.output_dir = (fs::path(base.output_dir) / ("subset_" + std::to_string(i))).string();
    log_line(options, "ablation: subset " + std::to_string(i + 1) + "/" + std::to_string(k));
    ExperimentReport r;
    try {
      r = run_experiment(cfg, data, options);
    } catch (const std::exception& e) {
      log_line(options, "ablation: subset " + std::to_string(i) + " failed: " + e.what());
    }
    if (r.complete()) {
      ++result.complete_runs;
      acc_id.push_back(r.mean_id.accuracy);
      f1_id.push_back(r.mean_id.f1);
      e_id.push_back(r.mean_id.energy);
      foc_id.push_back(r.mean_id.focus);
      if (r.has_ood) {
        acc_ood.push_back(r.mean_ood.accuracy);
        f1_ood.push_back(r.mean_ood.f1);
        e_ood.push_back(r.mean_ood.energy);
        foc_ood.push_back(r.mean_ood.focus);
      }
    }
    result.runs.push_back(std::move(r));
  }
  result.std_id = {sample_stddev(acc_id), sample_stddev(f1_id), sample_stddev(e_id), sample_stddev(foc_id)};
  result.std_ood = {sample_stddev(acc_ood), sample_stddev(f1_ood), sample_stddev(e_ood), sample_stddev(foc_ood)};
  fs::create_directories(base.output_dir);
  ablation_kv(result).write(fs::path(base.output_dir) / "ablation.kv");
  std::ofstream txt(fs::path(base.output_dir) / "ablation.txt");
  txt << k << " disjoint subsets of " << result.subsets.front().size() << " supervised frames, "
      << result.complete_runs << " complete\n";
  txt << "standard deviation  accuracy  F1  %E  %F\n";
  txt << "i.d    " << format_number(result.std_id.accuracy) << "  " << format_number(result.std_id.f1) << "  "
      << format_number(result.std_id.energy) << "  " << format_number(result.std_id.focus) << '\n';
  txt << "o.o.d  " << format_number(result.std_ood.accuracy) << "  " << format_number(result.std_ood.f1) << "  "
      << format_number(result.std_ood.energy) << "  " << format_number(result.std_ood.focus) << '\n';
  return result;
}

}  // namespace backmix
