// Command-line front end: dataset generation, mask estimation, training,
// evaluation, sweeps and ablations.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>

#include "backmix/attribution.hpp"
#include "backmix/harness.hpp"
#include "backmix/pgm.hpp"
#include "backmix/sector.hpp"

namespace fs = std::filesystem;
using namespace backmix;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> settings;
  std::string kind, output;
  std::optional<double> fraction, lambda;
  std::optional<int> epochs;
  std::vector<std::uint64_t> seeds;
  bool fresh = false;
  bool quiet = false;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("-c,--config", o.config_path, "Config file (flat key = value)")->check(CLI::ExistingFile);
  app->add_option("--set", o.settings, "Override a config key, e.g. --set train.lr=0.001");
  app->add_option("--kind", o.kind, "Background kind: none, backmix, black, noise, shuffle");
  app->add_option("--f", o.fraction, "Supervised fraction f");
  app->add_option("--lambda", o.lambda, "wBackMix weighting strength");
  app->add_option("--epochs", o.epochs, "Training epochs");
  app->add_option("--seeds", o.seeds, "Training seeds")->delimiter(',');
  app->add_option("-o,--output", o.output, "Output directory");
  app->add_flag("--fresh", o.fresh, "Ignore completed results from earlier runs");
  app->add_flag("-q,--quiet", o.quiet, "No progress output");
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig c = o.config_path.empty() ? default_config() : read_config(o.config_path);
  for (const auto& s : o.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_config_value(c, s.substr(0, eq), s.substr(eq + 1));
  }
  if (!o.kind.empty()) set_config_value(c, "augmentation.kind", o.kind);
  if (o.fraction) c.fraction = *o.fraction;
  if (o.lambda) c.lambda = *o.lambda;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (!o.seeds.empty()) c.train.seeds = o.seeds;
  if (!o.output.empty()) c.output_dir = o.output;
  c.validate();
  return c;
}

RunOptions run_options(const CommonOptions& o) { return {!o.fresh, o.quiet ? nullptr : &std::cerr}; }

int cmd_generate(const CommonOptions& o, const std::map<std::string, std::string>& data_flags, const std::string& out) {
  CommonOptions copy = o;
  for (const auto& [key, value] : data_flags) copy.settings.push_back(key + "=" + value);
  const ExperimentConfig c = resolve(copy);
  const auto ds = generate_synthetic_dataset(c.data);
  const auto manifest = save_dataset(ds, out);
  std::cout << "wrote " << manifest.records.size() << " frames to " << out << " (train "
            << manifest.in_split(Split::Train).size() << ", val " << manifest.in_split(Split::Val).size()
            << ", test " << manifest.in_split(Split::Test).size() << ")\n";
  return 0;
}

int cmd_estimate_masks(const std::string& in_path, const std::string& out_path, std::string mask_dir,
                       const MaskEstimatorConfig& est) {
  const fs::path in_dir = fs::path(in_path).parent_path();
  const fs::path out_dir = fs::absolute(out_path).parent_path();
  if (mask_dir.empty()) mask_dir = (out_dir / "estimated_masks").string();
  fs::create_directories(mask_dir);
  auto records = read_manifest_csv(in_path);
  int failures = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    const fs::path image_path = fs::absolute(in_dir / r.path);
    if (!r.mask_path.empty()) r.mask_path = fs::relative(fs::absolute(in_dir / r.mask_path), out_dir).string();
    r.path = fs::relative(image_path, out_dir).string();
    try {
      const auto estimate = estimate_sector_mask(read_image(image_path), est);
      if (estimate.warning) std::cerr << "record " << i << " (" << image_path.string() << "): " << *estimate.warning << '\n';
      const fs::path mask_path = fs::absolute(fs::path(mask_dir) / (image_path.stem().string() + "_mask.pgm"));
      write_mask(mask_path, estimate.mask);
      r.mask_path = fs::relative(mask_path, out_dir).string();
    } catch (const std::exception& e) {
      std::cerr << "record " << i << " (" << image_path.string() << "): " << e.what() << '\n';
      r.mask_path.clear();
      ++failures;
    }
  }
  write_manifest_csv(out_path, records);
  std::cout << "estimated " << records.size() - static_cast<std::size_t>(failures) << "/" << records.size()
            << " masks, manifest written to " << out_path << '\n';
  return failures ? 1 : 0;
}

int cmd_train(const CommonOptions& o) {
  const auto c = resolve(o);
  const auto data = load_experiment_data(c);
  fs::create_directories(c.output_dir);
  write_config(fs::path(c.output_dir) / "config.txt", c);
  int failed = 0;
  for (const auto seed : c.train.seeds) {
    const auto r = run_seed(c, data, seed, run_options(o));
    if (!r.complete) ++failed;
    std::cout << "seed " << seed << ": " << (r.complete ? "complete" : "incomplete: " + r.error) << '\n';
  }
  return failed ? 1 : 0;
}

int cmd_run(const CommonOptions& o) {
  const auto c = resolve(o);
  const auto r = run_experiment(c, run_options(o));
  std::cout << format_report_table(c, r);
  return r.complete() ? 0 : 1;
}

int cmd_report(const CommonOptions& o) {
  const auto c = resolve(o);
  const auto r = collect_experiment(c, load_experiment_data(c), run_options(o));
  std::cout << format_report_table(c, r);
  return r.complete() ? 0 : 1;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& manifest, const std::string& out) {
  const auto [model, meta] = load_checkpoint(checkpoint);
  const auto frames = load_dataset(manifest);
  std::vector<Frame> id, ood;
  for (const auto& f : frames) (f.domain == Domain::InDist ? id : ood).push_back(f);
  SeedReport r;
  r.seed = meta.seed;
  r.best_epoch = meta.best_epoch;
  r.id = evaluate_domain(model, id);
  r.ood = evaluate_domain(model, ood);
  r.complete = true;
  const auto kv = seed_report_kv(r);
  if (!out.empty()) {
    fs::create_directories(out);
    kv.write(fs::path(out) / "report.kv");
  }
  std::cout << kv.format();
  return 0;
}

int cmd_sweep(const CommonOptions& o, const std::vector<double>& fractions, const std::vector<double>& lambdas) {
  const auto c = resolve(o);
  const auto cells = run_sweep(c, fractions, lambdas, run_options(o));
  std::cout << format_sweep_table(cells, true) << '\n' << format_sweep_table(cells, false);
  for (const auto& cell : cells)
    if (!cell.report || !cell.report->complete()) return 1;
  return 0;
}

int cmd_ablate(const CommonOptions& o, int k) {
  const auto c = resolve(o);
  const auto r = run_subset_ablation(c, k, run_options(o));
  std::cout << ablation_kv(r).format();
  return r.complete_runs == static_cast<std::size_t>(k) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BackMix background-swap augmentation experiments"};
  app.require_subcommand(1);

  CommonOptions common;

  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset (images, masks, manifests)");
  add_common(generate, common);
  std::string gen_out;
  generate->add_option("--out", gen_out, "Dataset directory")->required();
  std::map<std::string, std::string> data_flags;
  for (const auto& key : config_keys()) {
    if (key.rfind("data.", 0) != 0 || key == "data.dataset_dir") continue;
    const std::string flag = key.substr(5);
    generate->add_option_function<std::string>(
        "--" + flag, [&data_flags, key](const std::string& v) { data_flags[key] = v; }, "Sets " + key);
  }

  auto* estimate = app.add_subcommand("estimate-masks", "Estimate sector masks for every record of a manifest");
  std::string est_in, est_out, est_mask_dir;
  MaskEstimatorConfig est;
  std::optional<double> fixed_threshold;
  estimate->add_option("--manifest", est_in, "Input manifest CSV")->required()->check(CLI::ExistingFile);
  estimate->add_option("--out", est_out, "Output manifest CSV")->required();
  estimate->add_option("--mask-dir", est_mask_dir, "Directory for estimated masks");
  estimate->add_option("--threshold", fixed_threshold, "Fixed intensity threshold instead of Otsu");
  estimate->add_option("--closing", est.closing_iterations, "Closing iterations");

  auto* train_cmd = app.add_subcommand("train", "Train every configured seed and write per-seed results");
  add_common(train_cmd, common);

  auto* run_cmd = app.add_subcommand("run", "Train, evaluate and report one experiment");
  add_common(run_cmd, common);

  auto* report_cmd = app.add_subcommand("report", "Aggregate finished seed directories into report files");
  add_common(report_cmd, common);

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a manifest");
  std::string eval_ckpt, eval_manifest, eval_out;
  evaluate->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--manifest", eval_manifest, "Manifest CSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("-o,--output", eval_out, "Directory for report.kv");

  auto* sweep = app.add_subcommand("sweep", "Baseline plus a grid over f and lambda");
  add_common(sweep, common);
  std::vector<double> sweep_f{1.0, 0.5, 0.2, 0.1, 0.05, 0.01};
  std::vector<double> sweep_lambda;
  sweep->add_option("--fractions", sweep_f, "f values")->delimiter(',');
  sweep->add_option("--lambdas", sweep_lambda, "lambda values (default 0)")->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "BackMix on k disjoint supervised subsets");
  add_common(ablate, common);
  int ablate_k = 5;
  ablate->add_option("-k,--subsets", ablate_k, "Number of disjoint subsets");

  auto* show = app.add_subcommand("config", "Print the resolved config");
  add_common(show, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) return cmd_generate(common, data_flags, gen_out);
    if (*estimate) {
      if (fixed_threshold) {
        est.otsu = false;
        est.fixed_threshold = *fixed_threshold;
      }
      return cmd_estimate_masks(est_in, est_out, est_mask_dir, est);
    }
    if (*train_cmd) return cmd_train(common);
    if (*run_cmd) return cmd_run(common);
    if (*report_cmd) return cmd_report(common);
    if (*evaluate) return cmd_evaluate(eval_ckpt, eval_manifest, eval_out);
    if (*sweep) return cmd_sweep(common, sweep_f, sweep_lambda);
    if (*ablate) return cmd_ablate(common, ablate_k);
    if (*show) {
      std::cout << format_config(resolve(common));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
