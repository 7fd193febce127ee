#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "backmix/harness.hpp"
#include "helpers.hpp"

using namespace backmix;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const fs::path& out) {
  auto c = default_config();
  c.data = testutil::small_spec(32, 12, 3);
  c.model.resolution = 32;
  c.model.widths = {4, 4, 8, 8};
  c.train.epochs = 1;
  c.train.batch_size = 8;
  c.train.seeds = {0};
  c.heatmaps = 2;
  c.output_dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

SeedReport seed_with(std::uint64_t seed, double ood_acc, double id_acc = 100.0) {
  SeedReport r;
  r.seed = seed;
  r.complete = true;
  r.id.frames = 10;
  r.id.classification.accuracy = id_acc;
  r.ood.frames = 10;
  r.ood.classification.accuracy = ood_acc;
  r.ood.focus.energy_pct = ood_acc / 2;
  return r;
}

}  // namespace

TEST_CASE("default config matches the desk-scale protocol") {
  const auto c = default_config();
  CHECK(c.data.resolution == 64);
  CHECK(c.model == ModelSpec::desk_scale(c.data.num_classes));
  CHECK(c.train.batch_size == 64);
  CHECK(c.train.learning_rate == 1e-3);
  CHECK(c.train.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(c.lambda == 0.0);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config text round trip") {
  auto c = default_config();
  set_config_value(c, "augmentation.kind", "backmix");
  set_config_value(c, "augmentation.f", "0.05");
  set_config_value(c, "objective.lambda", "2");
  set_config_value(c, "train.seeds", "3,4");
  set_config_value(c, "data.radius", "0.6,0.7");
  set_config_value(c, "model.widths", "4,8,16,32");
  const auto back = parse_config(format_config(c));
  CHECK(format_config(back) == format_config(c));
  CHECK(back.kind == BackgroundKind::BackMix);
  CHECK(back.fraction == 0.05);
  CHECK(back.lambda == 2.0);
  CHECK(back.train.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(back.model.widths == std::array<int, 4>{4, 8, 16, 32});

  testutil::TempDir dir("cfg");
  write_config(dir / "c.txt", c);
  CHECK(format_config(read_config(dir / "c.txt")) == format_config(c));
}

TEST_CASE("config parsing accepts comments and rejects unknown keys and bad values") {
  const auto c = parse_config("# note\n\naugmentation.f = 0.5  # trailing\n");
  CHECK(c.fraction == 0.5);
  auto d = default_config();
  CHECK_THROWS_AS(set_config_value(d, "augmentation.fraction", "0.5"), ConfigError);
  CHECK_THROWS_AS(set_config_value(d, "train.epochs", "many"), ConfigError);
  CHECK_THROWS_AS(set_config_value(d, "augmentation.kind", "bokeh"), ConfigError);
  CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);
  CHECK_FALSE(config_keys().empty());
}

TEST_CASE("config validation") {
  auto c = default_config();
  c.fraction = 1.5;
  c.kind = BackgroundKind::BackMix;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = default_config();
  c.kind = BackgroundKind::BackMix;
  c.fraction = 0.6;
  c.lambda = 2.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = default_config();
  c.model.resolution = 32;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = default_config();
  c.kind = BackgroundKind::None;
  c.fraction = 0.6;
  c.lambda = 2.0;  // the baseline arm ignores f
  CHECK_NOTHROW(c.validate());
  CHECK(c.effective_fraction() == 0.0);
}

TEST_CASE("key/value files round trip numbers exactly") {
  KeyValues kv;
  kv.set("a", 0.1 + 0.2);
  kv.set("b", 1.0 / 3.0);
  kv.set("n", 42LL);
  kv.set("s", std::string("text"));
  const auto back = KeyValues::parse(kv.format());
  CHECK(back.number("a") == 0.1 + 0.2);
  CHECK(back.number("b") == 1.0 / 3.0);
  CHECK(back.at("n") == "42");
  CHECK(back.at("s") == "text");
  CHECK(back.find("missing") == nullptr);
  CHECK_THROWS(back.at("missing"));
  CHECK(format_number(0.5) == "0.5");
}

TEST_CASE("median seed: accuracies 88, 90, 95 select the 90 run") {
  const auto r = aggregate({seed_with(0, 95), seed_with(1, 88), seed_with(2, 90)});
  REQUIRE(r.median_seed.has_value());
  CHECK(*r.median_seed == 2);
  CHECK(median_index({88, 90, 95}) == 1);
  CHECK(median_index({3, 1, 2, 4}) == 2);  // lower median of an even count
  CHECK(median_index({5, 5, 5}) == 1);
}

TEST_CASE("mean rows are recomputable from per-seed rows and skip incomplete seeds") {
  auto failed = seed_with(3, 10);
  failed.complete = false;
  failed.error = "boom";
  const auto r = aggregate({seed_with(0, 88), seed_with(1, 90), seed_with(2, 95), failed});
  CHECK(r.mean_ood.accuracy == (88.0 + 90.0 + 95.0) / 3.0);
  CHECK(r.mean_ood.energy == (44.0 + 45.0 + 47.5) / 3.0);
  CHECK(r.complete_count() == 3);
  CHECK_FALSE(r.complete());
  CHECK(r.has_ood);

  const auto back = parse_experiment_report(KeyValues::parse(experiment_report_kv(r).format()));
  CHECK(back.mean_ood.accuracy == r.mean_ood.accuracy);
  CHECK(back.seeds.size() == 4);
  CHECK_FALSE(back.seeds[3].complete);
  CHECK(back.seeds[3].error == "boom");
  CHECK(*back.median_seed == *r.median_seed);
}

TEST_CASE("seed reports round trip through key/value text") {
  auto s = seed_with(7, 81.25);
  s.best_epoch = 4;
  s.id.classification.confusion = {{3, 1}, {0, 6}};
  s.id.focus.energy_skipped = 2;
  const auto back = parse_seed_report(KeyValues::parse(seed_report_kv(s).format()));
  CHECK(back.seed == 7);
  CHECK(back.best_epoch == 4);
  CHECK(back.ood.classification.accuracy == 81.25);
  CHECK(back.id.classification.confusion == s.id.classification.confusion);
  CHECK(back.id.focus.energy_skipped == 2);
}

TEST_CASE("sample standard deviation") {
  CHECK(sample_stddev({}) == 0.0);
  CHECK(sample_stddev({3.0}) == 0.0);
  CHECK(sample_stddev({1.0, 3.0}) == doctest::Approx(std::sqrt(2.0)));
  CHECK(sample_stddev({2, 4, 4, 4, 5, 5, 7, 9}) == doctest::Approx(std::sqrt(32.0 / 7.0)));
}

TEST_CASE("tiny experiment: outputs written, identical on rerun") {
  testutil::TempDir dir("exp");
  auto a = tiny_config(dir / "a");
  a.kind = BackgroundKind::BackMix;
  a.fraction = 0.5;
  auto b = a;
  b.output_dir = (dir / "b").string();
  const auto ra = run_experiment(a);
  const auto rb = run_experiment(b);
  CHECK(ra.complete());
  CHECK(ra.has_ood);
  CHECK(slurp(dir / "a" / "report.kv") == slurp(dir / "b" / "report.kv"));
  CHECK(slurp(dir / "a" / "report.txt") == slurp(dir / "b" / "report.txt"));
  for (const char* f : {"config.txt", "seed_0/history.csv", "seed_0/checkpoint.bin", "seed_0/report.kv",
                        "heatmaps/id_0_map.pgm", "heatmaps/ood_1_overlay.ppm"})
    CHECK_MESSAGE(fs::exists(dir / "a" / f), f);
  CHECK(ra.seeds[0].ood.frames > 0);
  CHECK(ra.seeds[0].ood.focus.n_frames == ra.seeds[0].ood.frames);
}

TEST_CASE("a failing seed is marked incomplete without aborting") {
  testutil::TempDir dir("fail");
  auto c = tiny_config(dir / "x");
  c.kind = BackgroundKind::BackMix;
  c.fraction = 0.02;  // one supervised frame: pool too small
  c.train.seeds = {0, 1};
  const auto r = run_experiment(c);
  CHECK(r.complete_count() == 0);
  CHECK_FALSE(r.complete());
  CHECK_FALSE(r.seeds[0].error.empty());
  CHECK(KeyValues::read(dir / "x" / "report.kv").at("status") != "complete");
}

TEST_CASE("two-cell sweep resumes without retraining") {
  testutil::TempDir dir("sweep");
  const auto c = tiny_config(dir / "s");
  std::ostringstream log1;
  const auto first = run_sweep(c, {1.0}, {}, {true, &log1});
  REQUIRE(first.size() == 2);
  CHECK(first[0].name == "baseline");
  CHECK(first[1].lambda == 0.0);  // empty lambda list means 0
  REQUIRE(first[0].report);
  REQUIRE(first[1].report);
  CHECK(first[0].report->complete());
  CHECK(first[1].report->complete());
  CHECK(fs::exists(dir / "s" / "sweep.txt"));
  CHECK(fs::exists(dir / "s" / "sweep.kv"));
  const auto stamp = fs::last_write_time(dir / "s" / first[1].name / "seed_0" / "checkpoint.bin");

  std::ostringstream log2;
  const auto second = run_sweep(c, {1.0}, {}, {true, &log2});
  CHECK(log2.str().find("already complete") != std::string::npos);
  CHECK(log2.str().find("epoch") == std::string::npos);
  CHECK(fs::last_write_time(dir / "s" / first[1].name / "seed_0" / "checkpoint.bin") == stamp);
  REQUIRE(second.size() == 2);
  REQUIRE(second[1].report);
  CHECK(second[1].report->mean_ood.accuracy == first[1].report->mean_ood.accuracy);

  const auto table = format_sweep_table(second, true);
  for (const char* col : {"Accuracy", "Precision", "Recall", "F1", "%E", "%F"})
    CHECK(table.find(col) != std::string::npos);
}

TEST_CASE("sweep requires fractions") {
  testutil::TempDir dir("sweep0");
  CHECK_THROWS_AS(run_sweep(tiny_config(dir / "s"), {}, {}), ConfigError);
}

TEST_CASE("subset ablation uses disjoint subsets and reports all dispersion fields") {
  testutil::TempDir dir("abl");
  auto c = tiny_config(dir / "a");
  c.kind = BackgroundKind::BackMix;
  c.fraction = 0.25;
  const auto r = run_subset_ablation(c, 2);
  REQUIRE(r.subsets.size() == 2);
  std::set<std::size_t> all;
  for (const auto& s : r.subsets) all.insert(s.begin(), s.end());
  CHECK(all.size() == r.subsets[0].size() + r.subsets[1].size());
  CHECK(r.complete_runs == 2);
  const auto kv = KeyValues::read(dir / "a" / "ablation.kv");
  for (const char* domain : {"id", "ood"})
    for (const char* m : {"accuracy", "f1", "energy_pct", "focus_pct"})
      CHECK_MESSAGE(kv.find(std::string("std.") + domain + "." + m) != nullptr, domain << "." << m);

  auto too_many = c;
  too_many.fraction = 0.6;
  CHECK_THROWS_AS(run_subset_ablation(too_many, 2), ConfigError);
}

TEST_CASE("loading a dataset directory keeps test domains apart") {
  testutil::TempDir dir("dsdir");
  auto c = tiny_config(dir / "out");
  const auto ds = generate_synthetic_dataset(c.data);
  save_dataset(ds, dir / "data");
  c.dataset_dir = (dir / "data").string();
  const auto loaded = load_experiment_data(c);
  const auto generated = load_experiment_data(tiny_config(dir / "out"));
  CHECK(loaded.train.size() == generated.train.size());
  CHECK(loaded.test_ood.size() == generated.test_ood.size());
  for (const auto& f : loaded.test_ood) CHECK(f.domain == Domain::OutDist);
  for (const auto& f : loaded.test_id) CHECK(f.domain == Domain::InDist);
}
