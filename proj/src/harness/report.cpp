#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "backmix/harness.hpp"

namespace backmix {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void KeyValues::set(const std::string& key, const std::string& value) {
  if (value.find('\n') != std::string::npos) throw std::invalid_argument("KeyValues: newline in value of " + key);
  for (auto& e : entries_) {
    if (e.first == key) {
      e.second = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KeyValues::set(const std::string& key, double value) { set(key, format_number(value)); }
void KeyValues::set(const std::string& key, long long value) { set(key, std::to_string(value)); }

const std::string* KeyValues::find(const std::string& key) const {
  for (const auto& e : entries_)
    if (e.first == key) return &e.second;
  return nullptr;
}

const std::string& KeyValues::at(const std::string& key) const {
  if (const auto* v = find(key)) return *v;
  throw std::runtime_error("report: missing key " + key);
}

double KeyValues::number(const std::string& key) const {
  const std::string& s = at(key);
  if (s == "nan") return std::nan("");
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw std::runtime_error("report: " + key + " is not a number: " + s);
  return v;
}

std::string KeyValues::format() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + '\n';
  return out;
}

KeyValues KeyValues::parse(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv.entries_.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  return kv;
}

KeyValues KeyValues::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KeyValues::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format();
}

MetricRow metric_row(const DomainReport& r) {
  return {r.classification.accuracy, r.classification.precision, r.classification.recall,
          r.classification.f1,       r.focus.energy_pct,          r.focus.focus_pct};
}

std::size_t ExperimentReport::complete_count() const {
  return static_cast<std::size_t>(std::count_if(seeds.begin(), seeds.end(), [](const auto& s) { return s.complete; }));
}

std::size_t median_index(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("median_index: no values");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  return order[(order.size() - 1) / 2];
}

namespace {

MetricRow mean_of(const std::vector<MetricRow>& rows) {
  MetricRow m;
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.accuracy += r.accuracy;
    m.precision += r.precision;
    m.recall += r.recall;
    m.f1 += r.f1;
    m.energy += r.energy;
    m.focus += r.focus;
  }
  const double n = static_cast<double>(rows.size());
  m.accuracy /= n;
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  m.energy /= n;
  m.focus /= n;
  return m;
}

void put_domain(KeyValues& kv, const std::string& prefix, const DomainReport& d) {
  kv.set(prefix + "frames", static_cast<long long>(d.frames));
  if (d.frames == 0) return;
  const auto& c = d.classification;
  kv.set(prefix + "accuracy", c.accuracy);
  kv.set(prefix + "precision", c.precision);
  kv.set(prefix + "recall", c.recall);
  kv.set(prefix + "f1", c.f1);
  kv.set(prefix + "energy_pct", d.focus.energy_pct);
  kv.set(prefix + "focus_pct", d.focus.focus_pct);
  kv.set(prefix + "energy_evaluated", static_cast<long long>(d.focus.energy_evaluated));
  kv.set(prefix + "energy_skipped", static_cast<long long>(d.focus.energy_skipped));
  kv.set(prefix + "focus_evaluated", static_cast<long long>(d.focus.focus_evaluated));
  kv.set(prefix + "focus_skipped", static_cast<long long>(d.focus.focus_skipped));
  std::string confusion;
  for (const auto& row : c.confusion) {
    if (!confusion.empty()) confusion += ';';
    for (std::size_t j = 0; j < row.size(); ++j) confusion += (j ? "," : "") + std::to_string(row[j]);
  }
  kv.set(prefix + "confusion", confusion);
}

DomainReport get_domain(const KeyValues& kv, const std::string& prefix) {
  DomainReport d;
  d.frames = static_cast<std::size_t>(kv.number(prefix + "frames"));
  if (d.frames == 0) return d;
  auto& c = d.classification;
  c.accuracy = kv.number(prefix + "accuracy");
  c.precision = kv.number(prefix + "precision");
  c.recall = kv.number(prefix + "recall");
  c.f1 = kv.number(prefix + "f1");
  d.focus.energy_pct = kv.number(prefix + "energy_pct");
  d.focus.focus_pct = kv.number(prefix + "focus_pct");
  d.focus.n_frames = d.frames;
  d.focus.energy_evaluated = static_cast<std::size_t>(kv.number(prefix + "energy_evaluated"));
  d.focus.energy_skipped = static_cast<std::size_t>(kv.number(prefix + "energy_skipped"));
  d.focus.focus_evaluated = static_cast<std::size_t>(kv.number(prefix + "focus_evaluated"));
  d.focus.focus_skipped = static_cast<std::size_t>(kv.number(prefix + "focus_skipped"));
  std::stringstream rows(kv.at(prefix + "confusion"));
  std::string row;
  while (std::getline(rows, row, ';')) {
    std::vector<std::size_t> counts;
    std::stringstream cells(row);
    std::string cell;
    while (std::getline(cells, cell, ',')) counts.push_back(std::stoull(cell));
    c.confusion.push_back(std::move(counts));
  }
  return d;
}

void put_row(KeyValues& kv, const std::string& prefix, const MetricRow& r) {
  kv.set(prefix + "accuracy", r.accuracy);
  kv.set(prefix + "precision", r.precision);
  kv.set(prefix + "recall", r.recall);
  kv.set(prefix + "f1", r.f1);
  kv.set(prefix + "energy_pct", r.energy);
  kv.set(prefix + "focus_pct", r.focus);
}

MetricRow get_row(const KeyValues& kv, const std::string& prefix) {
  return {kv.number(prefix + "accuracy"), kv.number(prefix + "precision"),  kv.number(prefix + "recall"),
          kv.number(prefix + "f1"),       kv.number(prefix + "energy_pct"), kv.number(prefix + "focus_pct")};
}

void put_seed(KeyValues& kv, const std::string& prefix, const SeedReport& r) {
  kv.set(prefix + "seed", std::to_string(r.seed));
  kv.set(prefix + "status", std::string(r.complete ? "complete" : "incomplete"));
  if (!r.complete) {
    std::string msg = r.error;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    kv.set(prefix + "error", msg);
    return;
  }
  kv.set(prefix + "best_epoch", static_cast<long long>(r.best_epoch));
  put_domain(kv, prefix + "id.", r.id);
  put_domain(kv, prefix + "ood.", r.ood);
}

SeedReport get_seed(const KeyValues& kv, const std::string& prefix) {
  SeedReport r;
  r.seed = std::stoull(kv.at(prefix + "seed"));
  r.complete = kv.at(prefix + "status") == "complete";
  if (!r.complete) {
    if (const auto* e = kv.find(prefix + "error")) r.error = *e;
    return r;
  }
  r.best_epoch = static_cast<int>(kv.number(prefix + "best_epoch"));
  r.id = get_domain(kv, prefix + "id.");
  r.ood = get_domain(kv, prefix + "ood.");
  return r;
}

std::string cell(double v, int width) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << std::setw(width) << v;
  return s.str();
}

std::string row_text(const MetricRow& r) {
  return cell(r.accuracy, 9) + cell(r.precision, 10) + cell(r.recall, 8) + cell(r.f1, 7) + cell(r.energy, 7) +
         cell(r.focus, 7);
}

const char* kColumns = " Accuracy Precision  Recall     F1     %E     %F";

}  // namespace

ExperimentReport aggregate(std::vector<SeedReport> seeds) {
  ExperimentReport r;
  r.seeds = std::move(seeds);
  std::vector<MetricRow> id, ood;
  std::vector<double> key;
  std::vector<std::uint64_t> ids;
  for (const auto& s : r.seeds) {
    if (!s.complete) continue;
    id.push_back(metric_row(s.id));
    if (s.ood.frames > 0) ood.push_back(metric_row(s.ood));
    key.push_back(s.ood.frames > 0 ? s.ood.classification.accuracy : s.id.classification.accuracy);
    ids.push_back(s.seed);
  }
  r.mean_id = mean_of(id);
  r.mean_ood = mean_of(ood);
  r.has_ood = !ood.empty();
  if (!key.empty()) r.median_seed = ids[median_index(key)];
  return r;
}

KeyValues seed_report_kv(const SeedReport& r) {
  KeyValues kv;
  put_seed(kv, "", r);
  return kv;
}

SeedReport parse_seed_report(const KeyValues& kv) { return get_seed(kv, ""); }

KeyValues experiment_report_kv(const ExperimentReport& r) {
  KeyValues kv;
  kv.set("status", std::string(r.complete() ? "complete" : "incomplete"));
  std::string seeds;
  for (const auto& s : r.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s.seed);
  kv.set("seeds", seeds);
  kv.set("complete_seeds", static_cast<long long>(r.complete_count()));
  kv.set("median_seed", r.median_seed ? std::to_string(*r.median_seed) : std::string("none"));
  kv.set("has_ood", std::string(r.has_ood ? "true" : "false"));
  put_row(kv, "mean.id.", r.mean_id);
  if (r.has_ood) put_row(kv, "mean.ood.", r.mean_ood);
  for (const auto& s : r.seeds) put_seed(kv, "seed." + std::to_string(s.seed) + ".", s);
  return kv;
}

ExperimentReport parse_experiment_report(const KeyValues& kv) {
  ExperimentReport r;
  std::stringstream list(kv.at("seeds"));
  std::string item;
  while (std::getline(list, item, ','))
    if (!item.empty()) r.seeds.push_back(get_seed(kv, "seed." + item + "."));
  r.has_ood = kv.at("has_ood") == "true";
  r.mean_id = get_row(kv, "mean.id.");
  if (r.has_ood) r.mean_ood = get_row(kv, "mean.ood.");
  if (const auto& m = kv.at("median_seed"); m != "none") r.median_seed = std::stoull(m);
  return r;
}

std::string format_report_table(const ExperimentConfig& config, const ExperimentReport& r) {
  std::ostringstream out;
  out << "kind " << to_string(config.kind) << ", f " << format_number(config.effective_fraction()) << ", lambda "
      << format_number(config.lambda) << ", epochs " << config.train.epochs << ", seeds " << r.complete_count()
      << "/" << r.seeds.size() << " complete\n\n";
  out << "test    seed " << kColumns << '\n';
  auto block = [&](const char* name, bool ood) {
    for (const auto& s : r.seeds) {
      out << std::left << std::setw(8) << name << std::setw(5) << s.seed << std::right;
      if (!s.complete) {
        out << "  incomplete: " << s.error << '\n';
        continue;
      }
      const auto& d = ood ? s.ood : s.id;
      if (d.frames == 0) {
        out << "  no frames\n";
        continue;
      }
      out << row_text(metric_row(d)) << '\n';
    }
    if (r.complete_count() > 0) out << std::left << std::setw(13) << name << std::right;
    if (r.complete_count() > 0) out << row_text(ood ? r.mean_ood : r.mean_id) << "  (mean)\n";
  };
  block("i.d", false);
  if (r.has_ood) block("o.o.d", true);
  out << "\nmedian seed: " << (r.median_seed ? std::to_string(*r.median_seed) : std::string("none")) << '\n';
  if (!r.complete()) out << "INCOMPLETE: " << (r.seeds.size() - r.complete_count()) << " seed(s) failed\n";
  return out.str();
}

std::string format_sweep_table(const std::vector<SweepCell>& cells, bool out_of_distribution) {
  std::ostringstream out;
  out << (out_of_distribution ? "o.o.d test" : "i.d test") << " (mean over seeds)\n";
  out << "arm        f       lambda" << kColumns << '\n';
  for (const auto& c : cells) {
    out << std::left << std::setw(11) << to_string(c.kind) << std::setw(8) << format_number(c.fraction)
        << std::setw(7) << (c.kind == BackgroundKind::None ? std::string("-") : format_number(c.lambda))
        << std::right;
    if (!c.report) {
      out << "  failed: " << c.error << '\n';
      continue;
    }
    const auto& r = *c.report;
    if (r.complete_count() == 0) {
      out << "  no complete seeds\n";
      continue;
    }
    if (out_of_distribution && !r.has_ood) {
      out << "  no o.o.d frames\n";
      continue;
    }
    out << row_text(out_of_distribution ? r.mean_ood : r.mean_id);
    if (!r.complete()) out << "  (" << r.complete_count() << "/" << r.seeds.size() << " seeds)";
    out << '\n';
  }
  return out.str();
}

KeyValues sweep_kv(const std::vector<SweepCell>& cells) {
  KeyValues kv;
  std::string names;
  bool complete = true;
  for (const auto& c : cells) {
    names += (names.empty() ? "" : ",") + c.name;
    complete = complete && c.report && c.report->complete();
  }
  kv.set("status", std::string(complete ? "complete" : "incomplete"));
  kv.set("cells", names);
  for (const auto& c : cells) {
    const std::string p = "cell." + c.name + ".";
    kv.set(p + "kind", to_string(c.kind));
    kv.set(p + "f", c.fraction);
    kv.set(p + "lambda", c.lambda);
    if (!c.report) {
      kv.set(p + "status", std::string("failed"));
      kv.set(p + "error", c.error);
      continue;
    }
    kv.set(p + "status", std::string(c.report->complete() ? "complete" : "incomplete"));
    put_row(kv, p + "id.", c.report->mean_id);
    if (c.report->has_ood) put_row(kv, p + "ood.", c.report->mean_ood);
  }
  return kv;
}

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

KeyValues ablation_kv(const AblationResult& r) {
  KeyValues kv;
  kv.set("subsets", static_cast<long long>(r.subsets.size()));
  kv.set("complete_runs", static_cast<long long>(r.complete_runs));
  auto put = [&](const std::string& p, const Dispersion& d) {
    kv.set(p + "accuracy", d.accuracy);
    kv.set(p + "f1", d.f1);
    kv.set(p + "energy_pct", d.energy);
    kv.set(p + "focus_pct", d.focus);
  };
  put("std.id.", r.std_id);
  put("std.ood.", r.std_ood);
  for (std::size_t i = 0; i < r.runs.size(); ++i) {
    const std::string p = "subset." + std::to_string(i) + ".";
    kv.set(p + "size", static_cast<long long>(r.subsets[i].size()));
    kv.set(p + "status", std::string(r.runs[i].complete() ? "complete" : "incomplete"));
    put_row(kv, p + "id.", r.runs[i].mean_id);
    if (r.runs[i].has_ood) put_row(kv, p + "ood.", r.runs[i].mean_ood);
  }
  return kv;
}

}  // namespace backmix
