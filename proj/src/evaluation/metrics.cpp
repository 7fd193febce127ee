#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "backmix/evaluation.hpp"

namespace backmix {
namespace {

void check_pair(const Image& map, const SectorMask& mask, std::size_t index) {
  if (!mask.matches(map))
    throw ShapeError("focus metrics: map/mask shape mismatch at frame " + std::to_string(index));
}

void check_lengths(std::size_t maps, std::size_t masks) {
  if (maps != masks)
    throw ShapeError("focus metrics: " + std::to_string(maps) + " maps but " + std::to_string(masks) + " masks");
}

template <typename RatioFn>
MetricValue average_ratio(std::span<const Image> maps, std::span<const SectorMask> masks, RatioFn ratio) {
  check_lengths(maps.size(), masks.size());
  MetricValue v;
  double sum = 0.0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    check_pair(maps[i], masks[i], i);
    const double r = ratio(maps[i], masks[i]);
    if (std::isnan(r)) {
      ++v.skipped;
    } else {
      sum += r;
      ++v.evaluated;
    }
  }
  v.percent = v.evaluated ? 100.0 * sum / static_cast<double>(v.evaluated) : 0.0;
  return v;
}

}  // namespace

double frame_energy_ratio(const Image& map, const SectorMask& mask) {
  check_pair(map, mask, 0);
  double inside = 0.0;
  double total = 0.0;
  for (std::size_t p = 0; p < map.size(); ++p) {
    total += map[p];
    if (mask[p]) inside += map[p];
  }
  return total > 0.0 ? inside / total : std::numeric_limits<double>::quiet_NaN();
}

double frame_focus_ratio(const Image& map, const SectorMask& mask) {
  check_pair(map, mask, 0);
  std::size_t high = 0;
  std::size_t inside = 0;
  for (std::size_t p = 0; p < map.size(); ++p) {
    if (map[p] > kHighActivation) {
      ++high;
      if (mask[p]) ++inside;
    }
  }
  return high ? static_cast<double>(inside) / static_cast<double>(high) : std::numeric_limits<double>::quiet_NaN();
}

MetricValue energy_percentage(std::span<const Image> maps, std::span<const SectorMask> masks) {
  return average_ratio(maps, masks, frame_energy_ratio);
}

MetricValue focus_percentage(std::span<const Image> maps, std::span<const SectorMask> masks) {
  return average_ratio(maps, masks, frame_focus_ratio);
}

FocusReport focus_report(const std::vector<ActivationMap>& maps, std::span<const SectorMask> masks) {
  check_lengths(maps.size(), masks.size());
  std::vector<Image> scores;
  scores.reserve(maps.size());
  for (const auto& m : maps) scores.push_back(m.scores);
  const auto e = energy_percentage(scores, masks);
  const auto f = focus_percentage(scores, masks);
  FocusReport r;
  r.energy_pct = e.percent;
  r.focus_pct = f.percent;
  r.n_frames = maps.size();
  r.energy_evaluated = e.evaluated;
  r.energy_skipped = e.skipped;
  r.focus_evaluated = f.evaluated;
  r.focus_skipped = f.skipped;
  return r;
}

ClassificationReport classification_metrics(std::span<const int> predictions, std::span<const int> labels,
                                             int num_classes) {
  if (labels.empty()) throw std::invalid_argument("classification_metrics: empty input");
  if (predictions.size() != labels.size())
    throw std::invalid_argument("classification_metrics: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(labels.size()) + " labels");
  if (num_classes < 1) throw std::invalid_argument("classification_metrics: num_classes must be positive");
  const auto k = static_cast<std::size_t>(num_classes);
  ClassificationReport r;
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i];
    const int p = predictions[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
      throw std::invalid_argument("classification_metrics: class index out of range at example " + std::to_string(i));
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) correct += r.confusion[c][c];
  r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());

  r.per_class.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t o = 0; o < k; ++o) {
      predicted += r.confusion[o][c];
      actual += r.confusion[c][o];
    }
    const double tp = static_cast<double>(r.confusion[c][c]);
    auto& s = r.per_class[c];
    s.support = actual;
    const double precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    const double recall = actual ? tp / static_cast<double>(actual) : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    s.precision = 100.0 * precision;
    s.recall = 100.0 * recall;
    s.f1 = 100.0 * f1;
    r.precision += s.precision;
    r.recall += s.recall;
    r.f1 += s.f1;
  }
  r.precision /= static_cast<double>(k);
  r.recall /= static_cast<double>(k);
  r.f1 /= static_cast<double>(k);
  return r;
}

}  // namespace backmix
