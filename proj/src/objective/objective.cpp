#include "backmix/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "backmix/image.hpp"

namespace backmix {

void WeightingConfig::validate() const {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("weighting: f must lie in [0,1]");
  if (!(lambda >= 0.0)) throw ConfigError("weighting: lambda must be non-negative");
  if (lambda * fraction > 1.0)
    throw ConfigError("weighting: lambda * f = " + std::to_string(lambda * fraction) +
                      " exceeds 1 (non-augmented weight would be negative)");
}

double example_weight(bool is_backmixed, const WeightingConfig& config) {
  config.validate();
  return is_backmixed ? 1.0 + config.lambda * (1.0 - config.fraction) : 1.0 - config.lambda * config.fraction;
}

namespace {

void check_shapes(std::span<const double> logits, int num_classes, std::span<const int> labels) {
  if (num_classes < 1) throw ShapeError("cross entropy: num_classes must be positive");
  if (logits.size() != labels.size() * static_cast<std::size_t>(num_classes))
    throw ShapeError("cross entropy: logits size " + std::to_string(logits.size()) + " != batch " +
                     std::to_string(labels.size()) + " x classes " + std::to_string(num_classes));
  for (int l : labels)
    if (l < 0 || l >= num_classes) throw ShapeError("cross entropy: label " + std::to_string(l) + " out of range");
}

// log-sum-exp of one row
double log_normalizer(std::span<const double> row) {
  const double m = *std::max_element(row.begin(), row.end());
  double s = 0.0;
  for (double v : row) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

std::vector<double> cross_entropy_per_example(std::span<const double> logits, int num_classes,
                                              std::span<const int> labels) {
  check_shapes(logits, num_classes, labels);
  std::vector<double> out(labels.size());
  const auto k = static_cast<std::size_t>(num_classes);
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const auto row = logits.subspan(b * k, k);
    out[b] = log_normalizer(row) - row[static_cast<std::size_t>(labels[b])];
  }
  return out;
}

LossResult weighted_cross_entropy(std::span<const double> logits, int num_classes, std::span<const int> labels,
                                  std::span<const double> weights) {
  check_shapes(logits, num_classes, labels);
  if (weights.size() != labels.size())
    throw ShapeError("weighted cross entropy: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(labels.size()) + " examples");
  if (labels.empty()) throw ShapeError("weighted cross entropy: empty batch");
  for (double w : weights)
    if (!(w >= 0.0)) throw ConfigError("weighted cross entropy: weights must be non-negative");

  const auto k = static_cast<std::size_t>(num_classes);
  const double inv_b = 1.0 / static_cast<double>(labels.size());
  LossResult r;
  r.grad.assign(logits.size(), 0.0);
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const auto row = logits.subspan(b * k, k);
    const double lse = log_normalizer(row);
    const auto y = static_cast<std::size_t>(labels[b]);
    r.loss += weights[b] * (lse - row[y]);
    for (std::size_t c = 0; c < k; ++c) {
      const double p = std::exp(row[c] - lse);
      r.grad[b * k + c] = weights[b] * inv_b * (p - (c == y ? 1.0 : 0.0));
    }
  }
  r.loss *= inv_b;
  return r;
}

}  // namespace backmix
