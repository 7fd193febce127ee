#pragma once

#include <span>
#include <vector>

namespace backmix {

/// Example-level loss weighting: background-augmented examples get
/// 1 + lambda (1 - f), the rest 1 - lambda f.
struct WeightingConfig {
  double fraction = 0.0;  // f
  double lambda = 0.0;

  /// Throws ConfigError unless f in [0,1], lambda >= 0 and lambda * f <= 1.
  void validate() const;
};

double example_weight(bool is_backmixed, const WeightingConfig& config);

struct LossResult {
  double loss = 0.0;
  /// d loss / d logits, row-major batch x classes.
  std::vector<double> grad;
};

/// Per-example negative log-softmax likelihood.
std::vector<double> cross_entropy_per_example(std::span<const double> logits, int num_classes,
                                              std::span<const int> labels);

/// (1/B) sum_b w_b CE(logits_b, label_b) and its gradient w.r.t. the logits.
LossResult weighted_cross_entropy(std::span<const double> logits, int num_classes, std::span<const int> labels,
                                  std::span<const double> weights);

}  // namespace backmix
