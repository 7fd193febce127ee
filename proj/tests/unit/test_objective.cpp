#include <doctest.h>

#include <cmath>
#include <random>

#include "backmix/image.hpp"
#include "backmix/objective.hpp"

using namespace backmix;

namespace {

WeightingConfig cfg(double f, double lambda) {
  WeightingConfig c;
  c.fraction = f;
  c.lambda = lambda;
  return c;
}

// Two-class logits (0, d) with label 1 whose cross-entropy equals `ce`.
std::pair<double, double> logits_with_ce(double ce) { return {0.0, -std::log(std::exp(ce) - 1.0)}; }

}  // namespace

TEST_CASE("weights follow 1 - lambda f and 1 + lambda (1 - f) on a grid") {
  for (double f : {0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0})
    for (double lambda : {0.0, 0.5, 1.0, 2.0}) {
      if (lambda * f > 1.0) continue;
      CHECK(example_weight(false, cfg(f, lambda)) == 1.0 - lambda * f);
      CHECK(example_weight(true, cfg(f, lambda)) == 1.0 + lambda * (1.0 - f));
    }
  CHECK(example_weight(false, cfg(0.05, 1.0)) == doctest::Approx(0.95).epsilon(1e-12));
  CHECK(example_weight(true, cfg(0.05, 1.0)) == doctest::Approx(1.95).epsilon(1e-12));
  CHECK(example_weight(true, cfg(0.3, 0.0)) == 1.0);
  CHECK(example_weight(false, cfg(0.3, 0.0)) == 1.0);
  CHECK(example_weight(true, cfg(1.0, 0.7)) == 1.0);
}

TEST_CASE("batch mean of weights is 1 on exact-fraction batches") {
  for (auto [aug, size] : {std::pair{1, 20}, std::pair{5, 100}, std::pair{16, 64}, std::pair{32, 64}, std::pair{1, 1}})
    for (double lambda : {0.5, 1.0, 2.0}) {
      const double f = static_cast<double>(aug) / size;
      if (lambda * f > 1.0) continue;
      double sum = 0.0;
      for (int i = 0; i < size; ++i) sum += example_weight(i < aug, cfg(f, lambda));
      CHECK(std::abs(sum / size - 1.0) < 1e-9);
    }
}

TEST_CASE("lambda f > 1 and out-of-range values are configuration errors") {
  CHECK_THROWS_AS(cfg(0.6, 2.0).validate(), ConfigError);
  CHECK_THROWS_AS(example_weight(true, cfg(0.6, 2.0)), ConfigError);
  CHECK_THROWS_AS(cfg(1.5, 0.0).validate(), ConfigError);
  CHECK_THROWS_AS(cfg(0.5, -1.0).validate(), ConfigError);
  CHECK_NOTHROW(cfg(0.5, 2.0).validate());
}

TEST_CASE("weights are monotone in lambda for f < 1") {
  for (double f : {0.01, 0.05, 0.5, 0.9}) {
    double prev_aug = -1.0, prev_plain = 2.0;
    for (double lambda = 0.0; lambda * f <= 1.0 && lambda <= 5.0; lambda += 0.25) {
      const double a = example_weight(true, cfg(f, lambda));
      const double p = example_weight(false, cfg(f, lambda));
      CHECK(a > prev_aug);
      CHECK(p < prev_plain);
      prev_aug = a;
      prev_plain = p;
    }
  }
}

TEST_CASE("weighted loss hand example gives 0.68") {
  const auto [a0, a1] = logits_with_ce(0.2);
  const auto [b0, b1] = logits_with_ce(0.6);
  const std::vector<double> logits{a0, a1, b0, b1};
  const std::vector<int> labels{1, 1};
  const auto ce = cross_entropy_per_example(logits, 2, labels);
  CHECK(ce[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(ce[1] == doctest::Approx(0.6).epsilon(1e-12));
  const std::vector<double> w{0.95, 1.95};
  CHECK(weighted_cross_entropy(logits, 2, labels, w).loss == doctest::Approx(0.68).epsilon(1e-12));
}

TEST_CASE("unit weights give the plain mean cross-entropy") {
  const std::vector<double> logits{1.0, 2.0, 0.5, -1.0, 0.0, 3.0};
  const std::vector<int> labels{0, 2};
  const std::vector<double> w{1.0, 1.0};
  // log-sum-exp by hand
  const double ce0 = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(0.5)) - 1.0;
  const double ce1 = std::log(std::exp(-1.0) + std::exp(0.0) + std::exp(3.0)) - 3.0;
  CHECK(weighted_cross_entropy(logits, 3, labels, w).loss == doctest::Approx((ce0 + ce1) / 2).epsilon(1e-12));
}

TEST_CASE("perfect logits give zero loss regardless of weights") {
  const std::vector<double> logits{1000.0, 0.0, 0.0, 1000.0};
  const std::vector<int> labels{0, 1};
  const std::vector<double> w{0.3, 1.9};
  const auto r = weighted_cross_entropy(logits, 2, labels, w);
  CHECK(r.loss == 0.0);
  for (double g : r.grad) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("gradient matches central finite differences within 1e-4 relative") {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::uniform_int_distribution<int> label(0, 3);
  std::uniform_real_distribution<double> weight(0.0, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    const int batch = 6;
    std::vector<double> logits(batch * 4);
    std::vector<int> labels(batch);
    std::vector<double> w(batch);
    for (auto& v : logits) v = normal(gen);
    for (auto& v : labels) v = label(gen);
    for (auto& v : w) v = weight(gen);
    const auto r = weighted_cross_entropy(logits, 4, labels, w);
    const double h = 1e-5;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      auto up = logits, down = logits;
      up[i] += h;
      down[i] -= h;
      const double fd = (weighted_cross_entropy(up, 4, labels, w).loss - weighted_cross_entropy(down, 4, labels, w).loss) / (2 * h);
      const double scale = std::max(std::abs(fd), std::abs(r.grad[i]));
      if (scale < 1e-8) continue;
      CHECK(std::abs(fd - r.grad[i]) / scale < 1e-4);
    }
  }
}

TEST_CASE("lambda = 0 weights reproduce unit-weight loss bit for bit") {
  const std::vector<double> logits{0.3, -1.2, 2.2, 0.1, 0.7, -0.4, 1.5, 0.0};
  const std::vector<int> labels{2, 0};
  std::vector<double> w;
  for (bool aug : {true, false}) w.push_back(example_weight(aug, cfg(0.05, 0.0)));
  const auto weighted = weighted_cross_entropy(logits, 4, labels, w);
  const auto plain = weighted_cross_entropy(logits, 4, labels, std::vector<double>{1.0, 1.0});
  CHECK(weighted.loss == plain.loss);
  CHECK(weighted.grad == plain.grad);
}

TEST_CASE("shape mismatches and negative weights are errors") {
  const std::vector<double> logits{0.0, 1.0, 2.0, 3.0};
  CHECK_THROWS(weighted_cross_entropy(logits, 2, std::vector<int>{0}, std::vector<double>{1.0}));
  CHECK_THROWS(weighted_cross_entropy(logits, 2, std::vector<int>{0, 1}, std::vector<double>{1.0}));
  CHECK_THROWS(weighted_cross_entropy(logits, 3, std::vector<int>{0, 1}, std::vector<double>{1.0, 1.0}));
  CHECK_THROWS(weighted_cross_entropy(logits, 2, std::vector<int>{0, 1}, std::vector<double>{1.0, -0.1}));
  CHECK_THROWS(weighted_cross_entropy(logits, 2, std::vector<int>{0, 2}, std::vector<double>{1.0, 1.0}));
}
