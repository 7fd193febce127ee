#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "backmix/model.hpp"
#include "helpers.hpp"

using namespace backmix;

namespace {

ModelSpec tiny_spec() {
  ModelSpec s;
  s.resolution = 32;
  s.widths = {4, 4, 8, 8};
  s.num_classes = 3;
  return s;
}

nn::Tensor random_batch(int n, int res, std::uint64_t seed) {
  nn::Tensor t(1, n, res, res);
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : t.data) v = u(gen);
  return t;
}

double probe_loss(ResNet& net, const nn::Tensor& x, const std::vector<double>& coef) {
  const auto logits = net.forward_train(x);
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += coef[i] * logits[i];
  return s;
}

}  // namespace

TEST_CASE("forward on a batch of 8 at 64x64 gives 8 x C logits") {
  const ResNet net(ModelSpec::desk_scale(4), 0);
  const auto logits = net.logits(random_batch(8, 64, 1));
  CHECK(logits.size() == 8 * 4);
  for (double v : logits) CHECK(std::isfinite(v));
}

TEST_CASE("final-stage features are 8x8 for 64x64 input") {
  const ResNet net(ModelSpec::desk_scale(4), 0);
  const auto f = net.target_features(random_batch(2, 64, 1));
  CHECK(f.height == 8);
  CHECK(f.width == 8);
  CHECK(f.channels == 64);
  CHECK(f.batch == 2);
  CHECK(ModelSpec::desk_scale().final_feature_size() == 8);
  CHECK(ModelSpec::full_width().final_feature_size() == 14);
}

TEST_CASE("same seed gives identical initial parameters") {
  ResNet a(tiny_spec(), 42), b(tiny_spec(), 42), c(tiny_spec(), 43);
  bool differs = false;
  const auto sa = a.state(), sb = b.state(), sc = c.state();
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(*sa[i] == *sb[i]);
    differs = differs || *sa[i] != *sc[i];
  }
  CHECK(differs);
}

TEST_CASE("invalid specs are configuration errors") {
  auto s = tiny_spec();
  s.resolution = 36;
  CHECK_THROWS_AS(ResNet(s, 0), ConfigError);
  s.resolution = 24;  // 3x3 final map
  CHECK_THROWS_AS(ResNet(s, 0), ConfigError);
  s = tiny_spec();
  s.num_classes = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = tiny_spec();
  s.widths[2] = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = tiny_spec();
  s.cam_stage = 2;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("logits from target features agree with the full forward pass") {
  const ResNet net(tiny_spec(), 2);
  const auto x = random_batch(3, 32, 9);
  const auto direct = net.logits(x);
  const auto via = net.logits_from_features(net.target_features(x));
  REQUIRE(direct.size() == via.size());
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(via[i] == doctest::Approx(direct[i]).epsilon(1e-6));
}

TEST_CASE("backward matches finite differences of the training-mode forward") {
  ResNet net(tiny_spec(), 5);
  const auto x = random_batch(4, 32, 3);
  std::vector<double> coef(4 * 3);
  std::mt19937_64 gen(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& c : coef) c = normal(gen);

  net.zero_grad();
  probe_loss(net, x, coef);
  net.backward(coef);

  std::size_t checked = 0, agreed = 0;
  for (auto* p : net.parameters()) {
    // a few entries of every parameter tensor
    for (std::size_t j = 0; j < p->value.size(); j += std::max<std::size_t>(1, p->value.size() / 3)) {
      const float keep = p->value[j];
      auto at = [&](float d) {
        p->value[j] = keep + d;
        return probe_loss(net, x, coef);
      };
      // a step may straddle a ReLU kink or sit in float32 noise, so accept
      // the entry if any of three central differences lands within 5%
      const double g = p->grad[j];
      double nearest = 0.0, scale = std::abs(g);
      bool ok = false;
      for (float h : {1e-3f, 3e-4f, 1e-4f}) {
        const double fd = (at(h) - at(-h)) / (2.0 * h);
        if (h == 1e-3f) nearest = fd;
        scale = std::max(scale, std::abs(fd));
        ok = ok || std::abs(fd - g) <= 5e-2 * std::max(std::abs(fd), std::abs(g));
      }
      p->value[j] = keep;
      if (scale < 1e-3) continue;
      ++checked;
      if (ok) ++agreed;
      else INFO(p->name << "[" << j << "] analytic " << g << " numeric " << nearest);
    }
  }
  INFO("checked " << checked << ", agreed " << agreed);
  CHECK(checked > 30);
  CHECK(static_cast<double>(agreed) >= 0.95 * static_cast<double>(checked));
}

TEST_CASE("state save/load round trip reproduces logits") {
  ResNet a(tiny_spec(), 1);
  const auto x = random_batch(2, 32, 4);
  // move running statistics away from their initial values
  a.forward_train(x);
  std::stringstream buf;
  a.save_state(buf);
  ResNet b(tiny_spec(), 99);
  b.load_state(buf);
  CHECK(a.logits(x) == b.logits(x));

  std::stringstream bad("garbage");
  CHECK_THROWS(b.load_state(bad));
}

TEST_CASE("to_batch packs images and rejects mixed sizes") {
  std::vector<Image> ims{Image(2, 2, 0.25f), Image(2, 2, 0.75f)};
  const auto t = to_batch(ims);
  CHECK(t.channels == 1);
  CHECK(t.batch == 2);
  CHECK(t.at(0, 1, 1, 1) == 0.75f);
  std::vector<Image> mixed{Image(2, 2), Image(3, 3)};
  CHECK_THROWS_AS(to_batch(mixed), ShapeError);
}
