#include "backmix/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "backmix/sector.hpp"

namespace backmix {

StandardAugmentParams sample_standard_params(const StandardAugmentConfig& config, Rng& rng) {
  StandardAugmentParams p;
  p.angle_deg = uniform(rng, -config.max_rotation_deg, config.max_rotation_deg);
  p.brightness = uniform(rng, -config.max_brightness_delta, config.max_brightness_delta);
  p.contrast = uniform(rng, config.contrast.lo, config.contrast.hi);
  p.flip = uniform(rng, 0.0, 1.0) < config.flip_probability;
  return p;
}

AugmentedImage apply_standard(const Image& image, const SectorMask* mask, const StandardAugmentParams& params) {
  if (mask && !mask->matches(image)) throw ShapeError("standard_augment: image and mask shapes differ");
  const int h = image.height();
  const int w = image.width();
  AugmentedImage out{Image(h, w), std::nullopt};
  std::vector<std::uint8_t> mgrid(mask ? mask->size() : 0, 0);

  const double theta = params.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  auto sample = [&](int y, int x) -> float {
    return (y >= 0 && y < h && x >= 0 && x < w) ? image.at(y, x) : 0.0f;
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int dst_x = params.flip ? (w - 1 - x) : x;
      const std::size_t dst = static_cast<std::size_t>(y) * w + dst_x;
      if (params.angle_deg == 0.0) {
        out.image[dst] = image.at(y, x);
        if (mask) mgrid[dst] = mask->at(y, x);
        continue;
      }
      // inverse rotation: where does output (x, y) come from
      const double sx = c * (x - cx) + s * (y - cy) + cx;
      const double sy = -s * (x - cx) + c * (y - cy) + cy;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      const double v = (1 - fy) * ((1 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                       fy * ((1 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
      out.image[dst] = static_cast<float>(v);
      if (mask) {
        const int nx = static_cast<int>(std::lround(sx));
        const int ny = static_cast<int>(std::lround(sy));
        mgrid[dst] = (ny >= 0 && ny < h && nx >= 0 && nx < w) ? mask->at(ny, nx) : 0;
      }
    }
  }
  if (params.contrast != 1.0 || params.brightness != 0.0) {
    const auto contrast = static_cast<float>(params.contrast);
    const auto brightness = static_cast<float>(params.brightness);
    for (auto& p : out.image.pixels()) p = p * contrast + brightness;
  }
  for (auto& p : out.image.pixels()) p = std::clamp(p, 0.0f, 1.0f);
  if (mask) out.mask = SectorMask(h, w, std::move(mgrid));
  return out;
}

Image backmix(const Image& frame_i, const SectorMask& mask_i, const Image& frame_j, const SectorMask& mask_j) {
  if (!mask_i.matches(frame_i) || !mask_j.matches(frame_j) ||
      !frame_i.same_shape(frame_j.height(), frame_j.width()))
    throw ShapeError("backmix: frames and masks must share one shape");
  Image out(frame_i.height(), frame_i.width());
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (mask_i[p]) {
      out[p] = frame_i[p];
    } else {
      out[p] = mask_j[p] ? 0.0f : frame_j[p];
    }
  }
  return out;
}

std::string to_string(BackgroundKind kind) {
  switch (kind) {
    case BackgroundKind::None: return "none";
    case BackgroundKind::BackMix: return "backmix";
    case BackgroundKind::Black: return "black";
    case BackgroundKind::Noise: return "noise";
    case BackgroundKind::Shuffle: return "shuffle";
  }
  return "?";
}

BackgroundKind parse_background_kind(const std::string& s) {
  for (auto k : {BackgroundKind::None, BackgroundKind::BackMix, BackgroundKind::Black, BackgroundKind::Noise,
                 BackgroundKind::Shuffle})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown augmentation kind '" + s + "' (none, backmix, black, noise, shuffle)");
}

Image baseline_background(const Image& image, const SectorMask& mask, BackgroundKind kind, Rng& rng) {
  if (!mask.matches(image)) throw ShapeError("baseline_background: image and mask shapes differ");
  Image out = image;
  switch (kind) {
    case BackgroundKind::Black:
      for (std::size_t p = 0; p < out.size(); ++p)
        if (!mask[p]) out[p] = 0.0f;
      break;
    case BackgroundKind::Noise: {
      std::uniform_real_distribution<float> u(0.0f, 1.0f);
      for (std::size_t p = 0; p < out.size(); ++p)
        if (!mask[p]) out[p] = u(rng);
      break;
    }
    case BackgroundKind::Shuffle: {
      std::vector<std::size_t> positions;
      std::vector<float> values;
      for (std::size_t p = 0; p < out.size(); ++p)
        if (!mask[p]) {
          positions.push_back(p);
          values.push_back(out[p]);
        }
      std::shuffle(values.begin(), values.end(), rng);
      for (std::size_t i = 0; i < positions.size(); ++i) out[positions[i]] = values[i];
      break;
    }
    default:
      throw ConfigError("baseline_background: kind must be black, noise or shuffle, got " + to_string(kind));
  }
  return out;
}

std::size_t supervised_count(double fraction, std::size_t train_size) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("augmentation fraction f must lie in [0,1]");
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train_size)));
}

namespace {

std::vector<std::size_t> subset_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, {stream::kSubset});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

std::vector<std::vector<std::size_t>> disjoint_subsets(std::size_t train_size, double fraction, int k,
                                                       std::uint64_t seed) {
  if (k < 1) throw ConfigError("disjoint_subsets: k must be positive");
  if (static_cast<double>(k) * fraction > 1.0 + 1e-12)
    throw ConfigError("disjoint_subsets: k * f = " + std::to_string(k * fraction) + " exceeds 1");
  const std::size_t n = supervised_count(fraction, train_size);
  if (n * static_cast<std::size_t>(k) > train_size)
    throw ConfigError("disjoint_subsets: not enough examples for k disjoint subsets");
  const auto order = subset_order(train_size, seed);
  std::vector<std::vector<std::size_t>> out;
  for (int i = 0; i < k; ++i) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(n * static_cast<std::size_t>(i));
    std::vector<std::size_t> subset(first, first + static_cast<std::ptrdiff_t>(n));
    std::sort(subset.begin(), subset.end());
    out.push_back(std::move(subset));
  }
  return out;
}

AugmentationPlan make_plan(const std::vector<Frame>& train, double fraction, BackgroundKind kind,
                           std::uint64_t seed, const StandardAugmentConfig& standard) {
  auto subset = disjoint_subsets(train.size(), fraction, 1, seed).front();
  return make_plan_with_subset(train, std::move(subset), fraction, kind, seed, standard);
}

AugmentationPlan make_plan_with_subset(const std::vector<Frame>& train, std::vector<std::size_t> subset,
                                       double fraction, BackgroundKind kind, std::uint64_t seed,
                                       const StandardAugmentConfig& standard) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("augmentation fraction f must lie in [0,1]");
  AugmentationPlan plan;
  plan.fraction_ = fraction;
  plan.kind_ = kind;
  plan.seed_ = seed;
  plan.standard_ = standard;
  plan.is_supervised_.assign(train.size(), 0);
  std::sort(subset.begin(), subset.end());
  subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
  if (kind == BackgroundKind::None) subset.clear();
  for (auto id : subset) {
    if (id >= train.size()) throw ConfigError("augmentation subset id out of range");
    if (!train[id].mask) throw ConfigError("supervised example " + std::to_string(id) + " has no sector mask");
    plan.is_supervised_[id] = 1;
  }
  plan.supervised_ids_ = std::move(subset);
  if (kind == BackgroundKind::BackMix && !plan.supervised_ids_.empty()) {
    if (plan.supervised_ids_.size() < 2)
      throw ConfigError("BackMix needs a background pool of at least 2 examples to exclude self (f = " +
                        std::to_string(fraction) + ")");
    for (auto id : plan.supervised_ids_) {
      const Frame& f = train[id];
      plan.pool_.push_back({id, decompose(f.image, *f.mask).background, *f.mask});
    }
  }
  return plan;
}

std::vector<AugmentedExample> apply_epoch(const AugmentationPlan& plan, const std::vector<Frame>& train,
                                          std::uint64_t epoch) {
  if (train.size() != plan.train_size()) throw ConfigError("apply_epoch: plan was built for a different train set");
  const auto& pool = plan.background_pool();
  // pool is sorted by source id, matching supervised_ids
  std::vector<AugmentedExample> out;
  out.reserve(train.size());
  for (std::size_t id = 0; id < train.size(); ++id) {
    const Frame& f = train[id];
    const bool supervised = plan.is_supervised(id);
    Rng rng = make_rng(plan.seed(), {stream::kStandardAugment, epoch, id});
    AugmentedImage aug = standard_augment(f.image, supervised ? &*f.mask : nullptr, plan.standard(), rng);

    AugmentedExample ex;
    ex.id = id;
    ex.label = f.label;
    if (supervised) {
      Rng bg_rng = make_rng(plan.seed(), {stream::kBackground, epoch, id});
      if (plan.kind() == BackgroundKind::BackMix) {
        const auto self = static_cast<std::size_t>(
            std::lower_bound(plan.supervised_ids().begin(), plan.supervised_ids().end(), id) -
            plan.supervised_ids().begin());
        std::size_t pick = uniform_index(bg_rng, pool.size() - 1);
        if (pick >= self) ++pick;
        const PoolEntry& src = pool[pick];
        ex.image = backmix(aug.image, *aug.mask, src.background, src.mask);
        ex.background_source = src.source_id;
      } else {
        ex.image = baseline_background(aug.image, *aug.mask, plan.kind(), bg_rng);
      }
      ex.is_backmixed = true;
    } else {
      ex.image = std::move(aug.image);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace backmix
