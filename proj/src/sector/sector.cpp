#include "backmix/sector.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace backmix {
namespace {

using Grid = std::vector<std::uint8_t>;

Grid dilate3(const Grid& in, int h, int w) {
  Grid out(in.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (int dy = -1; dy <= 1 && !v; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && in[static_cast<std::size_t>(yy * w + xx)]) {
            v = 1;
            break;
          }
        }
      out[static_cast<std::size_t>(y * w + x)] = v;
    }
  return out;
}

// Pixels beyond the border count as foreground.
Grid erode3(const Grid& in, int h, int w) {
  Grid out(in.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 1;
      for (int dy = -1; dy <= 1 && v; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && !in[static_cast<std::size_t>(yy * w + xx)]) {
            v = 0;
            break;
          }
        }
      out[static_cast<std::size_t>(y * w + x)] = v;
    }
  return out;
}

// Closing on a canvas padded by k zero pixels, cropped back; shapes near the
// edge are not smeared onto it.
Grid closing(const Grid& in, int h, int w, int k) {
  if (k <= 0) return in;
  const int ph = h + 2 * k;
  const int pw = w + 2 * k;
  Grid g(static_cast<std::size_t>(ph) * pw, 0);
  for (int y = 0; y < h; ++y)
    std::copy_n(in.begin() + y * w, w, g.begin() + (y + k) * pw + k);
  for (int i = 0; i < k; ++i) g = dilate3(g, ph, pw);
  for (int i = 0; i < k; ++i) g = erode3(g, ph, pw);
  Grid out(in.size());
  for (int y = 0; y < h; ++y)
    std::copy_n(g.begin() + (y + k) * pw + k, w, out.begin() + y * w);
  return out;
}

// Pixels whose centers lie in the convex hull of the foreground pixel
// centers (monotone chain).
Grid convex_fill(const Grid& g, int h, int w) {
  struct Pt {
    long long x, y;
  };
  std::vector<Pt> pts;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (g[static_cast<std::size_t>(y * w + x)]) pts.push_back({x, y});
  if (pts.size() < 3) return g;
  std::sort(pts.begin(), pts.end(), [](Pt a, Pt b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  auto cross = [](Pt o, Pt a, Pt b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); };
  std::vector<Pt> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);  // counter-clockwise in (x, y); last point repeats the first
  if (hull.size() < 3) return g;
  Grid out(g.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool inside = true;
      for (std::size_t i = 0; i < hull.size() && inside; ++i)
        inside = cross(hull[i], hull[(i + 1) % hull.size()], Pt{x, y}) >= 0;
      out[static_cast<std::size_t>(y * w + x)] = inside ? 1 : 0;
    }
  return out;
}

// Labels 4-connected components of `value` pixels via BFS; returns the
// pixel list of the largest (first found on ties, in raster order).
std::vector<int> largest_component(const Grid& g, int h, int w) {
  std::vector<int> label(g.size(), -1);
  std::vector<int> best;
  std::vector<int> queue;
  for (int start = 0; start < h * w; ++start) {
    if (!g[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) continue;
    queue.clear();
    queue.push_back(start);
    label[static_cast<std::size_t>(start)] = start;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const int p = queue[head];
      const int y = p / w;
      const int x = p % w;
      const std::array<std::pair<int, int>, 4> nb{{{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}}};
      for (auto [yy, xx] : nb) {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        const int q = yy * w + xx;
        if (g[static_cast<std::size_t>(q)] && label[static_cast<std::size_t>(q)] < 0) {
          label[static_cast<std::size_t>(q)] = start;
          queue.push_back(q);
        }
      }
    }
    if (queue.size() > best.size()) best = queue;
  }
  return best;
}

// Background reachable from the border (4-connectivity) stays background;
// everything else becomes foreground.
Grid fill_holes(const Grid& g, int h, int w) {
  Grid outside(g.size(), 0);
  std::vector<int> queue;
  auto seed = [&](int y, int x) {
    const int p = y * w + x;
    if (!g[static_cast<std::size_t>(p)] && !outside[static_cast<std::size_t>(p)]) {
      outside[static_cast<std::size_t>(p)] = 1;
      queue.push_back(p);
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(0, x);
    seed(h - 1, x);
  }
  for (int y = 0; y < h; ++y) {
    seed(y, 0);
    seed(y, w - 1);
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int p = queue[head];
    const int y = p / w;
    const int x = p % w;
    const std::array<std::pair<int, int>, 4> nb{{{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}}};
    for (auto [yy, xx] : nb)
      if (yy >= 0 && yy < h && xx >= 0 && xx < w) seed(yy, xx);
  }
  Grid filled(g.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) filled[i] = outside[i] ? 0 : 1;
  return filled;
}

}  // namespace

Decomposition decompose(const Image& image, const SectorMask& mask) {
  if (!mask.matches(image)) throw ShapeError("decompose: image and mask shapes differ");
  Decomposition d{Image(image.height(), image.width()), Image(image.height(), image.width())};
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (mask[i]) {
      d.sector[i] = image[i];
    } else {
      d.background[i] = image[i];
    }
  }
  return d;
}

double otsu_threshold(const Image& image) {
  std::array<double, 256> hist{};
  for (float v : image.pixels()) {
    const auto bin = static_cast<std::size_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    hist[bin] += 1.0;
  }
  const double total = static_cast<double>(image.size());
  double sum_all = 0.0;
  for (std::size_t i = 0; i < 256; ++i) sum_all += static_cast<double>(i) * hist[i];
  double w_bg = 0.0;
  double sum_bg = 0.0;
  double best_var = -1.0;
  std::size_t best_t = 0;
  for (std::size_t t = 0; t < 255; ++t) {
    w_bg += hist[t];
    sum_bg += static_cast<double>(t) * hist[t];
    const double w_fg = total - w_bg;
    if (w_bg == 0.0 || w_fg == 0.0) continue;
    const double mean_bg = sum_bg / w_bg;
    const double mean_fg = (sum_all - sum_bg) / w_fg;
    const double between = w_bg * w_fg * (mean_bg - mean_fg) * (mean_bg - mean_fg);
    if (between > best_var) {
      best_var = between;
      best_t = t;
    }
  }
  return static_cast<double>(best_t) / 255.0;
}

MaskEstimate estimate_sector_mask(const Image& image, const MaskEstimatorConfig& config) {
  const int h = image.height();
  const int w = image.width();
  if (image.empty()) throw NoSectorFound("estimate_sector_mask: empty image");

  const auto [lo_it, hi_it] = std::minmax_element(image.pixels().begin(), image.pixels().end());
  if (*hi_it <= 0.0f) throw NoSectorFound("no sector found: image is entirely zero");
  if (*lo_it == *hi_it) {
    // constant non-zero image: everything is foreground
    return {SectorMask(h, w, 1), "degenerate sector estimate: foreground covers the whole image"};
  }

  const double threshold = config.otsu ? otsu_threshold(image) : config.fixed_threshold;
  // Otsu compares on the 8-bit grid it was computed on
  const long threshold_bin = std::lround(threshold * 255.0);
  auto above = [&](float v) {
    if (config.otsu) return std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f) > threshold_bin;
    return static_cast<double>(v) > threshold;
  };
  Grid fg(image.size(), 0);
  bool any = false;
  for (std::size_t i = 0; i < image.size(); ++i) {
    fg[i] = above(image[i]) ? 1 : 0;
    any = any || fg[i];
  }
  if (!any) throw NoSectorFound("no sector found: nothing above threshold " + std::to_string(threshold));

  fg = closing(fg, h, w, config.closing_iterations);

  Grid largest(image.size(), 0);
  for (int p : largest_component(fg, h, w)) largest[static_cast<std::size_t>(p)] = 1;
  Grid filled = config.convex_hull ? convex_fill(largest, h, w) : fill_holes(largest, h, w);

  MaskEstimate est{SectorMask(h, w, std::move(filled)), std::nullopt};
  if (est.mask.is_degenerate())
    est.warning = "degenerate sector estimate: coverage " + std::to_string(est.mask.coverage());
  return est;
}

SectorMask read_mask(const std::filesystem::path& path) {
  const GrayRaster r = read_pgm(path);
  std::vector<std::uint8_t> grid(r.data.size());
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    const std::uint8_t v = r.data[i];
    if (v != 0 && v != 255)
      throw MaskFormatError("mask file " + path.string() + " has non-binary value " + std::to_string(v) +
                            " at pixel " + std::to_string(i));
    grid[i] = v == 255 ? 1 : 0;
  }
  return SectorMask(r.height, r.width, std::move(grid));
}

void write_mask(const std::filesystem::path& path, const SectorMask& mask) {
  GrayRaster r{mask.height(), mask.width(), std::vector<std::uint8_t>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) r.data[i] = mask[i] ? 255 : 0;
  write_pgm(path, r);
}

}  // namespace backmix
