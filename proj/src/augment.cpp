#include "geoclr/augment.hpp"

#include <algorithm>
#include <cmath>

namespace geoclr {

namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

double luma(const Tile& t, std::size_t pixel) {
  return kLumaR * t.data[pixel * 3] + kLumaG * t.data[pixel * 3 + 1] + kLumaB * t.data[pixel * 3 + 2];
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Half-sample symmetric reflection: -1 -> 0, n -> n-1.
int mirror(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

bool valid_interval(Interval v, double min_exclusive, double max_inclusive) {
  return std::isfinite(v.lo) && std::isfinite(v.hi) && v.lo <= v.hi && v.lo > min_exclusive && v.hi <= max_inclusive;
}

}  // namespace

void AugmentConfig::validate() const {
  if (!valid_interval(crop_scale_range, 0.0, 1.0)) throw UsageError("augment: crop_scale_range must lie in (0, 1]");
  if (!valid_interval(blur_sigma_range, 0.0, 1e6)) throw UsageError("augment: blur_sigma_range must be positive");
  if (!(blur_apply_prob >= 0.0 && blur_apply_prob <= 1.0)) throw UsageError("augment: blur_apply_prob not in [0, 1]");
  const auto& j = jitter;
  if (!(j.brightness >= 0 && j.contrast >= 0 && j.saturation >= 0 && j.hue >= 0 && j.brightness <= 1 &&
        j.contrast <= 1 && j.saturation <= 1 && j.hue <= 0.5))
    throw UsageError("augment: jitter strengths out of range");
}

AugmentConfig AugmentConfig::identity() {
  AugmentConfig c;
  c.crop_scale_range = {1.0, 1.0};
  c.jitter = {0.0, 0.0, 0.0, 0.0};
  c.blur_apply_prob = 0.0;
  return c;
}

CropWindow draw_crop_window(int tile_side, Rng& rng, Interval scale_range) {
  if (!valid_interval(scale_range, 0.0, 1.0)) throw UsageError("random_crop_resize: degenerate scale range");
  const double scale = scale_range.lo == scale_range.hi ? scale_range.lo : uniform(rng, scale_range.lo, scale_range.hi);
  CropWindow w;
  w.side = std::sqrt(scale) * tile_side;
  const double slack = tile_side - w.side;
  w.x0 = slack > 0.0 ? uniform(rng, 0.0, slack) : 0.0;
  w.y0 = slack > 0.0 ? uniform(rng, 0.0, slack) : 0.0;
  return w;
}

Tile resize_window(const Tile& tile, const CropWindow& window) {
  const int n = tile.width;
  Tile out(tile.height, tile.width);
  const double step = window.side / n;
  for (int oy = 0; oy < n; ++oy) {
    const double sy = std::clamp(window.y0 + (oy + 0.5) * step - 0.5, 0.0, static_cast<double>(tile.height - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, tile.height - 1);
    const double fy = sy - y0;
    for (int ox = 0; ox < n; ++ox) {
      const double sx = std::clamp(window.x0 + (ox + 0.5) * step - 0.5, 0.0, static_cast<double>(n - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, n - 1);
      const double fx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        double v;
        if (fx == 0.0 && fy == 0.0) {
          v = tile.at(y0, x0, c);
        } else {
          const double top = tile.at(y0, x0, c) * (1.0 - fx) + tile.at(y0, x1, c) * fx;
          const double bottom = tile.at(y1, x0, c) * (1.0 - fx) + tile.at(y1, x1, c) * fx;
          v = top * (1.0 - fy) + bottom * fy;
        }
        out.at(oy, ox, c) = v;
      }
    }
  }
  return out;
}

Tile random_crop_resize(const Tile& tile, Rng& rng, Interval scale_range) {
  if (tile.width != tile.height || tile.width < 4) throw UsageError("random_crop_resize: tile must be square, side >= 4");
  return resize_window(tile, draw_crop_window(tile.width, rng, scale_range));
}

Tile adjust_brightness(const Tile& tile, double factor) {
  Tile out = tile;
  for (double& v : out.data) v = clamp01(v * factor);
  return out;
}

Tile adjust_contrast(const Tile& tile, double factor) {
  const std::size_t pixels = tile.data.size() / 3;
  double mean = 0.0;
  for (std::size_t p = 0; p < pixels; ++p) mean += luma(tile, p);
  mean /= static_cast<double>(pixels);
  Tile out = tile;
  for (double& v : out.data) v = clamp01((v - mean) * factor + mean);
  return out;
}

Tile adjust_saturation(const Tile& tile, double factor) {
  const std::size_t pixels = tile.data.size() / 3;
  Tile out = tile;
  for (std::size_t p = 0; p < pixels; ++p) {
    const double gray = luma(tile, p);
    for (int c = 0; c < 3; ++c) {
      double& v = out.data[p * 3 + static_cast<std::size_t>(c)];
      v = clamp01((v - gray) * factor + gray);
    }
  }
  return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d == 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = (g - b) / d;
  else if (mx == g)
    h = 2.0 + (b - r) / d;
  else
    h = 4.0 + (r - g) / d;
  h /= 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

Tile adjust_hue(const Tile& tile, double shift) {
  Tile out = tile;
  const std::size_t pixels = tile.data.size() / 3;
  for (std::size_t p = 0; p < pixels; ++p) {
    double* px = &out.data[p * 3];
    double h, s, v;
    rgb_to_hsv(px[0], px[1], px[2], h, s, v);
    hsv_to_rgb(h + shift, s, v, px[0], px[1], px[2]);
    for (int c = 0; c < 3; ++c) px[c] = clamp01(px[c]);
  }
  return out;
}

Tile color_distort(const Tile& tile, Rng& rng, const JitterStrengths& s) {
  // All four factors are drawn up front so the stream position does not
  // depend on which strengths are zero.
  const double b = uniform(rng, 1.0 - s.brightness, 1.0 + s.brightness);
  const double c = uniform(rng, 1.0 - s.contrast, 1.0 + s.contrast);
  const double sat = uniform(rng, 1.0 - s.saturation, 1.0 + s.saturation);
  const double hue = uniform(rng, -s.hue, s.hue);
  Tile out = tile;
  if (s.brightness > 0.0) out = adjust_brightness(out, b);
  if (s.contrast > 0.0) out = adjust_contrast(out, c);
  if (s.saturation > 0.0) out = adjust_saturation(out, sat);
  if (s.hue > 0.0) out = adjust_hue(out, hue);
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw UsageError("gaussian_blur: sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

Tile gaussian_blur(const Tile& tile, double sigma) {
  const std::vector<double> k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int h = tile.height, w = tile.width;
  Tile tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * tile.at(y, mirror(x + i, w), c);
        tmp.at(y, x, c) = acc;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * tmp.at(mirror(y + i, h), x, c);
        out.at(y, x, c) = clamp01(acc);
      }
  return out;
}

Tile apply_augmentation(const Tile& tile, const AugmentConfig& config, Rng& rng) {
  Tile out = random_crop_resize(tile, rng, config.crop_scale_range);
  out = color_distort(out, rng, config.jitter);
  const double coin = uniform(rng, 0.0, 1.0);
  const double sigma = uniform(rng, config.blur_sigma_range.lo, config.blur_sigma_range.hi);
  if (coin < config.blur_apply_prob) out = gaussian_blur(out, sigma);
  return out;
}

}  // namespace geoclr
