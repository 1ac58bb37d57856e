#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "geoclr/common.hpp"
#include "geoclr/dataset.hpp"

namespace geoclr {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Colour jitter maxima. Each perturbation is drawn uniformly within
/// +/- strength; hue strength is a fraction of the hue circle.
struct JitterStrengths {
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
};

struct AugmentConfig {
  Interval crop_scale_range{0.2, 1.0};
  JitterStrengths jitter;
  Interval blur_sigma_range{0.1, 1.0};
  double blur_apply_prob = 0.5;
  std::uint64_t rng_seed = 1;

  void validate() const;
  static AugmentConfig identity();
};

/// Square source window of a crop, in pixel units of the input tile.
struct CropWindow {
  double x0 = 0.0;
  double y0 = 0.0;
  double side = 0.0;
};

CropWindow draw_crop_window(int tile_side, Rng& rng, Interval scale_range);

/// Bilinear resample of `window` back to the full tile size.
Tile resize_window(const Tile& tile, const CropWindow& window);

/// Uniformly placed square sub-window with area fraction drawn from
/// scale_range, resized back to the input side length.
Tile random_crop_resize(const Tile& tile, Rng& rng, Interval scale_range);

// Individual colour operations; each clamps its output to [0, 1].
Tile adjust_brightness(const Tile& tile, double factor);
Tile adjust_contrast(const Tile& tile, double factor);  // around the mean luma
Tile adjust_saturation(const Tile& tile, double factor);  // around per-pixel luma
Tile adjust_hue(const Tile& tile, double shift);  // shift in turns, wraps around

/// Brightness, contrast, saturation, hue in that order. A zero strength
/// leaves its stage untouched.
Tile color_distort(const Tile& tile, Rng& rng, const JitterStrengths& strengths);

/// Normalised 1-D Gaussian taps for radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with edge-mirrored (half-sample symmetric)
/// borders; preserves constants and total intensity.
Tile gaussian_blur(const Tile& tile, double sigma);

/// Crop, then colour, then (with probability blur_apply_prob) blur.
Tile apply_augmentation(const Tile& tile, const AugmentConfig& config, Rng& rng);

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v);
void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b);

}  // namespace geoclr
