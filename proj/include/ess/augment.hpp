#pragma once

#include <map>
#include <optional>
#include <utility>

#include "ess/image.hpp"
#include "ess/rng.hpp"

namespace ess::augment {

// Defaults follow the MoCo v2 transform recipe.
struct AugmentConfig {
  double crop_scale_min = 0.2;
  double crop_scale_max = 1.0;
  double crop_ratio_min = 3.0 / 4.0;
  double crop_ratio_max = 4.0 / 3.0;
  double flip_p = 0.5;
  double jitter_p = 0.8;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
  double grayscale_p = 0.2;
  double blur_p = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  int out_width = 0;  // 0 keeps the source size
  int out_height = 0;

  // Everything off and full-frame crop: views equal the source.
  static AugmentConfig identity();

  void validate() const;
};

// One augmentation draw: resized crop, color jitter, grayscale, blur, flip.
Image augment(const Image& src, const AugmentConfig& cfg, Rng& rng);

// Two independent draws of the same source.
std::pair<Image, Image> two_views(const Image& src, const AugmentConfig& cfg, Rng& rng);

// Individual transforms, exposed for testing.
Image resized_crop(const Image& src, int x0, int y0, int w, int h, int out_w, int out_h);
Image hflip(const Image& src);
Image grayscale(const Image& src);
Image gaussian_blur(const Image& src, double sigma);

// fixed_id set -> that illuminant; otherwise uniform over the available ids.
struct LightingSelect {
  std::optional<int> fixed_id;
};

// Throws std::invalid_argument for an empty map or a missing fixed id.
int choose_lighting(const std::map<int, Image>& by_lighting, const LightingSelect& policy, Rng& rng);
const Image& lighting_view(const std::map<int, Image>& by_lighting, const LightingSelect& policy, Rng& rng);

}  // namespace ess::augment
