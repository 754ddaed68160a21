#include "ess/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ess::augment {

AugmentConfig AugmentConfig::identity() {
  AugmentConfig c;
  c.crop_scale_min = c.crop_scale_max = 1.0;
  c.flip_p = c.jitter_p = c.grayscale_p = c.blur_p = 0.0;
  return c;
}

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string("augment: ") + name + " must lie in [0, 1]");
  };
  prob(flip_p, "flip_p");
  prob(jitter_p, "jitter_p");
  prob(grayscale_p, "grayscale_p");
  prob(blur_p, "blur_p");
  if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0)) {
    throw std::invalid_argument("augment: crop scale range must lie within (0, 1]");
  }
  if (!(crop_ratio_min > 0.0 && crop_ratio_min <= crop_ratio_max)) {
    throw std::invalid_argument("augment: bad crop aspect-ratio range");
  }
  if (brightness < 0 || contrast < 0 || saturation < 0 || !(hue >= 0 && hue <= 0.5)) {
    throw std::invalid_argument("augment: jitter strengths must be >= 0 (hue <= 0.5)");
  }
  if (!(blur_sigma_min > 0 && blur_sigma_min <= blur_sigma_max)) throw std::invalid_argument("augment: bad blur sigma range");
  if (out_width < 0 || out_height < 0) throw std::invalid_argument("augment: output size must be >= 0");
}

namespace {

// Planar float working copy in 0..255.
struct FloatImage {
  int w = 0, h = 0;
  std::vector<float> px;  // interleaved RGB

  explicit FloatImage(const Image& img) : w(img.width), h(img.height), px(img.rgb.begin(), img.rgb.end()) {}

  Image to_image() const {
    Image out(w, h);
    for (std::size_t i = 0; i < px.size(); ++i) {
      out.rgb[i] = static_cast<std::uint8_t>(std::nearbyint(std::clamp(px[i], 0.0f, 255.0f)));
    }
    return out;
  }

  void clamp() {
    for (auto& v : px) v = std::clamp(v, 0.0f, 255.0f);
  }
};

float luma(const float* p) { return 0.299f * p[0] + 0.587f * p[1] + 0.114f * p[2]; }

void adjust_brightness(FloatImage& im, float f) {
  for (auto& v : im.px) v *= f;
  im.clamp();
}

void adjust_contrast(FloatImage& im, float f) {
  double total = 0;
  for (std::size_t i = 0; i < im.px.size(); i += 3) total += luma(&im.px[i]);
  const float mean = static_cast<float>(total / static_cast<double>(im.px.size() / 3));
  for (auto& v : im.px) v = f * v + (1.0f - f) * mean;
  im.clamp();
}

void adjust_saturation(FloatImage& im, float f) {
  for (std::size_t i = 0; i < im.px.size(); i += 3) {
    const float g = luma(&im.px[i]);
    for (int c = 0; c < 3; ++c) im.px[i + c] = f * im.px[i + c] + (1.0f - f) * g;
  }
  im.clamp();
}

void adjust_hue(FloatImage& im, float shift) {
  for (std::size_t i = 0; i < im.px.size(); i += 3) {
    const float r = im.px[i] / 255.0f, g = im.px[i + 1] / 255.0f, b = im.px[i + 2] / 255.0f;
    const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const float d = mx - mn;
    float hh = 0.0f;
    if (d > 0.0f) {
      if (mx == r) {
        hh = std::fmod((g - b) / d, 6.0f);
      } else if (mx == g) {
        hh = (b - r) / d + 2.0f;
      } else {
        hh = (r - g) / d + 4.0f;
      }
      hh /= 6.0f;
    }
    const float s = mx > 0.0f ? d / mx : 0.0f;
    const float v = mx;
    hh = hh + shift;
    hh -= std::floor(hh);
    const float h6 = hh * 6.0f;
    const int k = static_cast<int>(std::floor(h6)) % 6;
    const float f = h6 - std::floor(h6);
    const float p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    float rr, gg, bb;
    switch (k) {
      case 0: rr = v, gg = t, bb = p; break;
      case 1: rr = q, gg = v, bb = p; break;
      case 2: rr = p, gg = v, bb = t; break;
      case 3: rr = p, gg = q, bb = v; break;
      case 4: rr = t, gg = p, bb = v; break;
      default: rr = v, gg = p, bb = q; break;
    }
    im.px[i] = rr * 255.0f;
    im.px[i + 1] = gg * 255.0f;
    im.px[i + 2] = bb * 255.0f;
  }
  im.clamp();
}

void to_gray(FloatImage& im) {
  for (std::size_t i = 0; i < im.px.size(); i += 3) {
    const float g = luma(&im.px[i]);
    im.px[i] = im.px[i + 1] = im.px[i + 2] = g;
  }
}

void blur(FloatImage& im, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> k(2 * radius + 1);
  double s = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)));
    s += k[i + radius];
  }
  for (auto& v : k) v = static_cast<float>(v / s);
  std::vector<float> tmp(im.px.size());
  auto at = [&](const std::vector<float>& src, int x, int y, int c) {
    x = std::clamp(x, 0, im.w - 1);
    y = std::clamp(y, 0, im.h - 1);
    return src[(static_cast<std::size_t>(y) * im.w + x) * 3 + c];
  };
  for (int y = 0; y < im.h; ++y) {
    for (int x = 0; x < im.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        float acc = 0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * at(im.px, x + i, y, c);
        tmp[(static_cast<std::size_t>(y) * im.w + x) * 3 + c] = acc;
      }
    }
  }
  for (int y = 0; y < im.h; ++y) {
    for (int x = 0; x < im.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        float acc = 0;
        for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * at(tmp, x, y + i, c);
        im.px[(static_cast<std::size_t>(y) * im.w + x) * 3 + c] = acc;
      }
    }
  }
}

struct CropBox {
  int x0, y0, w, h;
};

CropBox sample_crop(int W, int H, const AugmentConfig& cfg, Rng& rng) {
  const double area = static_cast<double>(W) * H;
  const double log_lo = std::log(cfg.crop_ratio_min), log_hi = std::log(cfg.crop_ratio_max);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
    const double ratio = std::exp(rng.uniform(log_lo, log_hi));
    const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
    const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
    if (w > 0 && h > 0 && w <= W && h <= H) {
      const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(H - h + 1)));
      const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(W - w + 1)));
      return {x0, y0, w, h};
    }
  }
  const double in_ratio = static_cast<double>(W) / H;
  int w = W, h = H;
  if (in_ratio < cfg.crop_ratio_min) {
    h = static_cast<int>(std::lround(w / cfg.crop_ratio_min));
  } else if (in_ratio > cfg.crop_ratio_max) {
    w = static_cast<int>(std::lround(h * cfg.crop_ratio_max));
  }
  return {(W - w) / 2, (H - h) / 2, w, h};
}

}  // namespace

Image resized_crop(const Image& src, int x0, int y0, int w, int h, int out_w, int out_h) {
  if (w <= 0 || h <= 0 || x0 < 0 || y0 < 0 || x0 + w > src.width || y0 + h > src.height || out_w <= 0 || out_h <= 0) {
    throw std::invalid_argument("resized_crop: crop box outside the source");
  }
  FloatImage in(src);
  Image out(out_w, out_h);
  const double sx = static_cast<double>(w) / out_w, sy = static_cast<double>(h) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int iy = static_cast<int>(std::floor(fy));
    const int iy1 = std::min(iy + 1, h - 1);
    const float wy = static_cast<float>(fy - iy);
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int ix = static_cast<int>(std::floor(fx));
      const int ix1 = std::min(ix + 1, w - 1);
      const float wx = static_cast<float>(fx - ix);
      for (int c = 0; c < 3; ++c) {
        auto p = [&](int x, int y) { return in.px[(static_cast<std::size_t>(y0 + y) * in.w + (x0 + x)) * 3 + c]; };
        const float top = p(ix, iy) * (1 - wx) + p(ix1, iy) * wx;
        const float bot = p(ix, iy1) * (1 - wx) + p(ix1, iy1) * wx;
        const float v = top * (1 - wy) + bot * wy;
        out.at(ox, oy, c) = static_cast<std::uint8_t>(std::nearbyint(std::clamp(v, 0.0f, 255.0f)));
      }
    }
  }
  return out;
}

Image hflip(const Image& src) {
  Image out(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = src.at(src.width - 1 - x, y, c);
    }
  }
  return out;
}

Image grayscale(const Image& src) {
  FloatImage im(src);
  to_gray(im);
  return im.to_image();
}

Image gaussian_blur(const Image& src, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
  FloatImage im(src);
  blur(im, sigma);
  return im.to_image();
}

Image augment(const Image& src, const AugmentConfig& cfg, Rng& rng) {
  const int out_w = cfg.out_width ? cfg.out_width : src.width;
  const int out_h = cfg.out_height ? cfg.out_height : src.height;
  if (out_w > src.width || out_h > src.height) throw std::invalid_argument("augment: output larger than source");

  const CropBox box = sample_crop(src.width, src.height, cfg, rng);
  Image cropped = resized_crop(src, box.x0, box.y0, box.w, box.h, out_w, out_h);

  const bool do_jitter = rng.bernoulli(cfg.jitter_p);
  std::array<int, 4> order{0, 1, 2, 3};
  rng.shuffle(order.begin(), order.end());
  const double fb = rng.uniform(std::max(0.0, 1.0 - cfg.brightness), 1.0 + cfg.brightness);
  const double fc = rng.uniform(std::max(0.0, 1.0 - cfg.contrast), 1.0 + cfg.contrast);
  const double fs = rng.uniform(std::max(0.0, 1.0 - cfg.saturation), 1.0 + cfg.saturation);
  const double fh = rng.uniform(-cfg.hue, cfg.hue);
  const bool do_gray = rng.bernoulli(cfg.grayscale_p);
  const bool do_blur = rng.bernoulli(cfg.blur_p);
  const double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
  const bool do_flip = rng.bernoulli(cfg.flip_p);

  if (!do_jitter && !do_gray && !do_blur) return do_flip ? hflip(cropped) : cropped;

  FloatImage im(cropped);
  if (do_jitter) {
    for (int op : order) {
      switch (op) {
        case 0: adjust_brightness(im, static_cast<float>(fb)); break;
        case 1: adjust_contrast(im, static_cast<float>(fc)); break;
        case 2: adjust_saturation(im, static_cast<float>(fs)); break;
        default: adjust_hue(im, static_cast<float>(fh)); break;
      }
    }
  }
  if (do_gray) to_gray(im);
  if (do_blur) blur(im, sigma);
  Image out = im.to_image();
  return do_flip ? hflip(out) : out;
}

std::pair<Image, Image> two_views(const Image& src, const AugmentConfig& cfg, Rng& rng) {
  Image a = augment(src, cfg, rng);
  Image b = augment(src, cfg, rng);
  return {std::move(a), std::move(b)};
}

int choose_lighting(const std::map<int, Image>& by_lighting, const LightingSelect& policy, Rng& rng) {
  if (by_lighting.empty()) throw std::invalid_argument("lighting_view: no lighting variants available");
  if (policy.fixed_id) {
    if (!by_lighting.contains(*policy.fixed_id)) {
      throw std::invalid_argument("lighting_view: lighting id " + std::to_string(*policy.fixed_id) + " not present");
    }
    return *policy.fixed_id;
  }
  auto it = by_lighting.begin();
  std::advance(it, static_cast<std::ptrdiff_t>(rng.below(by_lighting.size())));
  return it->first;
}

const Image& lighting_view(const std::map<int, Image>& by_lighting, const LightingSelect& policy, Rng& rng) {
  return by_lighting.at(choose_lighting(by_lighting, policy, rng));
}

}  // namespace ess::augment
