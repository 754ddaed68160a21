#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "ess/augment.hpp"

using namespace ess;
using namespace ess::augment;

namespace {

Image gradient_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace

TEST(Augment, IdentityConfigReturnsSource) {
  const auto src = gradient_image(20, 16, 1);
  Rng rng(2);
  const auto [a, b] = two_views(src, AugmentConfig::identity(), rng);
  EXPECT_EQ(a, src);
  EXPECT_EQ(b, src);
}

TEST(Augment, FlipIsExactMirrorAndInvolution) {
  const auto src = gradient_image(9, 7, 3);
  auto cfg = AugmentConfig::identity();
  cfg.flip_p = 1.0;
  Rng rng(4);
  const auto [a, b] = two_views(src, cfg, rng);
  for (const auto* v : {&a, &b}) {
    for (int y = 0; y < src.height; ++y) {
      for (int x = 0; x < src.width; ++x) {
        for (int c = 0; c < 3; ++c) ASSERT_EQ(v->at(x, y, c), src.at(src.width - 1 - x, y, c));
      }
    }
  }
  EXPECT_EQ(hflip(hflip(src)), src);
}

TEST(Augment, GrayscaleUsesLumaWeights) {
  const auto src = gradient_image(8, 8, 5);
  auto cfg = AugmentConfig::identity();
  cfg.grayscale_p = 1.0;
  Rng rng(6);
  const auto g = augment::augment(src, cfg, rng);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      ASSERT_EQ(g.at(x, y, 0), g.at(x, y, 1));
      ASSERT_EQ(g.at(x, y, 1), g.at(x, y, 2));
      const double luma = 0.299 * src.at(x, y, 0) + 0.587 * src.at(x, y, 1) + 0.114 * src.at(x, y, 2);
      ASSERT_NEAR(g.at(x, y, 0), luma, 0.5 + 1e-4);
    }
  }
  EXPECT_EQ(grayscale(src), g);
}

TEST(Augment, OutputSizeAndDeterminism) {
  const auto src = gradient_image(48, 40, 7);
  AugmentConfig cfg;
  cfg.out_width = 32;
  cfg.out_height = 24;
  Rng r1(8), r2(8), r3(9);
  const auto v1 = two_views(src, cfg, r1);
  const auto v2 = two_views(src, cfg, r2);
  const auto v3 = two_views(src, cfg, r3);
  EXPECT_EQ(v1.first.width, 32);
  EXPECT_EQ(v1.first.height, 24);
  EXPECT_EQ(v1.second.width, 32);
  EXPECT_EQ(v1, v2);
  EXPECT_NE(v1, v3);
  EXPECT_NE(v1.first, v1.second);
}

TEST(Augment, ResizedCropFullFrameIsIdentity) {
  const auto src = gradient_image(10, 6, 10);
  EXPECT_EQ(resized_crop(src, 0, 0, 10, 6, 10, 6), src);
  const auto up = resized_crop(src, 2, 1, 3, 3, 12, 12);
  EXPECT_EQ(up.width, 12);
  EXPECT_EQ(up.height, 12);
}

TEST(Augment, BlurPreservesConstantImage) {
  Image flat(12, 12);
  std::fill(flat.rgb.begin(), flat.rgb.end(), std::uint8_t{77});
  EXPECT_EQ(gaussian_blur(flat, 1.5), flat);
  EXPECT_THROW(gaussian_blur(flat, 0.0), std::invalid_argument);
}

TEST(Augment, ConfigValidation) {
  AugmentConfig c;
  EXPECT_NO_THROW(c.validate());
  c.flip_p = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = AugmentConfig{};
  c.crop_scale_min = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = AugmentConfig{};
  c.crop_scale_max = 1.2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(LightingView, SingletonAndFixed) {
  std::map<int, Image> one{{4, gradient_image(4, 4, 1)}};
  Rng rng(1);
  EXPECT_EQ(&lighting_view(one, {}, rng), &one.at(4));
  std::map<int, Image> many;
  for (int id = 0; id < 9; ++id) many[id] = gradient_image(4, 4, 100 + id);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(choose_lighting(many, LightingSelect{3}, rng), 3);
  EXPECT_THROW(choose_lighting({}, {}, rng), std::invalid_argument);
  EXPECT_THROW(choose_lighting(many, LightingSelect{12}, rng), std::invalid_argument);
}

TEST(LightingView, UniformFrequenciesWithinThreeSigma) {
  std::map<int, Image> many;
  for (int id = 1; id <= 9; ++id) many[id] = Image(1, 1);
  Rng rng(77);
  std::map<int, int> counts;
  const int n = 9000;
  for (int i = 0; i < n; ++i) counts[choose_lighting(many, {}, rng)]++;
  const double p = 1.0 / 9.0;
  const double sigma = std::sqrt(n * p * (1 - p));
  ASSERT_EQ(counts.size(), 9u);
  for (const auto& [id, c] : counts) EXPECT_LE(std::abs(c - 1000.0), 3 * sigma) << "id " << id;
}
