#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <set>

#include "ess/eval.hpp"
#include "ess/rng.hpp"

using namespace ess;
using namespace ess::eval;

namespace {

std::vector<env::ManifestRecord> labeled_manifest(std::size_t n, std::size_t classes, std::size_t unlabeled = 0) {
  std::vector<env::ManifestRecord> out;
  for (std::size_t i = 0; i < n + unlabeled; ++i) {
    env::ManifestRecord r;
    r.step = static_cast<std::int64_t>(i);
    r.pose = Pose(double(i) * 0.1, 0, 1, 0);
    r.lighting_id = static_cast<int>(i % 3);
    r.image_path = env::frame_filename(r.step);
    if (i < n) r.room_label = "room_" + std::to_string(i % classes);
    out.push_back(r);
  }
  return out;
}

std::vector<Image> random_images(std::size_t n, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> out;
  for (std::size_t i = 0; i < n; ++i) {
    Image img(size, size);
    for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng.below(256));
    out.push_back(img);
  }
  return out;
}

nn::TinyConvArch tiny_arch() {
  nn::TinyConvArch a;
  a.in_size = 16;
  a.conv1 = 4;
  a.conv2 = 8;
  a.feature_dim = 16;
  a.proj_hidden = 16;
  a.embedding_dim = 8;
  return a;
}

double dist(const double* a, const double* b, std::size_t d) {
  double s = 0;
  for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s);
}

// Textbook definitions, evaluated directly.
ClusterReport brute_cluster(const std::vector<double>& x, std::size_t d, const std::vector<int>& y) {
  const std::size_t n = y.size();
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[y[i]].push_back(i);
  std::map<int, std::vector<double>> centroid;
  std::vector<double> mean(d, 0.0);
  for (const auto& [k, idx] : members) {
    std::vector<double> c(d, 0.0);
    for (std::size_t i : idx) {
      for (std::size_t j = 0; j < d; ++j) c[j] += x[i * d + j] / double(idx.size());
    }
    centroid[k] = c;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[i * d + j] / double(n);
  }
  ClusterReport r;
  r.samples = n;
  r.classes = members.size();
  double sil = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double a = 0, b = INFINITY;
    for (const auto& [k, idx] : members) {
      double s = 0;
      for (std::size_t o : idx) s += dist(&x[i * d], &x[o * d], d);
      if (k == y[i]) {
        a = s / double(idx.size() - 1);
      } else {
        b = std::min(b, s / double(idx.size()));
      }
    }
    sil += (b - a) / std::max(a, b);
  }
  r.silhouette = sil / double(n);
  double between = 0, within = 0;
  std::map<int, double> spread;
  for (const auto& [k, idx] : members) {
    between += double(idx.size()) * std::pow(dist(centroid[k].data(), mean.data(), d), 2);
    double s = 0;
    for (std::size_t i : idx) {
      within += std::pow(dist(&x[i * d], centroid[k].data(), d), 2);
      s += dist(&x[i * d], centroid[k].data(), d);
    }
    spread[k] = s / double(idx.size());
  }
  const double k = double(members.size());
  r.calinski_harabasz = (between / (k - 1)) / (within / (double(n) - k));
  double db = 0;
  for (const auto& [a, ca] : centroid) {
    double worst = 0;
    for (const auto& [b, cb] : centroid) {
      if (a != b) worst = std::max(worst, (spread[a] + spread[b]) / dist(ca.data(), cb.data(), d));
    }
    db += worst;
  }
  r.davies_bouldin = db / k;
  return r;
}

}  // namespace

TEST(Split, ExactFractionAndDisjoint) {
  const auto recs = labeled_manifest(100, 4, 7);
  const auto s = split_dataset(recs, 0.8, 3, std::nullopt, 10);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.test.size(), 20u);
  EXPECT_EQ(s.classes, (std::vector<std::string>{"room_0", "room_1", "room_2", "room_3"}));
  std::set<std::size_t> seen;
  for (const auto* part : {&s.train, &s.test}) {
    for (const auto& it : *part) {
      EXPECT_TRUE(seen.insert(it.record).second);
      EXPECT_LT(it.record, 100u);
      EXPECT_EQ(it.lighting_id, recs[it.record].lighting_id);
      EXPECT_EQ(s.classes.at(static_cast<std::size_t>(it.label)), *recs[it.record].room_label);
    }
  }
  EXPECT_EQ(seen.size(), 100u);
  const auto again = split_dataset(recs, 0.8, 3, std::nullopt, 10);
  for (std::size_t i = 0; i < s.train.size(); ++i) EXPECT_EQ(again.train[i].record, s.train[i].record);
}

TEST(Split, ClassCountsMatchRecount) {
  const auto recs = labeled_manifest(203, 5);
  const auto s = split_dataset(recs, 0.75, 8, std::nullopt, 10);
  std::map<std::string, int> whole, parts;
  for (const auto& r : recs) whole[*r.room_label]++;
  for (const auto* part : {&s.train, &s.test}) {
    for (const auto& it : *part) parts[s.classes[static_cast<std::size_t>(it.label)]]++;
  }
  EXPECT_EQ(whole, parts);
}

TEST(Split, LightingHoldoutExclusive) {
  const auto recs = labeled_manifest(500, 4);
  const auto s = split_dataset(recs, 0.8, 5, LightingHoldout{7, 8}, 10);
  std::set<int> train_ids;
  for (const auto& it : s.train) {
    EXPECT_NE(it.lighting_id, 7);
    EXPECT_NE(it.lighting_id, 8);
    train_ids.insert(it.lighting_id);
  }
  EXPECT_EQ(train_ids.size(), 8u);
  for (const auto& it : s.test) EXPECT_TRUE(it.lighting_id == 7 || it.lighting_id == 8);
}

TEST(Split, Errors) {
  const auto recs = labeled_manifest(20, 2);
  EXPECT_THROW(split_dataset(recs, 0.0, 1, std::nullopt, 10), std::invalid_argument);
  EXPECT_THROW(split_dataset(recs, 1.0, 1, std::nullopt, 10), std::invalid_argument);
  EXPECT_THROW(split_dataset(labeled_manifest(0, 2, 5), 0.8, 1, std::nullopt, 10), std::invalid_argument);
  EXPECT_THROW(split_dataset(recs, 0.8, 1, LightingHoldout{7, 12}, 10), std::invalid_argument);
}

TEST(LinearProbe, OneHotFeaturesAreSeparable) {
  const std::size_t classes = 4, n = 80;
  std::vector<double> x(n * classes, 0.0), tx(20 * classes, 0.0);
  std::vector<int> y(n), ty(20);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % classes);
    x[i * classes + i % classes] = 1.0;
  }
  for (std::size_t i = 0; i < 20; ++i) {
    ty[i] = static_cast<int>((i + 1) % classes);
    tx[i * classes + (i + 1) % classes] = 1.0;
  }
  ProbeConfig cfg;
  const auto r = linear_probe(x, y, tx, ty, classes, classes, cfg);
  EXPECT_EQ(r.test_accuracy, 1.0);
  EXPECT_EQ(r.train_accuracy, 1.0);
  EXPECT_LT(r.test_loss, r.train_loss + 0.1);
  y[0] = 9;
  EXPECT_THROW(linear_probe(x, y, tx, ty, classes, classes, cfg), std::out_of_range);
}

TEST(RoomProbe, FrozenBackboneBytesUnchanged) {
  const auto arch = tiny_arch();
  const auto params = nn::init_tiny_conv<float>(arch, 3);
  std::vector<std::vector<float>> before;
  for (const auto& [name, t] : params) before.emplace_back(t.data().begin(), t.data().end());
  const auto imgs = random_images(40, 16, 4);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = static_cast<int>(i % 2);
  ProbeConfig cfg;
  cfg.epochs = 3;
  room_probe(params, arch, std::span(imgs).first(30), std::span(y).first(30), std::span(imgs).subspan(30),
             std::span(y).subspan(30), 2, cfg);
  std::size_t i = 0;
  for (const auto& [name, t] : params) {
    ASSERT_EQ(0, std::memcmp(before[i].data(), t.data().data(), before[i].size() * sizeof(float))) << name;
    ++i;
  }
}

TEST(RoomProbe, RandomBackboneIsNearChance) {
  const auto arch = tiny_arch();
  double total = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto params = nn::init_tiny_conv<float>(arch, seed);
    const auto imgs = random_images(1200, 16, 100 + seed);
    std::vector<int> y(1200);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 4);
    ProbeConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 10;
    const auto r = room_probe(params, arch, std::span(imgs).first(800), std::span(y).first(800),
                              std::span(imgs).subspan(800), std::span(y).subspan(800), 4, cfg);
    total += r.test_accuracy;
  }
  EXPECT_NEAR(total / 3.0, 0.25, 0.05);
}

TEST(Localization, RotationErrorWraps) {
  EXPECT_DOUBLE_EQ(rotation_error(359, 1), 2.0);
  EXPECT_DOUBLE_EQ(rotation_error(1, 359), 2.0);
  EXPECT_DOUBLE_EQ(rotation_error(-90, 270), 0.0);
  EXPECT_DOUBLE_EQ(rotation_error(700, 0), 20.0);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double e = rotation_error(rng.uniform(-1000, 1000), rng.uniform(0, 360));
    ASSERT_GE(e, 0.0);
    ASSERT_LE(e, 180.0);
  }
}

TEST(Localization, LossExamples) {
  using TD = ad::Tensor<double>;
  const std::vector<Pose> targets{Pose(1, 2, 1, 10), Pose(3, 1, 1, 350)};
  EXPECT_EQ(localization_loss(TD::from_data({2, 4}, {1, 2, 1, 10, 3, 1, 1, 350}), targets, 1.0 / 360).item(), 0.0);
  // Position off by 1 m and yaw off by sqrt(360): each term contributes 1.
  const double r = std::sqrt(360.0);
  const std::vector<Pose> one{Pose(0, 0, 1, 0)};
  EXPECT_NEAR(localization_loss(TD::from_data({1, 4}, {1, 0, 1, r}), one, 1.0 / 360).item(), 2.0, 1e-12);
  EXPECT_NEAR(localization_loss(TD::from_data({1, 4}, {0, 0, 1, 359}), std::vector<Pose>{Pose(0, 0, 1, 1)}, 1.0).item(),
              4.0, 1e-9);
  EXPECT_THROW(localization_loss(TD::from_data({1, 3}, {0, 0, 1}), one, 1.0), ad::ShapeError);
}

TEST(Localization, TrainEvalLeavesCallerParams) {
  const auto arch = tiny_arch();
  const auto params = nn::init_tiny_conv<float>(arch, 5);
  std::vector<float> before(params.get("conv1.weight").data().begin(), params.get("conv1.weight").data().end());
  const auto imgs = random_images(48, 16, 6);
  std::vector<Pose> poses;
  Rng rng(7);
  for (int i = 0; i < 48; ++i) poses.emplace_back(rng.uniform(0, 5), rng.uniform(0, 5), 1, rng.uniform(0, 360));
  LocalizationConfig cfg;
  cfg.epochs = 3;
  const auto r = localization_train_eval(params, arch, std::span(imgs).first(40), std::span(poses).first(40),
                                         std::span(imgs).subspan(40), std::span(poses).subspan(40), cfg);
  EXPECT_TRUE(std::isfinite(r.position_error));
  EXPECT_TRUE(std::isfinite(r.rotation_error));
  EXPECT_LE(r.rotation_error, 180.0);
  EXPECT_NEAR(r.position_drop, r.initial_position_error - r.position_error, 1e-12);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), params.get("conv1.weight").data().begin()));
}

TEST(ClusterMetrics, MatchesBruteForceDefinitions) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t d = 2 + trial, k = 2 + trial % 3, n = 60 + 30 * trial;
    std::vector<double> x(n * d);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(i % k);
      for (std::size_t j = 0; j < d; ++j) x[i * d + j] = rng.normal() + 1.5 * y[i] * (j == 0);
    }
    const auto got = cluster_metrics(x, d, y);
    const auto want = brute_cluster(x, d, y);
    EXPECT_NEAR(got.silhouette, want.silhouette, 1e-8);
    EXPECT_NEAR(got.calinski_harabasz, want.calinski_harabasz, 1e-8 * std::max(1.0, want.calinski_harabasz));
    EXPECT_NEAR(got.davies_bouldin, want.davies_bouldin, 1e-8);
    EXPECT_EQ(got.samples, n);
    EXPECT_EQ(got.classes, k);
  }
}

TEST(ClusterMetrics, TightClustersAndPermutation) {
  Rng rng(12);
  const std::size_t d = 4, n = 100;
  std::vector<double> x(n * d);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] = 10.0 * y[i] + 0.1 * rng.normal();
  }
  const auto tight = cluster_metrics(x, d, y);
  EXPECT_GT(tight.silhouette, 0.9);
  EXPECT_LT(tight.davies_bouldin, 0.2);
  auto perm = y;
  rng.shuffle(perm.begin(), perm.end());
  EXPECT_NEAR(cluster_metrics(x, d, perm).silhouette, 0.0, 0.1);
}

TEST(ClusterMetrics, DegenerateInputsThrow) {
  const std::vector<double> pts{0, 0, 0, 0, 1, 1, 1, 1};
  EXPECT_THROW(cluster_metrics(pts, 2, std::vector<int>{0, 0, 1, 1}), std::invalid_argument);
  EXPECT_THROW(cluster_metrics(std::vector<double>{0, 0, 1, 1, 2, 2}, 2, std::vector<int>{0, 0, 0}),
               std::invalid_argument);
  EXPECT_THROW(cluster_metrics(std::vector<double>{0, 0, 1, 1, 2, 2}, 2, std::vector<int>{0, 0, 1}),
               std::invalid_argument);
}

TEST(ClusterMetrics, Pca2KeepsDominantAxes) {
  Rng rng(13);
  const std::size_t n = 50, d = 5;
  std::vector<double> x(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.normal() * 5, b = rng.normal() * 2;
    x[i * d + 0] = a;
    x[i * d + 3] = b;
    x[i * d + 1] = 0.01 * rng.normal();
  }
  const auto p = pca2(x, d);
  ASSERT_EQ(p.size(), n * 2);
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[i * d + j] / double(n);
  }
  double var_in = 0, var_out = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) var_in += std::pow(x[i * d + j] - mean[j], 2);
    var_out += p[i * 2] * p[i * 2] + p[i * 2 + 1] * p[i * 2 + 1];
  }
  EXPECT_NEAR(var_out / var_in, 1.0, 0.01);
}
