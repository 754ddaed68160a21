#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ess/env.hpp"
#include "ess/image.hpp"
#include "ess/nn.hpp"
#include "ess/spatial.hpp"

namespace ess::eval {

using LightingHoldout = std::pair<int, int>;

struct ProbeConfig {
  int epochs = 20;
  double lr = 0.1;
  std::size_t batch_size = 32;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  std::optional<LightingHoldout> holdout;

  // Throws std::invalid_argument; palette_size checks the holdout ids.
  void validate(std::size_t palette_size) const;
};

struct SplitItem {
  std::size_t record = 0;  // index into the manifest
  int lighting_id = 0;     // lighting to evaluate this frame under
  int label = -1;          // class index, -1 when unlabeled
};

struct Split {
  std::vector<SplitItem> train;
  std::vector<SplitItem> test;
  std::vector<std::string> classes;  // sorted room labels
};

// Shuffles the frames (labeled ones only when require_labels) and cuts at
// round(fraction * n). Without a holdout every frame keeps its manifest
// lighting. With a holdout, train frames draw uniformly from the remaining
// palette ids and test frames draw uniformly from the two holdout ids.
// Throws std::invalid_argument on a bad fraction, an empty selection, or a
// class with no training frames.
Split split_dataset(std::span<const env::ManifestRecord> records, double fraction, std::uint64_t seed,
                    const std::optional<LightingHoldout>& holdout, std::size_t palette_size,
                    bool require_labels = true);

struct ProbeResult {
  double train_loss = 0;
  double test_loss = 0;
  double train_accuracy = 0;
  double test_accuracy = 0;
};

// Softmax linear classifier on fixed features [n x f]. Features are
// standardized with training statistics. Throws std::out_of_range for a
// label outside [0, classes).
ProbeResult linear_probe(std::span<const double> train_x, std::span<const int> train_y,
                         std::span<const double> test_x, std::span<const int> test_y, std::size_t feature_dim,
                         std::size_t classes, const ProbeConfig& cfg);

// Backbone features for a stack of images, evaluated without building a graph.
std::vector<double> backbone_features(const nn::ParameterSet<float>& params, const nn::TinyConvArch& arch,
                                      std::span<const Image> images, std::size_t chunk = 256);

// Probe on frozen backbone features; params are only read.
ProbeResult room_probe(const nn::ParameterSet<float>& params, const nn::TinyConvArch& arch,
                       std::span<const Image> train_images, std::span<const int> train_y,
                       std::span<const Image> test_images, std::span<const int> test_y, std::size_t classes,
                       const ProbeConfig& cfg);

// Smallest angle between two headings in degrees after wrapping the raw
// difference, in [0, 180].
double rotation_error(double predicted, double target);

// Mean over rows of |p - t|^2 + alpha * rot^2 for pred [B x 4] against
// (x, y, z, yaw) targets.
template <class T>
ad::Tensor<T> localization_loss(const ad::Tensor<T>& pred, std::span<const Pose> targets, double alpha);

struct LocalizationConfig {
  int epochs = 20;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  double alpha = 1.0 / 360.0;
  bool finetune = true;
  // Rescales the joint gradient to at most this global L2 norm; 0 disables.
  double clip_norm = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LocalizationResult {
  double train_loss = 0;
  double test_loss = 0;
  double position_error = 0;  // mean over test frames, meters
  double rotation_error = 0;  // mean over test frames, degrees
  double initial_position_error = 0;
  double initial_rotation_error = 0;
  double position_drop = 0;
  double rotation_drop = 0;
};

// Linear head on backbone features predicting (x, y, z, yaw); outputs are
// de-standardized with the training target statistics. The backbone copy in
// `params` is fine-tuned when cfg.finetune is set; the caller's tensors are
// never touched.
LocalizationResult localization_train_eval(const nn::ParameterSet<float>& params, const nn::TinyConvArch& arch,
                                           std::span<const Image> train_images, std::span<const Pose> train_poses,
                                           std::span<const Image> test_images, std::span<const Pose> test_poses,
                                           const LocalizationConfig& cfg);

struct ClusterReport {
  double silhouette = 0;
  double calinski_harabasz = 0;
  double davies_bouldin = 0;
  std::size_t samples = 0;
  std::size_t classes = 0;
};

// Euclidean indices over points [n x d]. With pca2 the points are first
// projected onto their two leading principal components. Throws
// std::invalid_argument for fewer than two classes, a class with fewer than
// two members, zero within-class dispersion, or coincident class centroids.
ClusterReport cluster_metrics(std::span<const double> points, std::size_t dim, std::span<const int> labels,
                              bool pca2 = false);

// Projection of points [n x d] onto the two leading principal components.
std::vector<double> pca2(std::span<const double> points, std::size_t dim);

}  // namespace ess::eval
