#include "ess/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

#include "ess/rng.hpp"

namespace ess::eval {

using ad::Tensor;

void ProbeConfig::validate(std::size_t palette_size) const {
  if (epochs < 0) throw std::invalid_argument("probe: epochs must be >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("probe: lr must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("probe: batch size must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("probe: train fraction must lie in (0, 1)");
  }
  if (holdout) {
    const auto [a, b] = *holdout;
    if (a == b) throw std::invalid_argument("probe: holdout ids must differ");
    for (int id : {a, b}) {
      if (id < 0 || static_cast<std::size_t>(id) >= palette_size) {
        throw std::invalid_argument("probe: holdout lighting id " + std::to_string(id) + " not in the palette");
      }
    }
    if (palette_size < 3) throw std::invalid_argument("probe: holdout leaves no training lighting");
  }
}

Split split_dataset(std::span<const env::ManifestRecord> records, double fraction, std::uint64_t seed,
                    const std::optional<LightingHoldout>& holdout, std::size_t palette_size, bool require_labels) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("split: fraction must lie in (0, 1)");
  if (records.empty()) throw std::invalid_argument("split: manifest is empty");
  Split split;
  std::set<std::string> labels;
  for (const auto& r : records) {
    if (r.room_label) labels.insert(*r.room_label);
  }
  split.classes.assign(labels.begin(), labels.end());
  std::map<std::string, int> class_of;
  for (std::size_t i = 0; i < split.classes.size(); ++i) class_of[split.classes[i]] = static_cast<int>(i);

  std::vector<SplitItem> items;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (require_labels && !records[i].room_label) continue;
    const int label = records[i].room_label ? class_of.at(*records[i].room_label) : -1;
    items.push_back({i, records[i].lighting_id, label});
  }
  if (items.size() < 2) throw std::invalid_argument("split: fewer than two usable frames");

  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(items.begin(), items.end());
  const auto n = items.size();
  const auto n_train = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * n)), 1, n - 1);
  split.train.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test.assign(items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end());

  if (holdout) {
    ProbeConfig probe;
    probe.holdout = holdout;
    probe.validate(palette_size);
    std::vector<int> train_ids;
    for (int id = 0; id < static_cast<int>(palette_size); ++id) {
      if (id != holdout->first && id != holdout->second) train_ids.push_back(id);
    }
    Rng light(derive_seed(seed, "split-lighting"));
    for (auto& it : split.train) it.lighting_id = train_ids[light.below(train_ids.size())];
    for (auto& it : split.test) it.lighting_id = light.bernoulli(0.5) ? holdout->second : holdout->first;
  }

  if (require_labels) {
    std::vector<std::size_t> count(split.classes.size(), 0);
    for (const auto& it : split.train) ++count[static_cast<std::size_t>(it.label)];
    for (std::size_t c = 0; c < count.size(); ++c) {
      if (count[c] == 0) throw std::invalid_argument("split: class '" + split.classes[c] + "' has no training frames");
    }
  }
  return split;
}

namespace {

struct Standardizer {
  std::vector<double> mean, inv_std;

  Standardizer(std::span<const double> x, std::size_t f) : mean(f, 0.0), inv_std(f, 1.0) {
    const std::size_t n = x.size() / f;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) mean[j] += x[i * f + j];
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    std::vector<double> var(f, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) var[j] += (x[i * f + j] - mean[j]) * (x[i * f + j] - mean[j]);
    }
    for (std::size_t j = 0; j < f; ++j) {
      const double s = std::sqrt(var[j] / static_cast<double>(n));
      inv_std[j] = s > 1e-12 ? 1.0 / s : 1.0;
    }
  }

  std::vector<double> apply(std::span<const double> x) const {
    const std::size_t f = mean.size();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i % f]) * inv_std[i % f];
    return out;
  }
};

struct Evaluated {
  double loss = 0;
  double accuracy = 0;
};

Evaluated evaluate_probe(const std::vector<double>& x, std::span<const int> y, std::size_t f,
                         const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t n = y.size();
  const auto logits = ad::linear(Tensor<double>::from_data({n, f}, x), w.detach(), b.detach());
  std::vector<std::size_t> labels(y.begin(), y.end());
  const double loss = ad::cross_entropy(logits, std::span<const std::size_t>(labels)).item();
  const std::size_t c = w.dim(0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.data().subspan(i * c, c);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == labels[i];
  }
  return {loss, static_cast<double>(correct) / static_cast<double>(n)};
}

}  // namespace

ProbeResult linear_probe(std::span<const double> train_x, std::span<const int> train_y,
                         std::span<const double> test_x, std::span<const int> test_y, std::size_t feature_dim,
                         std::size_t classes, const ProbeConfig& cfg) {
  if (feature_dim == 0 || classes < 2) throw std::invalid_argument("probe: need features and at least two classes");
  if (train_y.empty() || test_y.empty()) throw std::invalid_argument("probe: empty train or test set");
  if (train_x.size() != train_y.size() * feature_dim || test_x.size() != test_y.size() * feature_dim) {
    throw std::invalid_argument("probe: feature matrix does not match label count");
  }
  for (auto ys : {train_y, test_y}) {
    for (int y : ys) {
      if (y < 0 || static_cast<std::size_t>(y) >= classes) {
        throw std::out_of_range("probe: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
      }
    }
  }
  const Standardizer st(train_x, feature_dim);
  const auto xtr = st.apply(train_x);
  const auto xte = st.apply(test_x);

  auto w = Tensor<double>::zeros({classes, feature_dim}, true);
  auto b = Tensor<double>::zeros({classes}, true);
  const std::size_t n = train_y.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, "probe"));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::vector<double> xb;
      std::vector<std::size_t> yb;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        xb.insert(xb.end(), xtr.begin() + static_cast<std::ptrdiff_t>(i * feature_dim),
                  xtr.begin() + static_cast<std::ptrdiff_t>((i + 1) * feature_dim));
        yb.push_back(static_cast<std::size_t>(train_y[i]));
      }
      w.zero_grad();
      b.zero_grad();
      const auto logits = ad::linear(Tensor<double>::from_data({end - start, feature_dim}, std::move(xb)), w, b);
      ad::cross_entropy(logits, std::span<const std::size_t>(yb)).backward();
      for (auto* t : {&w, &b}) {
        auto d = t->mutable_data();
        const auto g = t->grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= cfg.lr * g[i];
      }
    }
  }
  const auto tr = evaluate_probe(xtr, train_y, feature_dim, w, b);
  const auto te = evaluate_probe(xte, test_y, feature_dim, w, b);
  return {tr.loss, te.loss, tr.accuracy, te.accuracy};
}

std::vector<double> backbone_features(const nn::ParameterSet<float>& params, const nn::TinyConvArch& arch,
                                      std::span<const Image> images, std::size_t chunk) {
  const auto frozen = params.clone(false);
  std::vector<double> out;
  out.reserve(images.size() * arch.feature_dim);
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const auto part = images.subspan(start, std::min(chunk, images.size() - start));
    const auto f = nn::backbone_forward(frozen, arch, nn::images_to_tensor<float>(part));
    out.insert(out.end(), f.data().begin(), f.data().end());
  }
  return out;
}

ProbeResult room_probe(const nn::ParameterSet<float>& params, const nn::TinyConvArch& arch,
                       std::span<const Image> train_images, std::span<const int> train_y,
                       std::span<const Image> test_images, std::span<const int> test_y, std::size_t classes,
                       const ProbeConfig& cfg) {
  const auto xtr = backbone_features(params, arch, train_images);
  const auto xte = backbone_features(params, arch, test_images);
  return linear_probe(xtr, train_y, xte, test_y, arch.feature_dim, classes, cfg);
}

namespace {

double wrap180(double d) { return d - 360.0 * std::floor((d + 180.0) / 360.0); }

}  // namespace

double rotation_error(double predicted, double target) { return std::abs(wrap180(predicted - target)); }

template <class T>
Tensor<T> localization_loss(const Tensor<T>& pred, std::span<const Pose> targets, double alpha) {
  if (pred.rank() != 2 || pred.dim(1) != 4 || pred.dim(0) != targets.size() || targets.empty()) {
    throw ad::ShapeError("localization loss: expected [B x 4] predictions for B targets, got " +
                         ad::shape_str(pred.shape()));
  }
  const std::size_t b = targets.size();
  std::vector<T> diff(b * 4);
  double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto p = pred.data().subspan(i * 4, 4);
    const double dx = static_cast<double>(p[0]) - targets[i].x();
    const double dy = static_cast<double>(p[1]) - targets[i].y();
    const double dz = static_cast<double>(p[2]) - targets[i].z();
    const double dr = wrap180(static_cast<double>(p[3]) - targets[i].yaw());
    diff[i * 4 + 0] = static_cast<T>(dx);
    diff[i * 4 + 1] = static_cast<T>(dy);
    diff[i * 4 + 2] = static_cast<T>(dz);
    diff[i * 4 + 3] = static_cast<T>(dr);
    total += dx * dx + dy * dy + dz * dz + alpha * dr * dr;
  }
  const T value = static_cast<T>(total / static_cast<double>(b));
  return ad::make_result<T>("localization_loss", {}, {value}, {pred}, [diff, alpha, b](ad::Node<T>& o) {
    auto& parent = *o.parents[0];
    if (!parent.requires_grad) return;
    auto& g = parent.ensure_grad();
    const T scale = o.grad[0] * static_cast<T>(2.0 / static_cast<double>(b));
    for (std::size_t i = 0; i < diff.size(); ++i) {
      g[i] += scale * diff[i] * (i % 4 == 3 ? static_cast<T>(alpha) : T(1));
    }
  });
}

void LocalizationConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("localization: epochs must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("localization: batch size must be positive");
  if (!(alpha > 0.0)) throw std::invalid_argument("localization: alpha must be positive");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("localization: clip_norm must be >= 0");
  nn::SgdConfig{lr, momentum, 0.0}.validate();
}

namespace {

struct Head {
  Tensor<float> weight, bias, out_scale, out_shift;  // scale/shift are [4]
};

Tensor<float> predict(const nn::ParameterSet<float>& params, const nn::TinyConvArch& arch, const Head& head,
                      std::span<const Image> images) {
  const auto f = nn::backbone_forward(params, arch, nn::images_to_tensor<float>(images));
  const auto h = ad::linear(f, head.weight, head.bias);
  const std::size_t b = images.size();
  std::vector<float> sc(b * 4), sh(b * 4);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      sc[i * 4 + c] = head.out_scale.data()[c];
      sh[i * 4 + c] = head.out_shift.data()[c];
    }
  }
  return ad::add(ad::mul(h, Tensor<float>::from_data({b, 4}, std::move(sc))),
                 Tensor<float>::from_data({b, 4}, std::move(sh)));
}

struct LocEval {
  double loss = 0, pos = 0, rot = 0;
};

LocEval evaluate_localization(const nn::ParameterSet<float>& params, const nn::TinyConvArch& arch, const Head& head,
                              std::span<const Image> images, std::span<const Pose> poses, double alpha) {
  const auto frozen = params.clone(false);
  Head fixed{head.weight.detach(), head.bias.detach(), head.out_scale, head.out_shift};
  LocEval ev;
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const std::size_t len = std::min(chunk, images.size() - start);
    const auto pred = predict(frozen, arch, fixed, images.subspan(start, len));
    const auto tgt = poses.subspan(start, len);
    ev.loss += localization_loss(pred, tgt, alpha).item() * static_cast<double>(len);
    for (std::size_t i = 0; i < len; ++i) {
      const auto p = pred.data().subspan(i * 4, 4);
      const double dx = p[0] - tgt[i].x(), dy = p[1] - tgt[i].y(), dz = p[2] - tgt[i].z();
      ev.pos += std::sqrt(dx * dx + dy * dy + dz * dz);
      ev.rot += rotation_error(p[3], tgt[i].yaw());
    }
  }
  const auto n = static_cast<double>(images.size());
  ev.loss /= n;
  ev.pos /= n;
  ev.rot /= n;
  return ev;
}

}  // namespace

namespace {

void clip_gradients(nn::ParameterSet<float>& params, double max_norm) {
  double sq = 0;
  for (auto& [name, t] : params) {
    for (float g : t.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const auto f = static_cast<float>(max_norm / norm);
  for (auto& [name, t] : params) {
    if (t.grad().empty()) continue;
    for (float& g : t.mutable_grad()) g *= f;
  }
}

}  // namespace

LocalizationResult localization_train_eval(const nn::ParameterSet<float>& params, const nn::TinyConvArch& arch,
                                           std::span<const Image> train_images, std::span<const Pose> train_poses,
                                           std::span<const Image> test_images, std::span<const Pose> test_poses,
                                           const LocalizationConfig& cfg) {
  cfg.validate();
  if (train_images.size() != train_poses.size() || test_images.size() != test_poses.size() ||
      train_images.empty() || test_images.empty()) {
    throw std::invalid_argument("localization: need matching, nonempty image and pose sets");
  }
  auto backbone = params.clone(cfg.finetune);

  // Output de-standardization from training targets.
  std::array<double, 4> mean{}, var{};
  for (const auto& p : train_poses) {
    const std::array<double, 4> v{p.x(), p.y(), p.z(), p.yaw()};
    for (int c = 0; c < 4; ++c) mean[c] += v[c];
  }
  const auto n = static_cast<double>(train_poses.size());
  for (auto& m : mean) m /= n;
  for (const auto& p : train_poses) {
    const std::array<double, 4> v{p.x(), p.y(), p.z(), p.yaw()};
    for (int c = 0; c < 4; ++c) var[c] += (v[c] - mean[c]) * (v[c] - mean[c]);
  }
  std::vector<float> scale(4), shift(4);
  for (int c = 0; c < 4; ++c) {
    const double s = std::sqrt(var[c] / n);
    scale[c] = static_cast<float>(s > 1e-9 ? s : 1.0);
    shift[c] = static_cast<float>(mean[c]);
  }

  Rng init(derive_seed(cfg.seed, "localization-head"));
  const double bound = 1.0 / std::sqrt(static_cast<double>(arch.feature_dim));
  std::vector<float> w(4 * arch.feature_dim);
  for (auto& v : w) v = static_cast<float>(init.uniform(-bound, bound));
  Head head{Tensor<float>::from_data({4, arch.feature_dim}, std::move(w), true), Tensor<float>::zeros({4}, true),
            Tensor<float>::from_data({4}, std::move(scale)), Tensor<float>::from_data({4}, std::move(shift))};

  nn::ParameterSet<float> trainable;
  trainable.add("head.weight", head.weight);
  trainable.add("head.bias", head.bias);
  if (cfg.finetune) {
    for (auto& [name, t] : backbone) {
      if (nn::is_backbone_param(name)) trainable.add(name, t);
    }
  }
  nn::Sgd<float> sgd(nn::SgdConfig{cfg.lr, cfg.momentum, 0.0});

  LocalizationResult res;
  const auto before = evaluate_localization(backbone, arch, head, test_images, test_poses, cfg.alpha);
  res.initial_position_error = before.pos;
  res.initial_rotation_error = before.rot;

  std::vector<std::size_t> order(train_images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, "localization-order"));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Image> imgs;
      std::vector<Pose> tgt;
      for (std::size_t k = start; k < end; ++k) {
        imgs.push_back(train_images[order[k]]);
        tgt.push_back(train_poses[order[k]]);
      }
      trainable.zero_grad();
      const auto loss = localization_loss(predict(backbone, arch, head, imgs), std::span<const Pose>(tgt), cfg.alpha);
      loss.backward();
      if (cfg.clip_norm > 0) clip_gradients(trainable, cfg.clip_norm);
      sgd.step(trainable);
    }
  }
  const auto train_after = evaluate_localization(backbone, arch, head, train_images, train_poses, cfg.alpha);
  const auto after = evaluate_localization(backbone, arch, head, test_images, test_poses, cfg.alpha);
  res.train_loss = train_after.loss;
  res.test_loss = after.loss;
  res.position_error = after.pos;
  res.rotation_error = after.rot;
  res.position_drop = res.initial_position_error - res.position_error;
  res.rotation_drop = res.initial_rotation_error - res.rotation_error;
  return res;
}

std::vector<double> pca2(std::span<const double> points, std::size_t dim) {
  if (dim < 2 || points.size() % dim != 0 || points.size() / dim < 2) {
    throw std::invalid_argument("pca2: need at least two points of dimension >= 2");
  }
  const auto n = static_cast<Eigen::Index>(points.size() / dim);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      points.data(), n, static_cast<Eigen::Index>(dim));
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mu;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd basis(d, 2);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd v = es.eigenvectors().col(d - 1 - k);
    Eigen::Index at = 0;
    v.cwiseAbs().maxCoeff(&at);
    if (v(at) < 0) v = -v;
    basis.col(k) = v;
  }
  const Eigen::MatrixXd proj = centered * basis;
  std::vector<double> out(static_cast<std::size_t>(n) * 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i) * 2] = proj(i, 0);
    out[static_cast<std::size_t>(i) * 2 + 1] = proj(i, 1);
  }
  return out;
}

ClusterReport cluster_metrics(std::span<const double> points, std::size_t dim, std::span<const int> labels,
                              bool use_pca2) {
  if (dim == 0 || points.size() != labels.size() * dim) {
    throw std::invalid_argument("cluster metrics: point matrix does not match label count");
  }
  std::vector<double> projected;
  if (use_pca2) {
    projected = pca2(points, dim);
    points = projected;
    dim = 2;
  }
  std::map<int, std::size_t> class_index;
  for (int l : labels) class_index.emplace(l, 0);
  if (class_index.size() < 2) throw std::invalid_argument("cluster metrics: need at least two classes");
  std::size_t k = 0;
  for (auto& [label, idx] : class_index) idx = k++;
  const std::size_t n = labels.size();
  std::vector<std::size_t> cls(n), size(k, 0);
  for (std::size_t i = 0; i < n; ++i) ++size[cls[i] = class_index.at(labels[i])];
  for (std::size_t c = 0; c < k; ++c) {
    if (size[c] < 2) throw std::invalid_argument("cluster metrics: every class needs at least two members");
  }
  auto pt = [&](std::size_t i) { return points.subspan(i * dim, dim); };
  auto dist = [&](std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t j = 0; j < dim; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(s);
  };

  std::vector<double> centroid(k * dim, 0.0), overall(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      centroid[cls[i] * dim + j] += pt(i)[j];
      overall[j] += pt(i)[j];
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < dim; ++j) centroid[c * dim + j] /= static_cast<double>(size[c]);
  }
  for (auto& v : overall) v /= static_cast<double>(n);
  auto cen = [&](std::size_t c) { return std::span<const double>(centroid).subspan(c * dim, dim); };

  double within = 0, between = 0;
  std::vector<double> scatter(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = dist(pt(i), cen(cls[i]));
    within += d * d;
    scatter[cls[i]] += d;
  }
  if (!(within > 0)) throw std::invalid_argument("cluster metrics: zero within-class dispersion");
  for (std::size_t c = 0; c < k; ++c) {
    const double d = dist(cen(c), overall);
    between += static_cast<double>(size[c]) * d * d;
    scatter[c] /= static_cast<double>(size[c]);
  }

  ClusterReport r;
  r.samples = n;
  r.classes = k;
  r.calinski_harabasz = (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));

  double db = 0;
  for (std::size_t a = 0; a < k; ++a) {
    double worst = 0;
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      const double d = dist(cen(a), cen(b));
      if (!(d > 0)) throw std::invalid_argument("cluster metrics: coincident class centroids");
      worst = std::max(worst, (scatter[a] + scatter[b]) / d);
    }
    db += worst;
  }
  r.davies_bouldin = db / static_cast<double>(k);

  double sil = 0;
  std::vector<double> mean_to(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(mean_to.begin(), mean_to.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) mean_to[cls[j]] += dist(pt(i), pt(j));
    }
    const double a = mean_to[cls[i]] / static_cast<double>(size[cls[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != cls[i]) b = std::min(b, mean_to[c] / static_cast<double>(size[c]));
    }
    const double m = std::max(a, b);
    sil += m > 0 ? (b - a) / m : 0.0;
  }
  r.silhouette = sil / static_cast<double>(n);
  return r;
}

template Tensor<float> localization_loss<float>(const Tensor<float>&, std::span<const Pose>, double);
template Tensor<double> localization_loss<double>(const Tensor<double>&, std::span<const Pose>, double);

}  // namespace ess::eval
