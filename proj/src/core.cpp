#include "ess/core.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace ess::core {

DictionaryQueue::DictionaryQueue(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0) throw std::invalid_argument("DictionaryQueue: capacity must be positive");
  if (dim == 0) throw std::invalid_argument("DictionaryQueue: key dimension must be positive");
}

void DictionaryQueue::enqueue(std::span<const float> key, const Pose& pose, std::int64_t frame_id) {
  if (key.size() != dim_) {
    throw std::invalid_argument("DictionaryQueue: key has dimension " + std::to_string(key.size()) + ", expected " +
                                std::to_string(dim_));
  }
  double sq = 0;
  for (float v : key) sq += static_cast<double>(v) * v;
  if (!(std::abs(std::sqrt(sq) - 1.0) <= kUnitNormTol)) {
    throw std::invalid_argument("DictionaryQueue: key is not unit norm (norm " + std::to_string(std::sqrt(sq)) + ")");
  }
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(QueueEntry{std::vector<float>(key.begin(), key.end()), pose, frame_id});
}

std::vector<float> DictionaryQueue::key_matrix() const {
  std::vector<float> out;
  out.reserve(entries_.size() * dim_);
  for (const auto& e : entries_) out.insert(out.end(), e.key.begin(), e.key.end());
  return out;
}

template <class T>
EncoderPair<T> EncoderPair<T>::create(const nn::TinyConvArch& arch, std::uint64_t seed, double momentum) {
  EncoderPair pair;
  pair.arch = arch;
  pair.query = nn::init_tiny_conv<T>(arch, seed);
  pair.key = pair.query.clone(false);
  pair.momentum = momentum;
  return pair;
}

template <class T>
void momentum_update(nn::ParameterSet<T>& key, const nn::ParameterSet<T>& query, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw std::invalid_argument("momentum_update: m must lie in [0, 1]");
  key.require_aligned(query, "momentum_update");
  const T blend = static_cast<T>(1.0 - m);
  auto qit = query.begin();
  for (auto kit = key.begin(); kit != key.end(); ++kit, ++qit) {
    auto k = kit->second.mutable_data();
    const auto q = qit->second.data();
    if (m == 0.0) {
      std::copy(q.begin(), q.end(), k.begin());
      continue;
    }
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = k[i] + blend * (q[i] - k[i]);
  }
}

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::Baseline: return "baseline";
    case LossMode::MB: return "mb";
    case LossMode::MW: return "mw";
  }
  return "?";
}

std::string to_string(EnqueuePolicy p) { return p == EnqueuePolicy::FirstEnqueue ? "first" : "last"; }

LossMode parse_loss_mode(const std::string& s) {
  if (s == "baseline") return LossMode::Baseline;
  if (s == "mb") return LossMode::MB;
  if (s == "mw") return LossMode::MW;
  throw std::invalid_argument("unknown loss mode '" + s + "' (expected baseline, mb or mw)");
}

EnqueuePolicy parse_enqueue_policy(const std::string& s) {
  if (s == "first") return EnqueuePolicy::FirstEnqueue;
  if (s == "last") return EnqueuePolicy::LastEnqueue;
  throw std::invalid_argument("unknown enqueue policy '" + s + "' (expected first or last)");
}

void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("loss: temperature must be positive");
  }
  if (mode != LossMode::Baseline && !threshold) throw std::invalid_argument("loss: mb/mw require thresholds");
  if (mode == LossMode::MW) {
    if (!weights) throw std::invalid_argument("loss: mw requires weight parameters");
    weights->validate();
  }
}

std::vector<std::size_t> find_positives(const Pose& query, const DictionaryQueue& queue,
                                        const SimilarityThreshold& thr) {
  if (queue.empty()) throw std::invalid_argument("find_positives: queue is empty");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    if (is_positive(query, queue.at(i).pose, thr)) out.push_back(i);
  }
  return out;
}

std::size_t nearest_in_trajectory(const DictionaryQueue& queue, std::int64_t frame_id) {
  if (queue.empty()) throw std::invalid_argument("nearest_in_trajectory: queue is empty");
  std::size_t best = 0;
  auto gap = [&](std::size_t i) {
    const std::int64_t d = queue.at(i).frame_id - frame_id;
    return d < 0 ? -d : d;
  };
  for (std::size_t i = 1; i < queue.size(); ++i) {
    const auto g = gap(i), gb = gap(best);
    if (g < gb || (g == gb && queue.at(i).frame_id < queue.at(best).frame_id)) best = i;
  }
  return best;
}

template <class T>
Tensor<T> contrastive_loss(const Tensor<T>& queries, const Tensor<T>& dict, std::span<const T> targets, double tau,
                           std::span<const std::uint8_t> mask) {
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive loss: temperature must be positive");
  if (queries.rank() != 2 || dict.rank() != 2 || queries.dim(1) != dict.dim(1)) {
    throw ad::ShapeError("contrastive loss: expected queries [B x d] and dictionary [N x d], got " +
                         ad::shape_str(queries.shape()) + " and " + ad::shape_str(dict.shape()));
  }
  const std::size_t b = queries.dim(0), n = dict.dim(0);
  if (targets.size() != b * n) throw ad::ShapeError("contrastive loss: targets must be [B x N]");
  Tensor<T> logits = ad::scale(ad::linear(queries, dict, Tensor<T>()), static_cast<T>(1.0 / tau));
  if (!mask.empty()) {
    if (mask.size() != b * n) throw ad::ShapeError("contrastive loss: mask must be [B x N]");
    std::vector<T> add(b * n, T(0));
    for (std::size_t i = 0; i < add.size(); ++i) {
      if (!mask[i]) {
        if (targets[i] != T(0)) throw std::invalid_argument("contrastive loss: target on a masked entry");
        add[i] = static_cast<T>(-1e9);
      }
    }
    logits = ad::add(logits, Tensor<T>::from_data({b, n}, std::move(add)));
  }
  return ad::soft_cross_entropy(logits, targets);
}

namespace {

template <class T>
Tensor<T> as_row(const Tensor<T>& v) {
  if (v.rank() == 2 && v.dim(0) == 1) return v;
  if (v.rank() != 1) throw ad::ShapeError("loss: query must be a vector, got " + ad::shape_str(v.shape()));
  return ad::reshape(v, {1, v.dim(0)});
}

template <class T>
Tensor<T> single_query_loss(const Tensor<T>& q, const Tensor<T>& keys, std::span<const std::size_t> positives,
                            std::span<const double> weights, double tau) {
  if (positives.empty()) throw std::invalid_argument("loss: positive set is empty");
  if (keys.rank() != 2) throw ad::ShapeError("loss: keys must be [N x d]");
  const std::size_t n = keys.dim(0);
  double total = 0;
  for (double w : weights) total += w;
  if (!(total > 0)) throw std::invalid_argument("loss: positive weights must sum to a positive value");
  std::vector<T> targets(n, T(0));
  for (std::size_t i = 0; i < positives.size(); ++i) {
    if (positives[i] >= n) throw std::out_of_range("loss: positive index outside the dictionary");
    targets[positives[i]] += static_cast<T>(weights[i] / total);
  }
  return contrastive_loss(as_row(q), keys, std::span<const T>(targets), tau);
}

}  // namespace

template <class T>
Tensor<T> loss_baseline(const Tensor<T>& q, const Tensor<T>& self_key, const Tensor<T>& keys, double tau) {
  Tensor<T> self = as_row(self_key);
  Tensor<T> dict = !keys.defined() ? self : ad::concat<T>({self, keys});
  const std::size_t pos = 0;
  const double w = 1.0;
  return single_query_loss(q, dict, std::span<const std::size_t>(&pos, 1), std::span<const double>(&w, 1), tau);
}

template <class T>
Tensor<T> loss_mb(const Tensor<T>& q, const Tensor<T>& keys, std::span<const std::size_t> positives, double tau) {
  std::vector<double> w(positives.size(), 1.0);
  return single_query_loss(q, keys, positives, std::span<const double>(w), tau);
}

template <class T>
Tensor<T> loss_mw(const Tensor<T>& q, const Tensor<T>& keys, std::span<const std::size_t> positives,
                  std::span<const double> weights, double tau) {
  if (weights.size() != positives.size()) throw std::invalid_argument("loss_mw: one weight per positive required");
  for (double w : weights) {
    if (!(w > 0) || !std::isfinite(w)) throw std::invalid_argument("loss_mw: weights must be positive");
  }
  return single_query_loss(q, keys, positives, weights, tau);
}

std::vector<double> positive_weights(const Pose& query, const DictionaryQueue& queue,
                                     std::span<const std::size_t> positives, const WeightParams& wp) {
  std::vector<double> out;
  out.reserve(positives.size());
  for (std::size_t p : positives) out.push_back(pair_weight(query, queue.at(p).pose, wp));
  return out;
}

double pretext_accuracy_baseline(std::span<const double> sims, std::size_t self_index) {
  if (self_index >= sims.size()) throw std::out_of_range("pretext accuracy: self index outside the dictionary");
  const auto best = static_cast<std::size_t>(std::max_element(sims.begin(), sims.end()) - sims.begin());
  return best == self_index ? 1.0 : 0.0;
}

double pretext_accuracy_spatial(std::span<const double> sims, std::span<const std::uint8_t> labels, double tau) {
  if (sims.size() != labels.size()) throw std::invalid_argument("pretext accuracy: one label per similarity required");
  if (sims.empty()) return 0.0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-sims[i] / tau));
    agree += (p > 0.95) == (labels[i] != 0);
  }
  return static_cast<double>(agree) / static_cast<double>(sims.size());
}

template <class T>
std::vector<T> BatchMining::targets() const {
  std::vector<T> t(batch * dict_size, T(0));
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t k = 0; k < positives[i].size(); ++k) {
      t[i * dict_size + positives[i][k]] += static_cast<T>(weights[i][k]);
    }
  }
  return t;
}

double BatchMining::mean_positives() const {
  if (batch == 0) return 0.0;
  double total = 0;
  for (const auto& p : positives) total += static_cast<double>(p.size());
  return total / static_cast<double>(batch);
}

BatchMining mine_batch(DictionaryQueue& queue, std::span<const float> keys, std::span<const Pose> poses,
                       std::span<const std::int64_t> frame_ids, const LossConfig& cfg) {
  cfg.validate();
  const std::size_t b = poses.size(), d = queue.dim();
  if (frame_ids.size() != b || keys.size() != b * d) {
    throw std::invalid_argument("mine_batch: keys, poses and frame ids disagree in batch size");
  }
  const bool first = cfg.policy == EnqueuePolicy::FirstEnqueue;
  if (first && b > queue.capacity()) throw std::invalid_argument("mine_batch: batch larger than the queue");

  BatchMining m;
  m.batch = b;
  m.dim = d;
  auto enqueue_all = [&] {
    for (std::size_t i = 0; i < b; ++i) queue.enqueue(keys.subspan(i * d, d), poses[i], frame_ids[i]);
  };
  if (first) enqueue_all();

  for (std::size_t j = 0; j < queue.size(); ++j) {
    const auto& e = queue.at(j);
    m.dict_keys.insert(m.dict_keys.end(), e.key.begin(), e.key.end());
    m.dict_poses.push_back(e.pose);
    m.dict_ids.push_back(e.frame_id);
  }
  const std::size_t queued = queue.size();
  const bool baseline = cfg.mode == LossMode::Baseline;
  if (!first && baseline) {
    m.dict_keys.insert(m.dict_keys.end(), keys.begin(), keys.end());
    for (std::size_t i = 0; i < b; ++i) {
      m.dict_poses.push_back(poses[i]);
      m.dict_ids.push_back(frame_ids[i]);
    }
  }
  m.dict_size = m.dict_poses.size();
  const std::size_t n = m.dict_size;

  m.self_index.assign(b, BatchMining::npos);
  if (first) {
    for (std::size_t i = 0; i < b; ++i) m.self_index[i] = queued - b + i;
  } else if (baseline) {
    for (std::size_t i = 0; i < b; ++i) m.self_index[i] = queued + i;
    m.mask.assign(b * n, 0);
    for (std::size_t i = 0; i < b; ++i) {
      std::fill_n(m.mask.begin() + static_cast<std::ptrdiff_t>(i * n), queued, std::uint8_t{1});
      m.mask[i * n + queued + i] = 1;
    }
  }

  m.labels.assign(b * n, 0);
  m.positives.resize(b);
  m.weights.resize(b);
  m.fell_back.assign(b, 0);
  for (std::size_t i = 0; i < b; ++i) {
    if (baseline) {
      m.labels[i * n + m.self_index[i]] = 1;
      m.positives[i] = {m.self_index[i]};
      m.weights[i] = {1.0};
      continue;
    }
    const auto& thr = *cfg.threshold;
    m.positives[i] = find_positives(poses[i], queue, thr);
    for (std::size_t p : m.positives[i]) m.labels[i * n + p] = 1;
    if (m.positives[i].empty()) {
      // Only reachable under LastEnqueue: FirstEnqueue always finds the self key.
      m.positives[i] = {nearest_in_trajectory(queue, frame_ids[i])};
      m.fell_back[i] = 1;
      ++m.fallbacks;
    }
    std::vector<double> w;
    if (cfg.mode == LossMode::MW) {
      w = positive_weights(poses[i], queue, m.positives[i], *cfg.weights);
    } else {
      w.assign(m.positives[i].size(), 1.0);
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= total;
    m.weights[i] = std::move(w);
  }

  if (!first) enqueue_all();
  return m;
}

template <class T>
Tensor<T> batch_loss(const Tensor<T>& queries, const BatchMining& mining, const LossConfig& cfg) {
  if (queries.rank() != 2 || queries.dim(0) != mining.batch || queries.dim(1) != mining.dim) {
    throw ad::ShapeError("batch_loss: queries " + ad::shape_str(queries.shape()) + " do not match the mined batch");
  }
  std::vector<T> dict(mining.dict_keys.begin(), mining.dict_keys.end());
  const auto d = Tensor<T>::from_data({mining.dict_size, mining.dim}, std::move(dict));
  const auto targets = mining.targets<T>();
  return contrastive_loss(queries, d, std::span<const T>(targets), cfg.temperature, mining.mask);
}

double batch_pretext_accuracy(std::span<const float> queries, const BatchMining& mining, const LossConfig& cfg) {
  const std::size_t b = mining.batch, n = mining.dict_size, d = mining.dim;
  if (queries.size() != b * d) throw std::invalid_argument("pretext accuracy: query matrix does not match batch");
  if (b == 0) return 0.0;
  double total = 0;
  std::vector<double> sims;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < b; ++i) {
    sims.clear();
    labels.clear();
    std::size_t self_visible = BatchMining::npos;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mining.mask.empty() && !mining.mask[i * n + j]) continue;
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) {
        s += static_cast<double>(queries[i * d + c]) * mining.dict_keys[j * d + c];
      }
      if (j == mining.self_index[i]) self_visible = sims.size();
      sims.push_back(s);
      labels.push_back(mining.labels[i * n + j]);
    }
    if (cfg.mode == LossMode::Baseline) {
      total += pretext_accuracy_baseline(sims, self_visible);
    } else {
      total += pretext_accuracy_spatial(sims, labels, cfg.temperature);
    }
  }
  return total / static_cast<double>(b);
}

void TrainDataset::validate() const {
  if (frame_ids.empty()) throw std::invalid_argument("dataset: no frames");
  if (poses.size() != frame_ids.size()) throw std::invalid_argument("dataset: one pose per frame required");
  if (!source) throw std::invalid_argument("dataset: no image source");
}

TrainDataset dataset_from_images(std::vector<Image> images, std::vector<Pose> poses,
                                 std::vector<std::int64_t> frame_ids) {
  if (images.size() != poses.size()) throw std::invalid_argument("dataset: one image per pose required");
  TrainDataset ds;
  ds.frame_ids = std::move(frame_ids);
  ds.poses = std::move(poses);
  auto shared = std::make_shared<const std::vector<Image>>(std::move(images));
  ds.source = [shared](std::size_t i, Rng&) { return shared->at(i); };
  return ds;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  if (queue_size == 0) throw std::invalid_argument("train: queue size must be positive");
  if (loss.policy == EnqueuePolicy::FirstEnqueue && batch_size > queue_size) {
    throw std::invalid_argument("train: batch size exceeds the queue size under first-enqueue");
  }
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw std::invalid_argument("train: momentum must lie in [0, 1]");
  sgd.validate();
  loss.validate();
  augment.validate();
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(derive_seed(seed, "order"), static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order.begin(), order.end());
  return order;
}

Trainer::Trainer(TrainConfig cfg, const nn::TinyConvArch& arch, TrainDataset data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      pair_(EncoderPair<float>::create(arch, derive_seed(cfg_.seed, "init"), cfg_.momentum)),
      queue_(cfg_.queue_size, arch.embedding_dim),
      sgd_(cfg_.sgd),
      aug_rng_(derive_seed(cfg_.seed, "augment")) {
  cfg_.validate();
  data_.validate();
}

std::vector<Image> Trainer::views_for(std::span<const std::size_t> idx, std::vector<Image>* key_views) {
  std::vector<Image> q;
  q.reserve(idx.size());
  key_views->clear();
  for (std::size_t i : idx) {
    if (cfg_.independent_lighting_views) {
      const Image a = data_.source(i, aug_rng_);
      q.push_back(augment::augment(a, cfg_.augment, aug_rng_));
      const Image b = data_.source(i, aug_rng_);
      key_views->push_back(augment::augment(b, cfg_.augment, aug_rng_));
    } else {
      const Image s = data_.source(i, aug_rng_);
      auto [a, b] = augment::two_views(s, cfg_.augment, aug_rng_);
      q.push_back(std::move(a));
      key_views->push_back(std::move(b));
    }
  }
  return q;
}

void Trainer::prewarm() {
  if (warmed_) return;
  const std::size_t n = data_.size(), bs = cfg_.batch_size;
  const auto order = epoch_order(n, cfg_.seed, 0);
  const std::size_t start = ((n - 1) / bs) * bs;
  Rng rng(derive_seed(cfg_.seed, "prewarm"));
  std::vector<Image> views;
  for (std::size_t k = start; k < n; ++k) views.push_back(augment::augment(data_.source(order[k], rng), cfg_.augment, rng));
  const auto keys = nn::embed(pair_.key, pair_.arch, nn::images_to_tensor<float>(views));
  const std::size_t d = pair_.arch.embedding_dim;
  for (std::size_t k = start; k < n; ++k) {
    const std::size_t row = k - start;
    queue_.enqueue(keys.data().subspan(row * d, d), data_.poses[order[k]], data_.frame_ids[order[k]]);
  }
  warmed_ = true;
}

EpochMetrics Trainer::train_epoch() {
  prewarm();
  const std::size_t n = data_.size(), bs = cfg_.batch_size;
  const auto order = epoch_order(n, cfg_.seed, epoch_);
  EpochMetrics em;
  em.epoch = epoch_ + 1;
  double acc_total = 0, pos_total = 0;
  std::size_t batches = 0;
  std::vector<Image> key_views;
  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t end = std::min(n, start + bs);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    const auto query_views = views_for(idx, &key_views);
    std::vector<Pose> poses;
    std::vector<std::int64_t> ids;
    for (std::size_t i : idx) {
      poses.push_back(data_.poses[i]);
      ids.push_back(data_.frame_ids[i]);
    }
    try {
      const auto q = nn::embed(pair_.query, pair_.arch, nn::images_to_tensor<float>(query_views));
      const auto k = nn::embed(pair_.key, pair_.arch, nn::images_to_tensor<float>(key_views));
      const auto mining = mine_batch(queue_, k.data(), poses, ids, cfg_.loss);
      const auto loss = batch_loss(q, mining, cfg_.loss);
      pair_.query.zero_grad();
      loss.backward();
      sgd_.step(pair_.query);
      momentum_update(pair_);
      em.batch_losses.push_back(loss.item());
      acc_total += batch_pretext_accuracy(q.data(), mining, cfg_.loss);
      pos_total += mining.mean_positives() * static_cast<double>(idx.size());
      em.fallbacks += mining.fallbacks;
    } catch (const ad::NumericError& e) {
      throw ad::NumericError("epoch " + std::to_string(em.epoch) + ", batch " + std::to_string(batches) + ": " +
                             e.what());
    }
    ++batches;
  }
  em.loss = std::accumulate(em.batch_losses.begin(), em.batch_losses.end(), 0.0) / static_cast<double>(batches);
  em.pretext_acc = acc_total / static_cast<double>(batches);
  em.mean_positives = pos_total / static_cast<double>(n);
  ++epoch_;
  return em;
}

double expected_positives(std::span<const Pose> poses, const SimilarityThreshold& thr, std::size_t queue_size) {
  const std::size_t n = poses.size();
  if (n < 2) return 1.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs += is_positive(poses[i], poses[j], thr) ? 2 : 0;
  }
  const double others = static_cast<double>(std::min(queue_size, n) - 1) / static_cast<double>(n - 1);
  return 1.0 + others * static_cast<double>(pairs) / static_cast<double>(n);
}

double calibrate_threshold_scale(std::span<const Pose> poses, const SimilarityThreshold& base,
                                 std::size_t queue_size, double target) {
  if (!(target >= 1.0)) throw std::invalid_argument("calibrate: target must be >= 1");
  double lo = std::log(1e-3), hi = std::log(1e3);
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (expected_positives(poses, base.scaled(std::exp(mid)), queue_size) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::exp(0.5 * (lo + hi));
}

#define ESS_INSTANTIATE(T)                                                                                          \
  template struct EncoderPair<T>;                                                                                   \
  template void momentum_update<T>(nn::ParameterSet<T>&, const nn::ParameterSet<T>&, double);                       \
  template Tensor<T> contrastive_loss<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>, double,            \
                                         std::span<const std::uint8_t>);                                            \
  template Tensor<T> loss_baseline<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);                \
  template Tensor<T> loss_mb<T>(const Tensor<T>&, const Tensor<T>&, std::span<const std::size_t>, double);          \
  template Tensor<T> loss_mw<T>(const Tensor<T>&, const Tensor<T>&, std::span<const std::size_t>,                   \
                                std::span<const double>, double);                                                   \
  template std::vector<T> BatchMining::targets<T>() const;                                                          \
  template Tensor<T> batch_loss<T>(const Tensor<T>&, const BatchMining&, const LossConfig&);

ESS_INSTANTIATE(float)
ESS_INSTANTIATE(double)

}  // namespace ess::core
