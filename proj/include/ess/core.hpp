#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ess/augment.hpp"
#include "ess/image.hpp"
#include "ess/nn.hpp"
#include "ess/rng.hpp"
#include "ess/spatial.hpp"
#include "ess/tensor.hpp"

namespace ess::core {

using ad::Tensor;

// Tolerance for the unit-norm contract on keys and queries.
constexpr double kUnitNormTol = 1e-5;

struct QueueEntry {
  std::vector<float> key;
  Pose pose;
  std::int64_t frame_id = 0;
};

// Fixed-capacity FIFO of unit keys with their poses. Index 0 is the oldest.
class DictionaryQueue {
 public:
  DictionaryQueue(std::size_t capacity, std::size_t dim);

  // Throws std::invalid_argument on a wrong dimension or a key whose norm
  // is off by more than kUnitNormTol.
  void enqueue(std::span<const float> key, const Pose& pose, std::int64_t frame_id);
  void clear() { entries_.clear(); }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  const QueueEntry& at(std::size_t i) const { return entries_.at(i); }

  // Keys stacked row-wise, oldest first.
  std::vector<float> key_matrix() const;

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::deque<QueueEntry> entries_;
};

template <class T>
struct EncoderPair {
  nn::TinyConvArch arch;
  nn::ParameterSet<T> query;
  nn::ParameterSet<T> key;  // never requires grad
  double momentum = 0.999;

  // Key parameters start as an exact copy of the query parameters.
  static EncoderPair create(const nn::TinyConvArch& arch, std::uint64_t seed, double momentum);
};

// theta_k <- m * theta_k + (1 - m) * theta_q. Throws std::invalid_argument on
// misaligned parameter sets or m outside [0, 1].
template <class T>
void momentum_update(nn::ParameterSet<T>& key, const nn::ParameterSet<T>& query, double m);
template <class T>
void momentum_update(EncoderPair<T>& pair) {
  momentum_update(pair.key, pair.query, pair.momentum);
}

enum class LossMode { Baseline, MB, MW };
enum class EnqueuePolicy { FirstEnqueue, LastEnqueue };

std::string to_string(LossMode m);
std::string to_string(EnqueuePolicy p);
LossMode parse_loss_mode(const std::string& s);          // "baseline" | "mb" | "mw"
EnqueuePolicy parse_enqueue_policy(const std::string& s);  // "first" | "last"

struct LossConfig {
  LossMode mode = LossMode::MB;
  double temperature = 0.2;
  std::optional<SimilarityThreshold> threshold;  // MB and MW
  std::optional<WeightParams> weights;           // MW
  EnqueuePolicy policy = EnqueuePolicy::FirstEnqueue;

  // Throws std::invalid_argument.
  void validate() const;
};

// Queue indices whose pose is positive with the query, in queue order.
// Throws std::invalid_argument on an empty queue.
std::vector<std::size_t> find_positives(const Pose& query, const DictionaryQueue& queue,
                                        const SimilarityThreshold& thr);

// Entry whose frame id is closest to frame_id; ties go to the smaller id,
// then to the older entry. Throws std::invalid_argument on an empty queue.
std::size_t nearest_in_trajectory(const DictionaryQueue& queue, std::int64_t frame_id);

// Mean over rows of -sum_j target_ij * log softmax(q_i . d_j / tau + mask_ij).
// queries [B x d], dict [N x d], targets [B x N] with rows summing to one,
// mask empty or [B x N] holding 1 for entries visible to the query.
template <class T>
Tensor<T> contrastive_loss(const Tensor<T>& queries, const Tensor<T>& dict, std::span<const T> targets, double tau,
                           std::span<const std::uint8_t> mask = {});

// Single-query forms. q and keys are unit vectors; keys is [N x d].
// Baseline contrasts q against the keys plus the self key; an undefined keys
// tensor stands for an empty queue.
template <class T>
Tensor<T> loss_baseline(const Tensor<T>& q, const Tensor<T>& self_key, const Tensor<T>& keys, double tau);
template <class T>
Tensor<T> loss_mb(const Tensor<T>& q, const Tensor<T>& keys, std::span<const std::size_t> positives, double tau);
// weights are raw pair weights for the positives, normalized internally.
template <class T>
Tensor<T> loss_mw(const Tensor<T>& q, const Tensor<T>& keys, std::span<const std::size_t> positives,
                  std::span<const double> weights, double tau);

// Pair weights of each positive queue entry relative to the query pose.
std::vector<double> positive_weights(const Pose& query, const DictionaryQueue& queue,
                                     std::span<const std::size_t> positives, const WeightParams& wp);

// Baseline: 1 when the most similar entry is the self key.
double pretext_accuracy_baseline(std::span<const double> sims, std::size_t self_index);
// MB/MW: fraction of entries where sigmoid(sim / tau) > 0.95 agrees with label.
double pretext_accuracy_spatial(std::span<const double> sims, std::span<const std::uint8_t> labels, double tau);

// The dictionary and per-query targets for one batch after the policy-ordered
// enqueue and mining step.
struct BatchMining {
  std::size_t batch = 0;
  std::size_t dim = 0;
  std::size_t dict_size = 0;
  std::vector<float> dict_keys;  // [dict_size x dim]
  std::vector<Pose> dict_poses;
  std::vector<std::int64_t> dict_ids;
  std::vector<std::uint8_t> mask;     // [batch x dict_size]; empty when all visible
  std::vector<std::uint8_t> labels;   // pose-defined positives [batch x dict_size]
  std::vector<std::size_t> self_index;  // dictionary slot of the query's own key, or npos
  std::vector<std::vector<std::size_t>> positives;
  std::vector<std::vector<double>> weights;  // normalized loss targets per positive
  std::vector<std::uint8_t> fell_back;
  std::size_t fallbacks = 0;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  // Targets [batch x dict_size] in T.
  template <class T>
  std::vector<T> targets() const;
  double mean_positives() const;
};

// FirstEnqueue: keys enter the queue first and the dictionary is the queue.
// LastEnqueue: mining runs against the current queue, empty positive sets fall
// back to nearest_in_trajectory, and the keys are enqueued afterwards; the
// baseline then sees the queue plus its own key only.
BatchMining mine_batch(DictionaryQueue& queue, std::span<const float> keys, std::span<const Pose> poses,
                       std::span<const std::int64_t> frame_ids, const LossConfig& cfg);

template <class T>
Tensor<T> batch_loss(const Tensor<T>& queries, const BatchMining& mining, const LossConfig& cfg);

// Mean pretext accuracy over the batch for the given unit queries [B x d].
double batch_pretext_accuracy(std::span<const float> queries, const BatchMining& mining, const LossConfig& cfg);

// Training data: one entry per frame with a source image per draw. The rng
// argument drives any lighting choice.
struct TrainDataset {
  std::vector<std::int64_t> frame_ids;
  std::vector<Pose> poses;
  std::function<Image(std::size_t index, Rng& rng)> source;

  std::size_t size() const { return frame_ids.size(); }
  void validate() const;
};

TrainDataset dataset_from_images(std::vector<Image> images, std::vector<Pose> poses,
                                 std::vector<std::int64_t> frame_ids);

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t queue_size = 512;
  double momentum = 0.999;
  nn::SgdConfig sgd;
  LossConfig loss;
  augment::AugmentConfig augment;
  bool independent_lighting_views = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0;
  double pretext_acc = 0;
  double mean_positives = 0;
  std::size_t fallbacks = 0;
  std::vector<double> batch_losses;
};

// Shuffled frame order for an epoch; depends only on seed and epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

// Owns the encoders, queue, optimizer state and augmentation stream.
class Trainer {
 public:
  Trainer(TrainConfig cfg, const nn::TinyConvArch& arch, TrainDataset data);

  // Fills the queue with key-encoder keys of the last batch of the first
  // epoch. Called by the first train_epoch if not done explicitly.
  void prewarm();
  // Throws ad::NumericError with epoch and batch context on a non-finite loss.
  EpochMetrics train_epoch();

  EncoderPair<float>& encoders() { return pair_; }
  const EncoderPair<float>& encoders() const { return pair_; }
  const DictionaryQueue& queue() const { return queue_; }
  const TrainConfig& config() const { return cfg_; }
  int epochs_done() const { return epoch_; }

 private:
  std::vector<Image> views_for(std::span<const std::size_t> idx, std::vector<Image>* key_views);

  TrainConfig cfg_;
  TrainDataset data_;
  EncoderPair<float> pair_;
  DictionaryQueue queue_;
  nn::Sgd<float> sgd_;
  Rng aug_rng_;
  int epoch_ = 0;
  bool warmed_ = false;
};

// Expected positives per query when a random queue of queue_size frames is
// drawn from the dataset and the query's own key is present.
double expected_positives(std::span<const Pose> poses, const SimilarityThreshold& thr, std::size_t queue_size);

// Scale factor s such that base.scaled(s) gives about target expected
// positives; bisection in log space.
double calibrate_threshold_scale(std::span<const Pose> poses, const SimilarityThreshold& base,
                                 std::size_t queue_size, double target);

}  // namespace ess::core
