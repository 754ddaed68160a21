#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ess/image.hpp"
#include "ess/tensor.hpp"

namespace ess::nn {

using ad::Shape;
using ad::Tensor;

// Named tensors in insertion order.
template <class T>
class ParameterSet {
 public:
  void add(std::string name, Tensor<T> tensor);
  bool contains(const std::string& name) const;
  Tensor<T>& get(const std::string& name);
  const Tensor<T>& get(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // Independent copy. requires_grad of the copy is set to `trainable`.
  ParameterSet clone(bool trainable) const;
  void zero_grad();
  std::size_t element_count() const;

  // Throws std::invalid_argument unless both sets have identical names,
  // order, and shapes.
  void require_aligned(const ParameterSet& other, const char* context) const;

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

// Gradient snapshot keyed by parameter name.
template <class T>
using GradientSet = std::map<std::string, std::vector<T>>;

template <class T>
GradientSet<T> collect_gradients(const ParameterSet<T>& params);

struct SgdConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  void validate() const;
};

// v <- momentum * v + grad + weight_decay * theta; theta <- theta - lr * v.
template <class T>
class Sgd {
 public:
  explicit Sgd(SgdConfig cfg);

  // Throws std::invalid_argument when gradient names do not match params.
  void step(ParameterSet<T>& params, const GradientSet<T>& grads);
  // Convenience: uses the gradients accumulated on the parameters.
  void step(ParameterSet<T>& params) { step(params, collect_gradients(params)); }

  const SgdConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  SgdConfig cfg_;
  std::map<std::string, std::vector<T>> velocity_;
};

// Small convolutional encoder with a two-layer projection head:
// conv3x3(c_in->conv1)/relu/pool, conv3x3(conv1->conv2)/relu/pool, flatten,
// linear->feature_dim, relu | linear->proj_hidden, relu, linear->embedding_dim.
struct TinyConvArch {
  std::size_t in_channels = 3;
  std::size_t in_size = 32;
  std::size_t conv1 = 16;
  std::size_t conv2 = 32;
  std::size_t feature_dim = 128;
  std::size_t proj_hidden = 64;
  std::size_t embedding_dim = 32;

  std::string descriptor() const;
  static TinyConvArch parse(const std::string& descriptor);
  void validate() const;
  std::size_t flat_dim() const { return conv2 * (in_size / 4) * (in_size / 4); }

  bool operator==(const TinyConvArch&) const = default;
};

// Kaiming-uniform (fan-in, ReLU gain) weights and zero biases.
template <class T>
ParameterSet<T> init_tiny_conv(const TinyConvArch& arch, std::uint64_t seed);

// images [n x c x s x s] -> backbone features [n x feature_dim].
template <class T>
Tensor<T> backbone_forward(const ParameterSet<T>& params, const TinyConvArch& arch, const Tensor<T>& images);

// features -> unnormalized projections [n x embedding_dim].
template <class T>
Tensor<T> projection_forward(const ParameterSet<T>& params, const Tensor<T>& features);

// l2-normalized embeddings [n x embedding_dim].
template <class T>
Tensor<T> embed(const ParameterSet<T>& params, const TinyConvArch& arch, const Tensor<T>& images);

// True for backbone parameter names (conv*, fc.*).
bool is_backbone_param(const std::string& name);

// Stacks 8-bit images into [n x 3 x h x w] with (v/255 - 0.5)/0.25 scaling.
template <class T>
Tensor<T> images_to_tensor(std::span<const Image> images);

// Checkpoint file: "ESSCKPT1", u32 descriptor length + bytes, u32 element
// width, u32 record count, then per record u32 name length + bytes,
// u32 rank, u64 extents, raw little-endian elements.
template <class T>
void save_checkpoint(const std::filesystem::path& path, const std::string& descriptor,
                     const ParameterSet<T>& params);

struct CheckpointInfo {
  std::string descriptor;
  std::uint32_t element_width = 0;
};

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

// Throws std::runtime_error on format errors or when the element width
// does not match T.
template <class T>
ParameterSet<T> load_checkpoint(const std::filesystem::path& path, std::string* descriptor = nullptr);

}  // namespace ess::nn
