#include "ess/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "ess/rng.hpp"

namespace ess::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void ParameterSet<T>::add(std::string name, Tensor<T> tensor) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(tensor));
}

template <class T>
bool ParameterSet<T>::contains(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return true;
  }
  return false;
}

template <class T>
Tensor<T>& ParameterSet<T>::get(const std::string& name) {
  for (auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw std::out_of_range("no parameter named '" + name + "'");
}

template <class T>
const Tensor<T>& ParameterSet<T>::get(const std::string& name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

template <class T>
ParameterSet<T> ParameterSet<T>::clone(bool trainable) const {
  ParameterSet out;
  for (const auto& [n, t] : entries_) {
    out.add(n, Tensor<T>::from_data(t.shape(), std::vector<T>(t.data().begin(), t.data().end()), trainable));
  }
  return out;
}

template <class T>
void ParameterSet<T>::zero_grad() {
  for (auto& [n, t] : entries_) t.zero_grad();
}

template <class T>
std::size_t ParameterSet<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

template <class T>
void ParameterSet<T>::require_aligned(const ParameterSet& other, const char* context) const {
  if (entries_.size() != other.entries_.size()) {
    throw std::invalid_argument(std::string(context) + ": parameter count " + std::to_string(entries_.size()) +
                                " vs " + std::to_string(other.entries_.size()));
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [na, ta] = entries_[i];
    const auto& [nb, tb] = other.entries_[i];
    if (na != nb || ta.shape() != tb.shape()) {
      throw std::invalid_argument(std::string(context) + ": parameter " + na + ad::shape_str(ta.shape()) +
                                  " does not match " + nb + ad::shape_str(tb.shape()));
    }
  }
}

template <class T>
GradientSet<T> collect_gradients(const ParameterSet<T>& params) {
  GradientSet<T> out;
  for (const auto& [name, t] : params) {
    auto g = t.grad();
    if (g.empty()) {
      out[name].assign(t.numel(), T(0));
    } else {
      out[name].assign(g.begin(), g.end());
    }
  }
  return out;
}

void SgdConfig::validate() const {
  if (!(std::isfinite(lr) && lr >= 0.0)) throw std::invalid_argument("sgd: lr must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("sgd: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("sgd: weight_decay must be >= 0");
}

template <class T>
Sgd<T>::Sgd(SgdConfig cfg) : cfg_(cfg) {
  cfg_.validate();
}

template <class T>
void Sgd<T>::step(ParameterSet<T>& params, const GradientSet<T>& grads) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("sgd: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(params.size()) + " parameters");
  }
  const T lr = static_cast<T>(cfg_.lr);
  const T mom = static_cast<T>(cfg_.momentum);
  const T wd = static_cast<T>(cfg_.weight_decay);
  for (auto& [name, t] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw std::invalid_argument("sgd: no gradient for parameter '" + name + "'");
    const auto& g = it->second;
    if (g.size() != t.numel()) {
      throw std::invalid_argument("sgd: gradient for '" + name + "' has " + std::to_string(g.size()) +
                                  " elements, parameter has " + std::to_string(t.numel()));
    }
    auto& v = velocity_[name];
    if (v.size() != g.size()) v.assign(g.size(), T(0));
    auto theta = t.mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      v[i] = mom * v[i] + g[i] + wd * theta[i];
      theta[i] -= lr * v[i];
    }
  }
}

std::string TinyConvArch::descriptor() const {
  std::ostringstream os;
  os << "tinyconv:in=" << in_channels << "x" << in_size << "x" << in_size << ",conv=" << conv1 << "-" << conv2
     << ",feature=" << feature_dim << ",proj=" << proj_hidden << ",embedding=" << embedding_dim;
  return os.str();
}

TinyConvArch TinyConvArch::parse(const std::string& descriptor) {
  static const std::regex re(
      R"(tinyconv:in=(\d+)x(\d+)x(\d+),conv=(\d+)-(\d+),feature=(\d+),proj=(\d+),embedding=(\d+))");
  std::smatch m;
  if (!std::regex_match(descriptor, m, re) || m[2] != m[3]) {
    throw std::invalid_argument("unrecognized architecture descriptor '" + descriptor + "'");
  }
  auto num = [&](int i) { return static_cast<std::size_t>(std::stoul(m[i])); };
  TinyConvArch a{num(1), num(2), num(4), num(5), num(6), num(7), num(8)};
  a.validate();
  return a;
}

void TinyConvArch::validate() const {
  if (in_channels == 0 || conv1 == 0 || conv2 == 0 || feature_dim == 0 || proj_hidden == 0 || embedding_dim == 0) {
    throw std::invalid_argument("architecture extents must be positive");
  }
  if (in_size < 8 || in_size % 4 != 0) throw std::invalid_argument("input size must be a multiple of 4, >= 8");
  if (embedding_dim > 128) throw std::invalid_argument("embedding_dim must be <= 128");
}

template <class T>
ParameterSet<T> init_tiny_conv(const TinyConvArch& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(derive_seed(seed, "tinyconv-init"));
  ParameterSet<T> ps;
  auto weight = [&](const std::string& name, Shape shape, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<T> v(ad::numel(shape));
    for (auto& e : v) e = static_cast<T>(rng.uniform(-bound, bound));
    ps.add(name + ".weight", Tensor<T>::from_data(std::move(shape), std::move(v), true));
  };
  auto bias = [&](const std::string& name, std::size_t n) { ps.add(name + ".bias", Tensor<T>::zeros({n}, true)); };
  weight("conv1", {arch.conv1, arch.in_channels, 3, 3}, arch.in_channels * 9);
  bias("conv1", arch.conv1);
  weight("conv2", {arch.conv2, arch.conv1, 3, 3}, arch.conv1 * 9);
  bias("conv2", arch.conv2);
  weight("fc", {arch.feature_dim, arch.flat_dim()}, arch.flat_dim());
  bias("fc", arch.feature_dim);
  weight("proj1", {arch.proj_hidden, arch.feature_dim}, arch.feature_dim);
  bias("proj1", arch.proj_hidden);
  weight("proj2", {arch.embedding_dim, arch.proj_hidden}, arch.proj_hidden);
  bias("proj2", arch.embedding_dim);
  return ps;
}

bool is_backbone_param(const std::string& name) {
  return name.rfind("conv", 0) == 0 || name.rfind("fc.", 0) == 0;
}

template <class T>
Tensor<T> backbone_forward(const ParameterSet<T>& params, const TinyConvArch& arch, const Tensor<T>& images) {
  if (images.rank() != 4 || images.dim(1) != arch.in_channels || images.dim(2) != arch.in_size ||
      images.dim(3) != arch.in_size) {
    throw ad::ShapeError("encoder expects [n x " + std::to_string(arch.in_channels) + " x " +
                         std::to_string(arch.in_size) + " x " + std::to_string(arch.in_size) + "], got " +
                         ad::shape_str(images.shape()));
  }
  auto h = ad::conv2d(images, params.get("conv1.weight"), params.get("conv1.bias"));
  h = ad::avg_pool2(ad::relu(h));
  h = ad::conv2d(h, params.get("conv2.weight"), params.get("conv2.bias"));
  h = ad::avg_pool2(ad::relu(h));
  h = ad::reshape(h, {images.dim(0), arch.flat_dim()});
  return ad::relu(ad::linear(h, params.get("fc.weight"), params.get("fc.bias")));
}

template <class T>
Tensor<T> projection_forward(const ParameterSet<T>& params, const Tensor<T>& features) {
  auto h = ad::relu(ad::linear(features, params.get("proj1.weight"), params.get("proj1.bias")));
  return ad::linear(h, params.get("proj2.weight"), params.get("proj2.bias"));
}

template <class T>
Tensor<T> embed(const ParameterSet<T>& params, const TinyConvArch& arch, const Tensor<T>& images) {
  return ad::l2_normalize(projection_forward(params, backbone_forward(params, arch, images)));
}

template <class T>
Tensor<T> images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const int w = images[0].width, h = images[0].height;
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  std::vector<T> out(images.size() * 3 * plane);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (img.width != w || img.height != h) throw std::invalid_argument("images_to_tensor: mixed image sizes");
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        const T v = static_cast<T>(img.rgb[p * 3 + c]) / T(255);
        out[(n * 3 + c) * plane + p] = (v - T(0.5)) / T(0.25);
      }
    }
  }
  return Tensor<T>::from_data({images.size(), 3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)},
                              std::move(out));
}

namespace {

template <class U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
U get(std::istream& is) {
  U v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

std::string get_string(std::istream& is, std::uint32_t max_len) {
  const auto n = get<std::uint32_t>(is);
  if (n > max_len) throw std::runtime_error("checkpoint: implausible string length");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

constexpr char kMagic[8] = {'E', 'S', 'S', 'C', 'K', 'P', 'T', '1'};

CheckpointInfo read_header(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("checkpoint: bad magic");
  CheckpointInfo info;
  info.descriptor = get_string(is, 1 << 16);
  info.element_width = get<std::uint32_t>(is);
  if (info.element_width != 4 && info.element_width != 8) throw std::runtime_error("checkpoint: bad element width");
  return info;
}

}  // namespace

template <class T>
void save_checkpoint(const std::filesystem::path& path, const std::string& descriptor, const ParameterSet<T>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic, 8);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(descriptor.size()));
  os.write(descriptor.data(), static_cast<std::streamsize>(descriptor.size()));
  put<std::uint32_t>(os, sizeof(T));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(os, e);
    os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_header(is);
}

template <class T>
ParameterSet<T> load_checkpoint(const std::filesystem::path& path, std::string* descriptor) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  const CheckpointInfo info = read_header(is);
  if (info.element_width != sizeof(T)) {
    throw std::runtime_error("checkpoint element width " + std::to_string(info.element_width) +
                             " does not match requested " + std::to_string(sizeof(T)));
  }
  if (descriptor) *descriptor = info.descriptor;
  const auto count = get<std::uint32_t>(is);
  ParameterSet<T> ps;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(is, 4096);
    const auto rank = get<std::uint32_t>(is);
    if (rank == 0 || rank > 8) throw std::runtime_error("checkpoint: bad rank for " + name);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(get<std::uint64_t>(is));
    const std::size_t n = ad::numel(shape);
    if (n == 0 || n > (std::size_t{1} << 32)) throw std::runtime_error("checkpoint: bad extents for " + name);
    std::vector<T> data(n);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is) throw std::runtime_error("checkpoint: truncated record " + name);
    ps.add(std::move(name), Tensor<T>::from_data(std::move(shape), std::move(data), true));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("checkpoint: trailing bytes");
  return ps;
}

#define ESS_INSTANTIATE_NN(T)                                                                          \
  template class ParameterSet<T>;                                                                      \
  template class Sgd<T>;                                                                               \
  template GradientSet<T> collect_gradients(const ParameterSet<T>&);                                  \
  template ParameterSet<T> init_tiny_conv(const TinyConvArch&, std::uint64_t);                        \
  template Tensor<T> backbone_forward(const ParameterSet<T>&, const TinyConvArch&, const Tensor<T>&); \
  template Tensor<T> projection_forward(const ParameterSet<T>&, const Tensor<T>&);                    \
  template Tensor<T> embed(const ParameterSet<T>&, const TinyConvArch&, const Tensor<T>&);            \
  template Tensor<T> images_to_tensor(std::span<const Image>);                                        \
  template void save_checkpoint(const std::filesystem::path&, const std::string&, const ParameterSet<T>&); \
  template ParameterSet<T> load_checkpoint(const std::filesystem::path&, std::string*);

ESS_INSTANTIATE_NN(float)
ESS_INSTANTIATE_NN(double)

#undef ESS_INSTANTIATE_NN

}  // namespace ess::nn
