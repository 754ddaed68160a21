#include "ess/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "ess/core.hpp"
#include "ess/eval.hpp"
#include "ess/nn.hpp"
#include "ess/rng.hpp"

namespace ess::gradcheck {

CheckResult check_function(const std::string& name, const ScalarFn& f, std::vector<Tensor<double>> inputs,
                           double tolerance, double step) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const auto out = f(inputs);
  if (out.numel() != 1) throw ad::ShapeError("gradcheck '" + name + "': function must return a scalar");
  out.backward();

  CheckResult r{name, 0.0, tolerance, 0, true};
  for (auto& t : inputs) {
    const std::vector<double> analytic =
        t.grad().empty() ? std::vector<double>(t.numel(), 0.0) : std::vector<double>(t.grad().begin(), t.grad().end());
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + step;
      const double fp = f(inputs).item();
      data[i] = orig - step;
      const double fm = f(inputs).item();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kScaleFloor});
      r.worst_rel_err = std::max(r.worst_rel_err, rel);
      ++r.checked;
    }
  }
  r.passed = r.worst_rel_err < tolerance;
  return r;
}

Tensor<double> random_tensor(const ad::Shape& shape, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from_data(shape, std::move(v));
}

Tensor<double> project(const Tensor<double>& out, std::uint64_t seed) {
  const auto w = random_tensor(out.shape(), derive_seed(seed, "project"), 0.5, 1.5);
  return ad::sum(ad::mul(out, w));
}

namespace {

// Entries uniform in +-[0.1, 1): keeps relu inputs away from the kink.
Tensor<double> away_from_zero(const ad::Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
  return Tensor<double>::from_data(shape, std::move(v));
}

Tensor<double> flipped_relu(const Tensor<double>& a) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.data()[i], 0.0);
  return ad::make_result<double>("relu", a.shape(), std::move(out), {a}, [](ad::Node<double>& o) {
    auto& p = *o.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (o.data[i] > 0.0) g[i] -= o.grad[i];
    }
  });
}

Tensor<double> unit_rows(const ad::Shape& shape, std::uint64_t seed) {
  return ad::l2_normalize(random_tensor(shape, seed)).detach();
}

}  // namespace

std::vector<CheckResult> run_suite(const SuiteOptions& opts) {
  using V = std::vector<Tensor<double>>;
  std::vector<CheckResult> out;
  auto op = [&](const std::string& name, const ScalarFn& f, V inputs) {
    out.push_back(check_function(name, f, std::move(inputs), kOpTolerance));
  };
  auto loss = [&](const std::string& name, const ScalarFn& f, V inputs) {
    out.push_back(check_function(name, f, std::move(inputs), kLossTolerance));
  };
  auto relu = [&](const Tensor<double>& x) { return opts.inject_sign_flip ? flipped_relu(x) : ad::relu(x); };

  op("add", [](const V& v) { return project(ad::add(v[0], v[1]), 1); }, {random_tensor({3, 4}, 1), random_tensor({3, 4}, 2)});
  op("sub", [](const V& v) { return project(ad::sub(v[0], v[1]), 2); }, {random_tensor({3, 4}, 3), random_tensor({3, 4}, 4)});
  op("mul", [](const V& v) { return project(ad::mul(v[0], v[1]), 3); }, {random_tensor({3, 4}, 5), random_tensor({3, 4}, 6)});
  op("scale", [](const V& v) { return project(ad::scale(v[0], 2.5), 4); }, {random_tensor({5}, 7)});
  op("relu", [&](const V& v) { return project(relu(v[0]), 5); }, {away_from_zero({4, 5}, 8)});
  op("matmul", [](const V& v) { return project(ad::matmul(v[0], v[1]), 6); },
     {random_tensor({4, 5}, 9), random_tensor({5, 3}, 10)});
  op("linear", [](const V& v) { return project(ad::linear(v[0], v[1], v[2]), 7); },
     {random_tensor({3, 6}, 11), random_tensor({4, 6}, 12), random_tensor({4}, 13)});
  op("conv2d", [](const V& v) { return project(ad::conv2d(v[0], v[1], v[2]), 8); },
     {random_tensor({3, 8, 8}, 14), random_tensor({4, 3, 3, 3}, 15), random_tensor({4}, 16)});
  op("conv2d_stride2", [](const V& v) { return project(ad::conv2d(v[0], v[1], Tensor<double>(), 2), 9); },
     {random_tensor({2, 2, 7, 7}, 17), random_tensor({3, 2, 3, 3}, 18)});
  op("avg_pool2", [](const V& v) { return project(ad::avg_pool2(v[0]), 10); }, {random_tensor({2, 3, 6, 5}, 19)});
  op("reshape", [](const V& v) { return project(ad::reshape(v[0], {6, 2}), 11); }, {random_tensor({3, 4}, 20)});
  op("concat", [](const V& v) { return project(ad::concat<double>({v[0], v[1]}), 12); },
     {random_tensor({2, 3}, 21), random_tensor({4, 3}, 22)});
  op("l2_normalize", [](const V& v) { return project(ad::l2_normalize(v[0]), 13); }, {random_tensor({8}, 23)});
  op("l2_normalize_rows", [](const V& v) { return project(ad::l2_normalize(v[0]), 14); }, {random_tensor({3, 5}, 24)});
  op("log_sum_exp", [](const V& v) { return ad::log_sum_exp(v[0]); }, {random_tensor({10}, 25, -3, 3)});
  op("log_sum_exp_rows", [](const V& v) { return project(ad::log_sum_exp(v[0]), 15); }, {random_tensor({3, 6}, 26)});
  op("cross_entropy", [](const V& v) { return ad::cross_entropy(v[0], std::size_t{3}); }, {random_tensor({10}, 27, -3, 3)});
  {
    const std::vector<std::size_t> labels{0, 2, 1};
    op("cross_entropy_rows", [labels](const V& v) { return ad::cross_entropy(v[0], std::span<const std::size_t>(labels)); },
       {random_tensor({3, 4}, 28)});
  }
  {
    const std::vector<double> targets{0.2, 0.0, 0.8, 0.5, 0.25, 0.25};
    op("soft_cross_entropy", [targets](const V& v) { return ad::soft_cross_entropy(v[0], std::span<const double>(targets)); },
       {random_tensor({2, 3}, 29)});
  }
  op("sum", [](const V& v) { return ad::sum(v[0]); }, {random_tensor({2, 5}, 30)});
  op("mean", [](const V& v) { return ad::mean(v[0]); }, {random_tensor({2, 5}, 31)});
  op("mlp", [&](const V& v) {
       const auto h = relu(ad::linear(v[0], v[1], v[2]));
       return project(ad::linear(h, v[3], Tensor<double>()), 16);
     },
     {random_tensor({4, 5}, 32), random_tensor({6, 5}, 33), random_tensor({6}, 34), random_tensor({3, 6}, 35)});
  {
    const std::vector<Pose> targets{Pose(1.0, 2.0, 1.0, 350.0), Pose(-0.5, 0.3, 1.0, 10.0)};
    std::vector<double> pred{0.7, 2.4, 0.9, 20.0, -0.1, 0.1, 1.2, 300.0};
    op("localization_loss", [targets](const V& v) { return eval::localization_loss(v[0], targets, 1.0 / 360.0); },
       {Tensor<double>::from_data({2, 4}, pred)});
  }

  // Contrastive losses on unit vectors; the dictionary also takes gradient.
  const std::size_t d = 6;
  const std::vector<std::size_t> positives{1, 3};
  const std::vector<double> weights{0.8, 0.3};
  loss("loss_baseline", [](const V& v) { return core::loss_baseline(ad::l2_normalize(v[0]), v[1], v[2], 0.2); },
       {random_tensor({d}, 40), unit_rows({1, d}, 41), unit_rows({5, d}, 42)});
  loss("loss_mb", [positives](const V& v) { return core::loss_mb(ad::l2_normalize(v[0]), v[1], positives, 0.2); },
       {random_tensor({d}, 43), unit_rows({5, d}, 44)});
  loss("loss_mw", [positives, weights](const V& v) {
         return core::loss_mw(ad::l2_normalize(v[0]), v[1], positives, weights, 0.2);
       },
       {random_tensor({d}, 45), unit_rows({5, d}, 46)});

  {
    // Batched weighted targets with masked dictionary entries.
    const std::vector<double> targets{0.5, 0.0, 0.3, 0.2, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.9};
    const std::vector<std::uint8_t> mask{1, 1, 1, 1, 0, 1, 1, 0, 1, 1, 1, 1, 1, 0, 1};
    loss("contrastive_masked_batch",
         [targets, mask](const V& v) {
           return core::contrastive_loss(ad::l2_normalize(v[0]), v[1], std::span<const double>(targets), 0.2,
                                         std::span<const std::uint8_t>(mask));
         },
         {random_tensor({3, d}, 47), unit_rows({5, d}, 48)});
  }

  // ESS-MB through a small encoder on a 4-image micro-batch: every parameter.
  {
    nn::TinyConvArch arch;
    arch.in_size = 8;
    arch.conv1 = 2;
    arch.conv2 = 3;
    arch.feature_dim = 8;
    arch.proj_hidden = 6;
    arch.embedding_dim = 4;
    auto params = nn::init_tiny_conv<double>(arch, 50);
    std::vector<std::string> names;
    V inputs;
    for (auto& [name, t] : params) {
      names.push_back(name);
      inputs.push_back(t.clone());
    }
    // Nonzero biases so no unit sits exactly at the relu kink.
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (names[i].ends_with(".bias")) inputs[i] = random_tensor(inputs[i].shape(), 60 + i, 0.05, 0.2);
    }
    const auto images = random_tensor({4, 3, 8, 8}, 51, -2.0, 2.0);
    const auto dict = unit_rows({7, arch.embedding_dim}, 52);
    std::vector<double> targets(4 * 7, 0.0);
    const std::vector<std::vector<std::size_t>> pos{{0, 4}, {1}, {2, 5, 6}, {3}};
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t p : pos[i]) targets[i * 7 + p] = 1.0 / static_cast<double>(pos[i].size());
    }
    loss("ess_mb_tinyconv_batch",
         [&, names, targets](const V& v) {
           nn::ParameterSet<double> ps;
           for (std::size_t i = 0; i < v.size(); ++i) ps.add(names[i], v[i]);
           const auto q = nn::embed(ps, arch, images);
           return core::contrastive_loss(q, dict, std::span<const double>(targets), 0.2);
         },
         std::move(inputs));
  }
  return out;
}

bool print_report(const std::vector<CheckResult>& results, std::ostream& os) {
  bool all = true;
  char buf[160];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), "%-24s worst_rel_err=%.3e tol=%.0e entries=%-6zu %s\n", r.name.c_str(),
                  r.worst_rel_err, r.tolerance, r.checked, r.passed ? "PASS" : "FAIL");
    os << buf;
    all = all && r.passed;
  }
  const auto worst = std::max_element(results.begin(), results.end(), [](const auto& a, const auto& b) {
    return a.worst_rel_err < b.worst_rel_err;
  });
  if (worst != results.end()) {
    std::snprintf(buf, sizeof(buf), "gradcheck: %zu checks, worst %s at %.3e: %s\n", results.size(),
                  worst->name.c_str(), worst->worst_rel_err, all ? "PASS" : "FAIL");
    os << buf;
  }
  return all;
}

}  // namespace ess::gradcheck
