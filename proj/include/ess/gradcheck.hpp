#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ess/tensor.hpp"

namespace ess::gradcheck {

using ad::Tensor;

// Relative error |a - n| / max(|a|, |n|, kScaleFloor); the floor keeps
// near-zero gradients from amplifying round-off.
inline constexpr double kScaleFloor = 1e-4;
inline constexpr double kStep = 1e-5;
inline constexpr double kOpTolerance = 1e-4;
inline constexpr double kLossTolerance = 1e-3;

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct CheckResult {
  std::string name;
  double worst_rel_err = 0;
  double tolerance = 0;
  std::size_t checked = 0;  // number of gradient entries compared
  bool passed = false;
};

// Compares backward() of f against central differences for every element of
// every input. f must return a single-element tensor.
CheckResult check_function(const std::string& name, const ScalarFn& f, std::vector<Tensor<double>> inputs,
                           double tolerance, double step = kStep);

// Reduces any tensor to a scalar through a fixed pseudo-random weighting, so
// a check covers the whole Jacobian along one direction.
Tensor<double> project(const Tensor<double>& out, std::uint64_t seed);

// Random tensor with entries uniform in [lo, hi).
Tensor<double> random_tensor(const ad::Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

struct SuiteOptions {
  // Swap in a relu whose gradient has the wrong sign; the suite must fail.
  bool inject_sign_flip = false;
};

std::vector<CheckResult> run_suite(const SuiteOptions& opts = {});

// One line per check plus a summary; returns true when all passed.
bool print_report(const std::vector<CheckResult>& results, std::ostream& os);

}  // namespace ess::gradcheck
