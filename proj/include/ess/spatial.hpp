#pragma once

#include <optional>
#include <string>

namespace ess {

// Agent position in meters and horizontal heading in degrees.
// x/y span the floor plane, z is height above the floor.
class Pose {
 public:
  Pose() = default;
  Pose(double x, double y, double z, double yaw_deg);

  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }
  // Always in [0, 360).
  double yaw() const { return yaw_; }

  Pose with_yaw(double yaw_deg) const { return Pose(x_, y_, z_, yaw_deg); }
  Pose with_position(double x, double y) const { return Pose(x, y, z_, yaw_); }

  bool operator==(const Pose&) const = default;

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
  double yaw_ = 0.0;
};

// Maps any finite angle into [0, 360).
double normalize_yaw(double deg);

std::string to_string(const Pose& p);

// One threshold component; std::nullopt means unbounded (always satisfied).
using ThresholdBound = std::optional<double>;

class SimilarityThreshold {
 public:
  // Throws std::invalid_argument if both components are unbounded, a
  // position bound is not strictly positive, or a rotation bound is
  // outside (0, 180].
  SimilarityThreshold(ThresholdBound position_m, ThresholdBound rotation_deg);

  const ThresholdBound& position() const { return position_; }
  const ThresholdBound& rotation() const { return rotation_; }

  // Multiplies every bounded component; used for threshold sweeps.
  SimilarityThreshold scaled(double factor) const;

 private:
  ThresholdBound position_;
  ThresholdBound rotation_;
};

std::string to_string(const SimilarityThreshold& t);

struct WeightParams {
  double alpha = 2.0;
  double beta = 1.0 / 60.0;

  // Throws std::invalid_argument unless both are finite and > 0.
  void validate() const;
};

// Euclidean distance between the two positions.
double delta_pos(const Pose& a, const Pose& b);

// Smallest angle between the two headings, in [0, 180].
double delta_rot(const Pose& a, const Pose& b);

// Strict inequality on both bounded components.
bool is_positive(const Pose& a, const Pose& b, const SimilarityThreshold& thr);
bool is_positive(double dpos, double drot, const SimilarityThreshold& thr);

// exp(-alpha * (beta * drot + dpos)), in (0, 1].
double pair_weight(const Pose& a, const Pose& b, const WeightParams& wp);
double pair_weight(double dpos, double drot, const WeightParams& wp);

}  // namespace ess
