#include "ess/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ess {

double normalize_yaw(double deg) {
  if (!std::isfinite(deg)) throw std::invalid_argument("yaw must be finite");
  double r = std::fmod(deg, 360.0);
  if (r < 0.0) r += 360.0;
  // fmod of a tiny negative value can round up to exactly 360.
  if (r >= 360.0) r = 0.0;
  return r;
}

Pose::Pose(double x, double y, double z, double yaw_deg)
    : x_(x), y_(y), z_(z), yaw_(normalize_yaw(yaw_deg)) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
    throw std::invalid_argument("pose coordinates must be finite");
  }
}

std::string to_string(const Pose& p) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "(%.4f, %.4f, %.4f, yaw %.3f)", p.x(), p.y(), p.z(), p.yaw());
  return buf;
}

SimilarityThreshold::SimilarityThreshold(ThresholdBound position_m, ThresholdBound rotation_deg)
    : position_(position_m), rotation_(rotation_deg) {
  if (!position_ && !rotation_) {
    throw std::invalid_argument("similarity threshold: at least one component must be bounded");
  }
  if (position_ && !(std::isfinite(*position_) && *position_ > 0.0)) {
    throw std::invalid_argument("similarity threshold: position bound must be finite and > 0");
  }
  if (rotation_ && !(*rotation_ > 0.0 && *rotation_ <= 180.0)) {
    throw std::invalid_argument("similarity threshold: rotation bound must lie in (0, 180]");
  }
}

SimilarityThreshold SimilarityThreshold::scaled(double factor) const {
  ThresholdBound p = position_;
  ThresholdBound r = rotation_;
  if (p) *p *= factor;
  if (r) *r = std::min(*r * factor, 180.0);
  return SimilarityThreshold(p, r);
}

std::string to_string(const SimilarityThreshold& t) {
  char buf[96];
  auto part = [](const ThresholdBound& b, char* out, std::size_t n) {
    if (b) {
      std::snprintf(out, n, "%g", *b);
    } else {
      std::snprintf(out, n, "N/A");
    }
  };
  char p[32], r[32];
  part(t.position(), p, sizeof(p));
  part(t.rotation(), r, sizeof(r));
  std::snprintf(buf, sizeof(buf), "(%s,%s)", p, r);
  return buf;
}

void WeightParams::validate() const {
  if (!(std::isfinite(alpha) && alpha > 0.0) || !(std::isfinite(beta) && beta > 0.0)) {
    throw std::invalid_argument("weight params: alpha and beta must be finite and > 0");
  }
}

double delta_pos(const Pose& a, const Pose& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double delta_rot(const Pose& a, const Pose& b) {
  const double d = std::abs(a.yaw() - b.yaw());
  return std::min(d, 360.0 - d);
}

bool is_positive(double dpos, double drot, const SimilarityThreshold& thr) {
  if (thr.position() && !(dpos < *thr.position())) return false;
  if (thr.rotation() && !(drot < *thr.rotation())) return false;
  return true;
}

bool is_positive(const Pose& a, const Pose& b, const SimilarityThreshold& thr) {
  return is_positive(delta_pos(a, b), delta_rot(a, b), thr);
}

double pair_weight(double dpos, double drot, const WeightParams& wp) {
  return 1.0 / std::exp(wp.alpha * (wp.beta * drot + dpos));
}

double pair_weight(const Pose& a, const Pose& b, const WeightParams& wp) {
  return pair_weight(delta_pos(a, b), delta_rot(a, b), wp);
}

}  // namespace ess
