#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ess/env.hpp"

namespace ess::app {

struct SessionConfig {
  double step_length = 0.2;
  double turn_deg = 5.0;
  int width = 128;
  int height = 128;
  int lighting_id = 0;
};

// Server-side state of the interactive walkthrough. Every message yields
// either a frame or an error reply; the plan is never modified.
class WalkthroughSession {
 public:
  WalkthroughSession(env::FloorPlan plan, std::vector<env::LightingCondition> palette, SessionConfig cfg = {},
                     std::optional<Pose> start = std::nullopt);

  // Frame describing the current state; sent when a client connects.
  std::string hello() const;
  std::vector<std::string> handle(std::string_view message);

  const Pose& pose() const { return pose_; }
  std::int64_t step() const { return step_; }
  int lighting() const { return lighting_; }
  bool recording() const { return recording_; }
  const env::Trajectory& buffer() const { return buffer_; }
  const env::FloorPlan& plan() const { return plan_; }

 private:
  std::string frame(const std::optional<std::string>& saved = std::nullopt) const;
  void record_current();
  void apply_input(const std::string& action);

  env::FloorPlan plan_;
  std::vector<env::LightingCondition> palette_;
  SessionConfig cfg_;
  Pose pose_;
  std::int64_t step_ = 0;
  int lighting_ = 0;
  bool recording_ = false;
  env::Trajectory buffer_;
};

std::string error_message(const std::string& msg);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace ess::app
