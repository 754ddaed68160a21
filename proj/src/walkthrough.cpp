#include "ess/walkthrough.hpp"

#include <boost/beast/core/detail/base64.hpp>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ess/config.hpp"
#include "json.hpp"

namespace ess::app {

using nlohmann::json;
namespace b64 = boost::beast::detail::base64;

std::string base64_encode(std::string_view bytes) {
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("invalid base64 text");
  std::size_t body = text.size();
  while (body > 0 && text.size() - body < 2 && text[body - 1] == '=') --body;
  std::string out(b64::decoded_size(text.size()), '\0');
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  if (read != body) throw std::invalid_argument("invalid base64 text");
  out.resize(written);
  return out;
}

std::string error_message(const std::string& msg) { return json{{"type", "error"}, {"msg", msg}}.dump(); }

WalkthroughSession::WalkthroughSession(env::FloorPlan plan, std::vector<env::LightingCondition> palette,
                                       SessionConfig cfg, std::optional<Pose> start)
    : plan_(std::move(plan)), palette_(std::move(palette)), cfg_(cfg), lighting_(cfg.lighting_id) {
  if (palette_.empty()) throw std::invalid_argument("walkthrough needs a lighting palette");
  if (cfg_.lighting_id < 0 || static_cast<std::size_t>(cfg_.lighting_id) >= palette_.size()) {
    throw std::invalid_argument("walkthrough lighting id out of range");
  }
  if (!(cfg_.step_length > 0) || !(cfg_.turn_deg > 0) || cfg_.width < 1 || cfg_.height < 1) {
    throw std::invalid_argument("walkthrough: invalid session settings");
  }
  pose_ = start ? *start : env::start_pose(plan_);
  if (!env::move_is_clear(plan_, pose_.x(), pose_.y(), pose_.x(), pose_.y())) {
    throw std::invalid_argument("walkthrough start pose is not clear of walls: " + to_string(pose_));
  }
  buffer_.provenance = "interactive";
}

std::string WalkthroughSession::hello() const { return frame(); }

std::string WalkthroughSession::frame(const std::optional<std::string>& saved) const {
  const auto img = env::render(plan_, pose_, palette_[static_cast<std::size_t>(lighting_)], cfg_.width, cfg_.height);
  json j{{"type", "frame"},
         {"step", step_},
         {"pose", {{"x", pose_.x()}, {"y", pose_.y()}, {"z", pose_.z()}, {"yaw", pose_.yaw()}}},
         {"lighting", lighting_},
         {"recording", recording_},
         {"buffered", buffer_.points.size()},
         {"image_b64", base64_encode(encode_ppm(img))}};
  if (saved) j["saved"] = *saved;
  return j.dump();
}

void WalkthroughSession::record_current() {
  if (!buffer_.points.empty() && buffer_.points.back().step >= step_) return;
  buffer_.points.push_back({step_, pose_});
}

void WalkthroughSession::apply_input(const std::string& action) {
  if (action == "turn_left" || action == "turn_right") {
    const double sign = action == "turn_left" ? 1.0 : -1.0;
    pose_ = pose_.with_yaw(pose_.yaw() + sign * cfg_.turn_deg);
  } else if (action == "forward" || action == "back") {
    const double sign = action == "forward" ? 1.0 : -1.0;
    const double rad = pose_.yaw() * std::numbers::pi / 180.0;
    const double nx = pose_.x() + sign * cfg_.step_length * std::cos(rad);
    const double ny = pose_.y() + sign * cfg_.step_length * std::sin(rad);
    if (env::move_is_clear(plan_, pose_.x(), pose_.y(), nx, ny)) pose_ = pose_.with_position(nx, ny);
  } else {
    throw std::invalid_argument("unknown action '" + action + "'");
  }
  ++step_;
  if (recording_) record_current();
}

std::vector<std::string> WalkthroughSession::handle(std::string_view message) {
  json msg;
  try {
    msg = json::parse(message);
  } catch (const json::parse_error&) {
    return {error_message("malformed message: not valid JSON")};
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    return {error_message("malformed message: missing string field 'type'")};
  }
  const std::string type = msg["type"];
  try {
    if (type == "input") {
      if (!msg.contains("action") || !msg["action"].is_string()) return {error_message("input needs string 'action'")};
      apply_input(msg["action"].get<std::string>());
      return {frame()};
    }
    if (type == "recording") {
      if (!msg.contains("on") || !msg["on"].is_boolean()) return {error_message("recording needs boolean 'on'")};
      recording_ = msg["on"].get<bool>();
      if (recording_) record_current();
      return {frame()};
    }
    if (type == "lighting") {
      if (!msg.contains("id") || !msg["id"].is_number_integer()) return {error_message("lighting needs integer 'id'")};
      const int id = msg["id"].get<int>();
      if (id < 0 || static_cast<std::size_t>(id) >= palette_.size()) {
        return {error_message("lighting id " + std::to_string(id) + " out of range")};
      }
      lighting_ = id;
      return {frame()};
    }
    if (type == "save") {
      if (!msg.contains("path") || !msg["path"].is_string()) return {error_message("save needs string 'path'")};
      if (buffer_.points.empty()) return {error_message("nothing recorded yet")};
      const auto path = resolve_path(msg["path"].get<std::string>());
      try {
        env::validate_trajectory(plan_, buffer_);
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        env::save_trajectory(path, buffer_);
      } catch (const std::exception& e) {
        return {error_message(std::string("save failed: ") + e.what())};
      }
      return {frame(path.string())};
    }
  } catch (const std::invalid_argument& e) {
    return {error_message(e.what())};
  }
  return {error_message("unknown message type '" + type + "'")};
}

}  // namespace ess::app
