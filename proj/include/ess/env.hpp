#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ess/image.hpp"
#include "ess/spatial.hpp"

namespace ess::env {

enum class Pattern : std::uint8_t { Plain, Stripes, Checker, Bands };

std::string to_string(Pattern p);
Pattern parse_pattern(const std::string& s);

struct Surface {
  std::array<float, 3> base{};  // linear 0..255 scale
  Pattern pattern = Pattern::Plain;
  // Structural walls take the wall surface of the zone they are seen from.
  bool structural = false;

  bool operator==(const Surface&) const = default;
};

struct Cell {
  bool wall = false;
  // Wall surface for walls, floor surface for free cells.
  std::int32_t surface = 0;

  bool operator==(const Cell&) const = default;
};

// Axis-aligned box in world meters.
struct Box {
  double x0 = 0, y0 = 0, z0 = 0;
  double x1 = 0, y1 = 0, z1 = 0;

  bool contains(double x, double y, double z) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1 && z >= z0 && z < z1;
  }
  bool overlaps(const Box& o) const {
    return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1 && z0 < o.z1 && o.z0 < z1;
  }
  bool operator==(const Box&) const = default;
};

struct Room {
  std::string label;
  Box box;
  std::int32_t wall_surface = 0;
  std::int32_t floor_surface = 0;

  bool operator==(const Room&) const = default;
};

struct ObjectMarker {
  double x = 0, y = 0;  // center, meters
  double size = 0;      // edge length, meters
  std::int32_t surface = 0;

  bool operator==(const ObjectMarker&) const = default;
};

constexpr double kEyeHeight = 1.0;
constexpr double kWallHeight = 2.0;
constexpr double kFovDeg = 60.0;

// Immutable after generation.
struct FloorPlan {
  std::uint64_t seed = 0;
  int width = 0;   // cells along x
  int height = 0;  // cells along y
  double cell_size = 0.5;
  std::vector<Cell> cells;  // row-major, y * width + x
  std::vector<Surface> palette;
  std::vector<Room> rooms;
  std::vector<ObjectMarker> objects;
  std::int32_t corridor_wall_surface = 0;
  std::int32_t ceiling_surface = 0;

  const Cell& cell(int cx, int cy) const { return cells[static_cast<std::size_t>(cy) * width + cx]; }
  bool in_grid(int cx, int cy) const { return cx >= 0 && cy >= 0 && cx < width && cy < height; }
  // Out-of-grid positions count as walls.
  bool is_wall_at(double x, double y) const;
  bool is_free(const Pose& p) const { return !is_wall_at(p.x(), p.y()); }
  // Index into rooms for the box containing the point, if any.
  std::optional<std::size_t> room_index(double x, double y, double z) const;

  // Throws std::logic_error describing the first violated invariant.
  void validate() const;

  bool operator==(const FloorPlan&) const = default;
};

struct PlanParams {
  int rooms = 4;
  int grid_width = 32;
  int grid_height = 32;
  double cell_size = 0.5;
  double object_density = 0.03;  // fraction of interior room cells turned into pillars
};

// Rooms in two rows on either side of a central corridor, each with a
// doorway onto the corridor. Throws std::invalid_argument when the rooms
// do not fit.
FloorPlan generate_floorplan(std::uint64_t seed, const PlanParams& params);

// A single rectangular room of w x h interior cells; handy for tests.
FloorPlan box_room(int interior_w, int interior_h, double cell_size = 0.5);

std::optional<std::string> room_label(const FloorPlan& plan, const Pose& pose);

// Fraction of plan free cells whose center lies inside some room box.
double labeled_cell_fraction(const FloorPlan& plan);

// Cells reachable from the first free cell equal all free cells.
bool is_connected(const FloorPlan& plan);

struct LightingCondition {
  int id = 0;
  std::array<float, 3> ambient_tint{1, 1, 1};  // (0, 2]
  double key_azimuth_deg = 45.0;
  double key_intensity = 0.6;  // (0, 2]
  double fog = 0.0;            // [0, 1)

  void validate() const;
};

// id 0 is the neutral default; ids 1..9 grid tint x (azimuth, fog).
std::vector<LightingCondition> default_lighting_palette();

struct ColumnHit {
  double perp_distance = 0;
  double projected_height = 0;  // unclipped wall slice height in pixels
  int cell_x = 0, cell_y = 0;
  bool side_y = false;  // true when the hit face is perpendicular to y
};

struct RenderResult {
  Image image;
  std::vector<float> linear;  // pre-clamp RGB, same layout as image.rgb
  std::vector<ColumnHit> columns;
};

// Column raycaster, 60 degree horizontal FOV, square pixels. Throws
// std::invalid_argument if the pose lies inside a wall.
RenderResult render_detailed(const FloorPlan& plan, const Pose& pose, const LightingCondition& light, int width,
                             int height);
Image render(const FloorPlan& plan, const Pose& pose, const LightingCondition& light, int width, int height);

struct TrajectoryPoint {
  std::int64_t step = 0;
  Pose pose;
  bool operator==(const TrajectoryPoint&) const = default;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;
  std::string provenance;  // "seed:<n>" or "interactive"
};

struct MotionParams {
  double step_length = 0.1;
  double turn_increment_deg = 5.0;
  double turn_probability = 0.15;
};

// Minimum distance kept between the eye position and any wall.
constexpr double kMoveClearance = 0.12;

// True when moving from (x0, y0) to (x1, y1) stays clear of walls.
bool move_is_clear(const FloorPlan& plan, double x0, double y0, double x1, double y1);

// First clear cell center inside a room (any clear cell otherwise), yaw 0.
Pose start_pose(const FloorPlan& plan);

// Exactly `steps` poses. Blocked moves are rejected and replaced by a turn.
Trajectory random_walk(const FloorPlan& plan, int steps, const MotionParams& motion, std::uint64_t seed);

// Throws std::invalid_argument naming the first bad record: non-increasing
// steps, a pose in a wall, or a jump longer than max_step (when given).
void validate_trajectory(const FloorPlan& plan, const Trajectory& traj, std::optional<double> max_step = std::nullopt);

struct FixedLighting {
  int id = 0;
};
struct UniformLighting {
  std::uint64_t seed = 0;
  std::vector<int> ids;  // empty -> whole palette
};
using LightingPolicy = std::variant<FixedLighting, UniformLighting>;

// Lighting id for each of n frames under the policy.
std::vector<int> assign_lighting(const LightingPolicy& policy, std::size_t n, std::size_t palette_size);

struct Frame {
  std::int64_t step = 0;
  Pose pose;
  int lighting_id = 0;
  Image image;
};

Frame render_frame(const FloorPlan& plan, const TrajectoryPoint& point, const LightingCondition& light, int width,
                   int height);

std::vector<Frame> replay(const FloorPlan& plan, const Trajectory& traj, const LightingPolicy& policy,
                          const std::vector<LightingCondition>& palette, int width, int height);

// File formats.
void save_plan(const std::filesystem::path& path, const FloorPlan& plan);
FloorPlan load_plan(const std::filesystem::path& path);
std::string plan_to_json(const FloorPlan& plan);
FloorPlan plan_from_json(const std::string& text);

// Header "step,x,y,z,yaw", values with 17 significant digits.
void save_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory load_trajectory(const std::filesystem::path& path);
std::string trajectory_to_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(const std::string& text);

struct ManifestRecord {
  std::int64_t step = 0;
  Pose pose;
  int lighting_id = 0;
  std::string image_path;  // relative to the manifest directory
  std::optional<std::string> room_label;

  bool operator==(const ManifestRecord&) const = default;
};

// One JSON object per line.
void save_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);

std::string frame_filename(std::int64_t step);

}  // namespace ess::env
