#include "ess/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <stdexcept>

#include "ess/rng.hpp"

namespace ess::env {

std::string to_string(Pattern p) {
  switch (p) {
    case Pattern::Plain: return "plain";
    case Pattern::Stripes: return "stripes";
    case Pattern::Checker: return "checker";
    case Pattern::Bands: return "bands";
  }
  return "plain";
}

Pattern parse_pattern(const std::string& s) {
  if (s == "plain") return Pattern::Plain;
  if (s == "stripes") return Pattern::Stripes;
  if (s == "checker") return Pattern::Checker;
  if (s == "bands") return Pattern::Bands;
  throw std::invalid_argument("unknown surface pattern '" + s + "'");
}

bool FloorPlan::is_wall_at(double x, double y) const {
  const int cx = static_cast<int>(std::floor(x / cell_size));
  const int cy = static_cast<int>(std::floor(y / cell_size));
  return !in_grid(cx, cy) || cell(cx, cy).wall;
}

std::optional<std::size_t> FloorPlan::room_index(double x, double y, double z) const {
  for (std::size_t i = 0; i < rooms.size(); ++i) {
    if (rooms[i].box.contains(x, y, z)) return i;
  }
  return std::nullopt;
}

void FloorPlan::validate() const {
  if (width < 3 || height < 3 || !(cell_size > 0)) throw std::logic_error("plan: bad grid dimensions");
  if (cells.size() != static_cast<std::size_t>(width) * height) throw std::logic_error("plan: cell count mismatch");
  const auto npal = static_cast<std::int32_t>(palette.size());
  auto check_surface = [&](std::int32_t s, const std::string& what) {
    if (s < 0 || s >= npal) throw std::logic_error("plan: " + what + " references missing surface " + std::to_string(s));
  };
  for (const auto& c : cells) check_surface(c.surface, "cell");
  for (const auto& o : objects) check_surface(o.surface, "object");
  check_surface(corridor_wall_surface, "corridor wall");
  check_surface(ceiling_surface, "ceiling");
  for (int x = 0; x < width; ++x) {
    if (!cell(x, 0).wall || !cell(x, height - 1).wall) throw std::logic_error("plan: outer wall is open");
  }
  for (int y = 0; y < height; ++y) {
    if (!cell(0, y).wall || !cell(width - 1, y).wall) throw std::logic_error("plan: outer wall is open");
  }
  for (std::size_t i = 0; i < rooms.size(); ++i) {
    const auto& r = rooms[i];
    check_surface(r.wall_surface, "room " + r.label);
    check_surface(r.floor_surface, "room " + r.label);
    const Box& b = r.box;
    if (b.x0 < cell_size || b.y0 < cell_size || b.x1 > (width - 1) * cell_size || b.y1 > (height - 1) * cell_size ||
        !(b.x0 < b.x1 && b.y0 < b.y1 && b.z0 < b.z1)) {
      throw std::logic_error("plan: room " + r.label + " box leaves the outer walls");
    }
    for (std::size_t j = i + 1; j < rooms.size(); ++j) {
      if (b.overlaps(rooms[j].box)) throw std::logic_error("plan: rooms " + r.label + " and " + rooms[j].label + " overlap");
    }
  }
  if (!is_connected(*this)) throw std::logic_error("plan: free space is not connected");
  for (const auto& r : rooms) {
    // Some free cell must lie inside every room so each is reachable.
    bool any = false;
    for (int y = 0; y < height && !any; ++y) {
      for (int x = 0; x < width && !any; ++x) {
        any = !cell(x, y).wall && r.box.contains((x + 0.5) * cell_size, (y + 0.5) * cell_size, kEyeHeight);
      }
    }
    if (!any) throw std::logic_error("plan: room " + r.label + " has no free cell");
  }
}

bool is_connected(const FloorPlan& plan) {
  const int w = plan.width, h = plan.height;
  std::vector<char> seen(plan.cells.size(), 0);
  std::queue<std::pair<int, int>> q;
  std::size_t free_total = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!plan.cell(x, y).wall) {
        if (free_total == 0) {
          q.emplace(x, y);
          seen[static_cast<std::size_t>(y) * w + x] = 1;
        }
        ++free_total;
      }
    }
  }
  std::size_t reached = 0;
  constexpr int dx[4] = {1, -1, 0, 0};
  constexpr int dy[4] = {0, 0, 1, -1};
  while (!q.empty()) {
    auto [x, y] = q.front();
    q.pop();
    ++reached;
    for (int k = 0; k < 4; ++k) {
      const int nx = x + dx[k], ny = y + dy[k];
      if (!plan.in_grid(nx, ny) || plan.cell(nx, ny).wall) continue;
      auto& s = seen[static_cast<std::size_t>(ny) * w + nx];
      if (!s) {
        s = 1;
        q.emplace(nx, ny);
      }
    }
  }
  return reached == free_total;
}

double labeled_cell_fraction(const FloorPlan& plan) {
  std::size_t free_cells = 0, labeled = 0;
  for (int y = 0; y < plan.height; ++y) {
    for (int x = 0; x < plan.width; ++x) {
      if (plan.cell(x, y).wall) continue;
      ++free_cells;
      if (plan.room_index((x + 0.5) * plan.cell_size, (y + 0.5) * plan.cell_size, kEyeHeight)) ++labeled;
    }
  }
  return free_cells ? static_cast<double>(labeled) / static_cast<double>(free_cells) : 0.0;
}

std::optional<std::string> room_label(const FloorPlan& plan, const Pose& pose) {
  if (auto i = plan.room_index(pose.x(), pose.y(), pose.z())) return plan.rooms[*i].label;
  return std::nullopt;
}

namespace {

std::array<float, 3> hsv(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = 0, g = 0, b = 0;
  switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
  return {static_cast<float>(r * 255), static_cast<float>(g * 255), static_cast<float>(b * 255)};
}

constexpr int kMinRoomExtent = 3;
constexpr int kCorridorRows = 2;
constexpr int kDoorWidth = 2;

// Splits `span` cells into n room widths separated by single wall cells.
std::vector<int> split_widths(int span, int n, Rng& rng) {
  const int usable = span - (n - 1);
  if (n <= 0 || usable < n * kMinRoomExtent) return {};
  std::vector<int> widths(n, usable / n);
  for (int r = usable % n; r > 0; --r) ++widths[rng.below(static_cast<std::uint64_t>(n))];
  for (int i = 0; i + 1 < n; ++i) {
    const int shift = static_cast<int>(rng.below(3)) - 1;
    if (widths[i] + shift >= kMinRoomExtent && widths[i + 1] - shift >= kMinRoomExtent) {
      widths[i] += shift;
      widths[i + 1] -= shift;
    }
  }
  return widths;
}

}  // namespace

FloorPlan generate_floorplan(std::uint64_t seed, const PlanParams& params) {
  if (params.rooms < 2) throw std::invalid_argument("floor plan needs at least 2 rooms");
  if (params.grid_width < 16 || params.grid_height < 16) throw std::invalid_argument("floor plan grid must be >= 16x16");
  if (!(params.cell_size > 0)) throw std::invalid_argument("cell size must be positive");
  if (!(params.object_density >= 0 && params.object_density <= 0.25)) {
    throw std::invalid_argument("object density must lie in [0, 0.25]");
  }
  Rng rng(derive_seed(seed, "floorplan"));
  const int W = params.grid_width, H = params.grid_height;
  const int top_n = (params.rooms + 1) / 2;
  const int bottom_n = params.rooms - top_n;
  const int depth_total = H - 2 - kCorridorRows - 2;
  const int top_depth = depth_total / 2;
  const int bottom_depth = depth_total - top_depth;
  auto top_w = split_widths(W - 2, top_n, rng);
  auto bottom_w = split_widths(W - 2, bottom_n, rng);
  if (top_depth < kMinRoomExtent || bottom_depth < kMinRoomExtent || top_w.empty() || bottom_w.empty()) {
    throw std::invalid_argument("cannot fit " + std::to_string(params.rooms) + " rooms on a " + std::to_string(W) +
                                "x" + std::to_string(H) + " grid");
  }

  FloorPlan plan;
  plan.seed = seed;
  plan.width = W;
  plan.height = H;
  plan.cell_size = params.cell_size;

  plan.palette.push_back({{150, 150, 150}, Pattern::Plain, true});            // 0 structural
  plan.palette.push_back({{178, 172, 160}, Pattern::Bands, false});           // 1 corridor wall
  plan.palette.push_back({{96, 90, 84}, Pattern::Plain, false});              // 2 corridor floor
  plan.palette.push_back({{215, 215, 220}, Pattern::Plain, false});           // 3 ceiling
  plan.palette.push_back({{92, 62, 40}, Pattern::Bands, false});              // 4 object: wood
  plan.palette.push_back({{225, 210, 90}, Pattern::Checker, false});          // 5 object: painted
  plan.corridor_wall_surface = 1;
  plan.ceiling_surface = 3;
  const std::int32_t corridor_floor = 2;

  plan.cells.assign(static_cast<std::size_t>(W) * H, Cell{true, 0});
  auto set = [&](int x, int y, Cell c) { plan.cells[static_cast<std::size_t>(y) * W + x] = c; };

  const double hue0 = rng.uniform();
  const Pattern wall_patterns[4] = {Pattern::Stripes, Pattern::Plain, Pattern::Bands, Pattern::Checker};

  struct Span {
    int x0, x1, y0, y1;  // inclusive interior cells
    int door_row;
  };
  std::vector<Span> spans;
  auto lay_row = [&](const std::vector<int>& widths, int y0, int y1, int door_row) {
    int x = 1;
    for (int w : widths) {
      spans.push_back({x, x + w - 1, y0, y1, door_row});
      x += w + 1;
    }
  };
  const int corridor_y0 = 1 + top_depth + 1;
  lay_row(top_w, 1, top_depth, corridor_y0 - 1);
  lay_row(bottom_w, corridor_y0 + kCorridorRows + 1, H - 2, corridor_y0 + kCorridorRows);

  for (int y = corridor_y0; y < corridor_y0 + kCorridorRows; ++y) {
    for (int x = 1; x <= W - 2; ++x) set(x, y, Cell{false, corridor_floor});
  }

  for (std::size_t i = 0; i < spans.size(); ++i) {
    const Span& s = spans[i];
    const double hue = hue0 + static_cast<double>(i) * 0.6180339887498949;
    const auto wall_id = static_cast<std::int32_t>(plan.palette.size());
    plan.palette.push_back({hsv(hue, 0.55, 0.85), wall_patterns[i % 4], false});
    const auto floor_id = static_cast<std::int32_t>(plan.palette.size());
    plan.palette.push_back({hsv(hue + 0.5, 0.35, 0.45), i % 2 ? Pattern::Checker : Pattern::Plain, false});
    for (int y = s.y0; y <= s.y1; ++y) {
      for (int x = s.x0; x <= s.x1; ++x) set(x, y, Cell{false, floor_id});
    }
    const int door_span = s.x1 - s.x0 + 1 - kDoorWidth;
    const int door_x = s.x0 + static_cast<int>(rng.below(static_cast<std::uint64_t>(door_span + 1)));
    for (int x = door_x; x < door_x + kDoorWidth; ++x) set(x, s.door_row, Cell{false, corridor_floor});

    Room room;
    room.label = "room_" + std::to_string(i);
    room.box = Box{s.x0 * plan.cell_size, s.y0 * plan.cell_size, 0.0,
                   (s.x1 + 1) * plan.cell_size, (s.y1 + 1) * plan.cell_size, kWallHeight};
    room.wall_surface = wall_id;
    room.floor_surface = floor_id;
    plan.rooms.push_back(room);
  }

  // Isolated pillars strictly inside rooms, clear of doorways; they never
  // touch another wall cell, so connectivity is preserved.
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const Span& s = spans[i];
    for (int y = s.y0 + 1; y <= s.y1 - 1; ++y) {
      for (int x = s.x0 + 1; x <= s.x1 - 1; ++x) {
        if (!rng.bernoulli(params.object_density)) continue;
        bool clear = true;
        for (int dy = -1; dy <= 1 && clear; ++dy) {
          for (int dx = -1; dx <= 1 && clear; ++dx) {
            if (plan.cell(x + dx, y + dy).wall) clear = false;
          }
        }
        if (std::abs(y - s.door_row) <= 2) clear = false;
        if (!clear) continue;
        const std::int32_t surf = rng.bernoulli(0.5) ? 4 : 5;
        set(x, y, Cell{true, surf});
        plan.objects.push_back({(x + 0.5) * plan.cell_size, (y + 0.5) * plan.cell_size, plan.cell_size, surf});
      }
    }
  }

  plan.validate();
  return plan;
}

FloorPlan box_room(int interior_w, int interior_h, double cell_size) {
  if (interior_w < 1 || interior_h < 1) throw std::invalid_argument("box room needs a positive interior");
  FloorPlan plan;
  plan.width = interior_w + 2;
  plan.height = interior_h + 2;
  plan.cell_size = cell_size;
  plan.palette.push_back({{150, 150, 150}, Pattern::Plain, true});
  plan.palette.push_back({{180, 120, 90}, Pattern::Plain, false});
  plan.palette.push_back({{90, 90, 90}, Pattern::Plain, false});
  plan.palette.push_back({{210, 210, 210}, Pattern::Plain, false});
  plan.corridor_wall_surface = 1;
  plan.ceiling_surface = 3;
  plan.cells.assign(static_cast<std::size_t>(plan.width) * plan.height, Cell{true, 0});
  for (int y = 1; y <= interior_h; ++y) {
    for (int x = 1; x <= interior_w; ++x) plan.cells[static_cast<std::size_t>(y) * plan.width + x] = Cell{false, 2};
  }
  Room r;
  r.label = "room_0";
  r.box = Box{cell_size, cell_size, 0.0, (interior_w + 1) * cell_size, (interior_h + 1) * cell_size, kWallHeight};
  r.wall_surface = 1;
  r.floor_surface = 2;
  plan.rooms.push_back(r);
  plan.validate();
  return plan;
}

void LightingCondition::validate() const {
  for (float t : ambient_tint) {
    if (!(t > 0.0f && t <= 2.0f)) throw std::invalid_argument("lighting: ambient tint must lie in (0, 2]");
  }
  if (!(key_intensity > 0.0 && key_intensity <= 2.0)) throw std::invalid_argument("lighting: key intensity must lie in (0, 2]");
  if (!(fog >= 0.0 && fog < 1.0)) throw std::invalid_argument("lighting: fog must lie in [0, 1)");
  if (!std::isfinite(key_azimuth_deg)) throw std::invalid_argument("lighting: azimuth must be finite");
}

std::vector<LightingCondition> default_lighting_palette() {
  std::vector<LightingCondition> out;
  out.push_back({0, {1.0f, 1.0f, 1.0f}, 45.0, 0.6, 0.0});
  const std::array<std::array<float, 3>, 3> tints = {{{1.25f, 0.95f, 0.7f}, {0.75f, 0.9f, 1.3f}, {0.6f, 0.65f, 0.6f}}};
  const double azimuths[3] = {0.0, 120.0, 240.0};
  const double intensities[3] = {1.2, 0.5, 0.9};
  const double fogs[3] = {0.0, 0.35, 0.6};
  int id = 1;
  for (int t = 0; t < 3; ++t) {
    for (int k = 0; k < 3; ++k) {
      out.push_back({id++, tints[t], azimuths[k] + 30.0 * t, intensities[k], fogs[(k + t) % 3]});
    }
  }
  return out;
}

namespace {

float pattern_factor(Pattern p, double u, double v) {
  switch (p) {
    case Pattern::Plain: return 1.0f;
    case Pattern::Stripes: return (static_cast<long>(std::floor(u * 4.0)) & 1) ? 0.72f : 1.0f;
    case Pattern::Checker:
      return ((static_cast<long>(std::floor(u * 2.0)) + static_cast<long>(std::floor(v * 2.0))) & 1) ? 0.75f : 1.0f;
    case Pattern::Bands: return (static_cast<long>(std::floor(v * 3.0)) & 1) ? 0.7f : 1.0f;
  }
  return 1.0f;
}

const std::array<float, 3> kFogColor = {190.0f, 190.0f, 200.0f};
constexpr double kAmbient = 0.55;
constexpr double kKeyScale = 0.45;

struct Shader {
  const LightingCondition& light;
  double lx, ly;

  explicit Shader(const LightingCondition& l)
      : light(l),
        lx(std::cos(l.key_azimuth_deg * std::numbers::pi / 180.0)),
        ly(std::sin(l.key_azimuth_deg * std::numbers::pi / 180.0)) {}

  // Color is linear in the ambient tint: the tint multiply is the last step.
  void shade(const Surface& s, float pattern, double lambert, double dist, float* out) const {
    const double lit = kAmbient + kKeyScale * light.key_intensity * lambert;
    const double falloff = 1.0 / (1.0 + 0.12 * dist);
    const double f = light.fog * (1.0 - std::exp(-dist / 2.5));
    for (int c = 0; c < 3; ++c) {
      const double base = static_cast<double>(s.base[c]) * pattern * lit * falloff;
      const double fogged = (1.0 - f) * base + f * kFogColor[c];
      out[c] = static_cast<float>(fogged) * light.ambient_tint[c];
    }
  }
};

}  // namespace

RenderResult render_detailed(const FloorPlan& plan, const Pose& pose, const LightingCondition& light, int width,
                             int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("render: resolution must be positive");
  if (plan.is_wall_at(pose.x(), pose.y())) throw std::invalid_argument("render: pose " + to_string(pose) + " is inside a wall");
  light.validate();
  const double cs = plan.cell_size;
  const double yaw = pose.yaw() * std::numbers::pi / 180.0;
  const double dir_x = std::cos(yaw), dir_y = std::sin(yaw);
  const double half = std::tan(kFovDeg * 0.5 * std::numbers::pi / 180.0);
  const double plane_x = std::sin(yaw) * half, plane_y = -std::cos(yaw) * half;
  const double tan_v = half * static_cast<double>(height) / static_cast<double>(width);
  const double px = pose.x() / cs, py = pose.y() / cs;  // cell units
  const Shader shader(light);

  RenderResult res;
  res.image = Image(width, height);
  res.linear.assign(static_cast<std::size_t>(width) * height * 3, 0.0f);
  res.columns.resize(width);

  const int max_steps = 4 * (plan.width + plan.height);
  for (int col = 0; col < width; ++col) {
    const double cam = 2.0 * (col + 0.5) / width - 1.0;
    const double rx = dir_x + plane_x * cam, ry = dir_y + plane_y * cam;
    int mx = static_cast<int>(std::floor(px)), my = static_cast<int>(std::floor(py));
    const double ddx = rx == 0 ? 1e30 : std::abs(1.0 / rx);
    const double ddy = ry == 0 ? 1e30 : std::abs(1.0 / ry);
    const int sx = rx < 0 ? -1 : 1, sy = ry < 0 ? -1 : 1;
    double side_x = rx < 0 ? (px - mx) * ddx : (mx + 1.0 - px) * ddx;
    double side_y = ry < 0 ? (py - my) * ddy : (my + 1.0 - py) * ddy;
    int prev_x = mx, prev_y = my;
    bool hit_y = false, hit = false;
    for (int i = 0; i < max_steps; ++i) {
      prev_x = mx;
      prev_y = my;
      if (side_x < side_y) {
        side_x += ddx;
        mx += sx;
        hit_y = false;
      } else {
        side_y += ddy;
        my += sy;
        hit_y = true;
      }
      if (!plan.in_grid(mx, my) || plan.cell(mx, my).wall) {
        hit = true;
        break;
      }
    }
    if (!hit) throw std::logic_error("render: ray escaped the plan");
    const double perp_cells = hit_y ? side_y - ddy : side_x - ddx;
    const double perp = std::max(perp_cells * cs, 1e-6);
    const double wall_u = hit_y ? (px + perp_cells * rx) * cs : (py + perp_cells * ry) * cs;

    ColumnHit& ch = res.columns[col];
    ch.perp_distance = perp;
    ch.projected_height = static_cast<double>(height) / (perp * tan_v) * (kWallHeight / 2.0);
    ch.cell_x = mx;
    ch.cell_y = my;
    ch.side_y = hit_y;

    std::int32_t wall_surface = plan.in_grid(mx, my) ? plan.cell(mx, my).surface : 0;
    if (plan.palette[wall_surface].structural) {
      auto zone = plan.room_index((prev_x + 0.5) * cs, (prev_y + 0.5) * cs, kEyeHeight);
      wall_surface = zone ? plan.rooms[*zone].wall_surface : plan.corridor_wall_surface;
    }
    const double nx = hit_y ? 0.0 : -sx, ny = hit_y ? -sy : 0.0;
    const double wall_lambert = std::max(0.0, nx * shader.lx + ny * shader.ly);

    for (int row = 0; row < height; ++row) {
      // Vertical slope of the pixel's view ray, positive upwards.
      const double t = (height * 0.5 - (row + 0.5)) / (height * 0.5) * tan_v;
      const double z_at_wall = kEyeHeight + t * perp;
      float* out = &res.linear[(static_cast<std::size_t>(row) * width + col) * 3];
      if (z_at_wall >= 0.0 && z_at_wall <= kWallHeight) {
        const Surface& s = plan.palette[wall_surface];
        shader.shade(s, pattern_factor(s.pattern, wall_u, z_at_wall), wall_lambert, perp, out);
      } else if (t < 0.0) {
        const double d = kEyeHeight / -t;
        const double wx = pose.x() + rx * d, wy = pose.y() + ry * d;
        const int fx = static_cast<int>(std::floor(wx / cs)), fy = static_cast<int>(std::floor(wy / cs));
        std::int32_t fs = 2;
        if (plan.in_grid(fx, fy) && !plan.cell(fx, fy).wall) {
          fs = plan.cell(fx, fy).surface;
        } else if (plan.in_grid(prev_x, prev_y)) {
          fs = plan.cell(prev_x, prev_y).surface;
        }
        const Surface& s = plan.palette[fs];
        shader.shade(s, pattern_factor(s.pattern, wx, wy), 0.5, d, out);
      } else {
        const double d = (kWallHeight - kEyeHeight) / t;
        const Surface& s = plan.palette[plan.ceiling_surface];
        shader.shade(s, 1.0f, 0.2, d, out);
      }
    }
  }
  for (std::size_t i = 0; i < res.linear.size(); ++i) {
    const float v = std::nearbyint(std::clamp(res.linear[i], 0.0f, 255.0f));
    res.image.rgb[i] = static_cast<std::uint8_t>(v);
  }
  return res;
}

Image render(const FloorPlan& plan, const Pose& pose, const LightingCondition& light, int width, int height) {
  return render_detailed(plan, pose, light, width, height).image;
}

bool move_is_clear(const FloorPlan& plan, double x0, double y0, double x1, double y1) {
  if (plan.is_wall_at(x1, y1) || plan.is_wall_at(x1, y0) || plan.is_wall_at(x0, y1)) return false;
  for (int sx = -1; sx <= 1; sx += 2) {
    for (int sy = -1; sy <= 1; sy += 2) {
      if (plan.is_wall_at(x1 + sx * kMoveClearance, y1 + sy * kMoveClearance)) return false;
    }
  }
  return true;
}

Pose start_pose(const FloorPlan& plan) {
  std::optional<Pose> fallback;
  for (int y = 0; y < plan.height; ++y) {
    for (int x = 0; x < plan.width; ++x) {
      if (plan.cell(x, y).wall) continue;
      const double cx = (x + 0.5) * plan.cell_size, cy = (y + 0.5) * plan.cell_size;
      if (!move_is_clear(plan, cx, cy, cx, cy)) continue;
      if (plan.room_index(cx, cy, kEyeHeight)) return Pose(cx, cy, kEyeHeight, 0.0);
      if (!fallback) fallback = Pose(cx, cy, kEyeHeight, 0.0);
    }
  }
  if (!fallback) throw std::runtime_error("plan has no free starting cell");
  return *fallback;
}

namespace {

struct WalkGrid {
  const FloorPlan& plan;
  std::vector<std::uint8_t> clear;  // cell center passes the clearance test
  std::vector<std::vector<std::size_t>> room_cells;

  explicit WalkGrid(const FloorPlan& p) : plan(p), clear(p.cells.size(), 0), room_cells(p.rooms.size()) {
    for (int y = 0; y < p.height; ++y) {
      for (int x = 0; x < p.width; ++x) {
        if (p.cell(x, y).wall) continue;
        const double cx = (x + 0.5) * p.cell_size, cy = (y + 0.5) * p.cell_size;
        if (!move_is_clear(p, cx, cy, cx, cy)) continue;
        const auto idx = static_cast<std::size_t>(y) * p.width + x;
        clear[idx] = 1;
        if (const auto r = p.room_index(cx, cy, kEyeHeight)) room_cells[*r].push_back(idx);
      }
    }
  }

  std::size_t cell_of(double x, double y) const {
    const int cx = static_cast<int>(std::floor(x / plan.cell_size));
    const int cy = static_cast<int>(std::floor(y / plan.cell_size));
    return static_cast<std::size_t>(cy) * plan.width + cx;
  }

  // Cell indices from `from` (exclusive) to `to` (inclusive); empty if unreachable.
  std::vector<std::size_t> path(std::size_t from, std::size_t to) const {
    if (from == to || !clear[to]) return {};
    std::vector<std::ptrdiff_t> prev(clear.size(), -1);
    std::queue<std::size_t> q;
    q.push(from);
    prev[from] = static_cast<std::ptrdiff_t>(from);
    const int w = plan.width;
    while (!q.empty()) {
      const auto c = q.front();
      q.pop();
      if (c == to) break;
      const int cx = static_cast<int>(c % w), cy = static_cast<int>(c / w);
      constexpr int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        const int nx = cx + dx[k], ny = cy + dy[k];
        if (!plan.in_grid(nx, ny)) continue;
        const auto n = static_cast<std::size_t>(ny) * w + nx;
        if (!clear[n] || prev[n] >= 0) continue;
        prev[n] = static_cast<std::ptrdiff_t>(c);
        q.push(n);
      }
    }
    if (prev[to] < 0) return {};
    std::vector<std::size_t> out;
    for (auto c = to; c != from; c = static_cast<std::size_t>(prev[c])) out.push_back(c);
    std::reverse(out.begin(), out.end());
    return out;
  }
};

double wrap_deg(double d) {
  d = std::fmod(d + 180.0, 360.0);
  if (d < 0) d += 360.0;
  return d - 180.0;
}

}  // namespace

Trajectory random_walk(const FloorPlan& plan, int steps, const MotionParams& motion, std::uint64_t seed) {
  if (steps < 1) throw std::invalid_argument("random walk needs at least one step");
  if (!(motion.step_length > 0) || !(motion.step_length <= 0.2 * plan.cell_size) || !(motion.turn_increment_deg > 0) ||
      !(motion.turn_probability >= 0 && motion.turn_probability <= 1)) {
    throw std::invalid_argument("random walk: invalid motion parameters (step_length must be in (0, cell_size/5])");
  }
  Rng rng(derive_seed(seed, "random-walk"));
  const WalkGrid grid(plan);
  std::vector<std::size_t> rooms, starts;
  for (std::size_t r = 0; r < grid.room_cells.size(); ++r) {
    if (!grid.room_cells[r].empty()) rooms.push_back(r);
  }
  for (auto r : rooms) starts.insert(starts.end(), grid.room_cells[r].begin(), grid.room_cells[r].end());
  if (starts.empty()) {
    for (std::size_t i = 0; i < grid.clear.size(); ++i) {
      if (grid.clear[i]) starts.push_back(i);
    }
  }
  if (starts.empty()) throw std::runtime_error("random walk: no free starting cell");
  const auto start = starts[rng.below(starts.size())];
  const int turn_slots = std::max(1, static_cast<int>(std::lround(360.0 / motion.turn_increment_deg)));
  double x = (static_cast<double>(start % plan.width) + 0.5) * plan.cell_size;
  double y = (static_cast<double>(start / plan.width) + 0.5) * plan.cell_size;
  double yaw = static_cast<double>(rng.below(static_cast<std::uint64_t>(turn_slots))) * motion.turn_increment_deg;

  // Wander between random goal cells, picking the goal room uniformly so
  // every room is visited; follow the grid path with turn and step moves.
  std::vector<std::size_t> route;
  std::size_t next = 0;
  int since_progress = 0;
  const int patience = 4 * (static_cast<int>(std::ceil(plan.cell_size / motion.step_length)) + turn_slots);
  std::vector<std::size_t> visits(plan.rooms.size(), 0);
  auto replan = [&]() {
    route.clear();
    next = 0;
    since_progress = 0;
    if (rooms.empty()) return;
    const auto here = plan.room_index(x, y, kEyeHeight);
    for (int attempt = 0; attempt < 8 && route.empty(); ++attempt) {
      std::size_t goal_room = rooms[rng.below(rooms.size())];
      if (here && !grid.room_cells[*here].empty() && rng.bernoulli(0.5)) {
        goal_room = *here;
      } else if (attempt == 0) {
        // Least visited room other than the current one.
        std::size_t best = visits.size();
        for (auto r : rooms) {
          if (here && r == *here && rooms.size() > 1) continue;
          if (best == visits.size() || visits[r] < visits[best]) best = r;
        }
        if (best < visits.size()) goal_room = best;
      }
      const auto& cells = grid.room_cells[goal_room];
      route = grid.path(grid.cell_of(x, y), cells[rng.below(cells.size())]);
    }
  };

  Trajectory traj;
  traj.provenance = "seed:" + std::to_string(seed);
  traj.points.reserve(steps);
  traj.points.push_back({0, Pose(x, y, kEyeHeight, yaw)});
  for (int k = 1; k < steps; ++k) {
    if (next >= route.size() || since_progress > patience) replan();
    if (rng.bernoulli(motion.turn_probability) || next >= route.size()) {
      yaw += (rng.bernoulli(0.5) ? 1 : -1) * motion.turn_increment_deg;
    } else {
      const auto c = route[next];
      const double wx = (static_cast<double>(c % plan.width) + 0.5) * plan.cell_size;
      const double wy = (static_cast<double>(c / plan.width) + 0.5) * plan.cell_size;
      const double err = wrap_deg(std::atan2(wy - y, wx - x) * 180.0 / std::numbers::pi - yaw);
      ++since_progress;
      if (std::abs(err) > 0.5 * motion.turn_increment_deg) {
        yaw += (err > 0 ? 1 : -1) * motion.turn_increment_deg;
      } else {
        const double r = yaw * std::numbers::pi / 180.0;
        const double nx = x + motion.step_length * std::cos(r), ny = y + motion.step_length * std::sin(r);
        if (move_is_clear(plan, x, y, nx, ny)) {
          x = nx;
          y = ny;
          if (std::hypot(wx - x, wy - y) <= motion.step_length) {
            ++next;
            since_progress = 0;
          }
        } else {
          yaw += (rng.bernoulli(0.5) ? 1 : -1) * motion.turn_increment_deg;
          route.clear();
        }
      }
    }
    yaw = normalize_yaw(yaw);
    if (const auto r = plan.room_index(x, y, kEyeHeight)) ++visits[*r];
    traj.points.push_back({k, Pose(x, y, kEyeHeight, yaw)});
  }
  return traj;
}

void validate_trajectory(const FloorPlan& plan, const Trajectory& traj, std::optional<double> max_step) {
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    const auto& p = traj.points[i];
    if (!plan.is_free(p.pose)) {
      throw std::invalid_argument("trajectory step " + std::to_string(p.step) + ": pose " + to_string(p.pose) +
                                  " is not in free space");
    }
    if (i > 0) {
      const auto& q = traj.points[i - 1];
      if (p.step <= q.step) throw std::invalid_argument("trajectory steps must be strictly increasing at step " +
                                                        std::to_string(p.step));
      if (max_step && delta_pos(p.pose, q.pose) > *max_step + 1e-9) {
        throw std::invalid_argument("trajectory step " + std::to_string(p.step) + " moves farther than " +
                                    std::to_string(*max_step) + " m");
      }
    }
  }
}

std::vector<int> assign_lighting(const LightingPolicy& policy, std::size_t n, std::size_t palette_size) {
  if (palette_size == 0) throw std::invalid_argument("lighting palette is empty");
  std::vector<int> out(n);
  if (const auto* fixed = std::get_if<FixedLighting>(&policy)) {
    if (fixed->id < 0 || static_cast<std::size_t>(fixed->id) >= palette_size) {
      throw std::invalid_argument("lighting id " + std::to_string(fixed->id) + " not in palette");
    }
    std::fill(out.begin(), out.end(), fixed->id);
    return out;
  }
  const auto& uni = std::get<UniformLighting>(policy);
  std::vector<int> ids = uni.ids;
  if (ids.empty()) {
    for (std::size_t i = 0; i < palette_size; ++i) ids.push_back(static_cast<int>(i));
  }
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= palette_size) {
      throw std::invalid_argument("lighting id " + std::to_string(id) + " not in palette");
    }
  }
  Rng rng(derive_seed(uni.seed, "lighting"));
  for (auto& v : out) v = ids[rng.below(ids.size())];
  return out;
}

Frame render_frame(const FloorPlan& plan, const TrajectoryPoint& point, const LightingCondition& light, int width,
                   int height) {
  return Frame{point.step, point.pose, light.id, render(plan, point.pose, light, width, height)};
}

std::vector<Frame> replay(const FloorPlan& plan, const Trajectory& traj, const LightingPolicy& policy,
                          const std::vector<LightingCondition>& palette, int width, int height) {
  validate_trajectory(plan, traj);
  const auto ids = assign_lighting(policy, traj.points.size(), palette.size());
  std::vector<Frame> frames;
  frames.reserve(traj.points.size());
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    frames.push_back(render_frame(plan, traj.points[i], palette[ids[i]], width, height));
    frames.back().lighting_id = ids[i];
  }
  return frames;
}

std::string frame_filename(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06lld.ppm", static_cast<long long>(step));
  return buf;
}

}  // namespace ess::env
