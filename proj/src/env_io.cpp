#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "ess/env.hpp"

namespace ess::env {

using json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

json box_json(const Box& b) { return json::array({b.x0, b.y0, b.z0, b.x1, b.y1, b.z1}); }

Box box_from(const json& j) {
  if (!j.is_array() || j.size() != 6) throw std::runtime_error("plan: box must have 6 numbers");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
             j[3].get<double>(), j[4].get<double>(), j[5].get<double>()};
}

constexpr const char* kPlanFormat = "ess-floorplan";
constexpr int kPlanVersion = 1;

}  // namespace

std::string plan_to_json(const FloorPlan& plan) {
  json j;
  j["format"] = kPlanFormat;
  j["version"] = kPlanVersion;
  j["seed"] = plan.seed;
  j["width"] = plan.width;
  j["height"] = plan.height;
  j["cell_size"] = plan.cell_size;
  j["corridor_wall_surface"] = plan.corridor_wall_surface;
  j["ceiling_surface"] = plan.ceiling_surface;
  json pal = json::array();
  for (const auto& s : plan.palette) {
    pal.push_back({{"base", {s.base[0], s.base[1], s.base[2]}},
                   {"pattern", to_string(s.pattern)},
                   {"structural", s.structural}});
  }
  j["palette"] = pal;
  // One string per grid row: '#' wall, '.' free; surfaces listed separately.
  json rows = json::array();
  json surfaces = json::array();
  for (int y = 0; y < plan.height; ++y) {
    std::string row;
    for (int x = 0; x < plan.width; ++x) {
      row += plan.cell(x, y).wall ? '#' : '.';
      surfaces.push_back(plan.cell(x, y).surface);
    }
    rows.push_back(row);
  }
  j["grid"] = rows;
  j["surfaces"] = surfaces;
  json rooms = json::array();
  for (const auto& r : plan.rooms) {
    rooms.push_back({{"label", r.label},
                     {"box", box_json(r.box)},
                     {"wall_surface", r.wall_surface},
                     {"floor_surface", r.floor_surface}});
  }
  j["rooms"] = rooms;
  json objs = json::array();
  for (const auto& o : plan.objects) {
    objs.push_back({{"x", o.x}, {"y", o.y}, {"size", o.size}, {"surface", o.surface}});
  }
  j["objects"] = objs;
  return j.dump(1) + "\n";
}

FloorPlan plan_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("plan: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != kPlanFormat) throw std::runtime_error("plan: unknown format tag");
    if (j.at("version").get<int>() != kPlanVersion) throw std::runtime_error("plan: unsupported version");
    FloorPlan p;
    p.seed = j.at("seed").get<std::uint64_t>();
    p.width = j.at("width").get<int>();
    p.height = j.at("height").get<int>();
    p.cell_size = j.at("cell_size").get<double>();
    p.corridor_wall_surface = j.at("corridor_wall_surface").get<std::int32_t>();
    p.ceiling_surface = j.at("ceiling_surface").get<std::int32_t>();
    for (const auto& s : j.at("palette")) {
      const auto& b = s.at("base");
      p.palette.push_back({{b.at(0).get<float>(), b.at(1).get<float>(), b.at(2).get<float>()},
                           parse_pattern(s.at("pattern").get<std::string>()),
                           s.at("structural").get<bool>()});
    }
    const auto& rows = j.at("grid");
    const auto& surfaces = j.at("surfaces");
    if (p.width <= 0 || p.height <= 0 || rows.size() != static_cast<std::size_t>(p.height) ||
        surfaces.size() != static_cast<std::size_t>(p.width) * p.height) {
      throw std::runtime_error("plan: grid size mismatch");
    }
    for (int y = 0; y < p.height; ++y) {
      const auto row = rows[y].get<std::string>();
      if (row.size() != static_cast<std::size_t>(p.width)) throw std::runtime_error("plan: grid row length mismatch");
      for (int x = 0; x < p.width; ++x) {
        if (row[x] != '#' && row[x] != '.') throw std::runtime_error("plan: bad grid character");
        p.cells.push_back(Cell{row[x] == '#', surfaces[static_cast<std::size_t>(y) * p.width + x].get<std::int32_t>()});
      }
    }
    for (const auto& r : j.at("rooms")) {
      p.rooms.push_back({r.at("label").get<std::string>(), box_from(r.at("box")),
                         r.at("wall_surface").get<std::int32_t>(), r.at("floor_surface").get<std::int32_t>()});
    }
    for (const auto& o : j.at("objects")) {
      p.objects.push_back({o.at("x").get<double>(), o.at("y").get<double>(), o.at("size").get<double>(),
                           o.at("surface").get<std::int32_t>()});
    }
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("plan: malformed field: ") + e.what());
  } catch (const std::logic_error& e) {
    throw std::runtime_error(std::string("plan: ") + e.what());
  }
}

void save_plan(const std::filesystem::path& path, const FloorPlan& plan) { write_file(path, plan_to_json(plan)); }

FloorPlan load_plan(const std::filesystem::path& path) { return plan_from_json(read_file(path)); }

std::string trajectory_to_csv(const Trajectory& traj) {
  std::string out = "step,x,y,z,yaw\n";
  char buf[160];
  for (const auto& p : traj.points) {
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(p.step), p.pose.x(),
                  p.pose.y(), p.pose.z(), p.pose.yaw());
    out += buf;
  }
  return out;
}

Trajectory trajectory_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("trajectory: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "step,x,y,z,yaw") throw std::runtime_error("trajectory: expected header 'step,x,y,z,yaw'");
  Trajectory traj;
  traj.provenance = "file";
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    long long step = 0;
    double x = 0, y = 0, z = 0, yaw = 0;
    int used = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf%n", &step, &x, &y, &z, &yaw, &used) != 5 ||
        static_cast<std::size_t>(used) != line.size()) {
      throw std::runtime_error("trajectory: malformed record on line " + std::to_string(lineno));
    }
    try {
      traj.points.push_back({step, Pose(x, y, z, yaw)});
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("trajectory: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return traj;
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  write_file(path, trajectory_to_csv(traj));
}

Trajectory load_trajectory(const std::filesystem::path& path) { return trajectory_from_csv(read_file(path)); }

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["step"] = r.step;
    j["x"] = r.pose.x();
    j["y"] = r.pose.y();
    j["z"] = r.pose.z();
    j["yaw"] = r.pose.yaw();
    j["lighting_id"] = r.lighting_id;
    j["image_path"] = r.image_path;
    j["room_label"] = r.room_label ? json(*r.room_label) : json(nullptr);
    out += j.dump() + "\n";
  }
  write_file(path, out);
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  std::istringstream is(read_file(path));
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ManifestRecord r;
      r.step = j.at("step").get<std::int64_t>();
      r.pose = Pose(j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>(), j.at("yaw").get<double>());
      r.lighting_id = j.at("lighting_id").get<int>();
      r.image_path = j.at("image_path").get<std::string>();
      if (j.contains("room_label") && !j["room_label"].is_null()) r.room_label = j["room_label"].get<std::string>();
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ess::env
