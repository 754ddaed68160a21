#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <algorithm>

#include "ess/env.hpp"

using namespace ess;
using namespace ess::env;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("ess_env_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const FloorPlan& default_plan() {
  static const FloorPlan plan = generate_floorplan(7, PlanParams{});
  return plan;
}

bool inside_any_room(const FloorPlan& plan, double x, double y, double z) {
  for (const auto& r : plan.rooms) {
    if (x >= r.box.x0 && x < r.box.x1 && y >= r.box.y0 && y < r.box.y1 && z >= r.box.z0 && z < r.box.z1) return true;
  }
  return false;
}

}  // namespace

TEST(FloorPlan, DeterministicPerSeed) {
  EXPECT_EQ(generate_floorplan(7, PlanParams{}), generate_floorplan(7, PlanParams{}));
  EXPECT_NE(generate_floorplan(7, PlanParams{}), generate_floorplan(8, PlanParams{}));
}

TEST(FloorPlan, RoomsCoverMostFreeCells) {
  for (std::uint64_t seed : {1, 7, 42}) {
    const auto plan = generate_floorplan(seed, PlanParams{});
    std::size_t free = 0, labeled = 0;
    for (int cy = 0; cy < plan.height; ++cy) {
      for (int cx = 0; cx < plan.width; ++cx) {
        if (plan.cell(cx, cy).wall) continue;
        ++free;
        labeled += inside_any_room(plan, (cx + 0.5) * plan.cell_size, (cy + 0.5) * plan.cell_size, kEyeHeight);
      }
    }
    const double frac = double(labeled) / double(free);
    EXPECT_GE(frac, 0.7) << "seed " << seed;
    EXPECT_LT(frac, 1.0) << "corridor cells must stay unlabeled";
    EXPECT_DOUBLE_EQ(labeled_cell_fraction(plan), frac);
    EXPECT_TRUE(is_connected(plan));
    EXPECT_NO_THROW(plan.validate());
  }
}

TEST(FloorPlan, UnsatisfiableParamsThrow) {
  PlanParams p;
  p.rooms = 40;
  p.grid_width = p.grid_height = 16;
  EXPECT_THROW(generate_floorplan(1, p), std::invalid_argument);
  p.rooms = 1;
  p.grid_width = p.grid_height = 32;
  EXPECT_THROW(generate_floorplan(1, p), std::invalid_argument);
  p.rooms = 4;
  p.grid_width = 12;
  EXPECT_THROW(generate_floorplan(1, p), std::invalid_argument);
}

TEST(RoomLabel, CenterAndCorridor) {
  const auto& plan = default_plan();
  for (const auto& r : plan.rooms) {
    const Pose c((r.box.x0 + r.box.x1) / 2, (r.box.y0 + r.box.y1) / 2, kEyeHeight, 0);
    EXPECT_EQ(room_label(plan, c), r.label);
  }
  bool found_corridor = false;
  for (int cy = 0; cy < plan.height && !found_corridor; ++cy) {
    for (int cx = 0; cx < plan.width && !found_corridor; ++cx) {
      const double x = (cx + 0.5) * plan.cell_size, y = (cy + 0.5) * plan.cell_size;
      if (plan.cell(cx, cy).wall || inside_any_room(plan, x, y, kEyeHeight)) continue;
      EXPECT_FALSE(room_label(plan, Pose(x, y, kEyeHeight, 0)).has_value());
      found_corridor = true;
    }
  }
  EXPECT_TRUE(found_corridor);
}

TEST(Render, Deterministic) {
  const auto& plan = default_plan();
  const auto pose = start_pose(plan);
  const auto light = default_lighting_palette()[3];
  EXPECT_EQ(render(plan, pose, light, 32, 32), render(plan, pose, light, 32, 32));
  EXPECT_THROW(render(plan, Pose(0.1, 0.1, kEyeHeight, 0), light, 32, 32), std::invalid_argument);
}

TEST(Render, WallSliceHeightScalesInverselyWithDistance) {
  const auto plan = box_room(20, 30, 0.5);
  // The far wall face sits at x = 10.5.
  const LightingCondition light;
  const auto near = render_detailed(plan, Pose(9.5, 8.0, kEyeHeight, 0), light, 64, 64);
  const auto far = render_detailed(plan, Pose(6.5, 8.0, kEyeHeight, 0), light, 64, 64);
  const int mid = 32;
  EXPECT_NEAR(near.columns[mid].perp_distance, 1.0, 1e-9);
  EXPECT_NEAR(far.columns[mid].perp_distance, 4.0, 1e-9);
  auto mean_h = [](const RenderResult& r) {
    double s = 0;
    for (const auto& c : r.columns) s += c.projected_height;
    return s / double(r.columns.size());
  };
  // Pixel-rounded slice heights: 4:1 within one pixel of rounding.
  const double hn = mean_h(near), hf = mean_h(far);
  EXPECT_NEAR(std::round(hn) / std::round(hf), 4.0, 4.0 / std::round(hf));
  EXPECT_NEAR(hn / hf, 4.0, 1e-9);
}

TEST(Render, AmbientTintIsLinearPreClamp) {
  const auto& plan = default_plan();
  const auto pose = start_pose(plan);
  LightingCondition base;
  LightingCondition red = base;
  red.ambient_tint = {2.0f, 1.0f, 1.0f};
  const auto a = render_detailed(plan, pose, base, 32, 32);
  const auto b = render_detailed(plan, pose, red, 32, 32);
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.linear.size(); i += 3) {
    ASSERT_EQ(b.linear[i], 2.0f * a.linear[i]);
    ASSERT_EQ(b.linear[i + 1], a.linear[i + 1]);
    ma += a.linear[i];
    mb += b.linear[i];
  }
  EXPECT_EQ(mb, 2.0 * ma);
}

TEST(Lighting, PaletteValid) {
  const auto pal = default_lighting_palette();
  ASSERT_EQ(pal.size(), 10u);
  for (std::size_t i = 0; i < pal.size(); ++i) {
    EXPECT_EQ(pal[i].id, static_cast<int>(i));
    EXPECT_NO_THROW(pal[i].validate());
  }
  LightingCondition bad;
  bad.fog = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(RandomWalk, LengthCollisionFreeAndBounded) {
  const auto& plan = default_plan();
  MotionParams m;
  m.step_length = 0.1;
  const auto t = random_walk(plan, 100, m, 3);
  ASSERT_EQ(t.points.size(), 100u);
  for (std::size_t i = 0; i < t.points.size(); ++i) {
    EXPECT_TRUE(plan.is_free(t.points[i].pose));
    if (i > 0) {
      EXPECT_GT(t.points[i].step, t.points[i - 1].step);
      EXPECT_LE(delta_pos(t.points[i].pose, t.points[i - 1].pose), 0.1 + 1e-9);
    }
  }
  EXPECT_NO_THROW(validate_trajectory(plan, t, 0.1 + 1e-9));
}

TEST(RandomWalk, DeterministicPerSeed) {
  const auto& plan = default_plan();
  const auto a = random_walk(plan, 300, MotionParams{}, 5);
  const auto b = random_walk(plan, 300, MotionParams{}, 5);
  const auto c = random_walk(plan, 300, MotionParams{}, 6);
  EXPECT_EQ(a.points, b.points);
  EXPECT_NE(a.points, c.points);
  EXPECT_THROW(random_walk(plan, 0, MotionParams{}, 1), std::invalid_argument);
}

TEST(RandomWalk, ExploresAtLeastHalfTheRooms) {
  const auto& plan = default_plan();
  const auto t = random_walk(plan, 2000, MotionParams{}, 11);
  std::set<std::string> seen;
  for (const auto& p : t.points) {
    if (auto l = room_label(plan, p.pose)) seen.insert(*l);
  }
  EXPECT_GE(seen.size() * 2, plan.rooms.size());
}

TEST(RandomWalk, LabeledFractionMatchesBruteForce) {
  const auto& plan = default_plan();
  const auto t = random_walk(plan, 1000, MotionParams{}, 2);
  std::size_t by_label = 0, by_box = 0;
  for (const auto& p : t.points) {
    by_label += room_label(plan, p.pose).has_value();
    by_box += inside_any_room(plan, p.pose.x(), p.pose.y(), p.pose.z());
  }
  EXPECT_EQ(by_label, by_box);
}

TEST(Movement, ClearanceAndStartPose) {
  const auto plan = box_room(4, 4, 0.5);
  const auto s = start_pose(plan);
  EXPECT_DOUBLE_EQ(s.x(), 0.75);
  EXPECT_DOUBLE_EQ(s.y(), 0.75);
  EXPECT_DOUBLE_EQ(s.yaw(), 0.0);
  EXPECT_TRUE(move_is_clear(plan, 1.0, 1.0, 1.5, 1.0));
  EXPECT_FALSE(move_is_clear(plan, 1.0, 1.0, 0.55, 1.0));
  EXPECT_FALSE(move_is_clear(plan, 1.0, 1.0, 0.2, 1.0));
}

TEST(Replay, PosesExactAndLighting) {
  const auto& plan = default_plan();
  const auto t = random_walk(plan, 50, MotionParams{}, 9);
  const auto pal = default_lighting_palette();
  const auto frames = replay(plan, t, FixedLighting{0}, pal, 16, 16);
  ASSERT_EQ(frames.size(), 50u);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(frames[i].step, t.points[i].step);
    EXPECT_EQ(frames[i].pose, t.points[i].pose);
    EXPECT_EQ(frames[i].lighting_id, 0);
    EXPECT_EQ(frames[i].image.width, 16);
  }
  const auto u1 = replay(plan, t, UniformLighting{4, {}}, pal, 8, 8);
  const auto u2 = replay(plan, t, UniformLighting{4, {}}, pal, 8, 8);
  for (std::size_t i = 0; i < u1.size(); ++i) EXPECT_EQ(u1[i].lighting_id, u2[i].lighting_id);

  Trajectory bad = t;
  bad.points[10].pose = Pose(0.1, 0.1, kEyeHeight, 0);
  EXPECT_THROW(replay(plan, bad, FixedLighting{0}, pal, 8, 8), std::invalid_argument);
}

TEST(Lighting, UniformHistogramWithinThreeSigma) {
  const std::size_t n = 10000, k = 9;
  const auto ids = assign_lighting(UniformLighting{123, {}}, n, k);
  std::vector<std::size_t> counts(k, 0);
  for (int id : ids) counts.at(static_cast<std::size_t>(id))++;
  const double p = 1.0 / k;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (std::size_t c : counts) EXPECT_LE(std::abs(double(c) - n * p), 3 * sigma);
  const auto fixed = assign_lighting(FixedLighting{2}, 10, k);
  EXPECT_TRUE(std::all_of(fixed.begin(), fixed.end(), [](int v) { return v == 2; }));
  EXPECT_THROW(assign_lighting(FixedLighting{9}, 10, k), std::invalid_argument);
}

TEST(ValidateTrajectory, RejectsBadRecords) {
  const auto plan = box_room(6, 6, 0.5);
  Trajectory t;
  t.points = {{0, Pose(1, 1, kEyeHeight, 0)}, {1, Pose(1.1, 1, kEyeHeight, 0)}};
  EXPECT_NO_THROW(validate_trajectory(plan, t, 0.1 + 1e-9));
  auto dup = t;
  dup.points[1].step = 0;
  EXPECT_THROW(validate_trajectory(plan, dup), std::invalid_argument);
  auto jump = t;
  jump.points[1].pose = Pose(2, 1, kEyeHeight, 0);
  EXPECT_THROW(validate_trajectory(plan, jump, 0.1), std::invalid_argument);
  EXPECT_NO_THROW(validate_trajectory(plan, jump));
  auto wall = t;
  wall.points[1].pose = Pose(0.2, 1, kEyeHeight, 0);
  EXPECT_THROW(validate_trajectory(plan, wall), std::invalid_argument);
}

TEST(Formats, PlanRoundTrip) {
  const auto dir = temp_dir("plan");
  const auto& plan = default_plan();
  save_plan(dir / "plan.json", plan);
  EXPECT_EQ(load_plan(dir / "plan.json"), plan);
  EXPECT_EQ(plan_from_json(plan_to_json(plan)), plan);
  EXPECT_EQ(plan_to_json(plan_from_json(plan_to_json(plan))), plan_to_json(plan));
  EXPECT_ANY_THROW(plan_from_json("{\"version\": 99}"));
}

TEST(Formats, TrajectoryRoundTripExact) {
  const auto dir = temp_dir("traj");
  Trajectory t = random_walk(default_plan(), 200, MotionParams{}, 13);
  t.points.push_back({t.points.back().step + 1, Pose(1.0 / 3.0, 2.0 / 7.0, kEyeHeight, 359.99999999999)});
  save_trajectory(dir / "t.csv", t);
  const auto back = load_trajectory(dir / "t.csv");
  EXPECT_EQ(back.points, t.points);
  const auto csv = trajectory_to_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,x,y,z,yaw");
  EXPECT_ANY_THROW(trajectory_from_csv("step,x,y\n0,1,2\n"));
  EXPECT_ANY_THROW(trajectory_from_csv("step,x,y,z,yaw\n0,1,2,abc,4\n"));
}

TEST(Formats, ManifestRoundTrip) {
  const auto dir = temp_dir("manifest");
  std::vector<ManifestRecord> recs = {
      {0, Pose(1.25, 2.5, 1.0, 90.0), 3, frame_filename(0), std::string("room_1")},
      {7, Pose(0.1 / 3.0, 2.0, 1.0, 12.345678901234567), 0, frame_filename(7), std::nullopt},
  };
  save_manifest(dir / "manifest.jsonl", recs);
  EXPECT_EQ(load_manifest(dir / "manifest.jsonl"), recs);
  EXPECT_EQ(frame_filename(42), "frame_000042.ppm");
}

TEST(Formats, PpmRoundTrip) {
  Image img(3, 2);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<std::uint8_t>(i * 13);
  const auto bytes = encode_ppm(img);
  EXPECT_EQ(bytes.substr(0, 2), "P6");
  EXPECT_EQ(decode_ppm(bytes), img);
}
