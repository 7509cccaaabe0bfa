#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "eviplan/sim.hpp"

namespace eviplan::config {

/// Parse, schema, or invariant failure. Parse errors carry the line number;
/// invariant violations carry the offending key name.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class FieldKind { kUniform, kLowNoiseWall, kAxisGradient };

/// Recipe for the entropy field; kept alongside the scenario so a parsed
/// config can be serialized back to an equivalent document.
struct FieldSpec {
  FieldKind kind = FieldKind::kUniform;
  Vec3 room_min{-5.0, -5.0, 0.0};
  Vec3 room_max{5.0, 5.0, 3.0};
  int nx = 6;
  int ny = 6;
  int nz = 2;
  double lambda = 2.0;
  double alpha = 3.0;
  double sigma = 0.05;  // uniform field
  localize::Wall wall = localize::Wall::kXMin;
  double sigma_low = 0.02;
  double sigma_high = 0.15;
  double jitter_rel = 0.05;
  uint64_t field_seed = 7;
  int axis = 0;  // gradient field
  double sigma_min = 0.02;
  double sigma_max = 0.2;

  localize::EntropyField build() const;
};

/// A fully defaulted scenario document: everything the INI sections
/// [scenario], [camera], [planner], [weights], [localize] can express.
struct ScenarioSpec {
  std::string name = "scenario";
  double duration = 12.0;
  uint64_t seed = 1;
  int repeats = 1;
  planner::YawPolicy yaw_policy = planner::YawPolicy::kPerceptionAware;
  double constant_yaw = 0.0;
  double start_yaw = 0.0;
  std::vector<Vec3> waypoints;          // explicit route
  std::optional<sim::PathShape> path;   // or a generated one
  Vec3 path_center{0.0, 0.0, 1.5};
  double path_radius = 3.0;
  int path_points = 12;
  int pool_per_face = 250;
  FieldSpec field;

  double cam_width = 480.0;
  double cam_height = 480.0;
  double cam_cx = 240.0;
  double cam_cy = 240.0;
  double cam_pixel_size = 1.0 / 480.0;
  double cam_focal_length = 0.5;
  double cam_smoothing = 5.0;

  planner::PlannerConfig planner;
  sim::SensorConfig sensing;

  /// Builds and validates the runnable scenario.
  sim::Scenario to_scenario() const;
};

ScenarioSpec parse_text(const std::string& text);
ScenarioSpec parse_file(const std::string& path);

/// Canonical document with every key materialized; reparsing yields an
/// equivalent spec.
std::string serialize(const ScenarioSpec& spec);

uint64_t fnv1a(const std::string& data);

/// 16 hex digits over the canonical serialization.
std::string config_hash(const ScenarioSpec& spec);

/// Equality through canonical serialization.
bool equal(const ScenarioSpec& a, const ScenarioSpec& b);

}  // namespace eviplan::config
