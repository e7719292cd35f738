#pragma once

#include "traels/atlis.hpp"
#include "traels/geo.hpp"
#include "traels/proprioception.hpp"
#include "traels/sensors.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace traels {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rgb = std::array<std::uint8_t, 3>;

struct BoxStructure {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Vector2d half_extent = Eigen::Vector2d::Ones();
  double yaw = 0.0;
  double height = 5.0;
  Rgb wall{150, 140, 130};
  Rgb roof{90, 80, 80};
};

struct CylinderStructure {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.3;
  double height = 6.0;
  Rgb wall{90, 70, 50};
  double canopy_radius = 0.0;  // overhead footprint, 0 for none
  Rgb canopy{40, 90, 40};
};

struct RoadSpec {
  std::vector<Eigen::Vector2d> polyline;
  double width = 4.0;
  Rgb color{110, 105, 100};
};

/// Region filled with random buildings and trees at generation time.
struct ClusterSpec {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 50.0;
  int buildings = 0;
  int trees = 0;
};

/// Disc where the ground texture contrast is raised to `contrast`.
struct ContrastZone {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 50.0;
  double contrast = 1.0;
};

struct TextureSpec {
  Rgb base{120, 110, 90};
  Rgb alternate{60, 90, 50};
  double contrast = 0.5;  // blend amplitude in [0, 1]
  std::vector<double> scales{2.0, 7.0, 25.0};  // value-noise wavelengths, m
  std::vector<ContrastZone> zones;
};

struct WorldSpec {
  std::string name = "custom";
  Eigen::Vector2d min_corner{-50.0, -50.0};
  Eigen::Vector2d max_corner{50.0, 50.0};
  double hill_amplitude = 0.0;    // m
  double hill_wavelength = 80.0;  // m
  TextureSpec texture;
  std::vector<RoadSpec> roads;
  std::vector<ClusterSpec> clusters;
  std::vector<BoxStructure> boxes;
  std::vector<CylinderStructure> cylinders;
  std::vector<std::vector<Eigen::Vector2d>> clear_paths;  // kept free of generated structures
  double clearance = 5.0;
};

/// Region modification applied when rendering a stale a priori map.
struct RegionEdit {
  Eigen::Vector2d min_corner = Eigen::Vector2d::Zero();
  Eigen::Vector2d max_corner = Eigen::Vector2d::Zero();
  std::optional<Rgb> recolor;
  double raise = 0.0;
  bool remove_structures = false;
};

class WorldModel {
 public:
  WorldModel() = default;
  WorldModel(WorldSpec spec, std::uint64_t seed);

  const WorldSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<BoxStructure>& boxes() const { return boxes_; }
  const std::vector<CylinderStructure>& cylinders() const { return cylinders_; }
  const std::vector<RegionEdit>& edits() const { return edits_; }

  bool contains(const Eigen::Vector2d& xy) const;
  double elevation(double x, double y) const;
  Eigen::Vector2d elevation_gradient(double x, double y) const;
  Rgb ground_color(double x, double y) const;
  /// Top-down appearance: roofs and canopies over ground.
  Rgb overhead_color(double x, double y) const;
  /// True when the point lies inside a structure footprint.
  bool occupied(const Eigen::Vector2d& xy) const;

  struct Hit {
    double range = 0.0;
    double height = 0.0;
    Rgb color{};
  };
  /// Nearest vertical surface along a horizontal ray.
  std::optional<Hit> raycast(const Eigen::Vector2d& origin, const Eigen::Vector2d& direction, double max_range) const;
  std::optional<Hit> raycast(const Eigen::Vector2d& origin, const Eigen::Vector2d& direction, double max_range,
                             const std::vector<int>& box_ids, const std::vector<int>& cylinder_ids) const;
  /// Indices of structures within `radius` of `xy`.
  void nearby(const Eigen::Vector2d& xy, double radius, std::vector<int>& box_ids,
              std::vector<int>& cylinder_ids) const;

  WorldModel with_edits(const std::vector<RegionEdit>& edits) const;

 private:
  double texture_value(double x, double y) const;
  double contrast_at(double x, double y) const;

  WorldSpec spec_;
  std::uint64_t seed_ = 0;
  std::vector<BoxStructure> boxes_;
  std::vector<CylinderStructure> cylinders_;
  std::vector<RegionEdit> edits_;
  std::array<double, 6> hill_params_{};
};

WorldModel generate_world(const WorldSpec& spec, std::uint64_t seed);

struct ImuModel {
  Eigen::Vector3d mount_rpy = Eigen::Vector3d::Zero();  // IMU -> vehicle
  double accel_noise = 0.02;   // m/s^2 per sample
  double gyro_noise = 0.001;   // rad/s per sample
  Eigen::Vector3d accel_bias = Eigen::Vector3d::Zero();
  Eigen::Vector3d gyro_bias = Eigen::Vector3d::Zero();
};

struct InsModel {
  double heading_bias = 0.0;     // rad, measured yaw = true yaw - bias
  double attitude_noise = 0.0005;
  double rate_noise = 0.001;
};

struct SlipEpisode {
  double start = 0.0;
  double duration = 0.0;
  double ratio = 1.0;
};

struct EncoderModel {
  double scale_error = 0.0;  // reported / true - 1
  double noise = 0.01;       // m/s per sample
  std::vector<SlipEpisode> slips;
};

struct ScanModel {
  bool enabled = true;
  double rate = 2.0;
  double max_range = 40.0;
  double sensor_height = 1.5;
  int azimuth_steps = 180;
  int beams = 16;
  double min_elevation = -0.2617993877991494;
  double max_elevation = 0.2617993877991494;
  double range_noise = 0.02;
  double color_noise = 6.0;
  double patch_radius = 6.0;
  double patch_spacing = 0.3;
};

struct SensorSuite {
  double rate = 100.0;
  std::array<ImuModel, 4> imus{};
  InsModel ins;
  EncoderModel encoder;
  ScanModel scan;
};

struct Dwell {
  std::size_t waypoint = 0;
  double duration = 0.0;
};

struct TrajectoryPlan {
  std::vector<Eigen::Vector2d> waypoints;
  double cruise_speed = 2.0;
  double acceleration = 0.5;
  double lookahead = 4.0;
  double max_yaw_rate = 0.6;
  std::vector<Dwell> dwells;
  double max_duration = 3600.0;
};

struct StalenessSpec {
  std::vector<RegionEdit> edits;
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
};

struct Scenario {
  std::string name = "custom";
  WorldSpec world;
  SensorSuite sensors;
  TrajectoryPlan plan;
  StalenessSpec staleness;
  std::uint64_t seed = 1;
  double apriori_cell = 0.3;
  double cloud_spacing = 0.4;
  double cloud_margin = 60.0;  // cloud limited to this distance from the route
  bool render_apriori = true;
};

struct TruthSample {
  double stamp = 0.0;
  Pose6D pose;
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();          // vehicle frame
  Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();  // vehicle frame
  Eigen::Vector3d acceleration = Eigen::Vector3d::Zero();      // d(velocity)/dt
  double odometer = 0.0;
};

struct SensorLog {
  std::vector<TruthSample> truth;
  std::array<std::vector<ImuSample>, 4> imu;
  std::vector<InsSample> ins;
  std::vector<WheelOdom> wheel;
  std::vector<Scan> scans;
};

struct AprioriMap {
  RasterPatch color;
  std::vector<Eigen::Vector3d> cloud;
  // Elevation grid on the color raster's lattice, row-major.
  std::vector<float> elevation;
  int elevation_rows = 0;
  int elevation_cols = 0;
  double elevation_cell = 1.0;
  Eigen::Vector2d elevation_origin = Eigen::Vector2d::Zero();
};

struct SimulationResult {
  WorldModel world;
  SensorLog log;
  AprioriMap apriori;
};

/// Pure-pursuit kinematic trajectory sampled at `rate`.
std::vector<TruthSample> generate_trajectory(const TrajectoryPlan& plan, const WorldModel& world, double rate);

/// Full simulation: truth, sensor streams and a priori products.
SimulationResult simulate(const Scenario& scenario);

/// Renders a priori products from `world` with edits applied and shifted
/// by the global offset.
AprioriMap stale_apriori(const WorldModel& world, const StalenessSpec& staleness, double cell,
                         double cloud_spacing, const std::vector<Eigen::Vector2d>& route = {},
                         double cloud_margin = 0.0);

/// Ground-perspective scan at a truth pose, in the vehicle frame.
Scan simulate_scan(const WorldModel& world, const Pose6D& pose, double stamp, const ScanModel& model,
                   std::uint64_t seed);

/// Calibration drive: one straight segment, then a turn in place.
std::vector<CalibrationRow> simulate_calibration_drive(const ImuModel& imu, double wheel_scale_error,
                                                       double straight_length, double rotation,
                                                       std::uint64_t seed);

std::vector<std::string> preset_names();
/// desert, forest, lake, urban.
Scenario make_preset(std::string_view name, std::uint64_t seed);

}  // namespace traels
