#pragma once

#include "traels/atlis.hpp"
#include "traels/dual_estimator.hpp"
#include "traels/metrics.hpp"
#include "traels/orienteer.hpp"
#include "traels/proprioception.hpp"
#include "traels/simworld.hpp"
#include "traels/ybe.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace traels {

struct AtlisWorkerConfig {
  bool enabled = true;
  AtlisConfig matcher;
  double interval = 5.0;         // m of travel between matches
  double ground_height = 0.5;    // |z| in the vehicle frame
  double ground_range = 8.0;     // m
  double buffer_travel = 30.0;   // m
  std::size_t buffer_points = 200000;
};

struct OrienteerWorkerConfig {
  bool enabled = true;
  double cell_size = 1.0;
  NdtConfig ndt;
  CovarianceScaling scaling;
  std::size_t score_window = 10;
  double interval = 2.0;            // m of travel between matches
  double min_height = 0.5;          // scan points at or below are treated as ground
  std::size_t min_points = 200;     // above-ground points needed to register
  double max_prior_sigma = 3.0;     // m, skip matching beyond the basin
  double min_information = 3.0;     // per-point curvature below which a horizontal direction is left free
  double free_variance = 1e4;       // m^2 assigned along such a direction
  std::vector<int> mask{0, 1, 5};   // pose components fused (x, y, yaw)
};

struct PipelineConfig {
  LocalFilterConfig local;
  GlobalFilterConfig global;
  SlipPolicy slip;
  WheelNoiseModel wheel;
  double wheel_scale = 1.0;
  ImuNoise imu_noise;
  InsNoise ins_noise;
  InsNoise global_ins_noise;
  bool global_orientation = true;  // fuse corrected INS attitude into G
  YbeConfig ybe;
  AtlisWorkerConfig atlis;
  OrienteerWorkerConfig orienteer;
  int global_divider = 10;  // local cycles per global cycle
  Eigen::Matrix<double, 15, 1> initial_sigma = Eigen::Matrix<double, 15, 1>::Constant(0.01);
  bool parallel_workers = false;
};

PipelineConfig default_pipeline_config();

struct FixRecord {
  TrnFix fix;
  bool fused = false;
};

struct RunOutput {
  std::vector<StateEstimate> local;   // at the global rate
  std::vector<StateEstimate> global;
  std::vector<FixRecord> fixes;
  std::vector<std::pair<double, double>> yaw_bias;  // (stamp, correction)
  std::vector<YawBiasSample> ybe_samples;
  std::size_t atlis_attempts = 0;
  std::size_t orienteer_attempts = 0;
  std::size_t orienteer_rejected = 0;
  std::size_t continuity_violations = 0;
  std::size_t dropped = 0;
};

/// Mount rotations from the scenario's IMU models.
std::array<Eigen::Matrix3d, 4> imu_mounts(const SensorSuite& sensors);

/// Deterministic replay of a sensor log through the dual estimator and TRN
/// workers. `apriori` may be null when TRN is disabled. `external_fixes`,
/// sorted by stamp, are fused at the first global cycle at or after their stamp.
RunOutput run_pipeline(const SensorLog& log, const AprioriMap* apriori, const std::array<Eigen::Matrix3d, 4>& mounts,
                       const PipelineConfig& config, std::span<const TrnFix> external_fixes = {});

Trajectory truth_trajectory(const std::vector<TruthSample>& truth);
Trajectory estimate_trajectory(const std::vector<StateEstimate>& states);

}  // namespace traels
