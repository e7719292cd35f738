#pragma once

#include "traels/geo.hpp"
#include "traels/sensors.hpp"
#include "traels/trn.hpp"

#include <Eigen/Core>

#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace traels {

class AtlisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Overhead color grid. Cell (row, col) covers
/// [origin + (col, row) * cell_size, origin + (col + 1, row + 1) * cell_size).
struct RasterPatch {
  double cell_size = 0.3;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  int rows = 0;
  int cols = 0;
  std::vector<Eigen::Vector3f> color;  // row-major
  std::vector<std::uint8_t> valid;

  RasterPatch() = default;
  RasterPatch(int rows, int cols, double cell_size, const Eigen::Vector2d& origin);

  std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * cols + col; }
  bool is_valid(int row, int col) const { return valid[index(row, col)] != 0; }
  Eigen::Vector2d cell_center(int row, int col) const;
  std::size_t valid_count() const;
  double valid_fraction() const;
  double extent() const { return cell_size * std::max(rows, cols); }
};

/// NCC scores over integer cell offsets. Score (row, col) corresponds to the
/// displacement origin + (col, row) * cell_size; excluded offsets hold -inf.
struct CorrelationSurface {
  int rows = 0;
  int cols = 0;
  double cell_size = 0.3;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  Eigen::Vector2d reference = Eigen::Vector2d::Zero();  // added to displacements by weighted_fix
  std::vector<double> scores;

  double& at(int row, int col) { return scores[static_cast<std::size_t>(row) * cols + col]; }
  double at(int row, int col) const { return scores[static_cast<std::size_t>(row) * cols + col]; }
  Eigen::Vector2d displacement(int row, int col) const { return origin + Eigen::Vector2d(col, row) * cell_size; }
  double peak() const;
};

struct AtlisConfig {
  double cell_size = 0.3;
  double k_sigma = 3.0;
  double min_window = 2.0;    // m, search half-width floor
  double max_window = 1e9;    // m, search half-width cap
  double accept_threshold = 0.5;
  double weight_power = 8.0;
  double min_overlap = 0.5;   // of template valid cells
  double min_valid_fraction = 0.05;
  double truncated_variance = 1e4;  // m^2 added along the major axis when accepted offsets reach the window edge
};

/// Mean color per cell. The grid is aligned so that cell corners fall on
/// `alignment` + integer multiples of the cell size.
RasterPatch rasterize(std::span<const ColorPoint> points, double cell_size,
                      const Eigen::Vector2d& alignment = Eigen::Vector2d::Zero());

/// k_sigma * sqrt(max eig(cov_xy)) + extent / 2, clamped.
double search_window(const Eigen::Matrix2d& cov_xy, double template_extent, double k_sigma,
                     double min_window, double max_window);

/// Masked NCC of the template at every offset where it fits inside the map
/// patch. Channels are centered separately and pooled. Both patches must
/// share cell size and grid alignment.
CorrelationSurface ncc_match(const RasterPatch& templ, const RasterPatch& map_patch, double min_overlap = 0.5);

/// Weighted mean and second central moment of the offsets scoring at least
/// the acceptance threshold. Returns nothing when no offset qualifies.
std::optional<TrnFix> weighted_fix(const CorrelationSurface& surface, double stamp, const AtlisConfig& config = {});

/// Sub-grid of `map` covering [lo, hi]; cells outside the map are invalid.
RasterPatch crop(const RasterPatch& map, const Eigen::Vector2d& lo, const Eigen::Vector2d& hi);

/// Ground points accumulated over the most recent stretch of travel, kept
/// in the local frame.
class GroundBuffer {
 public:
  explicit GroundBuffer(double travel_window = 30.0, std::size_t max_points = 200000);

  void add(double odometer, std::vector<ColorPoint> local_points);
  /// Points mapped through the given local-to-global transform.
  std::vector<ColorPoint> snapshot(const Pose6D& local_to_global) const;
  std::size_t size() const;
  void clear() { chunks_.clear(); }

 private:
  struct Chunk {
    double odometer;
    std::vector<ColorPoint> points;
  };
  double travel_window_;
  std::size_t max_points_;
  std::deque<Chunk> chunks_;
};

/// Template matcher against a georeferenced color map.
class AtlisMatcher {
 public:
  AtlisMatcher(RasterPatch map, AtlisConfig config);

  /// `vehicle_xy` and `cov_xy` come from the global filter; the returned
  /// fix is the corrected vehicle position.
  std::optional<TrnFix> match(std::span<const ColorPoint> ground_points_global, const Eigen::Vector2d& vehicle_xy,
                              const Eigen::Matrix2d& cov_xy, double stamp) const;

  const RasterPatch& map() const { return map_; }
  const AtlisConfig& config() const { return config_; }

 private:
  RasterPatch map_;
  AtlisConfig config_;
};

}  // namespace traels
