#include "traels/atlis.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>

#include <fftw3.h>

namespace traels {

RasterPatch::RasterPatch(int rows_, int cols_, double cell_size_, const Eigen::Vector2d& origin_)
    : cell_size(cell_size_), origin(origin_), rows(rows_), cols(cols_) {
  if (!(cell_size > 0.0)) throw AtlisError("cell size must be positive");
  if (rows < 0 || cols < 0) throw AtlisError("negative raster dimensions");
  const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  color.assign(n, Eigen::Vector3f::Zero());
  valid.assign(n, 0);
}

Eigen::Vector2d RasterPatch::cell_center(int row, int col) const {
  return origin + Eigen::Vector2d(col + 0.5, row + 0.5) * cell_size;
}

std::size_t RasterPatch::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

double RasterPatch::valid_fraction() const {
  return valid.empty() ? 0.0 : static_cast<double>(valid_count()) / static_cast<double>(valid.size());
}

double CorrelationSurface::peak() const {
  double best = -std::numeric_limits<double>::infinity();
  for (double s : scores) best = std::max(best, s);
  return best;
}

RasterPatch rasterize(std::span<const ColorPoint> points, double cell_size, const Eigen::Vector2d& alignment) {
  if (points.empty()) throw AtlisError("cannot rasterize an empty point buffer");
  if (!(cell_size > 0.0)) throw AtlisError("cell size must be positive");
  Eigen::Vector2d lo = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector2d hi = -lo;
  for (const auto& p : points) {
    const Eigen::Vector2d xy = p.position.head<2>().cast<double>();
    lo = lo.cwiseMin(xy);
    hi = hi.cwiseMax(xy);
  }
  const Eigen::Vector2d first = ((lo - alignment) / cell_size).array().floor();
  const Eigen::Vector2d last = ((hi - alignment) / cell_size).array().floor();
  const int cols = static_cast<int>(last.x() - first.x()) + 1;
  const int rows = static_cast<int>(last.y() - first.y()) + 1;
  RasterPatch patch(rows, cols, cell_size, alignment + first * cell_size);

  std::vector<Eigen::Vector3d> sum(patch.color.size(), Eigen::Vector3d::Zero());
  std::vector<int> count(patch.color.size(), 0);
  for (const auto& p : points) {
    const Eigen::Vector2d cell = ((p.position.head<2>().cast<double>() - alignment) / cell_size).array().floor();
    const int c = std::clamp(static_cast<int>(cell.x() - first.x()), 0, cols - 1);
    const int r = std::clamp(static_cast<int>(cell.y() - first.y()), 0, rows - 1);
    const std::size_t i = patch.index(r, c);
    sum[i] += Eigen::Vector3d(p.rgb[0], p.rgb[1], p.rgb[2]);
    ++count[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    if (count[i] == 0) continue;
    patch.color[i] = (sum[i] / count[i]).cast<float>();
    patch.valid[i] = 1;
  }
  return patch;
}

double search_window(const Eigen::Matrix2d& cov_xy, double template_extent, double k_sigma, double min_window,
                     double max_window) {
  const Eigen::Matrix2d sym = 0.5 * (cov_xy + cov_xy.transpose());
  const double lambda = std::max(0.0, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(sym).eigenvalues().maxCoeff());
  const double half = k_sigma * std::sqrt(lambda) + 0.5 * template_extent;
  return std::clamp(half, min_window, std::max(min_window, max_window));
}

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Circular cross-correlation of zero-padded real grids on a rows x cols
// lattice, done in the frequency domain.
class Correlator {
 public:
  Correlator(int rows, int cols) : rows_(rows), cols_(cols), half_(cols / 2 + 1) {
    real_ = fftw_alloc_real(size());
    spec_ = fftw_alloc_complex(spectrum_size());
    std::lock_guard<std::mutex> lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_2d(rows_, cols_, real_, spec_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_2d(rows_, cols_, spec_, real_, FFTW_ESTIMATE);
  }
  ~Correlator() {
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      fftw_destroy_plan(forward_);
      fftw_destroy_plan(inverse_);
    }
    fftw_free(real_);
    fftw_free(spec_);
  }
  Correlator(const Correlator&) = delete;
  Correlator& operator=(const Correlator&) = delete;

  std::size_t size() const { return static_cast<std::size_t>(rows_) * cols_; }
  std::size_t spectrum_size() const { return static_cast<std::size_t>(rows_) * half_; }

  // Spectrum of a grid given on `r` x `c` cells placed at the lattice origin.
  std::vector<std::complex<double>> spectrum(const std::vector<double>& grid, int r, int c) {
    std::fill(real_, real_ + size(), 0.0);
    for (int y = 0; y < r; ++y) {
      for (int x = 0; x < c; ++x) real_[static_cast<std::size_t>(y) * cols_ + x] = grid[static_cast<std::size_t>(y) * c + x];
    }
    fftw_execute(forward_);
    std::vector<std::complex<double>> out(spectrum_size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = {spec_[k][0], spec_[k][1]};
    return out;
  }

  // out(y, x) = sum_j a(j) * b(j + (y, x)), given the spectra of a and b.
  void correlate(std::initializer_list<std::pair<const std::vector<std::complex<double>>*,
                                                 const std::vector<std::complex<double>>*>> terms,
                 std::vector<double>& out) {
    for (std::size_t k = 0; k < spectrum_size(); ++k) {
      std::complex<double> acc = 0.0;
      for (const auto& [a, b] : terms) acc += std::conj((*a)[k]) * (*b)[k];
      spec_[k][0] = acc.real();
      spec_[k][1] = acc.imag();
    }
    fftw_execute(inverse_);
    out.assign(real_, real_ + size());
    const double scale = 1.0 / static_cast<double>(size());
    for (double& v : out) v *= scale;
  }

  int cols() const { return cols_; }

 private:
  int rows_, cols_, half_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace

CorrelationSurface ncc_match(const RasterPatch& templ, const RasterPatch& map_patch, double min_overlap) {
  if (std::abs(templ.cell_size - map_patch.cell_size) > 1e-9 * templ.cell_size) {
    throw AtlisError("template and map cell sizes differ");
  }
  if (templ.rows > map_patch.rows || templ.cols > map_patch.cols || templ.rows == 0 || templ.cols == 0) {
    throw AtlisError("template does not fit inside the map patch");
  }

  // Per-channel centering of both sides leaves the score unchanged and keeps
  // the frequency-domain sums well conditioned.
  const std::size_t tn = static_cast<std::size_t>(templ.rows) * templ.cols;
  std::vector<double> tv(tn, 0.0), tt(tn, 0.0);
  std::array<std::vector<double>, 3> t;
  for (auto& ch : t) ch.assign(tn, 0.0);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  std::size_t count = 0;
  for (std::size_t i = 0; i < tn; ++i) {
    if (!templ.valid[i]) continue;
    mean += templ.color[i].cast<double>();
    ++count;
  }
  if (count == 0) throw AtlisError("template has no valid cells");
  mean /= static_cast<double>(count);
  double spread = 0.0;
  for (std::size_t i = 0; i < tn; ++i) {
    if (!templ.valid[i]) continue;
    const Eigen::Vector3d v = templ.color[i].cast<double>() - mean;
    tv[i] = 1.0;
    for (int c = 0; c < 3; ++c) t[c][i] = v[c];
    tt[i] = v.squaredNorm();
    spread += tt[i];
  }
  if (!(spread > 1e-9 * static_cast<double>(count))) throw AtlisError("template has zero color variance");

  const std::size_t mn = static_cast<std::size_t>(map_patch.rows) * map_patch.cols;
  Eigen::Vector3d map_mean = Eigen::Vector3d::Zero();
  std::size_t map_count = 0;
  for (std::size_t i = 0; i < mn; ++i) {
    if (!map_patch.valid[i]) continue;
    map_mean += map_patch.color[i].cast<double>();
    ++map_count;
  }
  if (map_count > 0) map_mean /= static_cast<double>(map_count);
  std::vector<double> mv(mn, 0.0), mm(mn, 0.0);
  std::array<std::vector<double>, 3> m;
  for (auto& ch : m) ch.assign(mn, 0.0);
  for (std::size_t i = 0; i < mn; ++i) {
    if (!map_patch.valid[i]) continue;
    const Eigen::Vector3d v = map_patch.color[i].cast<double>() - map_mean;
    mv[i] = 1.0;
    for (int c = 0; c < 3; ++c) m[c][i] = v[c];
    mm[i] = v.squaredNorm();
  }

  CorrelationSurface surface;
  surface.rows = map_patch.rows - templ.rows + 1;
  surface.cols = map_patch.cols - templ.cols + 1;
  surface.cell_size = templ.cell_size;
  surface.origin = map_patch.origin - templ.origin;
  surface.scores.assign(static_cast<std::size_t>(surface.rows) * surface.cols,
                        -std::numeric_limits<double>::infinity());

  Correlator fft(map_patch.rows, map_patch.cols);
  const int tr = templ.rows, tc = templ.cols, mr = map_patch.rows, mc = map_patch.cols;
  const auto f_tv = fft.spectrum(tv, tr, tc), f_tt = fft.spectrum(tt, tr, tc);
  const auto f_t0 = fft.spectrum(t[0], tr, tc), f_t1 = fft.spectrum(t[1], tr, tc), f_t2 = fft.spectrum(t[2], tr, tc);
  const auto f_mv = fft.spectrum(mv, mr, mc), f_mm = fft.spectrum(mm, mr, mc);
  const auto f_m0 = fft.spectrum(m[0], mr, mc), f_m1 = fft.spectrum(m[1], mr, mc), f_m2 = fft.spectrum(m[2], mr, mc);

  std::vector<double> n, st0, st1, st2, stt, sm0, sm1, sm2, smm, stm;
  fft.correlate({{&f_tv, &f_mv}}, n);
  fft.correlate({{&f_t0, &f_mv}}, st0);
  fft.correlate({{&f_t1, &f_mv}}, st1);
  fft.correlate({{&f_t2, &f_mv}}, st2);
  fft.correlate({{&f_tt, &f_mv}}, stt);
  fft.correlate({{&f_tv, &f_m0}}, sm0);
  fft.correlate({{&f_tv, &f_m1}}, sm1);
  fft.correlate({{&f_tv, &f_m2}}, sm2);
  fft.correlate({{&f_tv, &f_mm}}, smm);
  fft.correlate({{&f_t0, &f_m0}, {&f_t1, &f_m1}, {&f_t2, &f_m2}}, stm);

  const double needed = min_overlap * static_cast<double>(count);
  for (int oy = 0; oy < surface.rows; ++oy) {
    for (int ox = 0; ox < surface.cols; ++ox) {
      const std::size_t i = static_cast<std::size_t>(oy) * fft.cols() + ox;
      const double k = std::round(n[i]);
      if (k < needed || k == 0.0) continue;
      const double vt = stt[i] - (st0[i] * st0[i] + st1[i] * st1[i] + st2[i] * st2[i]) / k;
      const double vm = smm[i] - (sm0[i] * sm0[i] + sm1[i] * sm1[i] + sm2[i] * sm2[i]) / k;
      double score = 0.0;
      if (vt > 1e-9 * k && vm > 1e-9 * k) {
        score = (stm[i] - (st0[i] * sm0[i] + st1[i] * sm1[i] + st2[i] * sm2[i]) / k) / std::sqrt(vt * vm);
      }
      surface.at(oy, ox) = std::clamp(score, -1.0, 1.0);
    }
  }
  return surface;
}

std::optional<TrnFix> weighted_fix(const CorrelationSurface& surface, double stamp, const AtlisConfig& config) {
  double total = 0.0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  double peak = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < surface.rows; ++r) {
    for (int c = 0; c < surface.cols; ++c) {
      const double s = surface.at(r, c);
      peak = std::max(peak, s);
      if (!(s >= config.accept_threshold)) continue;
      const double w = std::pow(std::max(s, 0.0), config.weight_power);
      total += w;
      mean += w * surface.displacement(r, c);
    }
  }
  if (!(total > 0.0)) return std::nullopt;
  mean /= total;

  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (int r = 0; r < surface.rows; ++r) {
    for (int c = 0; c < surface.cols; ++c) {
      const double s = surface.at(r, c);
      if (!(s >= config.accept_threshold)) continue;
      const double w = std::pow(std::max(s, 0.0), config.weight_power) / total;
      const Eigen::Vector2d d = surface.displacement(r, c) - mean;
      cov += w * d * d.transpose();
    }
  }
  const double floor = surface.cell_size * surface.cell_size / 12.0;
  cov(0, 0) = std::max(cov(0, 0), floor);
  cov(1, 1) = std::max(cov(1, 1), floor);

  TrnFix fix;
  fix.kind = FixKind::Position2D;
  fix.value = surface.reference + mean;
  fix.covariance = 0.5 * (cov + cov.transpose());
  fix.stamp = stamp;
  fix.quality.peak_score = peak;
  fix.source = "atlis";
  return fix;
}

RasterPatch crop(const RasterPatch& map, const Eigen::Vector2d& lo, const Eigen::Vector2d& hi) {
  const int c0 = static_cast<int>(std::floor((lo.x() - map.origin.x()) / map.cell_size));
  const int r0 = static_cast<int>(std::floor((lo.y() - map.origin.y()) / map.cell_size));
  const int c1 = static_cast<int>(std::floor((hi.x() - map.origin.x()) / map.cell_size));
  const int r1 = static_cast<int>(std::floor((hi.y() - map.origin.y()) / map.cell_size));
  RasterPatch out(std::max(0, r1 - r0 + 1), std::max(0, c1 - c0 + 1), map.cell_size,
                  map.origin + Eigen::Vector2d(c0, r0) * map.cell_size);
  for (int r = 0; r < out.rows; ++r) {
    const int mr = r + r0;
    if (mr < 0 || mr >= map.rows) continue;
    for (int c = 0; c < out.cols; ++c) {
      const int mc = c + c0;
      if (mc < 0 || mc >= map.cols) continue;
      const std::size_t src = map.index(mr, mc);
      out.color[out.index(r, c)] = map.color[src];
      out.valid[out.index(r, c)] = map.valid[src];
    }
  }
  return out;
}

GroundBuffer::GroundBuffer(double travel_window, std::size_t max_points)
    : travel_window_(travel_window), max_points_(max_points) {}

void GroundBuffer::add(double odometer, std::vector<ColorPoint> local_points) {
  chunks_.push_back({odometer, std::move(local_points)});
  while (!chunks_.empty() && chunks_.front().odometer < odometer - travel_window_) chunks_.pop_front();
}

std::size_t GroundBuffer::size() const {
  std::size_t n = 0;
  for (const auto& c : chunks_) n += c.points.size();
  return n;
}

std::vector<ColorPoint> GroundBuffer::snapshot(const Pose6D& local_to_global) const {
  const std::size_t total = size();
  const std::size_t stride = total > max_points_ ? (total + max_points_ - 1) / max_points_ : 1;
  const Eigen::Matrix3f rot = local_to_global.rotation().cast<float>();
  const Eigen::Vector3f trans = local_to_global.position.cast<float>();
  std::vector<ColorPoint> out;
  out.reserve(total / stride + 1);
  std::size_t k = 0;
  for (const auto& chunk : chunks_) {
    for (const auto& p : chunk.points) {
      if (k++ % stride != 0) continue;
      out.push_back({rot * p.position + trans, p.rgb});
    }
  }
  return out;
}

namespace {

bool touches_edge(const CorrelationSurface& surface, double threshold) {
  for (int r = 0; r < surface.rows; ++r) {
    const int step = (r == 0 || r == surface.rows - 1) ? 1 : std::max(1, surface.cols - 1);
    for (int c = 0; c < surface.cols; c += step) {
      if (surface.at(r, c) >= threshold) return true;
    }
  }
  return false;
}

}  // namespace

AtlisMatcher::AtlisMatcher(RasterPatch map, AtlisConfig config) : map_(std::move(map)), config_(config) {
  if (std::abs(map_.cell_size - config_.cell_size) > 1e-9) throw AtlisError("map resolution differs from config");
}

std::optional<TrnFix> AtlisMatcher::match(std::span<const ColorPoint> points, const Eigen::Vector2d& vehicle_xy,
                                          const Eigen::Matrix2d& cov_xy, double stamp) const {
  if (points.empty()) return std::nullopt;
  const RasterPatch templ = rasterize(points, config_.cell_size, map_.origin);
  if (templ.valid_fraction() < config_.min_valid_fraction) return std::nullopt;

  const double extent = templ.extent();
  const double half = search_window(cov_xy, extent, config_.k_sigma, config_.min_window, config_.max_window);
  const double reach = std::max(half - 0.5 * extent, config_.cell_size);
  const Eigen::Vector2d size(templ.cols * templ.cell_size, templ.rows * templ.cell_size);
  const Eigen::Vector2d lo = templ.origin - Eigen::Vector2d::Constant(reach);
  const Eigen::Vector2d hi = templ.origin + size + Eigen::Vector2d::Constant(reach - 1e-6);
  const RasterPatch patch = crop(map_, lo, hi);

  CorrelationSurface surface;
  try {
    surface = ncc_match(templ, patch, config_.min_overlap);
  } catch (const AtlisError&) {
    return std::nullopt;
  }
  surface.reference = vehicle_xy;
  auto fix = weighted_fix(surface, stamp, config_);
  if (!fix) return fix;
  fix->quality.search_radius = half;
  if (config_.truncated_variance > 0.0 && touches_edge(surface, config_.accept_threshold)) {
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(fix->covariance);
    const Eigen::Vector2d major = es.eigenvectors().col(1);
    fix->covariance += config_.truncated_variance * major * major.transpose();
  }
  return fix;
}

}  // namespace traels
