#include "traels/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace traels {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix(seed ^ splitmix(stream)); }

double lattice(std::int64_t i, std::int64_t j, std::uint64_t seed) {
  const std::uint64_t h = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(i) * 0x632be59bd9b4e019ULL ^
                                                   static_cast<std::uint64_t>(j)));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto i = static_cast<std::int64_t>(fx);
  const auto j = static_cast<std::int64_t>(fy);
  const double tx = smooth(x - fx), ty = smooth(y - fy);
  const double a = lattice(i, j, seed), b = lattice(i + 1, j, seed);
  const double c = lattice(i, j + 1, seed), d = lattice(i + 1, j + 1, seed);
  return (a + (b - a) * tx) * (1.0 - ty) + (c + (d - c) * tx) * ty;
}

double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - p).norm();
}

double polyline_distance(const Eigen::Vector2d& p, const std::vector<Eigen::Vector2d>& line) {
  if (line.empty()) return std::numeric_limits<double>::infinity();
  if (line.size() == 1) return (line[0] - p).norm();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < line.size(); ++i) best = std::min(best, segment_distance(p, line[i - 1], line[i]));
  return best;
}

bool in_region(const Eigen::Vector2d& p, const RegionEdit& e) {
  return p.x() >= e.min_corner.x() && p.x() <= e.max_corner.x() && p.y() >= e.min_corner.y() &&
         p.y() <= e.max_corner.y();
}

Rgb blend(const Rgb& a, const Rgb& b, double t) {
  Rgb out;
  for (int i = 0; i < 3; ++i) out[i] = static_cast<std::uint8_t>(std::clamp(std::lround(a[i] + (b[i] - a[i]) * t), 0L, 255L));
  return out;
}

Eigen::Vector2d box_local(const BoxStructure& box, const Eigen::Vector2d& p) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Eigen::Vector2d d = p - box.center;
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

bool inside_box(const BoxStructure& box, const Eigen::Vector2d& p) {
  const Eigen::Vector2d q = box_local(box, p);
  return std::abs(q.x()) <= box.half_extent.x() && std::abs(q.y()) <= box.half_extent.y();
}

}  // namespace

WorldModel::WorldModel(WorldSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  for (int i = 0; i < 2; ++i) {
    hill_params_[3 * i] = angle(rng);
    hill_params_[3 * i + 1] = angle(rng);
    hill_params_[3 * i + 2] = 0.7 + 0.6 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  }
  boxes_ = spec_.boxes;
  cylinders_ = spec_.cylinders;
}

bool WorldModel::contains(const Eigen::Vector2d& xy) const {
  return xy.x() >= spec_.min_corner.x() && xy.x() <= spec_.max_corner.x() && xy.y() >= spec_.min_corner.y() &&
         xy.y() <= spec_.max_corner.y();
}

double WorldModel::elevation(double x, double y) const {
  double z = 0.0;
  if (spec_.hill_amplitude != 0.0) {
    const double k = 2.0 * kPi / spec_.hill_wavelength;
    for (int i = 0; i < 2; ++i) {
      const double dir = hill_params_[3 * i];
      const double phase = hill_params_[3 * i + 1];
      const double scale = hill_params_[3 * i + 2];
      z += 0.5 * spec_.hill_amplitude * std::sin(k * scale * (std::cos(dir) * x + std::sin(dir) * y) + phase);
    }
  }
  const Eigen::Vector2d p(x, y);
  for (const auto& e : edits_) {
    if (in_region(p, e)) z += e.raise;
  }
  return z;
}

Eigen::Vector2d WorldModel::elevation_gradient(double x, double y) const {
  constexpr double h = 0.05;
  return {(elevation(x + h, y) - elevation(x - h, y)) / (2 * h), (elevation(x, y + h) - elevation(x, y - h)) / (2 * h)};
}

double WorldModel::texture_value(double x, double y) const {
  double sum = 0.0, weight = 0.0;
  const auto& scales = spec_.texture.scales;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const double w = 1.0 / static_cast<double>(i + 1);
    sum += w * value_noise(x / scales[i], y / scales[i], derive_seed(seed_, 100 + i));
    weight += w;
  }
  return weight > 0.0 ? sum / weight : 0.5;
}

double WorldModel::contrast_at(double x, double y) const {
  double c = spec_.texture.contrast;
  const Eigen::Vector2d p(x, y);
  for (const auto& z : spec_.texture.zones) {
    if ((p - z.center).norm() <= z.radius) c = std::max(c, z.contrast);
  }
  return c;
}

Rgb WorldModel::ground_color(double x, double y) const {
  const Eigen::Vector2d p(x, y);
  for (auto it = edits_.rbegin(); it != edits_.rend(); ++it) {
    if (it->recolor && in_region(p, *it)) return *it->recolor;
  }
  const double t = texture_value(x, y);
  const double c = contrast_at(x, y);
  const double mix = std::clamp(0.5 + 2.5 * c * (t - 0.5), 0.0, 1.0);
  Rgb color = blend(spec_.texture.base, spec_.texture.alternate, mix);
  for (const auto& road : spec_.roads) {
    if (polyline_distance(p, road.polyline) <= 0.5 * road.width) {
      color = blend(road.color, spec_.texture.base, 0.15 * c * (t - 0.5));
    }
  }
  return color;
}

Rgb WorldModel::overhead_color(double x, double y) const {
  const Eigen::Vector2d p(x, y);
  for (const auto& box : boxes_) {
    if (inside_box(box, p)) return box.roof;
  }
  for (const auto& cyl : cylinders_) {
    const double r = std::max(cyl.radius, cyl.canopy_radius);
    if ((p - cyl.center).norm() <= r) return cyl.canopy_radius > 0.0 ? cyl.canopy : cyl.wall;
  }
  return ground_color(x, y);
}

bool WorldModel::occupied(const Eigen::Vector2d& xy) const {
  for (const auto& box : boxes_) {
    if (inside_box(box, xy)) return true;
  }
  for (const auto& cyl : cylinders_) {
    if ((xy - cyl.center).norm() <= cyl.radius) return true;
  }
  return false;
}

void WorldModel::nearby(const Eigen::Vector2d& xy, double radius, std::vector<int>& box_ids,
                        std::vector<int>& cylinder_ids) const {
  box_ids.clear();
  cylinder_ids.clear();
  for (std::size_t i = 0; i < boxes_.size(); ++i) {
    if ((boxes_[i].center - xy).norm() <= radius + boxes_[i].half_extent.norm()) box_ids.push_back(static_cast<int>(i));
  }
  for (std::size_t i = 0; i < cylinders_.size(); ++i) {
    if ((cylinders_[i].center - xy).norm() <= radius + cylinders_[i].radius) {
      cylinder_ids.push_back(static_cast<int>(i));
    }
  }
}

std::optional<WorldModel::Hit> WorldModel::raycast(const Eigen::Vector2d& origin, const Eigen::Vector2d& direction,
                                                   double max_range) const {
  std::vector<int> b, c;
  nearby(origin, max_range, b, c);
  return raycast(origin, direction, max_range, b, c);
}

std::optional<WorldModel::Hit> WorldModel::raycast(const Eigen::Vector2d& origin, const Eigen::Vector2d& direction,
                                                   double max_range, const std::vector<int>& box_ids,
                                                   const std::vector<int>& cylinder_ids) const {
  std::optional<Hit> best;
  double best_t = max_range;
  for (int id : box_ids) {
    const BoxStructure& box = boxes_[id];
    const Eigen::Vector2d o = box_local(box, origin);
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const Eigen::Vector2d d(c * direction.x() + s * direction.y(), -s * direction.x() + c * direction.y());
    double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
    bool miss = false;
    for (int a = 0; a < 2; ++a) {
      if (std::abs(d[a]) < 1e-12) {
        if (std::abs(o[a]) > box.half_extent[a]) miss = true;
        continue;
      }
      double ta = (-box.half_extent[a] - o[a]) / d[a];
      double tb = (box.half_extent[a] - o[a]) / d[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
    if (miss || t0 > t1 || t0 <= 0.0 || t0 >= best_t) continue;
    best_t = t0;
    best = Hit{t0, box.height, box.wall};
  }
  for (int id : cylinder_ids) {
    const CylinderStructure& cyl = cylinders_[id];
    const Eigen::Vector2d oc = origin - cyl.center;
    const double b = oc.dot(direction);
    const double cc = oc.squaredNorm() - cyl.radius * cyl.radius;
    const double disc = b * b - cc;
    if (cc <= 0.0 || disc < 0.0) continue;
    const double t = -b - std::sqrt(disc);
    if (t <= 0.0 || t >= best_t) continue;
    best_t = t;
    best = Hit{t, cyl.height, cyl.wall};
  }
  return best;
}

WorldModel WorldModel::with_edits(const std::vector<RegionEdit>& edits) const {
  WorldModel out = *this;
  for (const auto& e : edits) {
    out.edits_.push_back(e);
    if (!e.remove_structures) continue;
    std::erase_if(out.boxes_, [&](const BoxStructure& b) { return in_region(b.center, e); });
    std::erase_if(out.cylinders_, [&](const CylinderStructure& c) { return in_region(c.center, e); });
  }
  return out;
}

WorldModel generate_world(const WorldSpec& spec, std::uint64_t seed) {
  if (!(spec.max_corner.x() > spec.min_corner.x()) || !(spec.max_corner.y() > spec.min_corner.y())) {
    throw SimulationError("world domain is empty");
  }
  WorldModel world(spec, seed);
  WorldSpec full = spec;

  auto clear_of_paths = [&](const Eigen::Vector2d& p, double radius) {
    for (const auto& path : spec.clear_paths) {
      if (polyline_distance(p, path) < radius + spec.clearance) return false;
    }
    for (const auto& road : spec.roads) {
      if (polyline_distance(p, road.polyline) < radius + 0.5 * road.width + 1.0) return false;
    }
    return true;
  };

  for (std::size_t ci = 0; ci < spec.clusters.size(); ++ci) {
    const ClusterSpec& cluster = spec.clusters[ci];
    const Eigen::Vector2d r = Eigen::Vector2d::Constant(cluster.radius);
    if (!world.contains(cluster.center - r) || !world.contains(cluster.center + r)) {
      throw SimulationError("domain too small for cluster " + std::to_string(ci));
    }
    std::mt19937_64 rng(derive_seed(seed, 1000 + ci));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto random_point = [&] {
      const double rad = cluster.radius * std::sqrt(unit(rng));
      const double ang = 2.0 * kPi * unit(rng);
      return Eigen::Vector2d(cluster.center + rad * Eigen::Vector2d(std::cos(ang), std::sin(ang)));
    };
    auto shade = [&](int lo, int hi) {
      return static_cast<std::uint8_t>(lo + static_cast<int>(unit(rng) * (hi - lo)));
    };

    int placed = 0;
    for (int attempt = 0; placed < cluster.buildings && attempt < 200 * std::max(1, cluster.buildings); ++attempt) {
      BoxStructure box;
      box.center = random_point();
      box.half_extent = {3.0 + 6.0 * unit(rng), 3.0 + 6.0 * unit(rng)};
      box.yaw = unit(rng) < 0.5 ? 0.0 : kPi * unit(rng);
      box.height = 4.0 + 8.0 * unit(rng);
      const std::uint8_t g = shade(110, 210);
      box.wall = {g, static_cast<std::uint8_t>(g - 10), static_cast<std::uint8_t>(g - 20)};
      box.roof = {shade(40, 200), shade(40, 120), shade(40, 120)};
      const double bound = box.half_extent.norm();
      const Eigen::Vector2d reach = Eigen::Vector2d::Constant(bound);
      if (!world.contains(box.center - reach) || !world.contains(box.center + reach)) continue;
      if (!clear_of_paths(box.center, bound)) continue;
      bool overlaps = false;
      for (const auto& other : full.boxes) {
        if ((other.center - box.center).norm() < bound + other.half_extent.norm() + 2.0) overlaps = true;
      }
      if (overlaps) continue;
      full.boxes.push_back(box);
      ++placed;
    }
    placed = 0;
    for (int attempt = 0; placed < cluster.trees && attempt < 50 * std::max(1, cluster.trees); ++attempt) {
      CylinderStructure tree;
      tree.center = random_point();
      tree.radius = 0.2 + 0.25 * unit(rng);
      tree.height = 4.0 + 6.0 * unit(rng);
      tree.canopy_radius = 1.5 + 2.0 * unit(rng);
      tree.wall = {shade(70, 110), shade(50, 80), shade(30, 50)};
      tree.canopy = {shade(20, 60), shade(70, 130), shade(20, 60)};
      if (!clear_of_paths(tree.center, tree.radius + 1.0)) continue;
      bool blocked = false;
      for (const auto& box : full.boxes) {
        if ((box.center - tree.center).norm() < box.half_extent.norm() + 1.0) blocked = true;
      }
      for (const auto& other : full.cylinders) {
        if ((other.center - tree.center).norm() < 2.0) blocked = true;
      }
      if (blocked) continue;
      full.cylinders.push_back(tree);
      ++placed;
    }
  }
  for (const auto& box : full.boxes) {
    const Eigen::Rotation2Dd rot(box.yaw);
    for (double sx : {-1.0, 1.0}) {
      for (double sy : {-1.0, 1.0}) {
        const Eigen::Vector2d corner = box.center + rot * box.half_extent.cwiseProduct(Eigen::Vector2d(sx, sy));
        if (!world.contains(corner)) throw SimulationError("structure footprint outside the world domain");
      }
    }
  }
  return WorldModel(full, seed);
}

std::vector<TruthSample> generate_trajectory(const TrajectoryPlan& plan, const WorldModel& world, double rate) {
  if (plan.waypoints.size() < 2) throw SimulationError("trajectory needs at least two waypoints");
  if (!(rate > 0.0) || !(plan.cruise_speed > 0.0) || !(plan.acceleration > 0.0)) {
    throw SimulationError("rate, cruise speed and acceleration must be positive");
  }
  const auto& wp = plan.waypoints;
  std::vector<double> cumulative(wp.size(), 0.0);
  for (std::size_t i = 1; i < wp.size(); ++i) cumulative[i] = cumulative[i - 1] + (wp[i] - wp[i - 1]).norm();
  const double total = cumulative.back();

  auto point_at = [&](double s) {
    s = std::clamp(s, 0.0, total);
    std::size_t i = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), s) - cumulative.begin());
    i = std::clamp<std::size_t>(i, 1, wp.size() - 1);
    const double seg = cumulative[i] - cumulative[i - 1];
    const double f = seg > 0.0 ? (s - cumulative[i - 1]) / seg : 0.0;
    return Eigen::Vector2d(wp[i - 1] + f * (wp[i] - wp[i - 1]));
  };
  auto project = [&](const Eigen::Vector2d& p, double hint) {
    double best_s = hint, best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < wp.size(); ++i) {
      if (cumulative[i] < hint - 1.0 || cumulative[i - 1] > hint + 10.0) continue;
      const Eigen::Vector2d ab = wp[i] - wp[i - 1];
      const double len2 = ab.squaredNorm();
      const double t = len2 > 0.0 ? std::clamp((p - wp[i - 1]).dot(ab) / len2, 0.0, 1.0) : 0.0;
      const double d = (wp[i - 1] + t * ab - p).norm();
      const double s = cumulative[i - 1] + t * std::sqrt(len2);
      if (d < best_d && s >= hint - 1.0) {
        best_d = d;
        best_s = s;
      }
    }
    return std::max(best_s, hint);
  };

  std::vector<double> stops;
  std::vector<double> stop_durations;
  for (const auto& d : plan.dwells) {
    if (d.waypoint >= wp.size()) throw SimulationError("dwell references a missing waypoint");
    stops.push_back(cumulative[d.waypoint]);
    stop_durations.push_back(d.duration);
  }

  const double dt = 1.0 / rate;
  Eigen::Vector2d xy = wp[0];
  const Eigen::Vector2d first_dir = (wp[1] - wp[0]).normalized();
  double yaw = std::atan2(first_dir.y(), first_dir.x());
  double v = 0.0;
  double s = 0.0;
  std::size_t next_stop = 0;
  double dwell_left = -1.0;

  struct Planar {
    double x, y, yaw, v;
  };
  std::vector<Planar> planar;
  const auto max_steps = static_cast<std::size_t>(plan.max_duration * rate);
  for (std::size_t k = 0; k < max_steps; ++k) {
    planar.push_back({xy.x(), xy.y(), yaw, v});
    s = project(xy, s);
    while (next_stop < stops.size() && stops[next_stop] < s - 0.5 && dwell_left < 0.0) ++next_stop;
    const double goal = next_stop < stops.size() ? stops[next_stop] : total;
    const double remaining = std::max(0.0, goal - s);

    if (dwell_left >= 0.0) {
      dwell_left -= dt;
      v = 0.0;
      if (dwell_left < 0.0) ++next_stop;
      continue;
    }
    if (remaining < 0.02 && v < 0.06) {
      if (next_stop < stops.size()) {
        dwell_left = stop_durations[next_stop];
        v = 0.0;
        continue;
      }
      break;
    }
    const double target = std::min(plan.cruise_speed, std::max(0.05, std::sqrt(2.0 * plan.acceleration * remaining)));
    const double dv = std::clamp(target - v, -plan.acceleration * dt, plan.acceleration * dt);
    const double v_next = v + dv;

    const Eigen::Vector2d look = point_at(std::min(s + plan.lookahead, goal));
    const Eigen::Vector2d to = look - xy;
    double yaw_rate = 0.0;
    if (to.norm() > 1e-6) {
      const double alpha = wrap_angle(std::atan2(to.y(), to.x()) - yaw);
      const double ld = std::max(to.norm(), 0.5);
      yaw_rate = std::clamp(v_next * 2.0 * std::sin(alpha) / ld, -plan.max_yaw_rate, plan.max_yaw_rate);
    }
    const double mid_yaw = yaw + 0.5 * yaw_rate * dt;
    const double mid_v = 0.5 * (v + v_next);
    xy += mid_v * dt * Eigen::Vector2d(std::cos(mid_yaw), std::sin(mid_yaw));
    yaw = wrap_angle(yaw + yaw_rate * dt);
    v = v_next;
  }

  // Lift onto the terrain and differentiate for body-frame rates.
  const std::size_t n = planar.size();
  std::vector<TruthSample> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& p = planar[k];
    if (!world.contains({p.x, p.y})) throw SimulationError("trajectory leaves the world domain");
    const Eigen::Vector2d g = world.elevation_gradient(p.x, p.y);
    const Eigen::Vector2d fwd(std::cos(p.yaw), std::sin(p.yaw));
    const Eigen::Vector2d left(-fwd.y(), fwd.x());
    const double pitch = -std::atan(g.dot(fwd));
    const double roll = std::atan(g.dot(left) * std::cos(pitch));
    out[k].stamp = static_cast<double>(k) * dt;
    out[k].pose = Pose6D::from_xyz_rpy(p.x, p.y, world.elevation(p.x, p.y), roll, pitch, p.yaw);
  }
  auto diff = [&](std::size_t k, auto getter) {
    const std::size_t a = k == 0 ? 0 : k - 1;
    const std::size_t b = k + 1 < n ? k + 1 : n - 1;
    if (a == b) return decltype(getter(0))(getter(a) * 0.0);
    return decltype(getter(0))((getter(b) - getter(a)) / (static_cast<double>(b - a) * dt));
  };
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Matrix3d r = out[k].pose.rotation();
    const Eigen::Vector3d vw = diff(k, [&](std::size_t i) -> Eigen::Vector3d { return out[i].pose.position; });
    out[k].velocity = r.transpose() * vw;
    const Eigen::Vector3d rpy_dot = diff(k, [&](std::size_t i) -> Eigen::Vector3d {
      Eigen::Vector3d d = out[i].pose.rpy - out[k].pose.rpy;
      for (int j = 0; j < 3; ++j) d[j] = wrap_angle(d[j]);
      return d;
    });
    const double sr = std::sin(out[k].pose.roll()), cr = std::cos(out[k].pose.roll());
    const double sp = std::sin(out[k].pose.pitch()), cp = std::cos(out[k].pose.pitch());
    out[k].angular_velocity = {rpy_dot.x() - sp * rpy_dot.z(), cr * rpy_dot.y() + sr * cp * rpy_dot.z(),
                               -sr * rpy_dot.y() + cr * cp * rpy_dot.z()};
    if (k > 0) out[k].odometer = out[k - 1].odometer + (out[k].pose.position - out[k - 1].pose.position).norm();
  }
  for (std::size_t k = 0; k < n; ++k) {
    out[k].acceleration = diff(k, [&](std::size_t i) -> Eigen::Vector3d { return out[i].velocity; });
  }
  return out;
}

Scan simulate_scan(const WorldModel& world, const Pose6D& pose, double stamp, const ScanModel& model,
                   std::uint64_t seed) {
  Scan scan;
  scan.stamp = stamp;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> range_noise(0.0, model.range_noise);
  std::normal_distribution<double> color_noise(0.0, model.color_noise);
  const Pose6D inv = inverse(pose);
  const Eigen::Vector2d origin = pose.position.head<2>();
  const double ground_z = pose.position.z();

  auto noisy_rgb = [&](const Rgb& c) {
    Rgb out;
    for (int i = 0; i < 3; ++i) {
      out[i] = static_cast<std::uint8_t>(std::clamp(std::lround(c[i] + color_noise(rng)), 0L, 255L));
    }
    return out;
  };
  auto emit = [&](const Eigen::Vector3d& world_point, const Rgb& color) {
    const Eigen::Vector3d jitter(range_noise(rng), range_noise(rng), range_noise(rng));
    const Eigen::Vector3d local = inv.transform_point(world_point + jitter);
    scan.points.push_back({local.cast<float>(), noisy_rgb(color)});
  };

  std::vector<int> box_ids, cyl_ids;
  world.nearby(origin, model.max_range, box_ids, cyl_ids);

  for (int a = 0; a < model.azimuth_steps; ++a) {
    const double az = pose.yaw() + 2.0 * kPi * a / model.azimuth_steps;
    const Eigen::Vector2d dir(std::cos(az), std::sin(az));
    const auto hit = world.raycast(origin, dir, model.max_range, box_ids, cyl_ids);
    for (int b = 0; b < model.beams; ++b) {
      const double el = model.beams == 1 ? 0.0
                                         : model.min_elevation + (model.max_elevation - model.min_elevation) * b /
                                                                     (model.beams - 1);
      double ground_range = std::numeric_limits<double>::infinity();
      if (el < 0.0) ground_range = model.sensor_height / std::tan(-el);
      if (hit && hit->range < ground_range) {
        const double z = model.sensor_height + hit->range * std::tan(el);
        if (z < 0.0 || z > hit->height) continue;
        const Eigen::Vector2d xy = origin + hit->range * dir;
        emit({xy.x(), xy.y(), ground_z + z}, hit->color);
      } else if (ground_range <= model.max_range) {
        const Eigen::Vector2d xy = origin + ground_range * dir;
        emit({xy.x(), xy.y(), world.elevation(xy.x(), xy.y())}, world.ground_color(xy.x(), xy.y()));
      }
    }
  }

  // Dense colorized ground around the vehicle, as seen by the cameras.
  const int steps = static_cast<int>(std::floor(model.patch_radius / model.patch_spacing));
  const Eigen::Matrix2d rot = Eigen::Rotation2Dd(pose.yaw()).toRotationMatrix();
  for (int i = -steps; i <= steps; ++i) {
    for (int j = -steps; j <= steps; ++j) {
      const Eigen::Vector2d offset(i * model.patch_spacing, j * model.patch_spacing);
      if (offset.norm() > model.patch_radius) continue;
      const Eigen::Vector2d xy = origin + rot * offset;
      bool blocked = false;
      for (int id : box_ids) blocked = blocked || inside_box(world.boxes()[id], xy);
      for (int id : cyl_ids) blocked = blocked || (xy - world.cylinders()[id].center).norm() <= world.cylinders()[id].radius;
      if (blocked) continue;
      emit({xy.x(), xy.y(), world.elevation(xy.x(), xy.y())}, world.ground_color(xy.x(), xy.y()));
    }
  }
  return scan;
}

AprioriMap stale_apriori(const WorldModel& fresh, const StalenessSpec& staleness, double cell, double cloud_spacing,
                         const std::vector<Eigen::Vector2d>& route, double cloud_margin) {
  const WorldModel world = fresh.with_edits(staleness.edits);
  const Eigen::Vector2d offset = staleness.offset;
  const WorldSpec& spec = world.spec();
  AprioriMap map;

  const int cols = static_cast<int>(std::ceil((spec.max_corner.x() - spec.min_corner.x()) / cell));
  const int rows = static_cast<int>(std::ceil((spec.max_corner.y() - spec.min_corner.y()) / cell));
  map.color = RasterPatch(rows, cols, cell, spec.min_corner + offset);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Eigen::Vector2d p = spec.min_corner + Eigen::Vector2d(c + 0.5, r + 0.5) * cell;
      const Rgb rgb = world.ground_color(p.x(), p.y());
      map.color.color[map.color.index(r, c)] = Eigen::Vector3f(rgb[0], rgb[1], rgb[2]);
      map.color.valid[map.color.index(r, c)] = 1;
    }
  }
  auto paint = [&](const Eigen::Vector2d& lo, const Eigen::Vector2d& hi, auto inside, const Rgb& rgb) {
    const int c0 = std::max(0, static_cast<int>(std::floor((lo.x() - spec.min_corner.x()) / cell)));
    const int r0 = std::max(0, static_cast<int>(std::floor((lo.y() - spec.min_corner.y()) / cell)));
    const int c1 = std::min(cols - 1, static_cast<int>(std::floor((hi.x() - spec.min_corner.x()) / cell)));
    const int r1 = std::min(rows - 1, static_cast<int>(std::floor((hi.y() - spec.min_corner.y()) / cell)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const Eigen::Vector2d p = spec.min_corner + Eigen::Vector2d(c + 0.5, r + 0.5) * cell;
        if (inside(p)) map.color.color[map.color.index(r, c)] = Eigen::Vector3f(rgb[0], rgb[1], rgb[2]);
      }
    }
  };
  for (const auto& cyl : world.cylinders()) {
    const double rad = std::max(cyl.radius, cyl.canopy_radius);
    const Eigen::Vector2d r = Eigen::Vector2d::Constant(rad);
    paint(cyl.center - r, cyl.center + r, [&](const Eigen::Vector2d& p) { return (p - cyl.center).norm() <= rad; },
          cyl.canopy_radius > 0.0 ? cyl.canopy : cyl.wall);
  }
  for (const auto& box : world.boxes()) {
    const Eigen::Vector2d r = Eigen::Vector2d::Constant(box.half_extent.norm());
    paint(box.center - r, box.center + r, [&](const Eigen::Vector2d& p) { return inside_box(box, p); }, box.roof);
  }

  map.elevation_cell = 1.0;
  map.elevation_origin = spec.min_corner + offset;
  map.elevation_cols = static_cast<int>(std::ceil(spec.max_corner.x() - spec.min_corner.x()));
  map.elevation_rows = static_cast<int>(std::ceil(spec.max_corner.y() - spec.min_corner.y()));
  map.elevation.resize(static_cast<std::size_t>(map.elevation_rows) * map.elevation_cols);
  for (int r = 0; r < map.elevation_rows; ++r) {
    for (int c = 0; c < map.elevation_cols; ++c) {
      map.elevation[static_cast<std::size_t>(r) * map.elevation_cols + c] = static_cast<float>(
          world.elevation(spec.min_corner.x() + c + 0.5, spec.min_corner.y() + r + 0.5));
    }
  }

  // Point cloud: ground lattice plus vertical faces, no roofs.
  auto near_route = [&](const Eigen::Vector2d& p, double pad) {
    return route.empty() || cloud_margin <= 0.0 || polyline_distance(p, route) <= cloud_margin + pad;
  };
  const Eigen::Vector3d shift(offset.x(), offset.y(), 0.0);
  const double half = 0.5 * cloud_spacing;
  for (double y = spec.min_corner.y() + half; y < spec.max_corner.y(); y += cloud_spacing) {
    for (double x = spec.min_corner.x() + half; x < spec.max_corner.x(); x += cloud_spacing) {
      const Eigen::Vector2d p(x, y);
      if (!near_route(p, 0.0) || world.occupied(p)) continue;
      map.cloud.push_back(Eigen::Vector3d(x, y, world.elevation(x, y)) + shift);
    }
  }
  const double face_step = 0.25;
  for (const auto& box : world.boxes()) {
    if (!near_route(box.center, box.half_extent.norm())) continue;
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const Eigen::Matrix2d rot = (Eigen::Matrix2d() << c, -s, s, c).finished();
    const double base = world.elevation(box.center.x(), box.center.y());
    const std::array<Eigen::Vector2d, 4> corners{Eigen::Vector2d(-box.half_extent.x(), -box.half_extent.y()),
                                                 Eigen::Vector2d(box.half_extent.x(), -box.half_extent.y()),
                                                 Eigen::Vector2d(box.half_extent.x(), box.half_extent.y()),
                                                 Eigen::Vector2d(-box.half_extent.x(), box.half_extent.y())};
    for (int e = 0; e < 4; ++e) {
      const Eigen::Vector2d a = box.center + rot * corners[e];
      const Eigen::Vector2d b = box.center + rot * corners[(e + 1) % 4];
      const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / face_step)));
      for (int i = 0; i <= n; ++i) {
        const Eigen::Vector2d p = a + (b - a) * (static_cast<double>(i) / n);
        for (double z = 0.0; z <= box.height; z += face_step) map.cloud.push_back(Eigen::Vector3d(p.x(), p.y(), base + z) + shift);
      }
    }
  }
  for (const auto& cyl : world.cylinders()) {
    if (!near_route(cyl.center, cyl.radius)) continue;
    const double base = world.elevation(cyl.center.x(), cyl.center.y());
    const int n = std::max(8, static_cast<int>(std::ceil(2.0 * kPi * cyl.radius / face_step)));
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * kPi * i / n;
      const Eigen::Vector2d p = cyl.center + cyl.radius * Eigen::Vector2d(std::cos(a), std::sin(a));
      for (double z = 0.0; z <= cyl.height; z += face_step) map.cloud.push_back(Eigen::Vector3d(p.x(), p.y(), base + z) + shift);
    }
  }
  return map;
}

SimulationResult simulate(const Scenario& scenario) {
  WorldSpec spec = scenario.world;
  if (spec.clear_paths.empty()) spec.clear_paths.push_back(scenario.plan.waypoints);
  SimulationResult result;
  result.world = generate_world(spec, scenario.seed);
  const WorldModel& world = result.world;
  const SensorSuite& sensors = scenario.sensors;

  SensorLog& log = result.log;
  log.truth = generate_trajectory(scenario.plan, world, sensors.rate);

  const Eigen::Vector3d gravity(0.0, 0.0, -kGravity);
  std::array<std::mt19937_64, 4> imu_rng;
  for (int i = 0; i < 4; ++i) imu_rng[i].seed(derive_seed(scenario.seed, 10 + i));
  std::mt19937_64 ins_rng(derive_seed(scenario.seed, 20));
  std::mt19937_64 wheel_rng(derive_seed(scenario.seed, 21));
  std::normal_distribution<double> unit(0.0, 1.0);

  for (auto& stream : log.imu) stream.reserve(log.truth.size());
  log.ins.reserve(log.truth.size());
  log.wheel.reserve(log.truth.size());
  for (const auto& t : log.truth) {
    const Eigen::Matrix3d r = t.pose.rotation();
    const Eigen::Vector3d force = t.acceleration + t.angular_velocity.cross(t.velocity) - r.transpose() * gravity;
    for (int i = 0; i < 4; ++i) {
      const ImuModel& m = sensors.imus[i];
      const Eigen::Matrix3d mount_t = rotation_from_rpy(m.mount_rpy).transpose();
      ImuSample s;
      s.stamp = t.stamp;
      const Eigen::Vector3d an(unit(imu_rng[i]), unit(imu_rng[i]), unit(imu_rng[i]));
      const Eigen::Vector3d gn(unit(imu_rng[i]), unit(imu_rng[i]), unit(imu_rng[i]));
      s.specific_force = mount_t * force + m.accel_bias + m.accel_noise * an;
      s.angular_velocity = mount_t * t.angular_velocity + m.gyro_bias + m.gyro_noise * gn;
      log.imu[i].push_back(s);
    }
    InsSample ins;
    ins.stamp = t.stamp;
    const Eigen::Vector3d att(unit(ins_rng), unit(ins_rng), unit(ins_rng));
    const Eigen::Vector3d rate(unit(ins_rng), unit(ins_rng), unit(ins_rng));
    ins.rpy = t.pose.rpy + sensors.ins.attitude_noise * att;
    ins.rpy.z() = wrap_angle(ins.rpy.z() - sensors.ins.heading_bias);
    ins.angular_velocity = t.angular_velocity + sensors.ins.rate_noise * rate;
    log.ins.push_back(ins);

    double ratio = 1.0 + sensors.encoder.scale_error;
    for (const auto& slip : sensors.encoder.slips) {
      if (t.stamp >= slip.start && t.stamp < slip.start + slip.duration) ratio *= slip.ratio;
    }
    log.wheel.push_back({t.stamp, ratio * t.velocity.x() + sensors.encoder.noise * unit(wheel_rng)});
  }

  if (sensors.scan.enabled && sensors.scan.rate > 0.0) {
    const auto every = static_cast<std::size_t>(std::llround(sensors.rate / sensors.scan.rate));
    for (std::size_t k = 0; k < log.truth.size(); k += std::max<std::size_t>(every, 1)) {
      log.scans.push_back(simulate_scan(world, log.truth[k].pose, log.truth[k].stamp, sensors.scan,
                                        derive_seed(scenario.seed, 1000000 + k)));
    }
  }
  if (scenario.render_apriori) {
    std::vector<Eigen::Vector2d> route;
    for (std::size_t k = 0; k < log.truth.size(); k += 50) route.push_back(log.truth[k].pose.position.head<2>());
    route.push_back(log.truth.back().pose.position.head<2>());
    result.apriori = stale_apriori(world, scenario.staleness, scenario.apriori_cell, scenario.cloud_spacing, route,
                                   scenario.cloud_margin);
  }
  return result;
}

std::vector<CalibrationRow> simulate_calibration_drive(const ImuModel& imu, double wheel_scale_error,
                                                       double straight_length, double rotation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double dt = 0.01;
  const double speed = 1.0, accel = 0.5, spin = 0.5, spin_accel = 0.5;
  const Eigen::Matrix3d mount_t = rotation_from_rpy(imu.mount_rpy).transpose();

  std::vector<CalibrationRow> rows;
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
  double yaw = 0.0, t = 0.0;
  auto push = [&](double v, double a, double w, double wdot) {
    CalibrationRow row;
    row.stamp = t;
    row.true_position = pos;
    row.true_yaw = yaw;
    row.true_specific_force = Eigen::Vector3d(a, v * w, kGravity);
    row.true_angular_velocity = Eigen::Vector3d(0.0, 0.0, w);
    const Eigen::Vector3d an(unit(rng), unit(rng), unit(rng));
    const Eigen::Vector3d gn(unit(rng), unit(rng), unit(rng));
    row.imu_specific_force = mount_t * row.true_specific_force + imu.accel_bias + imu.accel_noise * an;
    row.imu_angular_velocity = mount_t * row.true_angular_velocity + imu.gyro_bias + imu.gyro_noise * gn;
    row.encoder_speed = v * (1.0 + wheel_scale_error);
    rows.push_back(row);
    (void)wdot;
    pos += v * dt * Eigen::Vector3d(std::cos(yaw), std::sin(yaw), 0.0);
    yaw = wrap_angle(yaw + w * dt);
    t += dt;
  };
  auto drive = [&](double length) {
    const double ramp = speed * speed / (2.0 * accel);
    const double cruise = std::max(0.0, length - 2.0 * ramp);
    double v = 0.0;
    while (v < speed) { push(v, accel, 0.0, 0.0); v = std::min(speed, v + accel * dt); }
    for (double d = 0.0; d < cruise; d += speed * dt) push(speed, 0.0, 0.0, 0.0);
    while (v > 0.0) { push(v, -accel, 0.0, 0.0); v = std::max(0.0, v - accel * dt); }
  };
  auto still = [&](double duration) { for (double s = 0.0; s < duration; s += dt) push(0.0, 0.0, 0.0, 0.0); };
  auto turn = [&](double angle) {
    double w = 0.0, turned = 0.0;
    const double brake = spin * spin / (2.0 * spin_accel);
    while (turned < angle) {
      const double target = (angle - turned) <= brake ? std::max(0.02, std::sqrt(2.0 * spin_accel * (angle - turned))) : spin;
      w = std::clamp(target, w - spin_accel * dt, w + spin_accel * dt);
      push(0.0, 0.0, w, 0.0);
      turned += w * dt;
    }
  };

  still(2.0);
  drive(straight_length);
  still(2.0);
  if (rotation > 0.0) turn(rotation);
  still(2.0);
  return rows;
}

std::vector<std::string> preset_names() { return {"desert", "forest", "lake", "urban"}; }

namespace {

Scenario base_scenario(std::string name, std::uint64_t seed) {
  Scenario s;
  s.name = std::move(name);
  s.world.name = s.name;
  s.seed = seed;
  std::mt19937_64 rng(derive_seed(seed, 77));
  std::normal_distribution<double> mount(0.0, 0.002);
  for (auto& imu : s.sensors.imus) {
    imu.mount_rpy = Eigen::Vector3d::Zero();
    imu.accel_bias = Eigen::Vector3d(mount(rng), mount(rng), mount(rng));
  }
  return s;
}

}  // namespace

Scenario make_preset(std::string_view name, std::uint64_t seed) {
  if (name == "urban") {
    Scenario s = base_scenario("urban", seed);
    s.world.min_corner = {-60.0, -60.0};
    s.world.max_corner = {360.0, 260.0};
    s.world.texture = {{105, 120, 70}, {150, 130, 95}, 0.6, {2.0, 7.0, 25.0}, {}};
    for (double x : {0.0, 100.0, 200.0, 300.0}) s.world.roads.push_back({{{x, -40.0}, {x, 240.0}}, 8.0, {95, 95, 100}});
    for (double y : {0.0, 100.0, 200.0}) s.world.roads.push_back({{{-40.0, y}, {340.0, y}}, 8.0, {95, 95, 100}});
    for (double x : {50.0, 150.0, 250.0}) {
      for (double y : {50.0, 150.0}) s.world.clusters.push_back({{x, y}, 38.0, 5, 6});
    }
    for (double x : {50.0, 150.0, 250.0}) {
      s.world.clusters.push_back({{x, -35.0}, 20.0, 2, 3});
      s.world.clusters.push_back({{x, 235.0}, 20.0, 2, 3});
    }
    s.plan.waypoints = {{0.0, 0.0}, {300.0, 0.0}, {300.0, 200.0}, {0.0, 200.0}, {0.0, 0.0}};
    s.plan.dwells = {{2, 20.0}};
    s.sensors.ins.heading_bias = 0.3 * kPi / 180.0;
    return s;
  }
  if (name == "forest") {
    Scenario s = base_scenario("forest", seed);
    s.world.min_corner = {-60.0, -60.0};
    s.world.max_corner = {360.0, 260.0};
    s.world.hill_amplitude = 0.6;
    s.world.texture = {{70, 110, 50}, {140, 115, 80}, 0.8, {2.0, 6.0, 20.0}, {}};
    s.plan.waypoints = {{0.0, 0.0}, {150.0, -20.0}, {300.0, 0.0}, {320.0, 100.0}, {300.0, 200.0},
                        {150.0, 220.0}, {0.0, 200.0}, {-20.0, 100.0}, {0.0, 0.0}};
    s.world.roads.push_back({s.plan.waypoints, 3.0, {150, 125, 90}});
    for (double x : {40.0, 150.0, 260.0}) {
      s.world.clusters.push_back({{x, 40.0}, 35.0, 0, 70});
      s.world.clusters.push_back({{x, 165.0}, 35.0, 0, 70});
    }
    s.world.clusters.push_back({{150.0, 100.0}, 40.0, 2, 40});
    for (const Eigen::Vector2d& c : {Eigen::Vector2d(150.0, -45.0), Eigen::Vector2d(150.0, 245.0),
                                    Eigen::Vector2d(345.0, 100.0), Eigen::Vector2d(-45.0, 100.0)}) {
      s.world.clusters.push_back({c, 14.0, 0, 20});
    }
    s.plan.cruise_speed = 1.8;
    s.plan.dwells = {{4, 30.0}};
    s.sensors.ins.heading_bias = 0.5 * kPi / 180.0;
    return s;
  }
  if (name == "desert") {
    Scenario s = base_scenario("desert", seed);
    s.world.min_corner = {-60.0, -80.0};
    s.world.max_corner = {880.0, 80.0};
    s.world.texture = {{190, 165, 120}, {175, 150, 110}, 0.04, {2.0, 7.0, 25.0}, {{{400.0, 0.0}, 90.0, 0.9}}};
    s.world.texture.alternate = {120, 100, 70};
    s.world.roads.push_back({{{300.0, 0.0}, {500.0, 0.0}}, 6.0, {110, 100, 90}});
    s.world.clusters.push_back({{400.0, 35.0}, 28.0, 5, 4});
    s.world.clusters.push_back({{400.0, -35.0}, 28.0, 5, 4});
    s.plan.waypoints = {{0.0, 0.0}, {250.0, 8.0}, {400.0, 0.0}, {550.0, -8.0}, {800.0, 0.0}};
    s.sensors.ins.heading_bias = 2.0 * kPi / 180.0;
    return s;
  }
  if (name == "lake") {
    Scenario s = base_scenario("lake", seed);
    s.world.min_corner = {-60.0, -90.0};
    s.world.max_corner = {860.0, 90.0};
    s.world.texture = {{150, 140, 110}, {80, 100, 60}, 0.03, {2.0, 7.0, 25.0},
                       {{{50.0, 0.0}, 90.0, 0.9}, {{750.0, 0.0}, 90.0, 0.9}}};
    s.world.clusters.push_back({{60.0, 35.0}, 28.0, 4, 8});
    s.world.clusters.push_back({{60.0, -35.0}, 28.0, 4, 8});
    s.world.clusters.push_back({{740.0, 35.0}, 28.0, 4, 8});
    s.world.clusters.push_back({{740.0, -35.0}, 28.0, 4, 8});
    // Two walls lining the road through the sparse middle.
    for (double y : {-4.25, 4.25}) {
      BoxStructure wall;
      wall.center = {400.0, y};
      wall.half_extent = {250.0, 0.25};
      wall.height = 2.5;
      wall.wall = {160, 160, 160};
      wall.roof = {160, 160, 160};
      s.world.boxes.push_back(wall);
    }
    s.world.clearance = 3.0;
    s.plan.waypoints = {{0.0, 0.0}, {800.0, 0.0}};
    s.sensors.encoder.scale_error = 0.05;
    s.sensors.ins.heading_bias = 0.5 * kPi / 180.0;
    return s;
  }
  throw SimulationError("unknown preset '" + std::string(name) + "'");
}

}  // namespace traels
