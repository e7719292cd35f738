#include "traels/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace traels::io {

namespace {

constexpr double kDeg = 3.141592653589793 / 180.0;

std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// JSON field access with the dotted path in every error message.
class Fields {
 public:
  Fields(const json& value, std::string path) : value_(value), path_(std::move(path)) {
    if (!value_.is_object()) throw DataError("field '" + display() + "': expected an object");
  }

  bool has(const char* key) const { return value_.contains(key); }
  std::string at(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  Fields child(const char* key) const { return Fields(value_.at(key), at(key)); }
  const json& raw(const char* key) const { return value_.at(key); }

  template <class T>
  void get(const char* key, T& out) const {
    if (!has(key)) return;
    out = convert<T>(value_.at(key), at(key));
  }
  void get_deg(const char* key, double& out_rad) const {
    if (!has(key)) return;
    out_rad = convert<double>(value_.at(key), at(key)) * kDeg;
  }
  void get(const char* key, Eigen::Vector2d& out) const { if (has(key)) out = vec<2>(value_.at(key), at(key)); }
  void get(const char* key, Eigen::Vector3d& out) const { if (has(key)) out = vec<3>(value_.at(key), at(key)); }
  void get(const char* key, Rgb& out) const { if (has(key)) out = rgb(value_.at(key), at(key)); }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw DataError("field '" + path + "': expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw DataError("field '" + path + "': expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0)) {
        throw DataError("field '" + path + "': expected " +
                        (std::is_unsigned_v<T> ? std::string("a non-negative integer") : std::string("an integer")));
      }
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array()) throw DataError("field '" + path + "': expected an array of numbers");
      std::vector<double> out;
      for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<double>(v[i], path + "[" + std::to_string(i) + "]"));
      return out;
    } else {
      if (!v.is_number()) throw DataError("field '" + path + "': expected a number");
      return v.get<double>();
    }
  }

  template <int N>
  static Eigen::Matrix<double, N, 1> vec(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != N) {
      throw DataError("field '" + path + "': expected an array of " + std::to_string(N) + " numbers");
    }
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) out[i] = convert<double>(v[i], path + "[" + std::to_string(i) + "]");
    return out;
  }

  static Rgb rgb(const json& v, const std::string& path) {
    const Eigen::Vector3d c = vec<3>(v, path);
    Rgb out{};
    for (int i = 0; i < 3; ++i) {
      if (c[i] < 0.0 || c[i] > 255.0) throw DataError("field '" + path + "': color channels must be in [0, 255]");
      out[i] = static_cast<std::uint8_t>(std::lround(c[i]));
    }
    return out;
  }

  template <class F>
  void each(const char* key, F&& f) const {
    if (!has(key)) return;
    const json& arr = value_.at(key);
    if (!arr.is_array()) throw DataError("field '" + at(key) + "': expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) f(arr[i], at(key) + "[" + std::to_string(i) + "]");
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }
  const json& value_;
  std::string path_;
};

json vec_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }
json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }
json rgb_json(const Rgb& c) { return json::array({c[0], c[1], c[2]}); }

json polyline_json(const std::vector<Eigen::Vector2d>& line) {
  json out = json::array();
  for (const auto& p : line) out.push_back(vec_json(p));
  return out;
}

std::vector<Eigen::Vector2d> polyline_from(const json& v, const std::string& path) {
  if (!v.is_array()) throw DataError("field '" + path + "': expected an array of points");
  std::vector<Eigen::Vector2d> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(Fields::vec<2>(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace

// Plain tables -------------------------------------------------------------

std::size_t Table::column(const std::string& name, const std::string& source) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw DataError(source + ": missing column '" + name + "'");
}

Table read_csv(const fs::path& path, const std::vector<std::string>& text_columns) {
  std::ifstream in = open_in(path);
  Table table;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  std::vector<bool> text(table.header.size(), false);
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    text[i] = std::find(text_columns.begin(), text_columns.end(), table.header[i]) != text_columns.end();
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    row.reserve(table.header.size());
    const char* p = line.c_str();
    while (true) {
      const char* end = p;
      double v = 0.0;
      if (row.size() < text.size() && text[row.size()]) {
        while (*end != ',' && *end != '\0' && *end != '\r') ++end;
        v = std::numeric_limits<double>::quiet_NaN();
      } else {
        char* stop = nullptr;
        v = std::strtod(p, &stop);
        end = stop;
        if (end == p || (*end != ',' && *end != '\0' && *end != '\r')) {
          throw DataError(path.string() + ":" + std::to_string(line_no) + ": not a number in column " +
                          std::to_string(row.size() + 1));
        }
      }
      row.push_back(v);
      if (*end != ',') break;
      p = end + 1;
    }
    if (row.size() != table.header.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(table.header.size()) + " columns, found " + std::to_string(row.size()));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out = open_out(path);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
    out << '\n';
  }
}

json read_json(const fs::path& path) {
  std::ifstream in = open_in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < upto; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw DataError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(column) + ": malformed JSON");
  }
}

void write_json(const fs::path& path, const json& value) {
  std::ofstream out = open_out(path);
  out << value.dump(2) << '\n';
}

// Scenario -----------------------------------------------------------------

json to_json(const Scenario& s) {
  json world;
  const WorldSpec& w = s.world;
  world["name"] = w.name;
  world["min_corner"] = vec_json(w.min_corner);
  world["max_corner"] = vec_json(w.max_corner);
  world["hill_amplitude"] = w.hill_amplitude;
  world["hill_wavelength"] = w.hill_wavelength;
  world["clearance"] = w.clearance;
  json zones = json::array();
  for (const auto& z : w.texture.zones) zones.push_back({{"center", vec_json(z.center)}, {"radius", z.radius}, {"contrast", z.contrast}});
  world["texture"] = {{"base", rgb_json(w.texture.base)},
                      {"alternate", rgb_json(w.texture.alternate)},
                      {"contrast", w.texture.contrast},
                      {"scales", w.texture.scales},
                      {"zones", zones}};
  world["roads"] = json::array();
  for (const auto& r : w.roads) {
    world["roads"].push_back({{"polyline", polyline_json(r.polyline)}, {"width", r.width}, {"color", rgb_json(r.color)}});
  }
  world["clusters"] = json::array();
  for (const auto& c : w.clusters) {
    world["clusters"].push_back({{"center", vec_json(c.center)}, {"radius", c.radius}, {"buildings", c.buildings}, {"trees", c.trees}});
  }
  world["boxes"] = json::array();
  for (const auto& b : w.boxes) {
    world["boxes"].push_back({{"center", vec_json(b.center)},
                              {"half_extent", vec_json(b.half_extent)},
                              {"yaw_deg", b.yaw / kDeg},
                              {"height", b.height},
                              {"wall", rgb_json(b.wall)},
                              {"roof", rgb_json(b.roof)}});
  }
  world["cylinders"] = json::array();
  for (const auto& c : w.cylinders) {
    world["cylinders"].push_back({{"center", vec_json(c.center)},
                                  {"radius", c.radius},
                                  {"height", c.height},
                                  {"wall", rgb_json(c.wall)},
                                  {"canopy_radius", c.canopy_radius},
                                  {"canopy", rgb_json(c.canopy)}});
  }
  world["clear_paths"] = json::array();
  for (const auto& p : w.clear_paths) world["clear_paths"].push_back(polyline_json(p));

  json sensors;
  sensors["rate"] = s.sensors.rate;
  sensors["imus"] = json::array();
  for (const auto& imu : s.sensors.imus) {
    sensors["imus"].push_back({{"mount_rpy_deg", vec_json(Eigen::Vector3d(imu.mount_rpy / kDeg))},
                               {"accel_noise", imu.accel_noise},
                               {"gyro_noise", imu.gyro_noise},
                               {"accel_bias", vec_json(imu.accel_bias)},
                               {"gyro_bias", vec_json(imu.gyro_bias)}});
  }
  sensors["ins"] = {{"heading_bias_deg", s.sensors.ins.heading_bias / kDeg},
                    {"attitude_noise", s.sensors.ins.attitude_noise},
                    {"rate_noise", s.sensors.ins.rate_noise}};
  json slips = json::array();
  for (const auto& e : s.sensors.encoder.slips) slips.push_back({{"start", e.start}, {"duration", e.duration}, {"ratio", e.ratio}});
  sensors["encoder"] = {{"scale_error", s.sensors.encoder.scale_error}, {"noise", s.sensors.encoder.noise}, {"slips", slips}};
  const ScanModel& sc = s.sensors.scan;
  sensors["scan"] = {{"enabled", sc.enabled},
                     {"rate", sc.rate},
                     {"max_range", sc.max_range},
                     {"sensor_height", sc.sensor_height},
                     {"azimuth_steps", sc.azimuth_steps},
                     {"beams", sc.beams},
                     {"min_elevation_deg", sc.min_elevation / kDeg},
                     {"max_elevation_deg", sc.max_elevation / kDeg},
                     {"range_noise", sc.range_noise},
                     {"color_noise", sc.color_noise},
                     {"patch_radius", sc.patch_radius},
                     {"patch_spacing", sc.patch_spacing}};

  json dwells = json::array();
  for (const auto& d : s.plan.dwells) dwells.push_back({{"waypoint", d.waypoint}, {"duration", d.duration}});
  json plan = {{"waypoints", polyline_json(s.plan.waypoints)},
               {"cruise_speed", s.plan.cruise_speed},
               {"acceleration", s.plan.acceleration},
               {"lookahead", s.plan.lookahead},
               {"max_yaw_rate", s.plan.max_yaw_rate},
               {"dwells", dwells},
               {"max_duration", s.plan.max_duration}};

  json edits = json::array();
  for (const auto& e : s.staleness.edits) {
    json je = {{"min_corner", vec_json(e.min_corner)},
               {"max_corner", vec_json(e.max_corner)},
               {"raise", e.raise},
               {"remove_structures", e.remove_structures}};
    if (e.recolor) je["recolor"] = rgb_json(*e.recolor);
    edits.push_back(je);
  }

  return {{"name", s.name},
          {"seed", s.seed},
          {"apriori_cell", s.apriori_cell},
          {"cloud_spacing", s.cloud_spacing},
          {"cloud_margin", s.cloud_margin},
          {"render_apriori", s.render_apriori},
          {"world", world},
          {"sensors", sensors},
          {"plan", plan},
          {"staleness", {{"offset", vec_json(s.staleness.offset)}, {"edits", edits}}}};
}

Scenario scenario_from_json(const json& value) {
  Scenario s;
  const Fields root(value, "");
  root.get("name", s.name);
  root.get("seed", s.seed);
  root.get("apriori_cell", s.apriori_cell);
  root.get("cloud_spacing", s.cloud_spacing);
  root.get("cloud_margin", s.cloud_margin);
  root.get("render_apriori", s.render_apriori);

  if (root.has("world")) {
    const Fields w = root.child("world");
    WorldSpec& ws = s.world;
    ws.name = s.name;
    w.get("name", ws.name);
    w.get("min_corner", ws.min_corner);
    w.get("max_corner", ws.max_corner);
    w.get("hill_amplitude", ws.hill_amplitude);
    w.get("hill_wavelength", ws.hill_wavelength);
    w.get("clearance", ws.clearance);
    if (w.has("texture")) {
      const Fields t = w.child("texture");
      t.get("base", ws.texture.base);
      t.get("alternate", ws.texture.alternate);
      t.get("contrast", ws.texture.contrast);
      t.get("scales", ws.texture.scales);
      if (t.has("zones")) ws.texture.zones.clear();
      t.each("zones", [&](const json& v, const std::string& path) {
        const Fields f(v, path);
        ContrastZone z;
        f.get("center", z.center);
        f.get("radius", z.radius);
        f.get("contrast", z.contrast);
        ws.texture.zones.push_back(z);
      });
    }
    w.each("roads", [&](const json& v, const std::string& path) {
      const Fields f(v, path);
      RoadSpec r;
      if (f.has("polyline")) r.polyline = polyline_from(f.raw("polyline"), f.at("polyline"));
      f.get("width", r.width);
      f.get("color", r.color);
      ws.roads.push_back(r);
    });
    w.each("clusters", [&](const json& v, const std::string& path) {
      const Fields f(v, path);
      ClusterSpec c;
      f.get("center", c.center);
      f.get("radius", c.radius);
      f.get("buildings", c.buildings);
      f.get("trees", c.trees);
      ws.clusters.push_back(c);
    });
    w.each("boxes", [&](const json& v, const std::string& path) {
      const Fields f(v, path);
      BoxStructure b;
      f.get("center", b.center);
      f.get("half_extent", b.half_extent);
      f.get_deg("yaw_deg", b.yaw);
      f.get("height", b.height);
      f.get("wall", b.wall);
      f.get("roof", b.roof);
      ws.boxes.push_back(b);
    });
    w.each("cylinders", [&](const json& v, const std::string& path) {
      const Fields f(v, path);
      CylinderStructure c;
      f.get("center", c.center);
      f.get("radius", c.radius);
      f.get("height", c.height);
      f.get("wall", c.wall);
      f.get("canopy_radius", c.canopy_radius);
      f.get("canopy", c.canopy);
      ws.cylinders.push_back(c);
    });
    w.each("clear_paths", [&](const json& v, const std::string& path) { ws.clear_paths.push_back(polyline_from(v, path)); });
  }

  if (root.has("sensors")) {
    const Fields f = root.child("sensors");
    SensorSuite& ss = s.sensors;
    f.get("rate", ss.rate);
    if (f.has("imus")) {
      const json& arr = f.raw("imus");
      if (!arr.is_array() || arr.size() != 4) throw DataError("field 'sensors.imus': expected an array of 4 IMUs");
      for (std::size_t i = 0; i < 4; ++i) {
        const Fields g(arr[i], "sensors.imus[" + std::to_string(i) + "]");
        ImuModel& imu = ss.imus[i];
        Eigen::Vector3d mount_deg = imu.mount_rpy / kDeg;
        g.get("mount_rpy_deg", mount_deg);
        imu.mount_rpy = mount_deg * kDeg;
        g.get("accel_noise", imu.accel_noise);
        g.get("gyro_noise", imu.gyro_noise);
        g.get("accel_bias", imu.accel_bias);
        g.get("gyro_bias", imu.gyro_bias);
      }
    }
    if (f.has("ins")) {
      const Fields g = f.child("ins");
      g.get_deg("heading_bias_deg", ss.ins.heading_bias);
      g.get("attitude_noise", ss.ins.attitude_noise);
      g.get("rate_noise", ss.ins.rate_noise);
    }
    if (f.has("encoder")) {
      const Fields g = f.child("encoder");
      g.get("scale_error", ss.encoder.scale_error);
      g.get("noise", ss.encoder.noise);
      if (g.has("slips")) ss.encoder.slips.clear();
      g.each("slips", [&](const json& v, const std::string& path) {
        const Fields h(v, path);
        SlipEpisode e;
        h.get("start", e.start);
        h.get("duration", e.duration);
        h.get("ratio", e.ratio);
        ss.encoder.slips.push_back(e);
      });
    }
    if (f.has("scan")) {
      const Fields g = f.child("scan");
      ScanModel& m = ss.scan;
      g.get("enabled", m.enabled);
      g.get("rate", m.rate);
      g.get("max_range", m.max_range);
      g.get("sensor_height", m.sensor_height);
      g.get("azimuth_steps", m.azimuth_steps);
      g.get("beams", m.beams);
      g.get_deg("min_elevation_deg", m.min_elevation);
      g.get_deg("max_elevation_deg", m.max_elevation);
      g.get("range_noise", m.range_noise);
      g.get("color_noise", m.color_noise);
      g.get("patch_radius", m.patch_radius);
      g.get("patch_spacing", m.patch_spacing);
    }
  }

  if (root.has("plan")) {
    const Fields f = root.child("plan");
    TrajectoryPlan& p = s.plan;
    if (f.has("waypoints")) p.waypoints = polyline_from(f.raw("waypoints"), f.at("waypoints"));
    f.get("cruise_speed", p.cruise_speed);
    f.get("acceleration", p.acceleration);
    f.get("lookahead", p.lookahead);
    f.get("max_yaw_rate", p.max_yaw_rate);
    f.get("max_duration", p.max_duration);
    if (f.has("dwells")) p.dwells.clear();
    f.each("dwells", [&](const json& v, const std::string& path) {
      const Fields g(v, path);
      Dwell d;
      g.get("waypoint", d.waypoint);
      g.get("duration", d.duration);
      p.dwells.push_back(d);
    });
  }

  if (root.has("staleness")) {
    const Fields f = root.child("staleness");
    f.get("offset", s.staleness.offset);
    f.each("edits", [&](const json& v, const std::string& path) {
      const Fields g(v, path);
      RegionEdit e;
      g.get("min_corner", e.min_corner);
      g.get("max_corner", e.max_corner);
      if (g.has("recolor")) e.recolor = Fields::rgb(g.raw("recolor"), g.at("recolor"));
      g.get("raise", e.raise);
      g.get("remove_structures", e.remove_structures);
      s.staleness.edits.push_back(e);
    });
  }
  if (s.plan.waypoints.size() < 2) throw DataError("field 'plan.waypoints': at least two waypoints required");
  return s;
}

// Simulation products ------------------------------------------------------

void write_truth(const fs::path& path, const std::vector<TruthSample>& truth) {
  std::vector<std::vector<double>> rows;
  rows.reserve(truth.size());
  for (const auto& t : truth) {
    const auto& p = t.pose;
    rows.push_back({t.stamp, p.position.x(), p.position.y(), p.position.z(), p.rpy.x(), p.rpy.y(), p.rpy.z(),
                    t.velocity.x(), t.velocity.y(), t.velocity.z(), t.angular_velocity.x(), t.angular_velocity.y(),
                    t.angular_velocity.z(), t.acceleration.x(), t.acceleration.y(), t.acceleration.z(), t.odometer});
  }
  write_csv(path, {"stamp", "x", "y", "z", "roll", "pitch", "yaw", "vx", "vy", "vz", "wx", "wy", "wz", "ax", "ay", "az", "odometer"},
            rows);
}

std::vector<TruthSample> read_truth(const fs::path& path) {
  const Table t = read_csv(path);
  const std::string src = path.string();
  std::vector<std::size_t> c;
  for (const char* name : {"stamp", "x", "y", "z", "roll", "pitch", "yaw", "vx", "vy", "vz", "wx", "wy", "wz", "ax", "ay", "az", "odometer"}) {
    c.push_back(t.column(name, src));
  }
  std::vector<TruthSample> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    TruthSample s;
    s.stamp = r[c[0]];
    s.pose.position = {r[c[1]], r[c[2]], r[c[3]]};
    s.pose.rpy = {r[c[4]], r[c[5]], r[c[6]]};
    s.velocity = {r[c[7]], r[c[8]], r[c[9]]};
    s.angular_velocity = {r[c[10]], r[c[11]], r[c[12]]};
    s.acceleration = {r[c[13]], r[c[14]], r[c[15]]};
    s.odometer = r[c[16]];
    out.push_back(s);
  }
  return out;
}

void write_scans(const fs::path& path, const std::vector<Scan>& scans) {
  std::ofstream out = open_out(path, true);
  out.write("TRSC", 4);
  const std::uint32_t version = 1;
  const std::uint64_t count = scans.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& scan : scans) {
    const std::uint64_t n = scan.points.size();
    out.write(reinterpret_cast<const char*>(&scan.stamp), sizeof scan.stamp);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    for (const auto& p : scan.points) {
      out.write(reinterpret_cast<const char*>(p.position.data()), 3 * sizeof(float));
      out.write(reinterpret_cast<const char*>(p.rgb.data()), 3);
    }
  }
}

std::vector<Scan> read_scans(const fs::path& path) {
  std::ifstream in = open_in(path, true);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || std::memcmp(magic, "TRSC", 4) != 0 || version != 1) throw DataError(path.string() + ": not a scan file");
  std::vector<Scan> scans(count);
  for (auto& scan : scans) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&scan.stamp), sizeof scan.stamp);
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!in || n > (1ull << 32)) throw DataError(path.string() + ": truncated scan header");
    scan.points.resize(n);
    for (auto& p : scan.points) {
      in.read(reinterpret_cast<char*>(p.position.data()), 3 * sizeof(float));
      in.read(reinterpret_cast<char*>(p.rgb.data()), 3);
    }
    if (!in) throw DataError(path.string() + ": truncated scan data");
  }
  return scans;
}

void write_ppm(const fs::path& path, const RasterPatch& raster) {
  std::ofstream out = open_out(path, true);
  out << "P6\n" << raster.cols << ' ' << raster.rows << "\n255\n";
  std::vector<unsigned char> line(static_cast<std::size_t>(raster.cols) * 3);
  for (int r = raster.rows - 1; r >= 0; --r) {
    for (int c = 0; c < raster.cols; ++c) {
      const std::size_t i = raster.index(r, c);
      for (int k = 0; k < 3; ++k) {
        const float v = raster.valid[i] ? raster.color[i][k] : 0.0f;
        line[static_cast<std::size_t>(c) * 3 + k] = static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
    out.write(reinterpret_cast<const char*>(line.data()), static_cast<std::streamsize>(line.size()));
  }
}

namespace {

// Reads a binary PNM header and returns (cols, rows, maxval).
std::array<int, 3> read_pnm_header(std::istream& in, const char* magic, const fs::path& path) {
  std::string m;
  in >> m;
  if (m != magic) throw DataError(path.string() + ": expected " + std::string(magic) + " image");
  std::array<int, 3> v{};
  for (int& x : v) {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string skip;
      std::getline(in, skip);
      in >> std::ws;
    }
    in >> x;
  }
  in.get();
  if (!in || v[0] <= 0 || v[1] <= 0) throw DataError(path.string() + ": bad image header");
  return v;
}

}  // namespace

RasterPatch read_ppm(const fs::path& path, double cell_size, const Eigen::Vector2d& origin) {
  std::ifstream in = open_in(path, true);
  const auto [cols, rows, maxval] = read_pnm_header(in, "P6", path);
  if (maxval != 255) throw DataError(path.string() + ": only 8-bit PPM is supported");
  RasterPatch raster(rows, cols, cell_size, origin);
  std::vector<unsigned char> line(static_cast<std::size_t>(cols) * 3);
  for (int r = rows - 1; r >= 0; --r) {
    in.read(reinterpret_cast<char*>(line.data()), static_cast<std::streamsize>(line.size()));
    if (!in) throw DataError(path.string() + ": truncated image");
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = raster.index(r, c);
      raster.color[i] = Eigen::Vector3f(line[c * 3], line[c * 3 + 1], line[c * 3 + 2]);
      raster.valid[i] = 1;
    }
  }
  return raster;
}

void write_pgm16(const fs::path& path, const std::vector<float>& values, int rows, int cols, double lo, double hi) {
  std::ofstream out = open_out(path, true);
  out << "P5\n" << cols << ' ' << rows << "\n65535\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (int r = rows - 1; r >= 0; --r) {
    for (int c = 0; c < cols; ++c) {
      const double v = values[static_cast<std::size_t>(r) * cols + c];
      const auto q = static_cast<std::uint16_t>(std::clamp(std::lround((v - lo) / span * 65535.0), 0L, 65535L));
      const unsigned char bytes[2] = {static_cast<unsigned char>(q >> 8), static_cast<unsigned char>(q & 0xff)};
      out.write(reinterpret_cast<const char*>(bytes), 2);
    }
  }
}

std::vector<float> read_pgm16(const fs::path& path, int& rows, int& cols, double lo, double hi) {
  std::ifstream in = open_in(path, true);
  const auto header = read_pnm_header(in, "P5", path);
  cols = header[0];
  rows = header[1];
  if (header[2] != 65535) throw DataError(path.string() + ": only 16-bit PGM is supported");
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<float> out(static_cast<std::size_t>(rows) * cols);
  for (int r = rows - 1; r >= 0; --r) {
    for (int c = 0; c < cols; ++c) {
      unsigned char bytes[2];
      in.read(reinterpret_cast<char*>(bytes), 2);
      const int q = (bytes[0] << 8) | bytes[1];
      out[static_cast<std::size_t>(r) * cols + c] = static_cast<float>(lo + span * q / 65535.0);
    }
  }
  if (!in) throw DataError(path.string() + ": truncated image");
  return out;
}

void write_xyz(const fs::path& path, const std::vector<Eigen::Vector3d>& points) {
  std::ofstream out = open_out(path);
  char buf[96];
  for (const auto& p : points) {
    const int n = std::snprintf(buf, sizeof buf, "%.4f %.4f %.4f\n", p.x(), p.y(), p.z());
    out.write(buf, n);
  }
}

std::vector<Eigen::Vector3d> read_xyz(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<Eigen::Vector3d> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Eigen::Vector3d p;
    if (std::sscanf(line.c_str(), "%lf %lf %lf", &p.x(), &p.y(), &p.z()) != 3) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected three numbers");
    }
    out.push_back(p);
  }
  return out;
}

void write_simulation(const fs::path& dir, const Scenario& scenario, const SimulationResult& result) {
  fs::create_directories(dir);
  write_json(dir / "scenario.json", to_json(scenario));
  write_truth(dir / "truth.csv", result.log.truth);
  for (int i = 0; i < 4; ++i) {
    std::vector<std::vector<double>> rows;
    rows.reserve(result.log.imu[i].size());
    for (const auto& s : result.log.imu[i]) {
      rows.push_back({s.stamp, s.specific_force.x(), s.specific_force.y(), s.specific_force.z(), s.angular_velocity.x(),
                      s.angular_velocity.y(), s.angular_velocity.z()});
    }
    write_csv(dir / ("imu" + std::to_string(i) + ".csv"), {"stamp", "fx", "fy", "fz", "wx", "wy", "wz"}, rows);
  }
  std::vector<std::vector<double>> ins, wheel;
  for (const auto& s : result.log.ins) {
    ins.push_back({s.stamp, s.rpy.x(), s.rpy.y(), s.rpy.z(), s.angular_velocity.x(), s.angular_velocity.y(),
                   s.angular_velocity.z()});
  }
  for (const auto& s : result.log.wheel) wheel.push_back({s.stamp, s.forward_speed});
  write_csv(dir / "ins.csv", {"stamp", "roll", "pitch", "yaw", "wx", "wy", "wz"}, ins);
  write_csv(dir / "wheel.csv", {"stamp", "speed"}, wheel);
  write_scans(dir / "scans.bin", result.log.scans);

  const AprioriMap& a = result.apriori;
  if (a.color.rows == 0) return;
  double lo = 0.0, hi = 0.0;
  if (!a.elevation.empty()) {
    const auto [mn, mx] = std::minmax_element(a.elevation.begin(), a.elevation.end());
    lo = *mn;
    hi = *mx;
  }
  json meta = {{"cell_size", a.color.cell_size},
               {"origin", vec_json(a.color.origin)},
               {"rows", a.color.rows},
               {"cols", a.color.cols},
               {"elevation", {{"rows", a.elevation_rows},
                              {"cols", a.elevation_cols},
                              {"cell_size", a.elevation_cell},
                              {"origin", vec_json(a.elevation_origin)},
                              {"min", lo},
                              {"max", hi}}},
               {"cloud_points", a.cloud.size()}};
  write_json(dir / "apriori.json", meta);
  write_ppm(dir / "apriori_color.ppm", a.color);
  if (!a.elevation.empty()) write_pgm16(dir / "apriori_elevation.pgm", a.elevation, a.elevation_rows, a.elevation_cols, lo, hi);
  write_xyz(dir / "apriori_cloud.xyz", a.cloud);
}

SimulationFiles read_simulation(const fs::path& dir, bool with_apriori) {
  SimulationFiles f;
  f.scenario = scenario_from_json(read_json(dir / "scenario.json"));
  f.log.truth = read_truth(dir / "truth.csv");
  for (int i = 0; i < 4; ++i) {
    const fs::path p = dir / ("imu" + std::to_string(i) + ".csv");
    const Table t = read_csv(p);
    std::vector<std::size_t> c;
    for (const char* name : {"stamp", "fx", "fy", "fz", "wx", "wy", "wz"}) c.push_back(t.column(name, p.string()));
    for (const auto& r : t.rows) {
      f.log.imu[i].push_back({r[c[0]], {r[c[1]], r[c[2]], r[c[3]]}, {r[c[4]], r[c[5]], r[c[6]]}});
    }
  }
  {
    const fs::path p = dir / "ins.csv";
    const Table t = read_csv(p);
    std::vector<std::size_t> c;
    for (const char* name : {"stamp", "roll", "pitch", "yaw", "wx", "wy", "wz"}) c.push_back(t.column(name, p.string()));
    for (const auto& r : t.rows) f.log.ins.push_back({r[c[0]], {r[c[1]], r[c[2]], r[c[3]]}, {r[c[4]], r[c[5]], r[c[6]]}});
  }
  {
    const fs::path p = dir / "wheel.csv";
    const Table t = read_csv(p);
    const std::size_t cs = t.column("stamp", p.string()), cv = t.column("speed", p.string());
    for (const auto& r : t.rows) f.log.wheel.push_back({r[cs], r[cv]});
  }
  f.log.scans = read_scans(dir / "scans.bin");

  if (!with_apriori) return f;
  const fs::path meta_path = dir / "apriori.json";
  if (!fs::exists(meta_path)) throw DataError(meta_path.string() + ": missing a priori products");
  const json meta = read_json(meta_path);
  const Fields m(meta, "");
  double cell = 0.3;
  Eigen::Vector2d origin = Eigen::Vector2d::Zero();
  m.get("cell_size", cell);
  m.get("origin", origin);
  f.apriori.color = read_ppm(dir / "apriori_color.ppm", cell, origin);
  if (m.has("elevation")) {
    const Fields e = m.child("elevation");
    double lo = 0.0, hi = 0.0;
    e.get("min", lo);
    e.get("max", hi);
    e.get("cell_size", f.apriori.elevation_cell);
    e.get("origin", f.apriori.elevation_origin);
    if (fs::exists(dir / "apriori_elevation.pgm")) {
      f.apriori.elevation =
          read_pgm16(dir / "apriori_elevation.pgm", f.apriori.elevation_rows, f.apriori.elevation_cols, lo, hi);
    }
  }
  f.apriori.cloud = read_xyz(dir / "apriori_cloud.xyz");
  return f;
}

// Run configuration and outputs -------------------------------------------

namespace {

void read_diag15(const Fields& f, const char* key, StateCovariance& q) {
  if (!f.has(key)) return;
  const auto v = Fields::convert<std::vector<double>>(f.raw(key), f.at(key));
  if (v.size() != 15) throw DataError("field '" + f.at(key) + "': expected 15 numbers");
  q.setZero();
  for (int i = 0; i < 15; ++i) {
    if (!(v[i] >= 0.0)) throw ConfigError("field '" + f.at(key) + "': entries must be non-negative");
    q(i, i) = v[i];
  }
}

json diag_json(const StateCovariance& q) {
  json out = json::array();
  for (int i = 0; i < 15; ++i) out.push_back(q(i, i));
  return out;
}

void require(bool ok, const std::string& field, const char* what) {
  if (!ok) throw ConfigError("field '" + field + "': " + what);
}

}  // namespace

RunConfig run_config_from_json(const json& value, const fs::path& base_dir) {
  RunConfig c;
  const Fields root(value, "");
  std::string data, output;
  root.get("data", data);
  root.get("output", output);
  if (!data.empty()) c.data_dir = fs::path(data).is_absolute() ? fs::path(data) : base_dir / data;
  if (!output.empty()) c.output_dir = fs::path(output).is_absolute() ? fs::path(output) : base_dir / output;
  root.get("trn", c.trn);
  PipelineConfig& p = c.pipeline;
  root.get("parallel_workers", p.parallel_workers);

  if (root.has("filter")) {
    const Fields f = root.child("filter");
    read_diag15(f, "local_process_noise", p.local.filter.process_noise);
    read_diag15(f, "global_process_noise", p.global.filter.process_noise);
    f.get("lateness_window", p.local.filter.lateness_window);
    p.global.filter.lateness_window = p.local.filter.lateness_window;
    f.get("zero_velocity_sigma", p.local.zero_velocity_sigma);
    f.get("global_divider", p.global_divider);
    f.get("global_orientation", p.global_orientation);
    if (f.has("initial_sigma")) {
      const double s = Fields::convert<double>(f.raw("initial_sigma"), f.at("initial_sigma"));
      require(s > 0.0, f.at("initial_sigma"), "must be positive");
      p.initial_sigma.setConstant(s);
    }
    require(p.local.filter.lateness_window >= 0.0, f.at("lateness_window"), "must be non-negative");
    require(p.local.zero_velocity_sigma > 0.0, f.at("zero_velocity_sigma"), "must be positive");
    require(p.global_divider >= 1, f.at("global_divider"), "must be at least 1");
  }
  if (root.has("noise")) {
    const Fields f = root.child("noise");
    f.get("imu_accel_variance", p.imu_noise.accel_variance);
    f.get("ins_attitude_variance", p.ins_noise.attitude_variance);
    f.get("ins_rate_variance", p.ins_noise.rate_variance);
    f.get("global_ins_attitude_variance", p.global_ins_noise.attitude_variance);
  }
  if (root.has("wheel")) {
    const Fields f = root.child("wheel");
    f.get("a", p.wheel.a);
    f.get("b", p.wheel.b);
    f.get("c", p.wheel.c);
    f.get("scale", p.wheel_scale);
    require(p.wheel.a > 0.0 && p.wheel.b >= 0.0 && p.wheel.c >= 0.0, f.at("a"), "wheel constants must be a > 0, b, c >= 0");
    require(p.wheel_scale > 0.0, f.at("scale"), "must be positive");
  }
  if (root.has("slip")) {
    const Fields f = root.child("slip");
    f.get("enabled", p.local.slip_rejection);
    f.get("thresholds", p.slip.thresholds);
    f.get("inflation_factors", p.slip.inflation_factors);
    f.get("max_inflation", p.slip.max_inflation);
    try {
      p.slip.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("field 'slip': " + std::string(e.what()));
    }
  }
  if (root.has("ybe")) {
    const Fields f = root.child("ybe");
    std::string mode = "enabled";
    f.get("mode", mode);
    if (mode == "enabled") {
      p.ybe.mode = YbeMode::Enabled;
    } else if (mode == "disabled") {
      p.ybe.mode = YbeMode::Disabled;
    } else if (mode == "fixed") {
      p.ybe.mode = YbeMode::Fixed;
    } else {
      throw ConfigError("field 'ybe.mode': expected enabled, disabled or fixed");
    }
    f.get_deg("fixed_bias_deg", p.ybe.fixed_bias);
    f.get("min_displacement", p.ybe.min_displacement);
    f.get("trend_window", p.ybe.trend_window);
    f.get("min_decline", p.ybe.min_decline);
    f.get("average_window", p.ybe.average_window);
    f.get("outlier_mads", p.ybe.outlier_mads);
    f.get_deg("max_step_deg", p.ybe.max_step);
    require(std::abs(p.ybe.fixed_bias) < 90.0 * kDeg, f.at("fixed_bias_deg"), "must be within (-90, 90)");
    require(p.ybe.min_displacement > 0.0, f.at("min_displacement"), "must be positive");
    require(p.ybe.trend_window >= 2 && p.ybe.average_window >= 1, f.at("trend_window"), "windows too small");
  }
  if (root.has("atlis")) {
    const Fields f = root.child("atlis");
    AtlisWorkerConfig& a = p.atlis;
    f.get("enabled", a.enabled);
    f.get("cell_size", a.matcher.cell_size);
    f.get("k_sigma", a.matcher.k_sigma);
    f.get("min_window", a.matcher.min_window);
    f.get("max_window", a.matcher.max_window);
    f.get("accept_threshold", a.matcher.accept_threshold);
    f.get("weight_power", a.matcher.weight_power);
    f.get("min_overlap", a.matcher.min_overlap);
    f.get("min_valid_fraction", a.matcher.min_valid_fraction);
    f.get("truncated_variance", a.matcher.truncated_variance);
    f.get("interval", a.interval);
    f.get("ground_height", a.ground_height);
    f.get("ground_range", a.ground_range);
    f.get("buffer_travel", a.buffer_travel);
    f.get("buffer_points", a.buffer_points);
    require(a.matcher.cell_size > 0.0, f.at("cell_size"), "must be positive");
    require(a.matcher.k_sigma >= 0.0, f.at("k_sigma"), "must be non-negative");
    require(a.matcher.accept_threshold > -1.0 && a.matcher.accept_threshold <= 1.0, f.at("accept_threshold"),
            "must be in (-1, 1]");
    require(a.matcher.weight_power > 0.0, f.at("weight_power"), "must be positive");
    require(a.matcher.min_overlap > 0.0 && a.matcher.min_overlap <= 1.0, f.at("min_overlap"), "must be in (0, 1]");
    require(a.interval > 0.0, f.at("interval"), "must be positive");
  }
  if (root.has("orienteer")) {
    const Fields f = root.child("orienteer");
    OrienteerWorkerConfig& o = p.orienteer;
    f.get("enabled", o.enabled);
    f.get("cell_size", o.cell_size);
    f.get("a", o.scaling.a);
    f.get("b", o.scaling.b);
    f.get("floor", o.scaling.floor);
    f.get("cap", o.scaling.cap);
    f.get("score_window", o.score_window);
    f.get("interval", o.interval);
    f.get("min_height", o.min_height);
    f.get("min_points", o.min_points);
    f.get("max_prior_sigma", o.max_prior_sigma);
    f.get("min_information", o.min_information);
    f.get("free_variance", o.free_variance);
    f.get("outlier_ratio", o.ndt.outlier_ratio);
    f.get("max_iterations", o.ndt.max_iterations);
    if (f.has("mask")) {
      const json& m = f.raw("mask");
      if (!m.is_array()) throw DataError("field '" + f.at("mask") + "': expected an array of pose indices");
      o.mask.clear();
      for (std::size_t i = 0; i < m.size(); ++i) {
        const int k = Fields::convert<int>(m[i], f.at("mask") + "[" + std::to_string(i) + "]");
        require(k >= 0 && k < 6, f.at("mask"), "indices must be in [0, 6)");
        o.mask.push_back(k);
      }
    }
    require(o.cell_size > 0.0, f.at("cell_size"), "must be positive");
    require(o.scaling.b > 0.0, f.at("b"), "must be positive");
    require(o.scaling.floor > 0.0 && o.scaling.cap > o.scaling.floor, f.at("floor"), "need 0 < floor < cap");
    require(o.score_window >= 1, f.at("score_window"), "must be at least 1");
    require(o.ndt.outlier_ratio > 0.0 && o.ndt.outlier_ratio < 1.0, f.at("outlier_ratio"), "must be in (0, 1)");
  }
  if (root.has("metrics")) {
    const Fields f = root.child("metrics");
    f.get("min_spacing", c.metrics.min_spacing);
    f.get("planar", c.metrics.planar);
    f.get("point_to_point", c.metrics.point_to_point);
    require(c.metrics.min_spacing > 0.0, f.at("min_spacing"), "must be positive");
  }
  return c;
}

json to_json(const RunConfig& c) {
  const PipelineConfig& p = c.pipeline;
  const char* mode = p.ybe.mode == YbeMode::Enabled ? "enabled" : p.ybe.mode == YbeMode::Disabled ? "disabled" : "fixed";
  return {
      {"data", c.data_dir.string()},
      {"output", c.output_dir.string()},
      {"trn", c.trn},
      {"parallel_workers", p.parallel_workers},
      {"filter", {{"local_process_noise", diag_json(p.local.filter.process_noise)},
                  {"global_process_noise", diag_json(p.global.filter.process_noise)},
                  {"lateness_window", p.local.filter.lateness_window},
                  {"zero_velocity_sigma", p.local.zero_velocity_sigma},
                  {"global_divider", p.global_divider},
                  {"global_orientation", p.global_orientation},
                  {"initial_sigma", p.initial_sigma[0]}}},
      {"noise", {{"imu_accel_variance", vec_json(p.imu_noise.accel_variance)},
                 {"ins_attitude_variance", vec_json(p.ins_noise.attitude_variance)},
                 {"ins_rate_variance", vec_json(p.ins_noise.rate_variance)},
                 {"global_ins_attitude_variance", vec_json(p.global_ins_noise.attitude_variance)}}},
      {"wheel", {{"a", p.wheel.a}, {"b", p.wheel.b}, {"c", p.wheel.c}, {"scale", p.wheel_scale}}},
      {"slip", {{"enabled", p.local.slip_rejection},
                {"thresholds", p.slip.thresholds},
                {"inflation_factors", p.slip.inflation_factors},
                {"max_inflation", p.slip.max_inflation}}},
      {"ybe", {{"mode", mode},
               {"fixed_bias_deg", p.ybe.fixed_bias / kDeg},
               {"min_displacement", p.ybe.min_displacement},
               {"trend_window", p.ybe.trend_window},
               {"min_decline", p.ybe.min_decline},
               {"average_window", p.ybe.average_window},
               {"outlier_mads", p.ybe.outlier_mads},
               {"max_step_deg", p.ybe.max_step / kDeg}}},
      {"atlis", {{"enabled", p.atlis.enabled},
                 {"cell_size", p.atlis.matcher.cell_size},
                 {"k_sigma", p.atlis.matcher.k_sigma},
                 {"min_window", p.atlis.matcher.min_window},
                 {"max_window", p.atlis.matcher.max_window},
                 {"accept_threshold", p.atlis.matcher.accept_threshold},
                 {"weight_power", p.atlis.matcher.weight_power},
                 {"min_overlap", p.atlis.matcher.min_overlap},
                 {"min_valid_fraction", p.atlis.matcher.min_valid_fraction},
                 {"truncated_variance", p.atlis.matcher.truncated_variance},
                 {"interval", p.atlis.interval},
                 {"ground_height", p.atlis.ground_height},
                 {"ground_range", p.atlis.ground_range},
                 {"buffer_travel", p.atlis.buffer_travel},
                 {"buffer_points", p.atlis.buffer_points}}},
      {"orienteer", {{"enabled", p.orienteer.enabled},
                     {"cell_size", p.orienteer.cell_size},
                     {"a", p.orienteer.scaling.a},
                     {"b", p.orienteer.scaling.b},
                     {"floor", p.orienteer.scaling.floor},
                     {"cap", p.orienteer.scaling.cap},
                     {"score_window", p.orienteer.score_window},
                     {"interval", p.orienteer.interval},
                     {"min_height", p.orienteer.min_height},
                     {"min_points", p.orienteer.min_points},
                     {"max_prior_sigma", p.orienteer.max_prior_sigma},
                     {"min_information", p.orienteer.min_information},
                     {"free_variance", p.orienteer.free_variance},
                     {"outlier_ratio", p.orienteer.ndt.outlier_ratio},
                     {"max_iterations", p.orienteer.ndt.max_iterations},
                     {"mask", p.orienteer.mask}}},
      {"metrics", {{"min_spacing", c.metrics.min_spacing},
                   {"planar", c.metrics.planar},
                   {"point_to_point", c.metrics.point_to_point}}},
  };
}

void write_states(const fs::path& path, const std::vector<StateEstimate>& states) {
  static const char* names[kStateSize] = {"x",  "y",  "z",  "roll", "pitch", "yaw", "vx", "vy",
                                          "vz", "wx", "wy", "wz", "ax",   "ay",    "az"};
  std::ofstream out = open_out(path);
  out << "stamp,frame";
  for (const char* n : names) out << ',' << n;
  for (const char* n : names) out << ",var_" << n;
  out << ",cov_xy\n";
  for (const auto& s : states) {
    out << format_number(s.stamp) << ',' << to_string(s.frame);
    for (int i = 0; i < kStateSize; ++i) out << ',' << format_number(s.mean[i]);
    for (int i = 0; i < kStateSize; ++i) out << ',' << format_number(s.covariance(i, i));
    out << ',' << format_number(s.covariance(kX, kY)) << '\n';
  }
}

Trajectory read_trajectory(const fs::path& path) {
  const Table t = read_csv(path, {"frame"});
  const std::string src = path.string();
  const std::size_t cs = t.column("stamp", src), cx = t.column("x", src), cy = t.column("y", src), cz = t.column("z", src);
  Trajectory out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) out.push_back({r[cs], {r[cx], r[cy], r[cz]}});
  return out;
}

void write_fixes(const fs::path& path, const std::vector<FixRecord>& fixes) {
  std::ofstream out = open_out(path);
  out << "stamp,source,x,y,yaw,var_x,var_y,cov_xy,var_yaw,peak_score,search_radius,q_s,q_h,fused\n";
  for (const auto& r : fixes) {
    const TrnFix& f = r.fix;
    const bool pose = f.kind == FixKind::Pose6D;
    const double yaw = pose ? f.value[5] : 0.0;
    const double var_yaw = pose ? f.covariance(5, 5) : 0.0;
    out << format_number(f.stamp) << ',' << f.source << ',' << format_number(f.value[0]) << ','
        << format_number(f.value[1]) << ',' << format_number(yaw) << ',' << format_number(f.covariance(0, 0)) << ','
        << format_number(f.covariance(1, 1)) << ',' << format_number(f.covariance(0, 1)) << ','
        << format_number(var_yaw) << ',' << format_number(f.quality.peak_score) << ','
        << format_number(f.quality.search_radius) << ',' << format_number(f.quality.q_s) << ','
        << format_number(f.quality.q_h) << ',' << (r.fused ? 1 : 0) << '\n';
  }
}

void write_yaw_bias(const fs::path& path, const std::vector<std::pair<double, double>>& series) {
  std::vector<std::vector<double>> rows;
  rows.reserve(series.size());
  for (const auto& [stamp, bias] : series) rows.push_back({stamp, bias, bias / kDeg});
  write_csv(path, {"stamp", "correction_rad", "correction_deg"}, rows);
}

void write_ybe_samples(const fs::path& path, const std::vector<YawBiasSample>& samples) {
  std::vector<std::vector<double>> rows;
  for (const auto& s : samples) rows.push_back({s.stamp, s.value, s.value / kDeg});
  write_csv(path, {"stamp", "value_rad", "value_deg"}, rows);
}

// Metrics ------------------------------------------------------------------

json to_json(const ErrorSummary& s) {
  return {{"median_abs_rpe_percent", s.median_abs_rpe},
          {"max_abs_rpe_percent", s.max_abs_rpe},
          {"median_ate", s.median_ate},
          {"max_ate", s.max_ate},
          {"final_ate", s.final_ate},
          {"length", s.length},
          {"median_velocity", s.median_velocity},
          {"vertical_mean", s.vertical_mean},
          {"vertical_std", s.vertical_std},
          {"count", s.count}};
}

ErrorSummary summary_from_json(const json& value) {
  const Fields f(value, "");
  ErrorSummary s;
  f.get("median_abs_rpe_percent", s.median_abs_rpe);
  f.get("max_abs_rpe_percent", s.max_abs_rpe);
  f.get("median_ate", s.median_ate);
  f.get("max_ate", s.max_ate);
  f.get("final_ate", s.final_ate);
  f.get("length", s.length);
  f.get("median_velocity", s.median_velocity);
  f.get("vertical_mean", s.vertical_mean);
  f.get("vertical_std", s.vertical_std);
  f.get("count", s.count);
  return s;
}

void write_samples(const fs::path& path, const SampledError& errors) {
  std::vector<std::vector<double>> rows;
  rows.reserve(errors.samples.size());
  for (const auto& e : errors.samples) rows.push_back({e.stamp, e.distance, e.ate, e.rpe, e.vertical});
  write_csv(path, {"stamp", "distance", "ate", "rpe_percent", "vertical"}, rows);
}

// Calibration --------------------------------------------------------------

namespace {

const std::vector<std::string>& calibration_header() {
  static const std::vector<std::string> header{
      "stamp",   "true_x",  "true_y",  "true_z",  "true_yaw", "true_fx", "true_fy", "true_fz", "true_wx",
      "true_wy", "true_wz", "imu_fx",  "imu_fy",  "imu_fz",   "imu_wx",  "imu_wy",  "imu_wz",  "encoder_speed"};
  return header;
}

}  // namespace

void write_calibration_log(const fs::path& path, const std::vector<CalibrationRow>& rows) {
  std::vector<std::vector<double>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    out.push_back({r.stamp, r.true_position.x(), r.true_position.y(), r.true_position.z(), r.true_yaw,
                   r.true_specific_force.x(), r.true_specific_force.y(), r.true_specific_force.z(),
                   r.true_angular_velocity.x(), r.true_angular_velocity.y(), r.true_angular_velocity.z(),
                   r.imu_specific_force.x(), r.imu_specific_force.y(), r.imu_specific_force.z(),
                   r.imu_angular_velocity.x(), r.imu_angular_velocity.y(), r.imu_angular_velocity.z(), r.encoder_speed});
  }
  write_csv(path, calibration_header(), out);
}

std::vector<CalibrationRow> read_calibration_log(const fs::path& path) {
  const Table t = read_csv(path);
  std::vector<std::size_t> c;
  for (const auto& name : calibration_header()) c.push_back(t.column(name, path.string()));
  std::vector<CalibrationRow> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    CalibrationRow row;
    row.stamp = r[c[0]];
    row.true_position = {r[c[1]], r[c[2]], r[c[3]]};
    row.true_yaw = r[c[4]];
    row.true_specific_force = {r[c[5]], r[c[6]], r[c[7]]};
    row.true_angular_velocity = {r[c[8]], r[c[9]], r[c[10]]};
    row.imu_specific_force = {r[c[11]], r[c[12]], r[c[13]]};
    row.imu_angular_velocity = {r[c[14]], r[c[15]], r[c[16]]};
    row.encoder_speed = r[c[17]];
    out.push_back(row);
  }
  return out;
}

json to_json(const CalibrationReport& r) {
  return {{"gyro_offset", vec_json(r.gyro_offset)},
          {"accel_offset", vec_json(r.accel_offset)},
          {"gyro_variance", vec_json(r.gyro_variance)},
          {"accel_variance", vec_json(r.accel_variance)},
          {"mount_rpy_deg", vec_json(Eigen::Vector3d(r.mount.rpy / kDeg))},
          {"wheel_scale", r.wheel_scale}};
}

}  // namespace traels::io
