#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "acta/common.hpp"

namespace acta::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr double kMaxPathLengthM = 3000.0;
inline constexpr double kDefaultRadiusM = 20.0;
inline constexpr std::size_t kSpeedSmoothingSamples = 3;
inline constexpr double kReactionSpeedDelta = 0.3;
inline constexpr double kStepThreshold = 11.0;
inline constexpr double kStepRefractoryS = 0.3;

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  GeoPoint() = default;
  GeoPoint(double lat_deg, double lon_deg) : lat(lat_deg), lon(lon_deg) {
    if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0))
      fail(ErrorCode::InvalidConfig, "geo point out of bounds");
  }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

enum class PlaceKind { Landmark, NonRelevant, Start, Destination };

inline const char* to_string(PlaceKind k) {
  switch (k) {
    case PlaceKind::Landmark: return "landmark";
    case PlaceKind::NonRelevant: return "non_relevant";
    case PlaceKind::Start: return "start";
    case PlaceKind::Destination: return "destination";
  }
  return "?";
}

struct Place {
  std::string id;
  PlaceKind kind = PlaceKind::Landmark;
  int landmark_index = 0;  // 1-based order, Landmark only
  GeoPoint center;
  double radius_m = kDefaultRadiusM;
};

struct PathSpec {
  std::string id;
  Place start;
  Place destination;
  std::vector<Place> landmarks;
  std::vector<Place> non_relevant;
  std::vector<GeoPoint> polyline;

  const Place* find(const std::string& place_id) const {
    if (start.id == place_id) return &start;
    if (destination.id == place_id) return &destination;
    for (const auto& p : landmarks)
      if (p.id == place_id) return &p;
    for (const auto& p : non_relevant)
      if (p.id == place_id) return &p;
    return nullptr;
  }
};

struct TrajectorySample {
  double t = 0.0;
  GeoPoint pos;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  double t_begin() const { return samples.front().t; }
  double t_end() const { return samples.back().t; }
};

struct AccelSample {
  double t = 0.0;
  double magnitude = 0.0;  // m/s^2
};

struct BehavioralReport {
  double path_efficiency_m = 0.0;  // max deviation from the ideal route
  double peak_speed_mps = 0.0;
  std::map<std::string, std::optional<double>> reaction_times_s;
  std::size_t step_count = 0;
  double completion_rate = 0.0;
};

inline double haversine_distance(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = deg2rad(a.lat), phi2 = deg2rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlambda = deg2rad(b.lon - a.lon);
  const double s1 = std::sin(dphi / 2), s2 = std::sin(dlambda / 2);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

inline bool is_within(const GeoPoint& pos, const Place& place) {
  return haversine_distance(pos, place.center) <= place.radius_m;
}

/// Local east/north metres of `p` relative to `origin` (equirectangular).
struct Planar {
  double x = 0.0;
  double y = 0.0;
};

inline Planar to_planar(const GeoPoint& origin, const GeoPoint& p) {
  const double coslat = std::cos(deg2rad(origin.lat));
  return {kEarthRadiusM * deg2rad(p.lon - origin.lon) * coslat, kEarthRadiusM * deg2rad(p.lat - origin.lat)};
}

inline GeoPoint from_planar(const GeoPoint& origin, const Planar& q) {
  const double coslat = std::cos(deg2rad(origin.lat));
  const double lat = origin.lat + q.y / kEarthRadiusM * 180.0 / std::numbers::pi;
  const double lon = origin.lon + q.x / (kEarthRadiusM * coslat) * 180.0 / std::numbers::pi;
  return {lat, lon};
}

inline double point_segment_distance(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
  const Planar pb = to_planar(a, b);
  const Planar pp = to_planar(a, p);
  const double len2 = pb.x * pb.x + pb.y * pb.y;
  double u = 0.0;
  if (len2 > 0.0) u = std::clamp((pp.x * pb.x + pp.y * pb.y) / len2, 0.0, 1.0);
  const double dx = pp.x - u * pb.x, dy = pp.y - u * pb.y;
  return std::hypot(dx, dy);
}

inline double distance_to_polyline(const GeoPoint& p, std::span<const GeoPoint> polyline) {
  double best = INFINITY;
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i)
    best = std::min(best, point_segment_distance(p, polyline[i], polyline[i + 1]));
  return best;
}

inline double polyline_length(std::span<const GeoPoint> polyline) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) total += haversine_distance(polyline[i], polyline[i + 1]);
  return total;
}

/// Point at arc length `s` along the polyline (clamped to its ends).
inline GeoPoint point_at_arc(std::span<const GeoPoint> polyline, double s) {
  if (s <= 0.0) return polyline.front();
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    const double seg = haversine_distance(polyline[i], polyline[i + 1]);
    if (s <= seg && seg > 0.0) {
      const double u = s / seg;
      const Planar d = to_planar(polyline[i], polyline[i + 1]);
      return from_planar(polyline[i], {d.x * u, d.y * u});
    }
    s -= seg;
  }
  return polyline.back();
}

/// Unit heading (east, north) of the segment that contains arc length `s`.
inline Planar heading_at_arc(std::span<const GeoPoint> polyline, double s) {
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    const double seg = haversine_distance(polyline[i], polyline[i + 1]);
    if ((s <= seg || i + 2 == polyline.size()) && seg > 0.0) {
      const Planar d = to_planar(polyline[i], polyline[i + 1]);
      const double n = std::hypot(d.x, d.y);
      return {d.x / n, d.y / n};
    }
    s -= seg;
  }
  return {0.0, 1.0};
}

inline void validate_trajectory(const Trajectory& traj) {
  for (std::size_t i = 1; i < traj.samples.size(); ++i)
    if (!(traj.samples[i].t > traj.samples[i - 1].t))
      fail(ErrorCode::InvalidConfig, "trajectory timestamps must be strictly increasing");
}

/// Linear interpolation in lat/lon; clamps outside the sampled span.
inline GeoPoint position_at(const Trajectory& traj, double t) {
  const auto& s = traj.samples;
  if (s.empty()) fail(ErrorCode::EmptyTrajectory, "no samples");
  if (t <= s.front().t) return s.front().pos;
  if (t >= s.back().t) return s.back().pos;
  auto it = std::upper_bound(s.begin(), s.end(), t, [](double v, const TrajectorySample& x) { return v < x.t; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double u = (t - a.t) / (b.t - a.t);
  return {a.pos.lat + u * (b.pos.lat - a.pos.lat), a.pos.lon + u * (b.pos.lon - a.pos.lon)};
}

/// Throws InvalidPath when the route breaks one of the path invariants.
inline void validate_path(const PathSpec& path) {
  if (path.polyline.size() < 2) fail(ErrorCode::InvalidPath, "polyline needs at least 2 points");
  const double length = polyline_length(path.polyline);
  if (length > kMaxPathLengthM) fail(ErrorCode::InvalidPath, "polyline longer than 3000 m");

  std::vector<const Place*> places;
  for (std::size_t k = 0; k < path.landmarks.size(); ++k) {
    const auto& lm = path.landmarks[k];
    if (lm.kind != PlaceKind::Landmark || lm.landmark_index != static_cast<int>(k + 1))
      fail(ErrorCode::InvalidPath, "landmark indices must be 1..K in order");
    places.push_back(&lm);
  }
  for (const auto& nr : path.non_relevant) {
    if (nr.kind != PlaceKind::NonRelevant) fail(ErrorCode::InvalidPath, "non-relevant place has wrong kind");
    places.push_back(&nr);
  }
  for (const Place* p : places)
    if (!(p->radius_m > 0.0)) fail(ErrorCode::InvalidPath, "place radius must be positive: " + p->id);
  if (!(path.start.radius_m > 0.0) || !(path.destination.radius_m > 0.0))
    fail(ErrorCode::InvalidPath, "start/destination radius must be positive");

  for (std::size_t i = 0; i < places.size(); ++i)
    for (std::size_t j = i + 1; j < places.size(); ++j)
      if (haversine_distance(places[i]->center, places[j]->center) < places[i]->radius_m + places[j]->radius_m)
        fail(ErrorCode::InvalidPath, "place radii overlap: " + places[i]->id + " / " + places[j]->id);

  // first arc length (1 m resolution) at which the route enters each landmark radius
  double prev_entry = -1.0;
  for (const auto& lm : path.landmarks) {
    double entry = -1.0;
    for (double s = 0.0; s <= length + 0.5; s += 1.0) {
      if (is_within(point_at_arc(path.polyline, s), lm)) {
        entry = s;
        break;
      }
    }
    if (entry < 0.0) fail(ErrorCode::InvalidPath, "polyline misses landmark " + lm.id);
    if (entry <= prev_entry) fail(ErrorCode::InvalidPath, "polyline visits landmarks out of order at " + lm.id);
    prev_entry = entry;
  }
}

inline double max_path_deviation(const Trajectory& traj, const PathSpec& path) {
  if (traj.empty()) fail(ErrorCode::EmptyTrajectory, "max_path_deviation on empty trajectory");
  if (path.polyline.size() < 2) fail(ErrorCode::InvalidPath, "polyline needs at least 2 points");
  double worst = 0.0;
  for (const auto& s : traj.samples) worst = std::max(worst, distance_to_polyline(s.pos, path.polyline));
  return worst;
}

/// Per-sample speed (m/s) with a trailing 3-sample moving average; entry 0 is 0.
inline std::vector<double> smoothed_speeds(const Trajectory& traj) {
  const auto& s = traj.samples;
  std::vector<double> raw(s.size(), 0.0), out(s.size(), 0.0);
  for (std::size_t i = 1; i < s.size(); ++i) raw[i] = haversine_distance(s[i - 1].pos, s[i].pos) / (s[i].t - s[i - 1].t);
  const std::size_t w = kSpeedSmoothingSamples;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const std::size_t lo = i >= w ? i - w + 1 : 1;
    double sum = 0.0;
    for (std::size_t j = lo; j <= i; ++j) sum += raw[j];
    out[i] = sum / static_cast<double>(i - lo + 1);
  }
  return out;
}

inline double peak_speed(const Trajectory& traj) {
  if (traj.size() < 2) fail(ErrorCode::InsufficientSamples, "peak_speed needs at least 2 samples");
  const auto v = smoothed_speeds(traj);
  return *std::max_element(v.begin(), v.end());
}

/// Seconds from the stimulus to the earlier of the acknowledgement or the
/// first speed change above 0.3 m/s; nullopt when neither happens.
inline std::optional<double> reaction_time(double stimulus_ts, const Trajectory& traj, std::optional<double> ack_ts) {
  if (traj.empty()) fail(ErrorCode::EmptyTrajectory, "reaction_time on empty trajectory");
  if (stimulus_ts < traj.t_begin() || stimulus_ts > traj.t_end())
    fail(ErrorCode::StimulusOutOfRange, "stimulus outside trajectory span");

  std::optional<double> best;
  if (ack_ts && *ack_ts >= stimulus_ts) best = *ack_ts - stimulus_ts;

  const auto v = smoothed_speeds(traj);
  const auto& s = traj.samples;
  std::size_t ref = 0;
  while (ref + 1 < s.size() && s[ref + 1].t <= stimulus_ts) ++ref;
  for (std::size_t i = ref + 1; i < s.size(); ++i) {
    if (s[i].t <= stimulus_ts) continue;
    if (std::abs(v[i] - v[ref]) > kReactionSpeedDelta) {
      const double rt = s[i].t - stimulus_ts;
      if (!best || rt < *best) best = rt;
      break;
    }
  }
  return best;
}

inline double completion_rate(const Trajectory& traj, const PathSpec& path, bool ordered = true) {
  const std::size_t k = path.landmarks.size();
  if (k == 0) return 0.0;
  std::vector<bool> visited(k, false);
  std::size_t next = 0;
  for (const auto& s : traj.samples) {
    if (ordered) {
      while (next < k && is_within(s.pos, path.landmarks[next])) visited[next++] = true;
    } else {
      for (std::size_t i = 0; i < k; ++i)
        if (!visited[i] && is_within(s.pos, path.landmarks[i])) visited[i] = true;
    }
  }
  return static_cast<double>(std::count(visited.begin(), visited.end(), true)) / static_cast<double>(k);
}

/// Local maxima above 11 m/s^2, at least 0.3 s after the previously counted peak.
inline std::size_t step_count(std::span<const AccelSample> accel) {
  std::size_t steps = 0;
  double last_peak = -INFINITY;
  for (std::size_t i = 0; i < accel.size(); ++i) {
    const double v = accel[i].magnitude;
    if (v <= kStepThreshold) continue;
    const bool left_ok = i == 0 || v > accel[i - 1].magnitude;
    const bool right_ok = i + 1 == accel.size() || v >= accel[i + 1].magnitude;
    if (!left_ok || !right_ok) continue;
    if (accel[i].t - last_peak < kStepRefractoryS) continue;
    ++steps;
    last_peak = accel[i].t;
  }
  return steps;
}

struct Stimulus {
  std::string id;
  double ts = 0.0;
  std::optional<double> ack_ts;
};

inline BehavioralReport behavioral_report(const Trajectory& traj, const PathSpec& path,
                                          std::span<const AccelSample> accel, std::span<const Stimulus> stimuli,
                                          bool ordered = true) {
  BehavioralReport r;
  r.path_efficiency_m = max_path_deviation(traj, path);
  r.peak_speed_mps = traj.size() >= 2 ? peak_speed(traj) : 0.0;
  for (const auto& st : stimuli) {
    if (st.ts < traj.t_begin() || st.ts > traj.t_end()) {
      r.reaction_times_s[st.id] = std::nullopt;
      continue;
    }
    r.reaction_times_s[st.id] = reaction_time(st.ts, traj, st.ack_ts);
  }
  r.step_count = step_count(accel);
  r.completion_rate = completion_rate(traj, path, ordered);
  return r;
}

}  // namespace acta::geo
