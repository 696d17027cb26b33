#pragma once

#include <string>
#include <vector>

#include "acta/geo.hpp"

namespace fixtures {

inline const acta::geo::GeoPoint kOrigin{45.4642, 9.19};

inline acta::geo::GeoPoint at(double east_m, double north_m) {
  return acta::geo::from_planar(kOrigin, {east_m, north_m});
}

inline acta::geo::Place place(std::string id, acta::geo::PlaceKind kind, double e, double n, int index = 0,
                              double radius = 20.0) {
  return {std::move(id), kind, index, at(e, n), radius};
}

/// L-shaped 1 km route: 600 m east, then 400 m north. Four landmarks and
/// three non-relevant places sit on the route.
inline acta::geo::PathSpec l_route() {
  using acta::geo::PlaceKind;
  acta::geo::PathSpec p;
  p.id = "l-route";
  p.start = place("start", PlaceKind::Start, 0, 0);
  p.destination = place("dest", PlaceKind::Destination, 600, 400);
  p.landmarks = {place("lm1", PlaceKind::Landmark, 150, 0, 1), place("lm2", PlaceKind::Landmark, 400, 0, 2),
                 place("lm3", PlaceKind::Landmark, 600, 100, 3), place("lm4", PlaceKind::Landmark, 600, 300, 4)};
  p.non_relevant = {place("nr1", PlaceKind::NonRelevant, 275, 0), place("nr2", PlaceKind::NonRelevant, 525, 0),
                    place("nr3", PlaceKind::NonRelevant, 600, 200)};
  p.polyline = {at(0, 0), at(600, 0), at(600, 400)};
  return p;
}

/// Straight walk along the polyline at constant speed, sampled at `dt`.
inline acta::geo::Trajectory walk(const acta::geo::PathSpec& p, double speed, double dt = 1.0) {
  acta::geo::Trajectory t;
  const double len = acta::geo::polyline_length(p.polyline);
  for (double time = 0.0;; time += dt) {
    const double s = std::min(len, speed * time);
    t.samples.push_back({time, acta::geo::point_at_arc(p.polyline, s)});
    if (s >= len) break;
  }
  return t;
}

}  // namespace fixtures
