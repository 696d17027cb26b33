#pragma once

// Reference implementations that share no code with the library. Unit tests
// and the acceptance gate both check against these.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "acta/geo.hpp"
#include "acta/network.hpp"

namespace oracles {

// Deviation oracle: walk each polyline segment in 5 cm steps (linear in
// lat/lon) and keep the nearest great-circle distance.
inline double dense_deviation(const acta::geo::Trajectory& traj, const std::vector<acta::geo::GeoPoint>& poly) {
  using acta::geo::haversine_distance;
  double worst = 0.0;
  for (const auto& s : traj.samples) {
    double best = INFINITY;
    for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
      const double len = haversine_distance(poly[i], poly[i + 1]);
      const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.05)));
      for (int k = 0; k <= steps; ++k) {
        const double u = static_cast<double>(k) / steps;
        const acta::geo::GeoPoint q{poly[i].lat + u * (poly[i + 1].lat - poly[i].lat),
                                    poly[i].lon + u * (poly[i + 1].lon - poly[i].lon)};
        best = std::min(best, haversine_distance(s.pos, q));
      }
    }
    worst = std::max(worst, best);
  }
  return worst;
}

// Band power by direct summation of the Hann-windowed DFT, no FFT involved.
inline double dft_band_power(const std::vector<double>& x, double fs, double lo, double hi) {
  const std::size_t n = x.size();
  double total = 0.0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    if (f < lo || (f >= hi && !(hi >= fs / 2 && f <= hi))) continue;
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double w = 0.5 - 0.5 * std::cos(2 * M_PI * static_cast<double>(t) / static_cast<double>(n));
      const double ang = -2 * M_PI * static_cast<double>(k * t % n) / static_cast<double>(n);
      re += x[t] * w * std::cos(ang);
      im += x[t] * w * std::sin(ang);
    }
    const double scale = (k == 0 || (n % 2 == 0 && k == n / 2)) ? 1.0 : 2.0;
    total += scale * (re * re + im * im) / static_cast<double>(n * n);
  }
  return total;
}

inline acta::network::BrainGraph random_graph(std::size_t n, double p, std::mt19937_64& rng) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("n" + std::to_string(i));
  acta::network::BrainGraph g(names);
  std::bernoulli_distribution edge(p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (edge(rng)) g.add_edge(i, j);
  return g;
}

inline acta::network::BrainGraph from_edges(std::size_t n, const std::vector<std::pair<int, int>>& edges) {
  acta::network::BrainGraph g(std::vector<std::string>(n, "x"));
  for (auto [a, b] : edges) g.add_edge(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  return g;
}

// Q = 1/2m sum_ij (A_ij - k_i k_j / 2m) delta(c_i, c_j)
inline double modularity(const acta::network::BrainGraph& g, const acta::network::Partition& p) {
  const double two_m = 2.0 * static_cast<double>(g.edge_count());
  double q = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j)
      if (p[i] == p[j])
        q += (g.has_edge(i, j) ? 1.0 : 0.0) - static_cast<double>(g.degree(i) * g.degree(j)) / two_m;
  return q / two_m;
}

// Best modularity over every set partition (restricted growth strings).
inline double exhaustive_best(const acta::network::BrainGraph& g) {
  const std::size_t n = g.size();
  acta::network::Partition p(n, 0);
  double best = -1.0;
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int used) {
    if (i == n) {
      best = std::max(best, oracles::modularity(g, p));
      return;
    }
    for (int c = 0; c <= used; ++c) {
      p[i] = c;
      rec(i + 1, std::max(used, c + 1));
    }
  };
  rec(1, 1);
  return best;
}

// Triangle count per node by testing every triple.
inline double clustering(const acta::network::BrainGraph& g) {
  const std::size_t n = g.size();
  double total = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const double k = static_cast<double>(g.degree(v));
    if (k < 2) continue;
    double tri = 0.0;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (a != v && b != v && g.has_edge(v, a) && g.has_edge(v, b) && g.has_edge(a, b)) tri += 1.0;
    total += tri / (k * (k - 1) / 2.0);
  }
  return total / static_cast<double>(n);
}

// Floyd-Warshall over the largest component (first one on ties).
inline double path_length(const acta::network::BrainGraph& g) {
  const std::size_t n = g.size();
  const int inf = 1 << 20;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (std::size_t i = 0; i < n; ++i) {
    d[i][i] = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (g.has_edge(i, j)) d[i][j] = 1;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  std::vector<std::size_t> best;
  std::vector<bool> seen(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (seen[i]) continue;
    std::vector<std::size_t> comp;
    for (std::size_t j = 0; j < n; ++j)
      if (d[i][j] < inf) {
        comp.push_back(j);
        seen[j] = true;
      }
    if (comp.size() > best.size()) best = comp;
  }
  if (best.size() < 2) return std::nan("");
  double sum = 0.0, pairs = 0.0;
  for (std::size_t a = 0; a < best.size(); ++a)
    for (std::size_t b = a + 1; b < best.size(); ++b) {
      sum += d[best[a]][best[b]];
      pairs += 1.0;
    }
  return sum / pairs;
}

// Symmetric difference quotient of f at x along coordinate j.
template <class F>
double central_difference(F&& f, std::vector<double> x, std::size_t j, double h = 1e-6) {
  auto xm = x;
  x[j] += h;
  xm[j] -= h;
  return (f(x) - f(xm)) / (2 * h);
}

}  // namespace oracles
