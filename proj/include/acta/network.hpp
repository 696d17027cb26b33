#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "acta/common.hpp"
#include "acta/signal.hpp"

namespace acta::network {

/// Undirected binary graph over EEG channels, dense adjacency.
class BrainGraph {
 public:
  BrainGraph() = default;
  explicit BrainGraph(std::vector<std::string> nodes, double ts = 0.0)
      : nodes_(std::move(nodes)), adj_(nodes_.size() * nodes_.size(), 0), ts_(ts) {}

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::string>& nodes() const { return nodes_; }
  double ts() const { return ts_; }

  bool has_edge(std::size_t i, std::size_t j) const { return adj_[i * size() + j] != 0; }

  void add_edge(std::size_t i, std::size_t j) {
    if (i == j) return;
    adj_[i * size() + j] = 1;
    adj_[j * size() + i] = 1;
  }

  void remove_edge(std::size_t i, std::size_t j) {
    adj_[i * size() + j] = 0;
    adj_[j * size() + i] = 0;
  }

  std::size_t degree(std::size_t i) const {
    std::size_t d = 0;
    for (std::size_t j = 0; j < size(); ++j) d += adj_[i * size() + j];
    return d;
  }

  std::size_t edge_count() const {
    std::size_t twice = 0;
    for (auto v : adj_) twice += v;
    return twice / 2;
  }

  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j)
        if (has_edge(i, j)) out.emplace_back(i, j);
    return out;
  }

  friend bool operator==(const BrainGraph& a, const BrainGraph& b) { return a.nodes_ == b.nodes_ && a.adj_ == b.adj_; }

 private:
  std::vector<std::string> nodes_;
  std::vector<std::uint8_t> adj_;
  double ts_ = 0.0;
};

/// community id per node
using Partition = std::vector<int>;

inline constexpr double kDefaultThreshold = 0.5;
inline constexpr int kRewirings = 20;

/// Pearson correlation; nullopt when either series has zero variance.
inline std::optional<double> correlation(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

/// Edge (i,j) iff |corr(i,j)| >= threshold; constant channels stay isolated.
inline BrainGraph build_graph(const signal::EegWindow& window, double threshold, std::vector<std::string> labels = {}) {
  const std::size_t n = window.samples.size();
  if (n < 2) fail(ErrorCode::InvalidConfig, "graph needs at least 2 channels");
  if (labels.empty())
    for (std::size_t i = 0; i < n; ++i) labels.push_back("ch" + std::to_string(i));
  BrainGraph g(std::move(labels), window.start_ts);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto r = correlation(window.samples[i], window.samples[j]);
      if (r && std::abs(*r) >= threshold) g.add_edge(i, j);
    }
  return g;
}

/// Newman-Girvan Q = sum_c [e_c/m - (d_c/2m)^2].
inline double modularity(const BrainGraph& g, const Partition& p) {
  const auto m = static_cast<double>(g.edge_count());
  if (m == 0.0) fail(ErrorCode::EmptyGraph, "modularity of a graph with no edges");
  if (p.size() != g.size()) fail(ErrorCode::DimensionMismatch, "partition size differs from node count");
  const int k = *std::max_element(p.begin(), p.end()) + 1;
  std::vector<double> intra(static_cast<std::size_t>(k), 0.0), deg(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    deg[static_cast<std::size_t>(p[i])] += static_cast<double>(g.degree(i));
    for (std::size_t j = i + 1; j < g.size(); ++j)
      if (g.has_edge(i, j) && p[i] == p[j]) intra[static_cast<std::size_t>(p[i])] += 1.0;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < intra.size(); ++c) q += intra[c] / m - (deg[c] / (2.0 * m)) * (deg[c] / (2.0 * m));
  return q;
}

/// Agglomerative greedy maximization: merge the community pair with the
/// largest positive gain until none remains. Ties go to the pair whose
/// smallest node indices come first.
inline Partition greedy_partition(const BrainGraph& g) {
  const std::size_t n = g.size();
  const auto m = static_cast<double>(g.edge_count());
  if (m == 0.0) fail(ErrorCode::EmptyGraph, "greedy_partition of a graph with no edges");

  // communities kept sorted by their smallest member
  std::vector<std::vector<std::size_t>> comms(n);
  for (std::size_t i = 0; i < n; ++i) comms[i] = {i};
  auto deg_of = [&](const std::vector<std::size_t>& c) {
    double d = 0.0;
    for (auto v : c) d += static_cast<double>(g.degree(v));
    return d;
  };
  auto between = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double e = 0.0;
    for (auto u : a)
      for (auto v : b) e += g.has_edge(u, v) ? 1.0 : 0.0;
    return e;
  };

  while (comms.size() > 1) {
    double best = 0.0;
    std::optional<std::pair<std::size_t, std::size_t>> pick;
    for (std::size_t a = 0; a < comms.size(); ++a)
      for (std::size_t b = a + 1; b < comms.size(); ++b) {
        const double gain = between(comms[a], comms[b]) / m - 2.0 * (deg_of(comms[a]) / (2.0 * m)) * (deg_of(comms[b]) / (2.0 * m));
        if (gain > best + 1e-12) {
          best = gain;
          pick = {a, b};
        }
      }
    if (!pick) break;
    auto& into = comms[pick->first];
    into.insert(into.end(), comms[pick->second].begin(), comms[pick->second].end());
    std::sort(into.begin(), into.end());
    comms.erase(comms.begin() + static_cast<std::ptrdiff_t>(pick->second));
  }

  Partition p(n, 0);
  for (std::size_t c = 0; c < comms.size(); ++c)
    for (auto v : comms[c]) p[v] = static_cast<int>(c);
  return p;
}

inline double clustering_coefficient(const BrainGraph& g) {
  const std::size_t n = g.size();
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<std::size_t> nb;
    for (std::size_t u = 0; u < n; ++u)
      if (g.has_edge(v, u)) nb.push_back(u);
    const std::size_t k = nb.size();
    if (k < 2) continue;
    std::size_t closed = 0;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b) closed += g.has_edge(nb[a], nb[b]) ? 1 : 0;
    total += static_cast<double>(closed) / (static_cast<double>(k * (k - 1)) / 2.0);
  }
  return total / static_cast<double>(n);
}

struct PathLength {
  double value = 0.0;
  bool connected = true;        // false: value is over the largest component only
  std::size_t component_size = 0;
};

inline std::vector<int> bfs_distances(const BrainGraph& g, std::size_t src) {
  std::vector<int> dist(g.size(), -1);
  std::queue<std::size_t> q;
  dist[src] = 0;
  q.push(src);
  while (!q.empty()) {
    const auto v = q.front();
    q.pop();
    for (std::size_t u = 0; u < g.size(); ++u)
      if (g.has_edge(v, u) && dist[u] < 0) {
        dist[u] = dist[v] + 1;
        q.push(u);
      }
  }
  return dist;
}

/// Mean shortest-path length over unordered node pairs of the largest component.
inline PathLength char_path_length(const BrainGraph& g) {
  const std::size_t n = g.size();
  std::vector<int> comp(n, -1);
  std::vector<std::size_t> sizes;
  for (std::size_t v = 0; v < n; ++v) {
    if (comp[v] >= 0) continue;
    const auto d = bfs_distances(g, v);
    std::size_t sz = 0;
    for (std::size_t u = 0; u < n; ++u)
      if (d[u] >= 0) {
        comp[u] = static_cast<int>(sizes.size());
        ++sz;
      }
    sizes.push_back(sz);
  }
  PathLength r;
  if (n == 0) return r;
  const auto largest = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  r.component_size = sizes[static_cast<std::size_t>(largest)];
  r.connected = r.component_size == n;
  if (r.component_size < 2) {
    r.value = std::nan("");
    return r;
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (comp[v] != largest) continue;
    const auto d = bfs_distances(g, v);
    for (std::size_t u = v + 1; u < n; ++u)
      if (comp[u] == largest) {
        sum += d[u];
        ++pairs;
      }
  }
  r.value = sum / static_cast<double>(pairs);
  return r;
}

/// Degree-preserving randomization by double edge swaps (20 attempts per edge).
inline BrainGraph rewire(const BrainGraph& g, std::mt19937_64& rng) {
  BrainGraph out = g;
  auto edges = out.edges();
  const std::size_t m = edges.size();
  if (m < 2) return out;
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  std::bernoulli_distribution flip(0.5);
  for (std::size_t attempt = 0; attempt < 20 * m; ++attempt) {
    const std::size_t x = pick(rng), y = pick(rng);
    if (x == y) continue;
    auto [a, b] = edges[x];
    auto [c, d] = edges[y];
    if (flip(rng)) std::swap(c, d);
    // (a,b),(c,d) -> (a,d),(c,b)
    if (a == d || c == b || a == c || b == d) continue;
    if (out.has_edge(a, d) || out.has_edge(c, b)) continue;
    out.remove_edge(a, b);
    out.remove_edge(c, d);
    out.add_edge(a, d);
    out.add_edge(c, b);
    edges[x] = {a, d};
    edges[y] = {c, b};
  }
  return out;
}

struct SmallWorld {
  std::optional<double> sigma;  // nullopt when the ratio is undefined
  double clustering = 0.0;
  double path_length = 0.0;
  double clustering_rand = 0.0;
  double path_length_rand = 0.0;
};

/// sigma = (C / C_rand) / (L / L_rand) against 20 seeded degree-preserving rewirings.
inline SmallWorld small_world_index(const BrainGraph& g, std::uint64_t seed, int rewirings = kRewirings) {
  SmallWorld r;
  if (g.size() < 4 || g.edge_count() < 3) return r;
  r.clustering = clustering_coefficient(g);
  r.path_length = char_path_length(g).value;
  std::mt19937_64 rng(seed);
  double c_sum = 0.0, l_sum = 0.0;
  for (int i = 0; i < rewirings; ++i) {
    const auto h = rewire(g, rng);
    c_sum += clustering_coefficient(h);
    l_sum += char_path_length(h).value;
  }
  r.clustering_rand = c_sum / rewirings;
  r.path_length_rand = l_sum / rewirings;
  if (!(r.clustering_rand > 0.0) || !(r.path_length > 0.0) || !std::isfinite(r.path_length_rand)) return r;
  r.sigma = (r.clustering / r.clustering_rand) / (r.path_length / r.path_length_rand);
  return r;
}

struct MetricPoint {
  double ts = 0.0;
  double modularity = 0.0;
  double clustering = 0.0;
  double path_length = 0.0;
  double small_world = std::nan("");
};

struct MetricSeries {
  std::vector<MetricPoint> points;
  std::vector<double> gaps;  // start_ts of windows whose graph had no edges
};

inline std::optional<MetricPoint> window_metrics(const signal::EegWindow& w, double threshold, std::uint64_t seed) {
  const auto g = build_graph(w, threshold);
  if (g.edge_count() == 0) return std::nullopt;
  MetricPoint pt;
  pt.ts = w.start_ts;
  pt.modularity = modularity(g, greedy_partition(g));
  pt.clustering = clustering_coefficient(g);
  pt.path_length = char_path_length(g).value;
  if (auto sw = small_world_index(g, seed).sigma) pt.small_world = *sw;
  return pt;
}

/// Every window uses the same rewiring seed, so identical windows give identical points.
inline MetricSeries metric_series(std::span<const signal::EegWindow> windows, double threshold, std::uint64_t seed) {
  std::vector<const signal::EegWindow*> order;
  for (const auto& w : windows) order.push_back(&w);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->start_ts < b->start_ts; });
  MetricSeries s;
  for (const auto* w : order) {
    if (auto pt = window_metrics(*w, threshold, seed))
      s.points.push_back(*pt);
    else
      s.gaps.push_back(w->start_ts);
  }
  return s;
}

inline std::string to_table(const MetricSeries& s) {
  std::string out = "ts,q,c,l,sigma\n";
  for (const auto& p : s.points)
    out += fmt6(p.ts) + "," + fmt6(p.modularity) + "," + fmt6(p.clustering) + "," + fmt6(p.path_length) + "," +
           fmt6(p.small_world) + "\n";
  return out;
}

}  // namespace acta::network
