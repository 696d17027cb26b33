// Acceptance gate: one PASS/FAIL line per primary criterion, exit status 1 if
// any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "acta/harness.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"

using namespace acta;
using namespace acta::harness;
using protocol::FeedbackKind;

namespace {

/// Collects failures for one criterion; the first few are echoed as detail.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

using Clock = std::chrono::steady_clock;

int g_failed = 0;

void report(const std::string& name, const Check& c, const std::string& summary, double seconds, double budget_s) {
  const bool in_time = seconds < budget_s;
  const bool pass = c.failures.empty() && in_time;
  if (!pass) ++g_failed;
  std::printf("%s  %-22s %s; %.2f s (budget %.0f s)\n", pass ? "PASS" : "FAIL", name.c_str(), summary.c_str(), seconds,
              budget_s);
  for (std::size_t i = 0; i < c.failures.size() && i < 5; ++i) std::printf("      - %s\n", c.failures[i].c_str());
  if (c.failures.size() > 5) std::printf("      ... %zu more\n", c.failures.size() - 5);
  if (!in_time) std::printf("      - over time budget\n");
  std::fflush(stdout);
}

template <class F>
void criterion(const std::string& name, double budget_s, F&& body) {
  Check c;
  const auto t0 = Clock::now();
  std::string summary;
  try {
    summary = body(c);
  } catch (const std::exception& e) {
    c.expect(false, std::string("exception: ") + e.what());
  }
  report(name, c, summary, std::chrono::duration<double>(Clock::now() - t0).count(), budget_s);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

int count_kind(const SessionStats& st, FeedbackKind k, const std::string& place = "") {
  return static_cast<int>(std::count_if(st.feedback.begin(), st.feedback.end(), [&](const auto& e) {
    return e.kind == k && (place.empty() || e.place_id == place);
  }));
}

// --- battery -------------------------------------------------------------------

std::string battery(Check& c) {
  const DeviceSettings d;
  pipeline::SensorSpec spec;
  spec.id = "gps";
  spec.kind = pipeline::SensorKind::Gps;
  spec.rate_hz = d.gps_rate_hz;
  spec.width = 2;
  spec.battery = d.watch_battery;
  pipeline::SensorAgent a(spec, [](std::uint64_t, double, std::vector<double>& out) { std::fill(out.begin(), out.end(), 0.0); });
  for (double t = 1.0; !a.exhausted() && t < 86400.0; t += 1.0) a.emit(t);
  c.expect(a.exhausted_at().has_value(), "battery never exhausted");
  const double h = a.exhausted_at().value_or(0.0) / 3600.0;
  c.expect(std::abs(h - 3.33) <= 0.01, fmt("exhausted at %.4f h", h));
  return fmt("%.0f mAh at %.0f mA exhausted at %.4f h (3.33 +/- 0.01)", spec.battery.capacity_mah, spec.battery.load_ma.at("gps"), h);
}

// --- protocol delivery -----------------------------------------------------------

struct Row {
  protocol::LocationClass loc;
  AttentionLabel label;
  bool nudge;
  FeedbackKind kind;
  protocol::Rationale why;
};

// Written out by hand from the three encounter cases.
const std::vector<Row>& case_table() {
  using L = protocol::LocationClass;
  using R = protocol::Rationale;
  constexpr auto A = AttentionLabel::Attention, N = AttentionLabel::NonAttention;
  static const std::vector<Row> t = {
      {L::Landmark, A, false, FeedbackKind::NfbEncourage, R::CaseA},
      {L::Landmark, N, false, FeedbackKind::NoOp, R::CaseC_NoIntervention},
      {L::NonRelevant, A, false, FeedbackKind::NoOp, R::CaseC_NoIntervention},
      {L::NonRelevant, N, false, FeedbackKind::NfbReinforce, R::CaseB},
      {L::Neither, A, false, FeedbackKind::NoOp, R::Scheduled},
      {L::Neither, N, false, FeedbackKind::NoOp, R::Scheduled},
      {L::Landmark, A, true, FeedbackKind::NoOp, R::Scheduled},
      {L::Landmark, N, true, FeedbackKind::NoOp, R::Scheduled},
      {L::NonRelevant, A, true, FeedbackKind::NoOp, R::Scheduled},
      {L::NonRelevant, N, true, FeedbackKind::NoOp, R::Scheduled},
      {L::Neither, A, true, FeedbackKind::NoOp, R::Scheduled},
      {L::Neither, N, true, FeedbackKind::NoOp, R::Scheduled},
  };
  return t;
}

void check_delivery(Check& c, const Scenario& s, const std::vector<SessionStats>& stats, const std::string& tag) {
  const bool closed = s.phase == protocol::Phase::ClosedLoopNfb;
  for (const auto& lm : s.path.landmarks)
    c.expect(count_kind(stats.front(), FeedbackKind::Nudge, lm.id) == 1, tag + ": session 1 did not nudge " + lm.id);
  c.expect(count_kind(stats.back(), FeedbackKind::Nudge) == 0, tag + ": final session nudged");
  for (const auto& st : stats) {
    const std::string at = tag + " session " + std::to_string(st.session);
    const int nfb = count_kind(st, FeedbackKind::NfbEncourage) + count_kind(st, FeedbackKind::NfbReinforce);
    if (!closed) c.expect(nfb == 0, at + ": neurofeedback in phase 1");
    std::map<std::string, int> active;
    std::map<std::string, bool> nudged;
    for (const auto& e : st.feedback) {
      if (!e.place_id) continue;
      if (e.kind != FeedbackKind::NoOp) ++active[*e.place_id];
      if (e.kind == FeedbackKind::Nudge) nudged[*e.place_id] = true;
    }
    for (const auto& e : st.feedback)
      if ((e.kind == FeedbackKind::NfbEncourage || e.kind == FeedbackKind::NfbReinforce) && e.place_id)
        c.expect(!nudged[*e.place_id], at + ": neurofeedback despite nudge at " + *e.place_id);
    for (const auto& [id, n] : active) c.expect(n <= 1, at + ": " + std::to_string(n) + " non-noop events at " + id);
  }
}

std::string protocol_suite(Check& c) {
  for (const auto& r : case_table()) {
    const auto d = protocol::decide_feedback(r.loc, r.label, r.nudge);
    c.expect(d.kind == r.kind && d.rationale == r.why, std::string("decide_feedback row ") + to_string(r.label) +
                                                           (r.nudge ? " nudged" : "") + " -> " + protocol::to_string(d.kind));
  }
  const auto base = fixtures::compact_scenario();
  const auto model = train_held_out(base, run_phase1(base).dataset).model;
  int runs = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto s = fixtures::with_seeds(base, 1000 + seed);
    s.n_sessions = 2 + static_cast<int>(seed % 2);
    check_delivery(c, s, run_phase1(s).stats, "phase1 seed " + std::to_string(seed));
    s.phase = protocol::Phase::ClosedLoopNfb;
    check_delivery(c, s, run_phase2(s, model).stats, "phase2 seed " + std::to_string(seed));
    runs += 2;
  }
  return std::to_string(runs) + " seeded runs, 12-row case table";
}

// --- efficacy --------------------------------------------------------------------

std::string efficacy(Check& c) {
  const auto s0 = default_scenario();
  std::vector<Scenario> runs = {s0, s0};
  runs[1].seed_set = "alt";
  for (std::uint64_t b = 3; b <= 8; ++b) runs.push_back(fixtures::with_seeds(s0, b));
  double min_acc = 1.0;
  int encounters = 0, encouraged = 0;
  for (const auto& s : runs) {
    const std::string set = s.seed_set;
    const auto p1 = run_phase1(s);
    const auto h = train_held_out(s, p1.dataset);
    min_acc = std::min(min_acc, h.report.accuracy);
    c.expect(h.report.accuracy >= 0.9, set + ": held-out accuracy " + fmt("%.3f", h.report.accuracy));
    auto s2 = s;
    s2.phase = protocol::Phase::ClosedLoopNfb;
    const auto p2 = run_phase2(s2, h.model, {}, p1.dataset);
    for (const auto& lm : s.path.landmarks) {
      ++encounters;
      encouraged += count_kind(p2.stats.back(), FeedbackKind::NfbEncourage, lm.id) == 1;
    }
  }
  const double rate = static_cast<double>(encouraged) / encounters;
  c.expect(rate >= 0.95, fmt("final-session NfbEncourage rate %.3f", rate));

  // zero modulation depth: confusion pooled over seed sets
  std::size_t correct = 0, total = 0;
  std::string per_seed;
  for (std::uint64_t b = 1; b <= 5; ++b) {
    auto s = fixtures::with_seeds(s0, 100 + b);
    s.attention_sim.d_theta = s.attention_sim.d_alpha = 0.0;
    const auto h = train_held_out(s, run_phase1(s).dataset);
    correct += static_cast<std::size_t>(std::lround(h.report.accuracy * static_cast<double>(h.report.n)));
    total += h.report.n;
    per_seed += fmt(" %.3f", h.report.accuracy);
  }
  const double chance = static_cast<double>(correct) / static_cast<double>(total);
  c.expect(std::abs(chance - 0.5) <= 0.1, fmt("zero-depth pooled accuracy %.3f", chance));
  return fmt("held-out min %.3f over %.0f seed sets; ", min_acc, static_cast<double>(runs.size())) +
         fmt("final-session encourage %.0f/%.0f; ", encouraged, encounters) +
         fmt("zero depth pooled %.3f (n=%.0f) per seed", chance, static_cast<double>(total)) + per_seed;
}

// --- oracle equivalence -----------------------------------------------------------

std::string oracle_equivalence(Check& c) {
  using geo::GeoPoint;
  std::mt19937_64 rng(2024);
  double worst_dev = 0.0;
  {
    std::uniform_real_distribution<double> coord(-300, 300), jitter(-40, 40);
    const GeoPoint origin = kDefaultOrigin;
    for (int k = 0; k < 100; ++k) {
      std::vector<GeoPoint> poly;
      for (int i = 0; i < 4; ++i) poly.push_back(geo::from_planar(origin, {coord(rng), coord(rng)}));
      geo::Trajectory t;
      for (int i = 0; i < 8; ++i) {
        const auto b = geo::to_planar(origin, poly[static_cast<std::size_t>(i % 4)]);
        t.samples.push_back({static_cast<double>(i), geo::from_planar(origin, {b.x + jitter(rng), b.y + jitter(rng)})});
      }
      geo::PathSpec p;
      p.polyline = poly;
      const double diff = std::abs(geo::max_path_deviation(t, p) - oracles::dense_deviation(t, poly));
      worst_dev = std::max(worst_dev, diff);
      c.expect(diff <= 0.05, fmt("deviation case %.0f off by %.4f m", k, diff));
    }
  }
  {
    for (int k = 0; k < 100; ++k) {
      const auto g = oracles::random_graph(8, 0.15 + 0.006 * k, rng);
      c.expect(network::clustering_coefficient(g) == oracles::clustering(g), fmt("clustering graph %.0f", k));
      const double pl = oracles::path_length(g), ours = network::char_path_length(g).value;
      c.expect(std::isnan(pl) ? std::isnan(ours) : ours == pl, fmt("path length graph %.0f", k));
      if (g.edge_count() == 0) continue;
      const double greedy = network::modularity(g, network::greedy_partition(g));
      c.expect(greedy <= oracles::exhaustive_best(g) + 1e-12, fmt("greedy beats exhaustive on graph %.0f", k));
    }
    const auto tri = oracles::from_edges(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}});
    const double q = network::modularity(tri, network::greedy_partition(tri));
    c.expect(std::abs(q - 0.5) < 1e-12 && std::abs(oracles::exhaustive_best(tri) - 0.5) < 1e-12, fmt("two triangles Q=%.6f", q));
  }
  double worst_band = 0.0, worst_parseval = 0.0;
  {
    std::normal_distribution<double> g(0, 5);
    for (int k = 0; k < 20; ++k) {
      const std::size_t n = k % 2 ? 500 : 257;
      std::vector<double> x(n);
      for (std::size_t i = 0; i < n; ++i) x[i] = g(rng) + 3 * std::sin(2 * M_PI * 10 * static_cast<double>(i) / 250.0);
      signal::EegWindow w;
      w.fs_hz = 250.0;
      w.samples = {x};
      for (const auto& b : signal::default_bands()) {
        const double ours = signal::band_power(w, b)[0], ref = oracles::dft_band_power(x, 250.0, b.lo_hz, b.hi_hz);
        const double rel = std::abs(ours - ref) / ref;
        worst_band = std::max(worst_band, rel);
        c.expect(rel <= 0.01, "band power " + b.name);
      }
      const auto p = signal::periodogram(x);
      double sum = 0.0, ms = 0.0;
      for (double v : p) sum += v;
      for (std::size_t i = 0; i < n; ++i) ms += std::pow(x[i] * (0.5 - 0.5 * std::cos(2 * M_PI * static_cast<double>(i) / static_cast<double>(n))), 2);
      ms /= static_cast<double>(n);
      const double rel = std::abs(sum - ms) / ms;
      worst_parseval = std::max(worst_parseval, rel);
      c.expect(rel <= 1e-6, fmt("parseval n=%.0f rel %.2e", static_cast<double>(n), rel));
    }
  }
  double worst_grad = 0.0;
  {
    std::normal_distribution<double> g(0, 1);
    learner::NormalizedData d;
    for (int i = 0; i < 80; ++i) {
      const bool pos = i < 30;
      std::vector<double> row(5);
      for (auto& v : row) v = g(rng) + (pos ? 0.7 : 0.0);
      d.x.push_back(row);
      d.y.push_back(pos ? 1.0 : 0.0);
      d.weight.push_back(pos ? 80.0 / 60.0 : 80.0 / 100.0);
    }
    d.constant.assign(5, false);
    for (int k = 0; k < 10; ++k) {
      std::vector<double> w(5);
      for (auto& v : w) v = 0.3 * g(rng);
      const double b = 0.3 * g(rng), l2 = 0.01;
      const auto lg = learner::loss_and_gradient(d, w, b, l2);
      auto loss = [&](const std::vector<double>& x) { return learner::loss_and_gradient(d, {x.data(), 5}, x[5], l2).loss; };
      auto wb = w;
      wb.push_back(b);
      for (std::size_t j = 0; j < 6; ++j) {
        const double fd = oracles::central_difference(loss, wb, j);
        const double ours = j < 5 ? lg.grad_w[j] : lg.grad_b;
        const double rel = std::abs(ours - fd) / std::max(1e-3, std::abs(fd));
        worst_grad = std::max(worst_grad, rel);
        c.expect(rel <= 1e-5, fmt("gradient coordinate %.0f rel %.2e", static_cast<double>(j), rel));
      }
    }
  }
  return fmt("deviation worst %.4f m; graphs exact; band power worst %.2e rel; ", worst_dev, worst_band) +
         fmt("parseval worst %.2e; gradient worst %.2e", worst_parseval, worst_grad);
}

// --- pipeline conservation ----------------------------------------------------------

std::string conservation(Check& c) {
  std::string out;
  for (double loss : {0.0, 0.1, 0.5}) {
    auto s = default_scenario();
    s.n_sessions = 2;
    s.links.sensor_gateway.loss_rate = loss;
    s.links.gateway_cloud.loss_rate = loss;
    const auto a = run_phase1(s), b = run_phase1(s);
    const std::string tag = fmt("loss %.1f", loss);
    c.expect(a.log == b.log, tag + ": repeated run differs");
    const auto rep = replay(a.log);
    c.expect(rep.equal, tag + ": replay mismatch");
    std::uint64_t emitted = 0, stored = 0;
    for (const auto& st : a.stats)
      for (const auto& [id, x] : st.sensors) {
        c.expect(x.emitted == x.stored + x.uplink_dropped + x.late_dropped + x.wan_dropped, tag + ": accounting " + id);
        emitted += x.emitted;
        stored += x.stored;
      }
    for (const auto& seg : parse_log(a.log).sessions) {
      std::map<std::string, std::uint64_t> last;
      std::map<std::string, std::uint64_t> seen;
      for (const auto& m : seg.messages) {
        c.expect(!last.count(m.sensor_id) || m.seq > last[m.sensor_id], tag + ": out of order " + m.sensor_id);
        last[m.sensor_id] = m.seq;
        ++seen[m.sensor_id];
      }
      for (const auto& [id, x] : a.stats[static_cast<std::size_t>(seg.session - 1)].sensors)
        c.expect(seen[id] == x.stored, tag + ": logged messages differ from stored count for " + id);
    }
    out += (out.empty() ? "" : "; ") + fmt("loss %.1f: %.0f/%.0f stored", loss, static_cast<double>(stored), static_cast<double>(emitted));
  }
  return out;
}

// --- eligibility -------------------------------------------------------------------

std::string eligibility(Check& c) {
  struct Case {
    int age;
    bool mci, entry;
    std::set<Exclusion> exclusions;
    bool eligible;
    std::vector<std::string> reasons;
  };
  const std::vector<Case> table = {
      {64, true, true, {}, false, {"age"}},
      {65, true, true, {}, true, {}},
      {85, true, true, {}, true, {}},
      {86, true, true, {}, false, {"age"}},
      {75, true, true, {}, true, {}},
      {75, false, true, {}, false, {"mci_diagnosed"}},
      {75, true, false, {}, false, {"informatics_entry_level"}},
      {75, true, true, {Exclusion::SeverePsychiatric}, false, {"severe_psychiatric"}},
      {75, true, true, {Exclusion::ContinuousMedicalAssistance}, false, {"continuous_medical_assistance"}},
      {75, true, true, {Exclusion::NotIndependentDaily}, false, {"not_independent_daily"}},
      {75, true, true, {Exclusion::MotorImpairment}, false, {"motor_impairment"}},
      {86, true, true, {Exclusion::MotorImpairment}, false, {"age", "motor_impairment"}},
  };
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& t = table[i];
    ParticipantProfile p;
    p.age_years = t.age;
    p.mci_diagnosed = t.mci;
    p.informatics_entry_level = t.entry;
    p.exclusions = t.exclusions;
    const auto e = validate_profile(p);
    c.expect(e.eligible == t.eligible && e.reasons == t.reasons, "case " + std::to_string(i + 1));
  }
  return std::to_string(table.size()) + " cases";
}

}  // namespace

int main() {
  criterion("battery", 1, battery);
  criterion("protocol-delivery", 60, protocol_suite);
  criterion("closed-loop-efficacy", 300, efficacy);
  criterion("oracle-equivalence", 120, oracle_equivalence);
  criterion("pipeline-conservation", 120, conservation);
  criterion("eligibility", 1, eligibility);
  std::printf("%s\n", g_failed ? "acceptance: FAIL" : "acceptance: PASS");
  return g_failed ? 1 : 0;
}
