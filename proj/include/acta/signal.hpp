#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "acta/common.hpp"
#include "acta/geo.hpp"

namespace acta::signal {

/// Standard 10-20 labels plus the 10-10 extension.
inline const std::set<std::string>& electrode_labels() {
  static const std::set<std::string> labels = {
      "Fp1", "Fpz", "Fp2", "AF7", "AF3", "AFz", "AF4", "AF8", "F9",  "F7",  "F5",  "F3",  "F1",  "Fz",  "F2",
      "F4",  "F6",  "F8",  "F10", "FT9", "FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8", "FT10",
      "T9",  "T7",  "C5",  "C3",  "C1",  "Cz",  "C2",  "C4",  "C6",  "T8",  "T10", "TP9", "TP7", "CP5", "CP3",
      "CP1", "CPz", "CP2", "CP4", "CP6", "TP8", "TP10", "P9", "P7",  "P5",  "P3",  "P1",  "Pz",  "P2",  "P4",
      "P6",  "P8",  "P10", "PO7", "PO3", "POz", "PO4", "PO8", "O1",  "Oz",  "O2",  "O9",  "O10", "Iz",  "T3",
      "T4",  "T5",  "T6",  "A1",  "A2",  "M1",  "M2"};
  return labels;
}

inline bool is_frontal(const std::string& ch) { return !ch.empty() && (ch[0] == 'F' || ch.rfind("AF", 0) == 0) && ch.rfind("FC", 0) != 0 && ch.rfind("FT", 0) != 0; }
inline bool is_occipital(const std::string& ch) { return !ch.empty() && (ch[0] == 'O' || ch.rfind("PO", 0) == 0); }

struct Band {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

inline std::vector<Band> default_bands() { return {{"theta", 4.0, 8.0}, {"alpha", 8.0, 13.0}, {"beta", 13.0, 30.0}}; }

struct EegConfig {
  std::vector<std::string> channels = {"Fp1", "Fp2", "C3", "C4", "P3", "P4", "O1", "O2"};
  double fs_hz = 250.0;
  double window_s = 2.0;
  double overlap = 0.5;

  std::size_t window_samples() const { return static_cast<std::size_t>(std::lround(fs_hz * window_s)); }
  std::size_t hop_samples() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(window_samples()) * (1.0 - overlap))));
  }
};

inline void validate(const EegConfig& c, std::span<const Band> bands = {}) {
  if (c.channels.empty()) fail(ErrorCode::InvalidConfig, "no EEG channels");
  for (const auto& ch : c.channels)
    if (!electrode_labels().count(ch)) fail(ErrorCode::InvalidConfig, "not a 10-20/10-10 label: " + ch);
  double top = 30.0;
  for (const auto& b : bands) top = std::max(top, b.hi_hz);
  if (!(c.fs_hz > 2.0 * top)) fail(ErrorCode::InvalidConfig, "sampling rate must exceed twice the highest band edge");
  if (!(c.window_s > 0.0) || c.window_samples() < 2) fail(ErrorCode::InvalidConfig, "window too short");
  if (!(c.overlap >= 0.0 && c.overlap < 1.0)) fail(ErrorCode::InvalidConfig, "overlap must be in [0,1)");
}

/// Contiguous multichannel recording, channel-major, microvolts.
struct EegStream {
  double start_ts = 0.0;
  double fs_hz = 250.0;
  std::vector<std::vector<double>> data;

  std::size_t channels() const { return data.size(); }
  std::size_t samples() const { return data.empty() ? 0 : data.front().size(); }
};

struct EegWindow {
  double start_ts = 0.0;
  double fs_hz = 250.0;
  std::vector<std::vector<double>> samples;  // channels x n
  std::optional<AttentionLabel> label;

  std::size_t length() const { return samples.empty() ? 0 : samples.front().size(); }
  double duration() const { return static_cast<double>(length()) / fs_hz; }
};

struct FeatureVector {
  double ts = 0.0;
  std::vector<double> values;
};

/// Generator control: attention intervals over session time and how strongly
/// attention modulates the rhythms.
struct AttentionProfile {
  std::vector<std::pair<double, double>> attention_intervals;  // [begin, end)
  double d_theta = 0.5;    // frontal theta gain during attention
  double d_alpha = 0.5;    // occipital alpha suppression during attention
  double amp_theta_uv = 8.0;
  double amp_alpha_uv = 10.0;
  double amp_beta_uv = 4.0;
  double noise_uv = 10.0;
  double noise_pole = 0.9;  // AR(1) coefficient of the background

  bool attending(double t) const {
    for (const auto& [b, e] : attention_intervals)
      if (t >= b && t < e) return true;
    return false;
  }
};

/// Synthetic EEG: AR(1) background plus theta (6 Hz), alpha (10 Hz) and beta
/// (20 Hz) rhythms with per-channel random phases. Sample i sits at
/// start_ts + i / fs.
inline EegStream generate_eeg(const EegConfig& config, const AttentionProfile& profile, double duration_s,
                              std::uint64_t seed, double start_ts = 0.0) {
  validate(config);
  const auto n = static_cast<std::size_t>(std::floor(duration_s * config.fs_hz + 1e-9));
  const std::size_t nch = config.channels.size();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  struct ChannelParams {
    double phi[3];
    bool frontal;
    bool occipital;
  };
  std::vector<ChannelParams> params(nch);
  for (std::size_t c = 0; c < nch; ++c) {
    for (double& p : params[c].phi) p = phase(rng);
    params[c].frontal = is_frontal(config.channels[c]);
    params[c].occipital = is_occipital(config.channels[c]);
  }

  EegStream out;
  out.start_ts = start_ts;
  out.fs_hz = config.fs_hz;
  out.data.assign(nch, std::vector<double>(n, 0.0));

  const double freqs[3] = {6.0, 10.0, 20.0};
  const double amps[3] = {profile.amp_theta_uv, profile.amp_alpha_uv, profile.amp_beta_uv};
  const double a = profile.noise_pole;
  const double innov = profile.noise_uv * std::sqrt(1.0 - a * a);
  std::vector<double> ar(nch, 0.0);
  for (std::size_t c = 0; c < nch; ++c) ar[c] = profile.noise_uv * gauss(rng);

  // interval lookup walks forward with time
  std::vector<std::pair<double, double>> intervals = profile.attention_intervals;
  std::sort(intervals.begin(), intervals.end());
  std::size_t iv = 0;

  for (std::size_t i = 0; i < n; ++i) {
    const double t = start_ts + static_cast<double>(i) / config.fs_hz;
    while (iv < intervals.size() && intervals[iv].second <= t) ++iv;
    const bool attending = iv < intervals.size() && t >= intervals[iv].first;
    double s[3], co[3];
    for (int b = 0; b < 3; ++b) {
      const double w = 2.0 * std::numbers::pi * freqs[b] * t;
      s[b] = std::sin(w);
      co[b] = std::cos(w);
    }
    for (std::size_t c = 0; c < nch; ++c) {
      const auto& p = params[c];
      double gain[3] = {1.0, 1.0, 1.0};
      if (attending) {
        if (p.frontal) gain[0] = 1.0 + profile.d_theta;
        if (p.occipital) gain[1] = 1.0 - profile.d_alpha;
      }
      double x = 0.0;
      for (int b = 0; b < 3; ++b) x += gain[b] * amps[b] * (s[b] * std::cos(p.phi[b]) + co[b] * std::sin(p.phi[b]));
      ar[c] = a * ar[c] + innov * gauss(rng);
      out.data[c][i] = x + ar[c];
    }
  }
  return out;
}

inline EegWindow slice_window(const EegStream& stream, std::size_t first, std::size_t length) {
  EegWindow w;
  w.start_ts = stream.start_ts + static_cast<double>(first) / stream.fs_hz;
  w.fs_hz = stream.fs_hz;
  w.samples.reserve(stream.channels());
  for (const auto& ch : stream.data) w.samples.emplace_back(ch.begin() + static_cast<std::ptrdiff_t>(first),
                                                            ch.begin() + static_cast<std::ptrdiff_t>(first + length));
  return w;
}

/// Fixed-length windows with hop window*(1-overlap); a trailing partial window is dropped.
inline std::vector<EegWindow> window_stream(const EegStream& stream, const EegConfig& config) {
  const std::size_t len = config.window_samples();
  const std::size_t hop = config.hop_samples();
  if (stream.samples() < len) fail(ErrorCode::StreamTooShort, "stream shorter than one window");
  std::vector<EegWindow> out;
  for (std::size_t first = 0; first + len <= stream.samples(); first += hop) out.push_back(slice_window(stream, first, len));
  return out;
}

namespace detail {

struct FftPlanCache {
  std::mutex mu;
  std::map<int, fftw_plan> plans;

  ~FftPlanCache() {
    for (auto& [n, p] : plans) fftw_destroy_plan(p);
  }

  fftw_plan get(int n) {
    std::lock_guard lock(mu);
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;
    double* in = fftw_alloc_real(static_cast<std::size_t>(n));
    fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    fftw_plan p = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    plans.emplace(n, p);
    return p;
  }
};

inline FftPlanCache& plan_cache() {
  static FftPlanCache cache;
  return cache;
}

}  // namespace detail

/// Periodic Hann taper; its mean square is exactly 3/8.
inline double hann(std::size_t i, std::size_t n) {
  return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n)));
}

inline constexpr double kHannPowerGain = 3.0 / 8.0;

/// One-sided periodogram of the Hann-tapered signal, scaled so the bins sum
/// to the tapered signal's mean square.
inline std::vector<double> periodogram(std::span<const double> x) {
  const std::size_t n = x.size();
  const int ni = static_cast<int>(n);
  fftw_plan plan = detail::plan_cache().get(ni);
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  for (std::size_t i = 0; i < n; ++i) in[i] = x[i] * hann(i, n);
  fftw_execute_dft_r2c(plan, in, out);
  std::vector<double> p(n / 2 + 1);
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double mag2 = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    const bool unpaired = k == 0 || (n % 2 == 0 && k == n / 2);
    p[k] = (unpaired ? 1.0 : 2.0) * mag2 * norm;
  }
  fftw_free(in);
  fftw_free(out);
  return p;
}

inline void check_band(const Band& band, double fs_hz) {
  if (!(band.lo_hz >= 0.0 && band.lo_hz < band.hi_hz && band.hi_hz <= fs_hz / 2.0))
    fail(ErrorCode::BandOutOfRange, "band " + band.name + " outside [0, fs/2]");
}

/// Bins with lo <= f < hi; a band ending exactly at Nyquist includes the Nyquist bin.
inline double sum_band(std::span<const double> pgram, std::size_t n, double fs_hz, const Band& band) {
  double total = 0.0;
  const double nyquist = fs_hz / 2.0;
  for (std::size_t k = 0; k < pgram.size(); ++k) {
    const double f = static_cast<double>(k) * fs_hz / static_cast<double>(n);
    const bool in = f >= band.lo_hz && (f < band.hi_hz || (band.hi_hz >= nyquist && f <= band.hi_hz));
    if (in) total += pgram[k];
  }
  return total;
}

/// Per-channel band power in uV^2 (Hann-tapered periodogram, no taper-gain correction).
inline std::vector<double> band_power(const EegWindow& window, const Band& band) {
  check_band(band, window.fs_hz);
  std::vector<double> out;
  out.reserve(window.samples.size());
  for (const auto& ch : window.samples) out.push_back(sum_band(periodogram(ch), ch.size(), window.fs_hz, band));
  return out;
}

/// Channel-major concatenation: for each channel, every band in declared order.
inline FeatureVector extract_features(const EegWindow& window, std::span<const Band> bands) {
  for (const auto& b : bands) check_band(b, window.fs_hz);
  FeatureVector fv;
  fv.ts = window.start_ts;
  fv.values.reserve(window.samples.size() * bands.size());
  for (const auto& ch : window.samples) {
    const auto pg = periodogram(ch);
    for (const auto& b : bands) fv.values.push_back(sum_band(pg, ch.size(), window.fs_hz, b));
  }
  return fv;
}

inline std::vector<std::string> feature_names(const EegConfig& config, std::span<const Band> bands) {
  std::vector<std::string> names;
  for (const auto& ch : config.channels)
    for (const auto& b : bands) names.push_back(ch + ":" + b.name);
  return names;
}

inline constexpr double kStraddleFraction = 0.25;
inline constexpr int kStraddleProbes = 40;

/// Label for a window spanning [start, start+duration): Attention when the
/// GPS position at the midpoint is inside a landmark radius, NonAttention
/// otherwise; nullopt when more than a quarter of the window disagrees with
/// the midpoint.
inline std::optional<AttentionLabel> label_span(double start, double duration, const geo::Trajectory& traj,
                                                const geo::PathSpec& path) {
  if (traj.empty()) fail(ErrorCode::EmptyTrajectory, "labeling needs a trajectory");
  if (start < traj.t_begin() || start + duration > traj.t_end())
    fail(ErrorCode::TimestampOutOfRange, "window outside trajectory span");
  auto inside_any = [&](double t) {
    const auto pos = geo::position_at(traj, t);
    for (const auto& lm : path.landmarks)
      if (geo::is_within(pos, lm)) return true;
    return false;
  };
  const bool mid = inside_any(start + duration / 2.0);
  int inside = 0;
  for (int i = 0; i < kStraddleProbes; ++i)
    if (inside_any(start + (i + 0.5) * duration / kStraddleProbes)) ++inside;
  const double frac_inside = static_cast<double>(inside) / kStraddleProbes;
  const double disagree = mid ? 1.0 - frac_inside : frac_inside;
  if (disagree > kStraddleFraction) return std::nullopt;
  return mid ? AttentionLabel::Attention : AttentionLabel::NonAttention;
}

/// Returns the labeled subset of `windows`; boundary-straddling windows are dropped.
inline std::vector<EegWindow> label_windows(std::span<const EegWindow> windows, const geo::Trajectory& traj,
                                            const geo::PathSpec& path) {
  std::vector<EegWindow> out;
  for (const auto& w : windows) {
    auto label = label_span(w.start_ts, w.duration(), traj, path);
    if (!label) continue;
    EegWindow copy = w;
    copy.label = label;
    out.push_back(std::move(copy));
  }
  return out;
}

}  // namespace acta::signal
