#include <gtest/gtest.h>

#include <random>

#include "acta/signal.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace acta;
using namespace acta::signal;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0, 5);
  std::vector<double> x(n);
  for (auto& v : x) v = g(rng);
  return x;
}

EegWindow single_channel(std::vector<double> x, double fs) {
  EegWindow w;
  w.fs_hz = fs;
  w.samples = {std::move(x)};
  return w;
}

}  // namespace

TEST(Periodogram, MatchesDirectDftOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = seed % 2 ? 500 : 257;
    auto x = noise(n, seed);
    for (std::size_t i = 0; i < n; ++i) x[i] += 3 * std::sin(2 * M_PI * 10 * static_cast<double>(i) / 250.0);
    for (const auto& b : default_bands()) {
      const double ours = band_power(single_channel(x, 250.0), b)[0];
      const double oracle = oracles::dft_band_power(x, 250.0, b.lo_hz, b.hi_hz);
      EXPECT_NEAR(ours, oracle, 0.01 * oracle) << b.name << " n=" << n;
    }
  }
}

TEST(Periodogram, ParsevalIdentity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 100 + 37 * seed;
    const auto x = noise(n, seed);
    const auto p = periodogram(x);
    double sum = 0.0, ms = 0.0;
    for (double v : p) sum += v;
    for (std::size_t i = 0; i < n; ++i) ms += std::pow(x[i] * hann(i, n), 2);
    ms /= static_cast<double>(n);
    EXPECT_NEAR(sum, ms, 1e-6 * ms);
  }
}

TEST(BandPower, UnitSineAtTenHertz) {
  // a bin-centred sine of amplitude A carries A^2/2, scaled by the taper's 3/8
  std::vector<double> x(500);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 2.0 * std::sin(2 * M_PI * 10 * static_cast<double>(i) / 250.0);
  const auto w = single_channel(x, 250.0);
  EXPECT_NEAR(band_power(w, {"alpha", 8, 13})[0] / kHannPowerGain, 2.0, 1e-9);
  EXPECT_NEAR(band_power(w, {"theta", 4, 8})[0], 0.0, 1e-12);
}

TEST(BandPower, BandsPartitioningTheSpectrumSumToTotal) {
  const auto x = noise(500, 4);
  const auto w = single_channel(x, 250.0);
  const std::vector<Band> all = {{"a", 0, 40}, {"b", 40, 90.5}, {"c", 90.5, 125}};
  double total = 0.0;
  for (const auto& b : all) total += band_power(w, b)[0];
  double sum = 0.0;
  for (double v : periodogram(x)) sum += v;
  EXPECT_NEAR(total, sum, 1e-9 * sum);
}

TEST(BandPower, RejectsBandsBeyondNyquist) {
  const auto w = single_channel(noise(100, 1), 50.0);
  try {
    band_power(w, {"beta", 13, 30});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BandOutOfRange);
  }
  EXPECT_THROW(band_power(w, {"inv", 10, 5}), Error);
}

TEST(EegConfig, Validation) {
  EegConfig c;
  EXPECT_NO_THROW(validate(c));
  c.fs_hz = 50;
  EXPECT_THROW(validate(c), Error);
  c = EegConfig{};
  c.channels.push_back("Zz9");
  EXPECT_THROW(validate(c), Error);
  c = EegConfig{};
  c.overlap = 1.0;
  EXPECT_THROW(validate(c), Error);
}

TEST(Windowing, CountAndTimestamps) {
  EegConfig c;
  const auto s = generate_eeg(c, {}, 60.0, 1, 10.0);
  ASSERT_EQ(s.samples(), 15000u);
  const auto w = window_stream(s, c);
  ASSERT_EQ(w.size(), 59u);  // (15000 - 500) / 250 + 1
  EXPECT_DOUBLE_EQ(w[0].start_ts, 10.0);
  EXPECT_DOUBLE_EQ(w[1].start_ts, 11.0);
  EXPECT_EQ(w[3].length(), 500u);
  EXPECT_DOUBLE_EQ(w[3].samples[2][7], s.data[2][750 + 7]);
  try {
    window_stream(generate_eeg(c, {}, 1.0, 1), c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StreamTooShort);
  }
}

TEST(Generator, DeterministicBySeed) {
  EegConfig c;
  const auto a = generate_eeg(c, {}, 4.0, 9), b = generate_eeg(c, {}, 4.0, 9), d = generate_eeg(c, {}, 4.0, 10);
  EXPECT_EQ(a.data, b.data);
  EXPECT_NE(a.data, d.data);
}

TEST(Generator, AttentionRaisesFrontalThetaAndLowersOccipitalAlpha) {
  EegConfig c;
  AttentionProfile on, off;
  on.attention_intervals = {{0.0, 1e9}};
  const auto bands = default_bands();
  double th_on = 0, th_off = 0, al_on = 0, al_off = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& w : window_stream(generate_eeg(c, on, 10.0, seed), c)) {
      th_on += band_power(w, bands[0])[0];  // Fp1
      al_on += band_power(w, bands[1])[6];  // O1
    }
    for (const auto& w : window_stream(generate_eeg(c, off, 10.0, seed), c)) {
      th_off += band_power(w, bands[0])[0];
      al_off += band_power(w, bands[1])[6];
    }
  }
  EXPECT_GT(th_on, 1.5 * th_off);
  EXPECT_LT(al_on, 0.6 * al_off);
}

TEST(Generator, ZeroDepthIsIndependentOfAttention) {
  EegConfig c;
  AttentionProfile on, off;
  on.attention_intervals = {{0.0, 1e9}};
  on.d_theta = on.d_alpha = off.d_theta = off.d_alpha = 0.0;
  EXPECT_EQ(generate_eeg(c, on, 3.0, 5).data, generate_eeg(c, off, 3.0, 5).data);
}

TEST(Features, ChannelMajorLayoutAndNames) {
  EegConfig c;
  const auto bands = default_bands();
  const auto names = feature_names(c, bands);
  ASSERT_EQ(names.size(), 24u);
  EXPECT_EQ(names[0], "Fp1:theta");
  EXPECT_EQ(names[4], "Fp2:alpha");
  const auto w = window_stream(generate_eeg(c, {}, 2.0, 3), c)[0];
  const auto fv = extract_features(w, bands);
  ASSERT_EQ(fv.values.size(), 24u);
  EXPECT_DOUBLE_EQ(fv.values[3 * 5 + 2], band_power(w, bands[2])[5]);
}

TEST(Labeling, MidpointRuleAndStraddleDrop) {
  const auto path = fixtures::l_route();
  const auto traj = fixtures::walk(path, 1.0, 0.5);  // lm1 radius spans arc 130..170
  EXPECT_EQ(label_span(148.0, 2.0, traj, path), AttentionLabel::Attention);
  EXPECT_EQ(label_span(60.0, 2.0, traj, path), AttentionLabel::NonAttention);
  // [129, 133): midpoint inside but only 3 of 4 s inside -> 25% disagree, kept
  EXPECT_EQ(label_span(129.0, 4.0, traj, path), AttentionLabel::Attention);
  // [128, 132): half the window is outside
  EXPECT_FALSE(label_span(128.0, 4.0, traj, path).has_value());
  try {
    label_span(traj.t_end() - 1.0, 2.0, traj, path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TimestampOutOfRange);
  }
}

TEST(Labeling, LabelWindowsKeepsOnlyUnambiguousWindows) {
  const auto path = fixtures::l_route();
  const auto traj = fixtures::walk(path, 1.0, 0.5);
  EegConfig c;
  const auto windows = window_stream(generate_eeg(c, {}, 1000.0, 2), c);
  const auto labeled = label_windows(windows, traj, path);
  EXPECT_LT(labeled.size(), windows.size());
  std::size_t attn = 0;
  for (const auto& w : labeled) {
    ASSERT_TRUE(w.label.has_value());
    if (*w.label == AttentionLabel::Attention) ++attn;
  }
  // midpoint inside for starts 129..169; the two end starts are half outside
  // and dropped, leaving 39 per landmark
  EXPECT_EQ(attn, 4u * 39u);
}
