#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

namespace acta {

enum class ErrorCode {
  EmptyTrajectory,
  InsufficientSamples,
  StimulusOutOfRange,
  InvalidPath,
  TooFewSessions,
  PlanAlreadyActive,
  UnknownPlace,
  SessionNotActive,
  InvalidConfig,
  StreamTooShort,
  BandOutOfRange,
  TimestampOutOfRange,
  EmptyGraph,
  ClassImbalanceFatal,
  DimensionMismatch,
  EmptyDataset,
  BatteryExhausted,
  NegativeRoundTrip,
  UnknownSession,
  InvalidLink,
  ScenarioInvalid,
  ModelMissing,
  CorruptLog,
  CommandRejected,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyTrajectory: return "EmptyTrajectory";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::StimulusOutOfRange: return "StimulusOutOfRange";
    case ErrorCode::InvalidPath: return "InvalidPath";
    case ErrorCode::TooFewSessions: return "TooFewSessions";
    case ErrorCode::PlanAlreadyActive: return "PlanAlreadyActive";
    case ErrorCode::UnknownPlace: return "UnknownPlace";
    case ErrorCode::SessionNotActive: return "SessionNotActive";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::StreamTooShort: return "StreamTooShort";
    case ErrorCode::BandOutOfRange: return "BandOutOfRange";
    case ErrorCode::TimestampOutOfRange: return "TimestampOutOfRange";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::ClassImbalanceFatal: return "ClassImbalanceFatal";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::BatteryExhausted: return "BatteryExhausted";
    case ErrorCode::NegativeRoundTrip: return "NegativeRoundTrip";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::InvalidLink: return "InvalidLink";
    case ErrorCode::ScenarioInvalid: return "ScenarioInvalid";
    case ErrorCode::ModelMissing: return "ModelMissing";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::CommandRejected: return "CommandRejected";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

enum class AttentionLabel { NonAttention, Attention };

inline const char* to_string(AttentionLabel l) { return l == AttentionLabel::Attention ? "attention" : "non_attention"; }

inline AttentionLabel parse_label(std::string_view s) {
  if (s == "attention") return AttentionLabel::Attention;
  if (s == "non_attention") return AttentionLabel::NonAttention;
  throw std::invalid_argument("unknown label: " + std::string(s));
}

/// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

// Wire and log values are rendered with six decimals; rounding at the source
// keeps run-time values identical to what a replay parses back.
inline double quantize6(double v) { return std::round(v * 1e6) / 1e6; }

inline std::string fmt6(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  // avoid "-0.000000" so that equal values render identically
  if (std::string_view(buf) == "-0.000000") return "0.000000";
  return buf;
}

inline double parse_double(std::string_view s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  std::string tmp(s);
  char* end = nullptr;
  double v = std::strtod(tmp.c_str(), &end);
  if (end == tmp.c_str() || *end != '\0') fail(ErrorCode::CorruptLog, "bad number '" + tmp + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto next = s.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
}

/// splitmix64 finalizer; derives independent stream seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace acta
