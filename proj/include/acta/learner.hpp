#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "acta/common.hpp"
#include "acta/protocol.hpp"
#include "acta/signal.hpp"

namespace acta::learner {

enum class Origin { Phase1, SemiSupervised };

inline const char* to_string(Origin o) { return o == Origin::Phase1 ? "phase1" : "semi_supervised"; }

struct Record {
  signal::FeatureVector fv;
  AttentionLabel label = AttentionLabel::NonAttention;
  Origin origin = Origin::Phase1;
};

struct Dataset {
  std::string participant_id;
  std::vector<std::string> feature_names;
  std::vector<Record> records;
  std::size_t new_semi_supervised = 0;  // appended since the last training

  std::size_t dimension() const {
    if (!feature_names.empty()) return feature_names.size();
    return records.empty() ? 0 : records.front().fv.values.size();
  }

  std::size_t count(AttentionLabel l) const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [&](const Record& r) { return r.label == l; }));
  }

  void append(Record r) {
    if (dimension() != 0 && r.fv.values.size() != dimension())
      fail(ErrorCode::DimensionMismatch, "record has " + std::to_string(r.fv.values.size()) + " features, dataset has " +
                                             std::to_string(dimension()));
    records.push_back(std::move(r));
  }
};

struct TrainingMeta {
  int epochs = 0;
  double step_size = 0.0;
  double l2 = 0.0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // initial loss followed by one entry per epoch
};

struct AttentionModel {
  int version = 1;
  std::vector<std::string> feature_names;
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;  // feature had zero variance; its weight is pinned to 0
  TrainingMeta meta;

  std::size_t dimension() const { return weights.size(); }
};

struct Prediction {
  AttentionLabel label = AttentionLabel::NonAttention;
  double confidence = 0.5;  // P(attention)
};

struct EvalReport {
  std::size_t n = 0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Pluggable attention classifier.
class AttentionClassifier {
 public:
  virtual ~AttentionClassifier() = default;
  virtual Prediction predict(const signal::FeatureVector& fv) const = 0;
  virtual std::size_t dimension() const = 0;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double affine_score(const AttentionModel& m, const signal::FeatureVector& fv) {
  if (fv.values.size() != m.dimension())
    fail(ErrorCode::DimensionMismatch, "feature vector has " + std::to_string(fv.values.size()) + " values, model expects " +
                                           std::to_string(m.dimension()));
  double z = m.bias;
  for (std::size_t j = 0; j < m.dimension(); ++j) {
    if (m.constant[j]) continue;
    z += m.weights[j] * (fv.values[j] - m.mean[j]) / m.stddev[j];
  }
  return z;
}

/// A tie at exactly 0.5 is NonAttention.
inline Prediction predict(const AttentionModel& m, const signal::FeatureVector& fv) {
  const double c = sigmoid(affine_score(m, fv));
  return {c > 0.5 ? AttentionLabel::Attention : AttentionLabel::NonAttention, c};
}

class LogisticClassifier final : public AttentionClassifier {
 public:
  explicit LogisticClassifier(AttentionModel model) : model_(std::move(model)) {}
  Prediction predict(const signal::FeatureVector& fv) const override { return learner::predict(model_, fv); }
  std::size_t dimension() const override { return model_.dimension(); }
  const AttentionModel& model() const { return model_; }

 private:
  AttentionModel model_;
};

/// z-scored design matrix with per-record loss weights.
struct NormalizedData {
  std::vector<std::vector<double>> x;
  std::vector<double> y;       // 1 = attention
  std::vector<double> weight;  // inverse class frequency, mean 1
  std::vector<bool> constant;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
};

/// Weighted mean cross-entropy plus (l2/2)*|w|^2 and its exact gradient.
inline LossGrad loss_and_gradient(const NormalizedData& d, std::span<const double> w, double b, double l2) {
  const std::size_t n = d.x.size();
  const std::size_t dim = w.size();
  LossGrad r;
  r.grad_w.assign(dim, 0.0);
  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    for (std::size_t j = 0; j < dim; ++j) z += w[j] * d.x[i][j];
    // log(1+e^z) - y z, numerically stable
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    r.loss += d.weight[i] * (softplus - d.y[i] * z);
    const double err = d.weight[i] * (sigmoid(z) - d.y[i]);
    for (std::size_t j = 0; j < dim; ++j) r.grad_w[j] += err * d.x[i][j];
    r.grad_b += err;
    wsum += d.weight[i];
  }
  r.loss /= wsum;
  r.grad_b /= wsum;
  double reg = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    r.grad_w[j] = r.grad_w[j] / wsum + l2 * w[j];
    reg += w[j] * w[j];
  }
  r.loss += 0.5 * l2 * reg;
  return r;
}

struct TrainOptions {
  int epochs = 300;
  double step_size = 0.1;
  double l2 = 1e-3;
  std::uint64_t seed = 1;
  std::size_t min_per_class = 10;
};

inline void check_dataset(const Dataset& data, std::size_t min_per_class) {
  const std::size_t dim = data.dimension();
  for (const auto& r : data.records)
    if (r.fv.values.size() != dim) fail(ErrorCode::DimensionMismatch, "inconsistent feature dimensionality");
  const auto pos = data.count(AttentionLabel::Attention);
  const auto neg = data.count(AttentionLabel::NonAttention);
  if (pos < min_per_class || neg < min_per_class)
    fail(ErrorCode::ClassImbalanceFatal, "need >= " + std::to_string(min_per_class) + " records per class, have " +
                                             std::to_string(pos) + " attention / " + std::to_string(neg) + " non-attention");
}

/// Normalizes `data` with the statistics stored in `model` (mean/std must be set).
inline NormalizedData normalize(const Dataset& data, const AttentionModel& model) {
  NormalizedData d;
  const std::size_t dim = model.dimension();
  const auto pos = static_cast<double>(data.count(AttentionLabel::Attention));
  const auto neg = static_cast<double>(data.count(AttentionLabel::NonAttention));
  const auto n = static_cast<double>(data.records.size());
  d.constant = model.constant;
  for (const auto& r : data.records) {
    std::vector<double> row(dim, 0.0);
    for (std::size_t j = 0; j < dim; ++j)
      if (!model.constant[j]) row[j] = (r.fv.values[j] - model.mean[j]) / model.stddev[j];
    d.x.push_back(std::move(row));
    const bool attn = r.label == AttentionLabel::Attention;
    d.y.push_back(attn ? 1.0 : 0.0);
    d.weight.push_back(n / (2.0 * (attn ? pos : neg)));
  }
  return d;
}

/// L2-regularized logistic regression, full-batch gradient descent on z-scored
/// features, inverse-frequency record weights.
inline AttentionModel train(const Dataset& data, const TrainOptions& opt = {}) {
  check_dataset(data, opt.min_per_class);
  const std::size_t dim = data.dimension();
  const auto n = static_cast<double>(data.records.size());

  AttentionModel m;
  m.feature_names = data.feature_names;
  if (m.feature_names.empty())
    for (std::size_t j = 0; j < dim; ++j) m.feature_names.push_back("f" + std::to_string(j));
  m.mean.assign(dim, 0.0);
  m.stddev.assign(dim, 1.0);
  m.constant.assign(dim, false);
  for (std::size_t j = 0; j < dim; ++j) {
    double s = 0.0;
    for (const auto& r : data.records) s += r.fv.values[j];
    m.mean[j] = s / n;
    double v = 0.0;
    for (const auto& r : data.records) v += (r.fv.values[j] - m.mean[j]) * (r.fv.values[j] - m.mean[j]);
    m.stddev[j] = std::sqrt(v / n);
    if (!(m.stddev[j] > 1e-12 * std::max(1.0, std::abs(m.mean[j])))) {
      m.constant[j] = true;
      m.stddev[j] = 1.0;
    }
  }

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> init(0.0, 0.01);
  m.weights.assign(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j) {
    const double w0 = init(rng);
    if (!m.constant[j]) m.weights[j] = w0;
  }
  m.bias = 0.0;

  const auto d = normalize(data, m);
  auto lg = loss_and_gradient(d, m.weights, m.bias, opt.l2);
  m.meta.loss_history.push_back(lg.loss);
  for (int e = 0; e < opt.epochs; ++e) {
    for (std::size_t j = 0; j < dim; ++j)
      if (!m.constant[j]) m.weights[j] -= opt.step_size * lg.grad_w[j];
    m.bias -= opt.step_size * lg.grad_b;
    lg = loss_and_gradient(d, m.weights, m.bias, opt.l2);
    m.meta.loss_history.push_back(lg.loss);
  }
  m.meta.epochs = opt.epochs;
  m.meta.step_size = opt.step_size;
  m.meta.l2 = opt.l2;
  m.meta.seed = opt.seed;
  m.meta.final_loss = lg.loss;
  return m;
}

inline EvalReport evaluate(const AttentionClassifier& clf, const Dataset& data) {
  if (data.records.empty()) fail(ErrorCode::EmptyDataset, "nothing to evaluate");
  EvalReport r;
  for (const auto& rec : data.records) {
    const bool predicted = clf.predict(rec.fv).label == AttentionLabel::Attention;
    const bool actual = rec.label == AttentionLabel::Attention;
    if (predicted && actual) ++r.tp;
    else if (predicted) ++r.fp;
    else if (actual) ++r.fn;
    else ++r.tn;
  }
  r.n = data.records.size();
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.n);
  r.precision = r.tp + r.fp ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  return r;
}

inline EvalReport evaluate(const AttentionModel& model, const Dataset& data) {
  return evaluate(LogisticClassifier(model), data);
}

/// Appends agreement cases (a) and (b) as semi-supervised records; any other
/// event leaves the dataset as it was.
inline Dataset semi_supervised_update(const Dataset& data, const signal::FeatureVector& fv,
                                      const protocol::FeedbackEvent& event) {
  Dataset out = data;
  std::optional<AttentionLabel> label;
  if (event.kind == protocol::FeedbackKind::NfbEncourage) label = AttentionLabel::Attention;
  if (event.kind == protocol::FeedbackKind::NfbReinforce) label = AttentionLabel::NonAttention;
  if (!label) return out;
  out.append({fv, *label, Origin::SemiSupervised});
  ++out.new_semi_supervised;
  return out;
}

struct RetrainPolicy {
  std::size_t min_new_records = 50;
};

/// Retrain only between sessions, once enough semi-supervised records piled up.
inline bool retrain_schedule(const Dataset& data, const RetrainPolicy& policy, bool between_sessions) {
  return between_sessions && data.new_semi_supervised >= policy.min_new_records;
}

/// Stratified split; returns {train, holdout}.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double holdout_fraction, std::uint64_t seed) {
  Dataset train_set, holdout;
  train_set.participant_id = holdout.participant_id = data.participant_id;
  train_set.feature_names = holdout.feature_names = data.feature_names;
  std::mt19937_64 rng(seed);
  for (auto label : {AttentionLabel::NonAttention, AttentionLabel::Attention}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.records.size(); ++i)
      if (data.records[i].label == label) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_hold = static_cast<std::size_t>(std::lround(holdout_fraction * static_cast<double>(idx.size())));
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::sort(idx.begin() + static_cast<std::ptrdiff_t>(n_hold), idx.end());
    for (std::size_t k = 0; k < idx.size(); ++k) (k < n_hold ? holdout : train_set).records.push_back(data.records[idx[k]]);
  }
  return {train_set, holdout};
}

/// Downsamples the majority class so both labels are equally represented.
inline Dataset balance(const Dataset& data, std::uint64_t seed) {
  Dataset out;
  out.participant_id = data.participant_id;
  out.feature_names = data.feature_names;
  const std::size_t keep = std::min(data.count(AttentionLabel::Attention), data.count(AttentionLabel::NonAttention));
  std::mt19937_64 rng(seed);
  for (auto label : {AttentionLabel::NonAttention, AttentionLabel::Attention}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.records.size(); ++i)
      if (data.records[i].label == label) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) out.records.push_back(data.records[i]);
  }
  return out;
}

// --- persistence -----------------------------------------------------------

inline nlohmann::json to_json(const AttentionModel& m) {
  nlohmann::json j;
  j["format"] = "acta-model";
  j["version"] = m.version;
  j["feature_names"] = m.feature_names;
  j["weights"] = m.weights;
  j["bias"] = m.bias;
  j["mean"] = m.mean;
  j["stddev"] = m.stddev;
  j["constant"] = m.constant;
  j["training"] = {{"epochs", m.meta.epochs},
                   {"step_size", m.meta.step_size},
                   {"l2", m.meta.l2},
                   {"seed", m.meta.seed},
                   {"final_loss", m.meta.final_loss}};
  return j;
}

inline AttentionModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "acta-model") fail(ErrorCode::InvalidConfig, "not an acta model record");
    AttentionModel m;
    m.version = j.at("version").get<int>();
    if (m.version != 1) fail(ErrorCode::InvalidConfig, "unsupported model version " + std::to_string(m.version));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.stddev = j.at("stddev").get<std::vector<double>>();
    m.constant = j.at("constant").get<std::vector<bool>>();
    const auto& t = j.at("training");
    m.meta.epochs = t.at("epochs").get<int>();
    m.meta.step_size = t.at("step_size").get<double>();
    m.meta.l2 = t.at("l2").get<double>();
    m.meta.seed = t.at("seed").get<std::uint64_t>();
    m.meta.final_loss = t.at("final_loss").get<double>();
    const auto d = m.weights.size();
    if (m.feature_names.size() != d || m.mean.size() != d || m.stddev.size() != d || m.constant.size() != d)
      fail(ErrorCode::DimensionMismatch, "model record fields disagree on dimensionality");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("malformed model record: ") + e.what());
  }
}

inline void save_model(const AttentionModel& m, const std::string& file) {
  std::ofstream out(file);
  if (!out) fail(ErrorCode::Io, "cannot write " + file);
  out << to_json(m).dump(2) << "\n";
}

inline AttentionModel load_model(const std::string& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorCode::Io, "cannot read " + file);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("model file is not JSON: ") + e.what());
  }
  return model_from_json(j);
}

/// CSV: header "ts,label,origin,<feature...>", one row per window.
inline std::string dataset_to_csv(const Dataset& d) {
  std::string out = "# acta-dataset v1 participant=" + d.participant_id + "\n";
  out += "ts,label,origin";
  for (const auto& n : d.feature_names) out += "," + n;
  out += "\n";
  for (const auto& r : d.records) {
    out += fmt6(r.fv.ts) + "," + to_string(r.label) + "," + to_string(r.origin);
    for (double v : r.fv.values) out += "," + fmt6(v);
    out += "\n";
  }
  return out;
}

inline Dataset dataset_from_csv(const std::string& text) {
  Dataset d;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  const std::string magic = "# acta-dataset v1 participant=";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind(magic, 0) == 0) {
      d.participant_id = line.substr(magic.size());
      continue;
    }
    const auto cols = split(line, ',');
    if (!header) {
      if (cols.size() < 3 || cols[0] != "ts" || cols[1] != "label" || cols[2] != "origin")
        fail(ErrorCode::InvalidConfig, "dataset header must start with ts,label,origin");
      for (std::size_t i = 3; i < cols.size(); ++i) d.feature_names.emplace_back(cols[i]);
      header = true;
      continue;
    }
    if (cols.size() != d.feature_names.size() + 3) fail(ErrorCode::DimensionMismatch, "dataset row width mismatch");
    Record r;
    try {
      r.fv.ts = parse_double(cols[0]);
      r.label = parse_label(cols[1]);
      for (std::size_t i = 3; i < cols.size(); ++i) r.fv.values.push_back(parse_double(cols[i]));
    } catch (const std::exception& e) {
      fail(ErrorCode::InvalidConfig, std::string("bad dataset row: ") + e.what());
    }
    if (cols[2] == "phase1") r.origin = Origin::Phase1;
    else if (cols[2] == "semi_supervised") r.origin = Origin::SemiSupervised;
    else fail(ErrorCode::InvalidConfig, "unknown origin '" + std::string(cols[2]) + "'");
    d.records.push_back(std::move(r));
  }
  if (!header) fail(ErrorCode::InvalidConfig, "dataset has no header");
  return d;
}

}  // namespace acta::learner
