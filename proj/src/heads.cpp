#include "affect/heads.hpp"

#include "affect/metrics.hpp"
#include "affect/postprocess.hpp"

#include <nlohmann/json.hpp>
#include <sodium.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace affect {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Feature selection

std::string_view to_string(FeatureSelector selector) {
  switch (selector) {
    case FeatureSelector::LogitsVa: return "logits_va";
    case FeatureSelector::Embeddings: return "embeddings";
    case FeatureSelector::EmbeddingsPlusLogits: return "embeddings_plus_logits";
  }
  return "?";
}

FeatureSelector parse_selector(std::string_view name) {
  if (name == "logits_va") return FeatureSelector::LogitsVa;
  if (name == "embeddings") return FeatureSelector::Embeddings;
  if (name == "embeddings_plus_logits") return FeatureSelector::EmbeddingsPlusLogits;
  throw ConfigError("unknown feature selector '" + std::string(name) +
                    "' (expected logits_va, embeddings or embeddings_plus_logits)");
}

std::size_t input_dim(FeatureSelector selector, std::size_t embedding_dim) {
  switch (selector) {
    case FeatureSelector::LogitsVa: return kNumLogits + 2;
    case FeatureSelector::Embeddings: return embedding_dim;
    case FeatureSelector::EmbeddingsPlusLogits: return embedding_dim + kNumLogits + 2;
  }
  return 0;
}

void select_features(const FrameFeatures& frame, FeatureSelector selector, std::span<double> out) {
  const std::size_t dim = frame.embedding.size();
  if (out.size() != input_dim(selector, dim))
    throw DataError("feature selector " + std::string(to_string(selector)) + " expects width " +
                    std::to_string(input_dim(selector, dim)) + ", got " + std::to_string(out.size()));
  std::size_t pos = 0;
  if (selector != FeatureSelector::LogitsVa)
    for (double e : frame.embedding) out[pos++] = e;
  if (selector != FeatureSelector::Embeddings) {
    for (double l : frame.logits) out[pos++] = l;
    out[pos++] = frame.valence;
    out[pos++] = frame.arousal;
  }
}

Matrix feature_matrix(const Dataset& dataset, std::span<const FrameRef> frames, FeatureSelector selector) {
  Matrix x(static_cast<Eigen::Index>(frames.size()), static_cast<Eigen::Index>(input_dim(selector, dataset.dim)));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = dataset.tracks.at(frames[i].track).frames.at(frames[i].position);
    select_features(f, selector, {x.row(i).data(), static_cast<std::size_t>(x.cols())});
  }
  return x;
}

Matrix feature_matrix(const VideoTrack& track, std::size_t embedding_dim, FeatureSelector selector) {
  Matrix x(static_cast<Eigen::Index>(track.frames.size()),
           static_cast<Eigen::Index>(input_dim(selector, embedding_dim)));
  for (std::size_t i = 0; i < track.frames.size(); ++i)
    select_features(track.frames[i], selector, {x.row(i).data(), static_cast<std::size_t>(x.cols())});
  return x;
}

// ---------------------------------------------------------------------------
// Model basics

std::string HeadModel::kind() const {
  const char* act = activation == OutputActivation::Tanh      ? "tanh"
                    : activation == OutputActivation::Softmax ? "softmax"
                                                              : "sigmoid";
  return std::string(act) + "_" + std::to_string(num_outputs());
}

TrainConfig TrainConfig::va_defaults() {
  TrainConfig c;
  c.batch_size = 4096;
  c.hidden_layer = false;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (hidden_layer && hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be >= 0");
  if (class_weights)
    for (double w : *class_weights)
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("class weights must be finite and >= 0");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},       {"batch_size", c.batch_size},
           {"hidden_size", c.hidden_size},     {"hidden_layer", c.hidden_layer}, {"l2", c.l2},
           {"seed", c.seed}};
  j["class_weights"] = c.class_weights ? json(*c.class_weights) : json("auto");
}

void from_json(const json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.hidden_layer = j.value("hidden_layer", c.hidden_layer);
  c.l2 = j.value("l2", c.l2);
  c.seed = j.value("seed", c.seed);
  if (j.contains("class_weights")) {
    const auto& w = j["class_weights"];
    if (w.is_string() && w.get<std::string>() == "auto")
      c.class_weights.reset();
    else if (w.is_array())
      c.class_weights = w.get<std::vector<double>>();
    else
      throw ConfigError("class_weights must be \"auto\" or an array of reals");
  }
}

namespace {

void glorot(DenseLayer& layer, std::mt19937_64& gen) {
  const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(gen);
  layer.bias.setZero();
}

void check_input(const HeadModel& model, const Matrix& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != model.input_dim)
    throw DataError("dimension mismatch: head expects " + std::to_string(model.input_dim) + " inputs (" +
                    std::string(to_string(model.selector)) + "), got " + std::to_string(inputs.cols()));
}

struct Activations {
  Matrix hidden_pre;  // before ReLU
  Matrix hidden;      // after ReLU
  Matrix logits;      // output pre-activation
};

Activations forward_raw(const HeadModel& model, const Matrix& inputs) {
  check_input(model, inputs);
  Activations a;
  if (model.hidden) {
    a.hidden_pre = (inputs * model.hidden->weight.transpose()).rowwise() + model.hidden->bias.transpose();
    a.hidden = a.hidden_pre.cwiseMax(0.0);
    a.logits = (a.hidden * model.output.weight.transpose()).rowwise() + model.output.bias.transpose();
  } else {
    a.logits = (inputs * model.output.weight.transpose()).rowwise() + model.output.bias.transpose();
  }
  return a;
}

Matrix softmax_rows(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    p.row(i) = (z.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Matrix activate(const HeadModel& model, const Matrix& z) {
  switch (model.activation) {
    case OutputActivation::Tanh: return z.array().tanh().matrix();
    case OutputActivation::Softmax: return softmax_rows(z);
    case OutputActivation::Sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
  }
  return z;
}

// Backpropagates dL/dlogits through the output and optional hidden layer.
HeadGradient backprop(const HeadModel& model, const Matrix& inputs, const Activations& a, const Matrix& dlogits) {
  HeadGradient g;
  const Matrix& below = model.hidden ? a.hidden : inputs;
  g.output.weight = dlogits.transpose() * below;
  g.output.bias = dlogits.colwise().sum().transpose();
  if (model.hidden) {
    Matrix dh = dlogits * model.output.weight;
    dh = dh.cwiseProduct((a.hidden_pre.array() > 0.0).cast<double>().matrix());
    g.hidden = DenseLayer{dh.transpose() * inputs, dh.colwise().sum().transpose()};
  }
  return g;
}

// Derivative of CCC(x, y) with respect to each x_i, population moments.
double ccc_and_gradient(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                        Eigen::Ref<Vector> dx) {
  const double n = static_cast<double>(x.size());
  const double mx = x.mean(), my = y.mean();
  const Vector cx = x.array() - mx, cy = y.array() - my;
  const double sxy = cx.dot(cy) / n, sxx = cx.squaredNorm() / n, syy = cy.squaredNorm() / n;
  const double diff = mx - my;
  const double num = 2.0 * sxy;
  const double den = sxx + syy + diff * diff;
  if (den == 0.0) {
    dx.setZero();
    return 1.0;
  }
  // d num/dx_i = 2 cy_i / n ; d den/dx_i = 2 (cx_i + diff) / n
  dx = ((2.0 / n) * cy * den - num * (2.0 / n) * (cx.array() + diff).matrix()) / (den * den);
  return num / den;
}

bool is_constant(const Eigen::Ref<const Vector>& v) { return (v.array() == v[0]).all(); }

}  // namespace

HeadModel init_head(FeatureSelector selector, std::size_t input_dim, std::optional<int> hidden_size, int outputs,
                    OutputActivation activation, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  HeadModel m;
  m.selector = selector;
  m.input_dim = input_dim;
  m.activation = activation;
  m.seed = seed;
  const auto in = static_cast<Eigen::Index>(input_dim);
  Eigen::Index below = in;
  if (hidden_size) {
    m.hidden = DenseLayer{Matrix(*hidden_size, in), Vector(*hidden_size)};
    glorot(*m.hidden, gen);
    below = *hidden_size;
  }
  m.output = DenseLayer{Matrix(outputs, below), Vector(outputs)};
  glorot(m.output, gen);
  return m;
}

Matrix forward(const HeadModel& model, const Matrix& inputs) {
  return activate(model, forward_raw(model, inputs).logits);
}

Matrix predict_va(const HeadModel& model, const Matrix& inputs) {
  if (model.activation != OutputActivation::Tanh || model.num_outputs() != 2)
    throw ConfigError("predict_va needs a tanh_2 head, got " + model.kind());
  return forward(model, inputs);
}

Matrix predict_proba(const HeadModel& model, const Matrix& inputs) {
  if (model.activation == OutputActivation::Tanh)
    throw ConfigError("predict_proba needs a softmax or sigmoid head, got " + model.kind());
  return forward(model, inputs);
}

// ---------------------------------------------------------------------------
// Losses

LossGradient ccc_loss_gradient(const HeadModel& model, const Matrix& inputs, const Matrix& targets) {
  if (targets.cols() != 2 || targets.rows() != inputs.rows() || model.num_outputs() != 2)
    throw DataError("ccc loss: expects 2 outputs and one (valence, arousal) target per row");
  if (inputs.rows() < 2) throw DataError("ccc loss: need at least 2 rows");
  const Activations a = forward_raw(model, inputs);
  const Matrix pred = a.logits.array().tanh().matrix();
  Matrix dpred(pred.rows(), 2);
  double mean_ccc = 0.0;
  for (int c = 0; c < 2; ++c) {
    Vector d(pred.rows());
    mean_ccc += 0.5 * ccc_and_gradient(pred.col(c), targets.col(c), d);
    dpred.col(c) = -0.5 * d;
  }
  const Matrix dlogits = dpred.cwiseProduct((1.0 - pred.array().square()).matrix());
  return {1.0 - mean_ccc, backprop(model, inputs, a, dlogits)};
}

LossGradient cross_entropy_gradient(const HeadModel& model, const Matrix& inputs, std::span<const int> labels,
                                    std::span<const double> class_weights) {
  const auto classes = model.num_outputs();
  if (static_cast<Eigen::Index>(labels.size()) != inputs.rows() ||
      static_cast<Eigen::Index>(class_weights.size()) != classes)
    throw DataError("cross entropy: label/weight shape mismatch");
  const Activations a = forward_raw(model, inputs);
  const double n = static_cast<double>(inputs.rows());
  Matrix dlogits(a.logits.rows(), classes);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < a.logits.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= classes) throw DataError("cross entropy: class id out of range");
    const double m = a.logits.row(i).maxCoeff();
    const double log_norm = m + std::log((a.logits.row(i).array() - m).exp().sum());
    const double w = class_weights[y];
    loss += w * (log_norm - a.logits(i, y));
    dlogits.row(i) = (a.logits.row(i).array() - log_norm).exp() * (w / n);
    dlogits(i, y) -= w / n;
  }
  return {loss / n, backprop(model, inputs, a, dlogits)};
}

LossGradient bce_gradient(const HeadModel& model, const Matrix& inputs, const BitMatrix& labels,
                          std::span<const double> positive_weights) {
  const auto units = model.num_outputs();
  if (labels.rows() != inputs.rows() || labels.cols() != units ||
      static_cast<Eigen::Index>(positive_weights.size()) != units)
    throw DataError("bce: label/weight shape mismatch");
  const Activations a = forward_raw(model, inputs);
  const double n = static_cast<double>(inputs.rows());
  Matrix dlogits(a.logits.rows(), units);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < a.logits.rows(); ++i) {
    for (Eigen::Index u = 0; u < units; ++u) {
      const double z = a.logits(i, u);
      const double s = 1.0 / (1.0 + std::exp(-z));
      if (labels(i, u)) {
        // -w log s = w softplus(-z)
        loss += positive_weights[u] * softplus(-z);
        dlogits(i, u) = -positive_weights[u] * (1.0 - s) / n;
      } else {
        // -log(1 - s) = softplus(z)
        loss += softplus(z);
        dlogits(i, u) = s / n;
      }
    }
  }
  return {loss / n, backprop(model, inputs, a, dlogits)};
}

std::vector<double> auto_class_weights(std::span<const int> labels, int n_classes, std::vector<std::string>* warnings) {
  std::vector<std::size_t> counts(n_classes, 0);
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw DataError("class id out of range");
    ++counts[y];
  }
  std::vector<double> w(n_classes, 0.0);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    if (counts[c] == 0) {
      if (warnings) warnings->push_back("class " + std::to_string(c) + " absent from training data; weight 0");
      continue;
    }
    w[c] = static_cast<double>(labels.size()) / static_cast<double>(counts[c]);
    sum += w[c];
    ++present;
  }
  if (present > 0)
    for (double& v : w) v *= present / sum;
  // Balanced data must give exactly 1.
  for (double& v : w)
    if (std::abs(v - 1.0) < 1e-12) v = 1.0;
  return w;
}

std::vector<double> auto_unit_weights(const BitMatrix& labels, std::vector<std::string>* warnings) {
  std::vector<double> w(labels.cols(), 1.0);
  for (Eigen::Index u = 0; u < labels.cols(); ++u) {
    const auto pos = static_cast<double>(labels.col(u).cast<int>().sum());
    const double neg = static_cast<double>(labels.rows()) - pos;
    if (pos == 0) {
      if (warnings) warnings->push_back("unit " + std::to_string(u) + " has no positives; weight 1");
      continue;
    }
    w[u] = std::min(neg / pos, 100.0);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Training

namespace {

void apply_step(DenseLayer& layer, const DenseLayer& grad, double lr, double l2) {
  if (l2 > 0.0)
    layer.weight -= lr * (grad.weight + l2 * layer.weight);
  else
    layer.weight -= lr * grad.weight;
  layer.bias -= lr * grad.bias;
}

bool finite(const HeadModel& m) {
  return m.output.weight.allFinite() && m.output.bias.allFinite() &&
         (!m.hidden || (m.hidden->weight.allFinite() && m.hidden->bias.allFinite()));
}

// batch_loss(model, rows) returns nullopt to skip a batch; validate(model) returns nullopt when
// there is no validation split.
template <class BatchLoss, class Validate>
TrainResult run_descent(HeadModel model, Eigen::Index n_rows, const TrainConfig& config, BatchLoss&& batch_loss,
                        Validate&& validate) {
  TrainResult result;
  std::mt19937_64 gen(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(n_rows);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  std::optional<double> best_metric;
  result.model = model;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), gen);
    double loss_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::span<const Eigen::Index> rows(order.data() + start, std::min(batch, order.size() - start));
      std::optional<LossGradient> lg = batch_loss(model, rows);
      if (!lg) {
        ++result.skipped_batches;
        continue;
      }
      if (model.hidden) apply_step(*model.hidden, *lg->gradient.hidden, config.learning_rate, config.l2);
      apply_step(model.output, lg->gradient.output, config.learning_rate, config.l2);
      loss_sum += lg->loss;
      ++used;
    }
    if (!finite(model)) throw Error("training diverged at epoch " + std::to_string(epoch) + "; lower learning_rate");
    EpochLog entry{epoch, used ? loss_sum / static_cast<double>(used) : 0.0, validate(model)};
    result.log.push_back(entry);
    if (entry.validation_metric) {
      if (!best_metric || *entry.validation_metric > *best_metric) {
        best_metric = entry.validation_metric;
        result.model = model;
        result.best_epoch = epoch;
      }
    } else {
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  if (result.skipped_batches)
    result.warnings.push_back(std::to_string(result.skipped_batches) +
                              " mini-batches skipped (constant targets)");
  return result;
}

BitMatrix threshold_half(const Matrix& s) { return (s.array() >= 0.5).cast<std::uint8_t>().matrix(); }

std::vector<double> resolve_weights(const TrainConfig& config, std::size_t n, std::vector<double> automatic) {
  if (!config.class_weights) return automatic;
  if (config.class_weights->size() != n)
    throw ConfigError("class_weights has " + std::to_string(config.class_weights->size()) + " entries, expected " +
                      std::to_string(n));
  return *config.class_weights;
}

void check_rows(const Matrix& x, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(x.rows()) != n) throw DataError(std::string(what) + ": inputs/labels row mismatch");
}

}  // namespace

TrainResult train_va_head(FeatureSelector selector, const VaData& train, const TrainConfig& config,
                          const VaData* validation) {
  config.validate();
  check_rows(train.inputs, train.targets.rows(), "train_va_head");
  if (train.targets.cols() != 2) throw DataError("train_va_head: targets need 2 columns");
  if (train.inputs.rows() < 2) throw DataError("train_va_head: need at least 2 training pairs");

  HeadModel model = init_head(selector, train.inputs.cols(), std::nullopt, 2, OutputActivation::Tanh, config.seed);
  model.loss = "ccc";

  auto batch_loss = [&](const HeadModel& m, std::span<const Eigen::Index> rows) -> std::optional<LossGradient> {
    const std::vector<Eigen::Index> idx(rows.begin(), rows.end());
    const Matrix y = train.targets(idx, Eigen::all);
    if (y.rows() < 2 || (is_constant(y.col(0)) && is_constant(y.col(1)))) return std::nullopt;
    return ccc_loss_gradient(m, train.inputs(idx, Eigen::all), y);
  };
  auto validate = [&](const HeadModel& m) -> std::optional<double> {
    if (!validation) return std::nullopt;
    const Matrix p = forward(m, validation->inputs);
    const Vector pv = p.col(0), pa = p.col(1), tv = validation->targets.col(0), ta = validation->targets.col(1);
    return mean_ccc({pv.data(), size_t(pv.size())}, {pa.data(), size_t(pa.size())}, {tv.data(), size_t(tv.size())},
                    {ta.data(), size_t(ta.size())})
        .p_va;
  };
  return run_descent(std::move(model), train.inputs.rows(), config, batch_loss, validate);
}

TrainResult train_classifier(FeatureSelector selector, const ClassData& train, int n_outputs,
                             const TrainConfig& config, const ClassData* validation) {
  config.validate();
  check_rows(train.inputs, train.labels.size(), "train_classifier");
  if (train.labels.empty()) throw DataError("train_classifier: empty training set");
  if (n_outputs < 2) throw ConfigError("train_classifier: need at least 2 outputs");

  std::vector<std::string> warnings;
  const auto weights = resolve_weights(config, n_outputs, auto_class_weights(train.labels, n_outputs, &warnings));
  HeadModel model = init_head(selector, train.inputs.cols(),
                              config.hidden_layer ? std::optional<int>(config.hidden_size) : std::nullopt, n_outputs,
                              OutputActivation::Softmax, config.seed);
  model.loss = "weighted_cross_entropy";

  auto batch_loss = [&](const HeadModel& m, std::span<const Eigen::Index> rows) -> std::optional<LossGradient> {
    const std::vector<Eigen::Index> idx(rows.begin(), rows.end());
    std::vector<int> y(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) y[i] = train.labels[idx[i]];
    return cross_entropy_gradient(m, train.inputs(idx, Eigen::all), y, weights);
  };
  auto validate = [&](const HeadModel& m) -> std::optional<double> {
    if (!validation) return std::nullopt;
    return macro_f1(argmax_rows(forward(m, validation->inputs)), validation->labels, n_outputs).macro_f1;
  };
  TrainResult r = run_descent(std::move(model), train.inputs.rows(), config, batch_loss, validate);
  r.loss_weights = weights;
  r.warnings.insert(r.warnings.begin(), warnings.begin(), warnings.end());
  return r;
}

TrainResult train_au_head(FeatureSelector selector, const MultiLabelData& train, const TrainConfig& config,
                          const MultiLabelData* validation) {
  config.validate();
  check_rows(train.inputs, train.labels.rows(), "train_au_head");
  if (train.labels.rows() == 0) throw DataError("train_au_head: empty training set");
  const auto units = static_cast<int>(train.labels.cols());

  std::vector<std::string> warnings;
  const auto weights = resolve_weights(config, units, auto_unit_weights(train.labels, &warnings));
  HeadModel model =
      init_head(selector, train.inputs.cols(), config.hidden_layer ? std::optional<int>(config.hidden_size) : std::nullopt,
                units, OutputActivation::Sigmoid, config.seed);
  model.loss = "weighted_binary_cross_entropy";

  auto batch_loss = [&](const HeadModel& m, std::span<const Eigen::Index> rows) -> std::optional<LossGradient> {
    const std::vector<Eigen::Index> idx(rows.begin(), rows.end());
    const BitMatrix y = train.labels(idx, Eigen::all);
    return bce_gradient(m, train.inputs(idx, Eigen::all), y, weights);
  };
  auto validate = [&](const HeadModel& m) -> std::optional<double> {
    if (!validation) return std::nullopt;
    return multilabel_f1(threshold_half(forward(m, validation->inputs)), validation->labels).macro_f1;
  };
  TrainResult r = run_descent(std::move(model), train.inputs.rows(), config, batch_loss, validate);
  r.loss_weights = weights;
  r.warnings.insert(r.warnings.begin(), warnings.begin(), warnings.end());
  return r;
}

TrainResult train_other_detector(FeatureSelector selector, const ClassData& train, const TrainConfig& config) {
  ClassData binary{train.inputs, {}};
  binary.labels.reserve(train.labels.size());
  for (int y : train.labels) binary.labels.push_back(y == kOtherClass ? 1 : 0);
  TrainConfig c = config;
  c.class_weights.reset();
  TrainResult r = train_classifier(selector, binary, 2, c);
  r.model.loss = "weighted_cross_entropy_other";
  return r;
}

// ---------------------------------------------------------------------------
// Pretrained-logit adapter

int adapt_pretrained_logits(std::span<const double> logits, double other_prob, double other_threshold) {
  if (logits.size() != kNumLogits)
    throw DataError("adapt_pretrained_logits: expected 8 logits, got " + std::to_string(logits.size()));
  if (other_prob >= other_threshold) return kOtherClass;
  // Backbone index -> challenge class; Contempt has no counterpart.
  constexpr int kToChallenge[kNumLogits] = {1, -1, 2, 3, 4, 0, 5, 6};
  int best = -1;
  for (int i = 0; i < kNumLogits; ++i) {
    if (kToChallenge[i] < 0) continue;
    if (best < 0 || logits[i] > logits[best]) best = i;
  }
  return kToChallenge[best];
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::string encode_block(const double* data, std::size_t count) {
  std::vector<unsigned char> bytes(count * sizeof(double));
  for (std::size_t i = 0; i < count; ++i) {
    auto bits = std::bit_cast<std::uint64_t>(data[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  std::string out(sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(std::strlen(out.c_str()));
  return out;
}

void decode_block(const std::string& text, double* data, std::size_t count) {
  std::vector<unsigned char> bytes(count * sizeof(double) + 3);
  std::size_t len = 0;
  if (sodium_base642bin(bytes.data(), bytes.size(), text.data(), text.size(), nullptr, &len, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      len != count * sizeof(double))
    throw DataError("model file: corrupt parameter block");
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t(bytes[i * 8 + b]) << (8 * b);
    data[i] = std::bit_cast<double>(bits);
  }
}

json layer_to_json(const DenseLayer& l) {
  return json{{"rows", l.weight.rows()},
              {"cols", l.weight.cols()},
              {"weight", encode_block(l.weight.data(), l.weight.size())},
              {"bias", encode_block(l.bias.data(), l.bias.size())}};
}

DenseLayer layer_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  if (rows < 1 || cols < 1) throw DataError("model file: bad layer shape");
  DenseLayer l{Matrix(rows, cols), Vector(rows)};
  decode_block(j.at("weight").get<std::string>(), l.weight.data(), l.weight.size());
  decode_block(j.at("bias").get<std::string>(), l.bias.data(), l.bias.size());
  return l;
}

}  // namespace

json head_to_json(const HeadModel& m) {
  json j;
  j["format"] = "affect-head";
  j["version"] = 1;
  j["selector"] = std::string(to_string(m.selector));
  j["input_dim"] = m.input_dim;
  j["activation"] = m.kind();
  j["seed"] = m.seed;
  j["loss"] = m.loss;
  j["hidden"] = m.hidden ? layer_to_json(*m.hidden) : json(nullptr);
  j["output"] = layer_to_json(m.output);
  return j;
}

HeadModel head_from_json(const json& j) {
  try {
    if (j.at("format") != "affect-head" || j.at("version") != 1) throw DataError("model file: unsupported format");
    HeadModel m;
    m.selector = parse_selector(j.at("selector").get<std::string>());
    m.input_dim = j.at("input_dim").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.loss = j.at("loss").get<std::string>();
    if (!j.at("hidden").is_null()) m.hidden = layer_from_json(j["hidden"]);
    m.output = layer_from_json(j.at("output"));
    const auto act = j.at("activation").get<std::string>();
    const auto sep = act.find('_');
    const auto name = act.substr(0, sep);
    if (name == "tanh")
      m.activation = OutputActivation::Tanh;
    else if (name == "softmax")
      m.activation = OutputActivation::Softmax;
    else if (name == "sigmoid")
      m.activation = OutputActivation::Sigmoid;
    else
      throw DataError("model file: unknown activation " + act);
    const Eigen::Index below = m.hidden ? m.hidden->weight.rows() : static_cast<Eigen::Index>(m.input_dim);
    if (m.output.weight.cols() != below || (m.hidden && m.hidden->weight.cols() != Eigen::Index(m.input_dim)) ||
        m.kind() != act)
      throw DataError("model file: inconsistent layer shapes");
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

void save_head(const HeadModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file " + path.string());
  out << head_to_json(model).dump(2) << '\n';
}

HeadModel load_head(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return head_from_json(j);
}

}  // namespace affect
