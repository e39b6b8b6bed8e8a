#pragma once

#include "affect/dataio.hpp"
#include "affect/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace affect {

/// Which part of a frame's representation feeds a head.
enum class FeatureSelector {
  LogitsVa,             // 8 logits + valence + arousal
  Embeddings,           // D
  EmbeddingsPlusLogits  // D + 10
};

std::string_view to_string(FeatureSelector selector);
FeatureSelector parse_selector(std::string_view name);
std::size_t input_dim(FeatureSelector selector, std::size_t embedding_dim);

void select_features(const FrameFeatures& frame, FeatureSelector selector, std::span<double> out);
/// One row per aligned frame.
Matrix feature_matrix(const Dataset& dataset, std::span<const FrameRef> frames, FeatureSelector selector);
/// One row per frame of the track.
Matrix feature_matrix(const VideoTrack& track, std::size_t embedding_dim, FeatureSelector selector);

enum class OutputActivation { Tanh, Softmax, Sigmoid };

struct DenseLayer {
  Matrix weight;  // outputs x inputs
  Vector bias;
};

struct HeadModel {
  FeatureSelector selector = FeatureSelector::LogitsVa;
  std::size_t input_dim = 0;
  std::optional<DenseLayer> hidden;  // ReLU
  DenseLayer output;
  OutputActivation activation = OutputActivation::Tanh;
  std::uint64_t seed = 0;
  std::string loss;

  Eigen::Index num_outputs() const { return output.weight.rows(); }
  /// "tanh_2", "softmax_8", "sigmoid_12" or "softmax_2".
  std::string kind() const;
};

/// Plain mini-batch gradient descent settings.
struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 100;
  int batch_size = 512;
  int hidden_size = 128;
  bool hidden_layer = true;  // ignored by the VA head, which never has one
  double l2 = 0.0;           // penalty on weight matrices, not biases
  std::uint64_t seed = 0;
  std::optional<std::vector<double>> class_weights;  // nullopt = AUTO

  /// VA defaults differ only in the larger batch that stabilizes batch CCC.
  static TrainConfig va_defaults();
  void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> validation_metric;
};

struct TrainResult {
  HeadModel model;
  std::vector<EpochLog> log;
  std::vector<double> loss_weights;  // class or unit weights actually used
  std::size_t skipped_batches = 0;
  int best_epoch = 0;  // epoch of the returned checkpoint (1-based)
  std::vector<std::string> warnings;
};

struct VaData {
  Matrix inputs;
  Matrix targets;  // rows of (valence, arousal)
};

struct ClassData {
  Matrix inputs;
  std::vector<int> labels;
};

struct MultiLabelData {
  Matrix inputs;
  BitMatrix labels;
};

/// Linear tanh head trained to minimize 1 - (CCC_V + CCC_A) / 2 per mini-batch.
/// With validation data, returns the epoch with the best validation P_VA.
TrainResult train_va_head(FeatureSelector selector, const VaData& train, const TrainConfig& config,
                          const VaData* validation = nullptr);

/// Softmax classifier fit with weighted sparse categorical cross-entropy.
TrainResult train_classifier(FeatureSelector selector, const ClassData& train, int n_outputs,
                             const TrainConfig& config, const ClassData* validation = nullptr);

/// Sigmoid multi-label head fit with positive-weighted binary cross-entropy.
TrainResult train_au_head(FeatureSelector selector, const MultiLabelData& train, const TrainConfig& config,
                          const MultiLabelData* validation = nullptr);

/// Two-class softmax separating "Other" from the remaining expression classes.
TrainResult train_other_detector(FeatureSelector selector, const ClassData& train, const TrainConfig& config);

/// Output of the head after its activation, one row per input row.
Matrix forward(const HeadModel& model, const Matrix& inputs);
Matrix predict_va(const HeadModel& model, const Matrix& inputs);
Matrix predict_proba(const HeadModel& model, const Matrix& inputs);

/// Maps backbone logits to a challenge expression class, routing to "Other"
/// when other_prob >= other_threshold and otherwise taking the argmax over the
/// seven shared classes (Contempt excluded).
int adapt_pretrained_logits(std::span<const double> logits, double other_prob, double other_threshold = 0.5);

// Losses and their analytic gradients (mean over the batch rows).

struct HeadGradient {
  std::optional<DenseLayer> hidden;
  DenseLayer output;
};

struct LossGradient {
  double loss = 0.0;
  HeadGradient gradient;
};

LossGradient ccc_loss_gradient(const HeadModel& model, const Matrix& inputs, const Matrix& targets);
LossGradient cross_entropy_gradient(const HeadModel& model, const Matrix& inputs, std::span<const int> labels,
                                    std::span<const double> class_weights);
LossGradient bce_gradient(const HeadModel& model, const Matrix& inputs, const BitMatrix& labels,
                          std::span<const double> positive_weights);

/// Inverse class frequency normalized to mean 1 over present classes; absent classes get 0.
std::vector<double> auto_class_weights(std::span<const int> labels, int n_classes,
                                       std::vector<std::string>* warnings = nullptr);
/// negatives/positives per unit, capped at 100; units without positives get 1.
std::vector<double> auto_unit_weights(const BitMatrix& labels, std::vector<std::string>* warnings = nullptr);

/// Glorot-uniform initialized head.
HeadModel init_head(FeatureSelector selector, std::size_t input_dim, std::optional<int> hidden_size, int outputs,
                    OutputActivation activation, std::uint64_t seed);

nlohmann::json head_to_json(const HeadModel& model);
HeadModel head_from_json(const nlohmann::json& j);
void save_head(const HeadModel& model, const std::filesystem::path& path);
HeadModel load_head(const std::filesystem::path& path);

}  // namespace affect
