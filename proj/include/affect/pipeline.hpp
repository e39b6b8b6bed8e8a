#pragma once

#include "affect/dataio.hpp"
#include "affect/heads.hpp"
#include "affect/postprocess.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace affect {

enum class ThresholdMode {
  Fixed,    // 0.5 for every unit
  Search,   // tuned on the evaluation split itself (flagged in reports)
  Heldout   // tuned on the validation split, applied to the evaluation split
};

struct PostProcessConfig {
  int k = 0;
  ThresholdMode thresholds = ThresholdMode::Fixed;
  double grid_step = 0.05;
  double blend_weight = 0.5;
  std::optional<std::string> external_member;  // prediction file used as second blend member
  double other_threshold = 0.5;
};

struct SplitPaths {
  std::string features;
  std::string labels;
};

struct PipelineConfig {
  Task task = Task::VA;
  FeatureSelector selector = FeatureSelector::LogitsVa;
  std::string member = "mlp";  // mlp | linear | other_detector
  TrainConfig train = TrainConfig::va_defaults();
  PostProcessConfig post;
  std::string features;
  std::string labels;
  std::string out = "out";
  std::optional<SplitPaths> validation;
  std::uint64_t seed = 0;

  /// Task-dependent defaults (VA uses the large-batch, no-hidden-layer settings).
  static PipelineConfig defaults(Task task);
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;  // throws ConfigError
};

std::string_view to_string(ThresholdMode mode);
ThresholdMode parse_threshold_mode(std::string_view name);

struct EvalReport {
  Task task = Task::VA;
  nlohmann::json metrics;  // CccResult or F1Report
  double headline = 0.0;   // P_VA, P_EXPR or P_AU
  std::vector<double> thresholds;
  bool thresholds_tuned_on_eval = false;
  std::vector<SweepPoint> curve;
  std::size_t frames = 0;
  std::size_t skipped = 0;
  nlohmann::json config;

  nlohmann::json to_json() const;
};

struct TrainOutcome {
  std::filesystem::path model_path;
  std::filesystem::path log_path;
  TrainResult result;
};

/// A blend member: a trained head or an exported prediction file.
struct Member {
  std::filesystem::path path;
  bool is_prediction_file = false;
};
Member classify_member(const std::filesystem::path& path);

/// Per-track raw scores of one member over every frame of `dataset`.
std::vector<PredictionSeq> member_scores(const Member& member, const Dataset& dataset, const PipelineConfig& config);

/// Members -> optional blend, in the fixed pipeline order (smoothing happens later).
std::vector<PredictionSeq> combined_scores(const std::vector<std::filesystem::path>& members, const Dataset& dataset,
                                           const PipelineConfig& config);

/// Discretize + metric on aligned frames, given already smoothed scores.
EvalReport score_report(const PipelineConfig& config, const AlignedSet& aligned,
                        const std::vector<PredictionSeq>& smoothed, std::span<const double> thresholds);

TrainOutcome cmd_train(const PipelineConfig& config);
EvalReport cmd_evaluate(const PipelineConfig& config, const std::vector<std::filesystem::path>& models,
                        const std::vector<int>& sweep_k = {});
/// Metrics computed from the decisions stored in a prediction file.
EvalReport evaluate_predictions(const PipelineConfig& config, const std::filesystem::path& predictions);
std::filesystem::path cmd_predict(const PipelineConfig& config, const std::vector<std::filesystem::path>& models);
std::filesystem::path cmd_sweep(const PipelineConfig& config, const std::vector<std::filesystem::path>& models,
                                const std::string& param, const std::vector<double>& values);
std::vector<SweepPoint> run_sweep(const PipelineConfig& config, const std::vector<std::filesystem::path>& models,
                                  const std::string& param, const std::vector<double>& values);
/// Writes features.csv and labels/<task>/ under `out`.
void cmd_synth(const SyntheticOptions& options, const std::filesystem::path& out);

// Prediction files.

struct PredictionFile {
  Task task = Task::VA;
  std::vector<PredictionSeq> scores;     // VA (v, a), EXPR probabilities, AU scores
  std::vector<std::vector<int>> classes;  // EXPR decisions per track
  std::vector<BitMatrix> bits;            // AU decisions per track
  nlohmann::json header;
};

void write_predictions(const std::filesystem::path& path, Task task, const std::vector<PredictionSeq>& scores,
                       std::span<const double> thresholds, const nlohmann::json& extra_header = {});
PredictionFile read_predictions(const std::filesystem::path& path);

}  // namespace affect
