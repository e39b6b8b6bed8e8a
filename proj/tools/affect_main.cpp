// affect: command-line front end for training, evaluating and post-processing
// frame-level affect heads.

#include "affect/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using nlohmann::json;

struct CommonOptions {
  std::string config;
  std::string task, selector, member, thresholds, features, labels, out;
  std::optional<int> k;
  std::optional<double> blend_weight;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> external;
  std::vector<std::string> models;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_models) {
  cmd->add_option("--config", o.config, "Pipeline config (JSON); flags below override it");
  cmd->add_option("--task", o.task, "va | expr | au")->check(CLI::IsMember({"va", "expr", "au"}));
  cmd->add_option("--selector", o.selector, "logits_va | embeddings | embeddings_plus_logits (default: logits_va "
                                            "for va, embeddings otherwise)");
  cmd->add_option("--features", o.features, "Feature file");
  cmd->add_option("--labels", o.labels, "Label directory for the task");
  cmd->add_option("--k", o.k, "Smoothing half-width; the box filter spans 2k+1 frames (default 0)");
  cmd->add_option("--blend-weight", o.blend_weight, "Weight of the first member when blending two (default 0.5)");
  cmd->add_option("--thresholds", o.thresholds, "AU thresholds: fixed (0.5) | search | heldout (default fixed)")
      ->check(CLI::IsMember({"fixed", "search", "heldout"}));
  cmd->add_option("--seed", o.seed, "Random seed (default 0)");
  cmd->add_option("--out", o.out, "Output directory (default out)");
  if (with_models) {
    cmd->add_option("--model", o.models, "Trained head or prediction file; give twice to blend");
    cmd->add_option("--external", o.external, "Prediction file used as the second blend member");
  }
}

affect::PipelineConfig resolve(const CommonOptions& o) {
  json j = json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw affect::ConfigError("cannot open config file " + o.config);
    j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw affect::ConfigError(o.config + ": invalid JSON");
  }
  if (!o.task.empty()) j["task"] = o.task;
  if (!o.selector.empty()) j["selector"] = o.selector;
  if (!o.member.empty()) j["member"] = o.member;
  if (!o.features.empty()) j["features"] = o.features;
  if (!o.labels.empty()) j["labels"] = o.labels;
  if (!o.out.empty()) j["out"] = o.out;
  if (o.seed) j["seed"] = *o.seed;
  if (o.k) j["post"]["k"] = *o.k;
  if (o.blend_weight) j["post"]["blend_weight"] = *o.blend_weight;
  if (!o.thresholds.empty()) j["post"]["thresholds"] = o.thresholds;
  if (o.external) j["post"]["external_member"] = *o.external;
  return affect::PipelineConfig::from_json(j);
}

std::vector<std::filesystem::path> paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frame-level video affect toolkit: VA regression, expression and action-unit heads, "
               "temporal smoothing, threshold search and blending."};
  app.require_subcommand(1);

  CommonOptions train_o, eval_o, predict_o, sweep_o;

  auto* train = app.add_subcommand("train", "Train a task head on features + labels");
  add_common(train, train_o, false);
  train->add_option("--member", train_o.member, "mlp | linear | other_detector (default mlp)")
      ->check(CLI::IsMember({"mlp", "linear", "other_detector"}));

  auto* evaluate = app.add_subcommand("evaluate", "predict -> blend -> smooth -> discretize -> metrics");
  add_common(evaluate, eval_o, true);
  std::vector<int> sweep_k;
  std::string predictions;
  evaluate->add_option("--sweep-k", sweep_k, "Also report the headline metric at each of these k")->delimiter(',');
  evaluate->add_option("--predictions", predictions, "Score an existing prediction file instead of models");

  auto* predict = app.add_subcommand("predict", "Write post-processed per-frame predictions");
  add_common(predict, predict_o, true);

  auto* sweep = app.add_subcommand("sweep", "Metric curve over k, blend weight or AU threshold grid step");
  add_common(sweep, sweep_o, true);
  std::string param;
  std::vector<double> values;
  sweep->add_option("--param", param, "k | blend_weight | au_threshold_grid")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset (features.csv + labels/<task>/)");
  affect::SyntheticOptions so;
  std::string synth_task = "va", synth_out = "synthetic";
  synth->add_option("--task", synth_task, "va | expr | au")->check(CLI::IsMember({"va", "expr", "au"}));
  synth->add_option("--videos", so.n_videos, "Number of videos")->capture_default_str();
  synth->add_option("--frames", so.frames_per_video, "Frames per video")->capture_default_str();
  synth->add_option("--noise", so.noise_sigma, "Feature noise sigma")->capture_default_str();
  synth->add_option("--dim", so.embedding_dim, "Embedding width D")->capture_default_str();
  synth->add_option("--seed", so.seed, "Random seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      const auto outcome = affect::cmd_train(resolve(train_o));
      for (const auto& w : outcome.result.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << outcome.model_path.string() << "\n";
    } else if (*evaluate) {
      const auto config = resolve(eval_o);
      if (!predictions.empty()) {
        std::cout << affect::evaluate_predictions(config, predictions).to_json().dump(2) << "\n";
      } else {
        std::cout << affect::cmd_evaluate(config, paths(eval_o.models), sweep_k).to_json().dump(2) << "\n";
      }
    } else if (*predict) {
      std::cout << affect::cmd_predict(resolve(predict_o), paths(predict_o.models)).string() << "\n";
    } else if (*sweep) {
      const auto path = affect::cmd_sweep(resolve(sweep_o), paths(sweep_o.models), param, values);
      std::ifstream in(path);
      std::cout << in.rdbuf();
    } else if (*synth) {
      so.task = affect::parse_task(synth_task);
      affect::cmd_synth(so, synth_out);
      std::cout << synth_out << "\n";
    }
  } catch (const affect::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const affect::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
