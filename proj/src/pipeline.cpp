#include "affect/pipeline.hpp"

#include "affect/format.hpp"
#include "affect/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace affect {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

std::string_view to_string(ThresholdMode mode) {
  switch (mode) {
    case ThresholdMode::Fixed: return "fixed";
    case ThresholdMode::Search: return "search";
    case ThresholdMode::Heldout: return "heldout";
  }
  return "?";
}

ThresholdMode parse_threshold_mode(std::string_view name) {
  if (name == "fixed") return ThresholdMode::Fixed;
  if (name == "search") return ThresholdMode::Search;
  if (name == "heldout") return ThresholdMode::Heldout;
  throw ConfigError("unknown thresholds mode '" + std::string(name) + "' (expected fixed, search or heldout)");
}

PipelineConfig PipelineConfig::defaults(Task task) {
  PipelineConfig c;
  c.task = task;
  if (task == Task::VA) {
    c.selector = FeatureSelector::LogitsVa;
    c.train = TrainConfig::va_defaults();
  } else {
    c.selector = FeatureSelector::Embeddings;
    c.train = TrainConfig{};
  }
  return c;
}

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> known, const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    reject_unknown_keys(j,
                        {"task", "selector", "member", "train", "post", "features", "labels", "out", "validation",
                         "seed"},
                        "config");
    PipelineConfig c = defaults(parse_task(j.value("task", std::string("va"))));
    if (j.contains("selector")) c.selector = parse_selector(j["selector"].get<std::string>());
    c.member = j.value("member", c.member);
    if (j.contains("train")) {
      reject_unknown_keys(j["train"],
                          {"learning_rate", "epochs", "batch_size", "hidden_size", "hidden_layer", "l2", "seed",
                           "class_weights"},
                          "train");
      affect::from_json(j["train"], c.train);
    }
    if (j.contains("post")) {
      const auto& p = j["post"];
      reject_unknown_keys(p, {"k", "thresholds", "grid_step", "blend_weight", "external_member", "other_threshold"},
                          "post");
      c.post.k = p.value("k", c.post.k);
      if (p.contains("thresholds")) c.post.thresholds = parse_threshold_mode(p["thresholds"].get<std::string>());
      c.post.grid_step = p.value("grid_step", c.post.grid_step);
      c.post.blend_weight = p.value("blend_weight", c.post.blend_weight);
      if (p.contains("external_member") && !p["external_member"].is_null())
        c.post.external_member = p["external_member"].get<std::string>();
      c.post.other_threshold = p.value("other_threshold", c.post.other_threshold);
    }
    c.features = j.value("features", c.features);
    c.labels = j.value("labels", c.labels);
    c.out = j.value("out", c.out);
    if (j.contains("validation") && !j["validation"].is_null()) {
      const auto& v = j["validation"];
      c.validation = SplitPaths{v.at("features").get<std::string>(), v.at("labels").get<std::string>()};
    }
    c.seed = j.value("seed", c.seed);
    c.train.seed = c.seed;
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json PipelineConfig::to_json() const {
  json j;
  j["task"] = std::string(affect::to_string(task));
  j["selector"] = std::string(affect::to_string(selector));
  j["member"] = member;
  j["train"] = train;
  j["post"] = json{{"k", post.k},
                   {"thresholds", std::string(affect::to_string(post.thresholds))},
                   {"grid_step", post.grid_step},
                   {"blend_weight", post.blend_weight},
                   {"external_member", post.external_member ? json(*post.external_member) : json(nullptr)},
                   {"other_threshold", post.other_threshold}};
  j["features"] = features;
  j["labels"] = labels;
  j["out"] = out;
  j["validation"] = validation ? json{{"features", validation->features}, {"labels", validation->labels}} : json(nullptr);
  j["seed"] = seed;
  return j;
}

void PipelineConfig::validate() const {
  train.validate();
  if (post.k < 0) throw ConfigError("k must be >= 0");
  if (!(post.blend_weight >= 0.0 && post.blend_weight <= 1.0)) throw ConfigError("blend weight must be in [0, 1]");
  if (!(post.grid_step > 0.0 && post.grid_step <= 0.5)) throw ConfigError("grid_step must be in (0, 0.5]");
  if (!(post.other_threshold >= 0.0 && post.other_threshold <= 1.0))
    throw ConfigError("other_threshold must be in [0, 1]");
  if (post.thresholds != ThresholdMode::Fixed && task != Task::AU)
    throw ConfigError("thresholds mode applies to the au task only");
  if (post.thresholds == ThresholdMode::Heldout && !validation)
    throw ConfigError("heldout thresholds need a validation split in the config");
  if (member != "mlp" && member != "linear" && member != "other_detector")
    throw ConfigError("unknown member '" + member + "' (expected mlp, linear or other_detector)");
  if (member == "other_detector" && task != Task::EXPR) throw ConfigError("other_detector applies to the expr task");
}

// ---------------------------------------------------------------------------
// Reports

json EvalReport::to_json() const {
  json j;
  j["task"] = std::string(affect::to_string(task));
  j["metrics"] = metrics;
  j["headline"] = headline;
  j["frames"] = frames;
  j["skipped_frames"] = skipped;
  if (task == Task::AU) {
    j["thresholds"] = thresholds;
    j["thresholds_tuned_on_eval"] = thresholds_tuned_on_eval;
  }
  json c = json::array();
  for (const auto& p : curve) c.push_back({{"k", p.value}, {"metric", p.metric}});
  j["curve"] = c;
  j["config"] = config;
  return j;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

int channels(Task task) {
  switch (task) {
    case Task::VA: return 2;
    case Task::EXPR: return kNumExprClasses;
    case Task::AU: return kNumActionUnits;
  }
  return 0;
}

double headline_of(Task task, const json& metrics) {
  return task == Task::VA ? metrics.at("p_va").get<double>() : metrics.at("macro_f1").get<double>();
}

// Per-track task decisions after discretization.
struct Decisions {
  std::vector<Matrix> va;
  std::vector<std::vector<int>> classes;
  std::vector<BitMatrix> bits;
};

json metrics_from_decisions(Task task, const AlignedSet& aligned, const Decisions& d) {
  const std::size_t n = aligned.size();
  switch (task) {
    case Task::VA: {
      std::vector<double> pv(n), pa(n), tv(n), ta(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& r = aligned.frames[i];
        pv[i] = d.va[r.track](r.position, 0);
        pa[i] = d.va[r.track](r.position, 1);
        tv[i] = aligned.va[i][0];
        ta[i] = aligned.va[i][1];
      }
      return mean_ccc(pv, pa, tv, ta);
    }
    case Task::EXPR: {
      std::vector<int> pred(n);
      for (std::size_t i = 0; i < n; ++i) pred[i] = d.classes[aligned.frames[i].track][aligned.frames[i].position];
      return macro_f1(pred, aligned.expr, kNumExprClasses);
    }
    case Task::AU: {
      BitMatrix pred(n, kNumActionUnits), truth(n, kNumActionUnits);
      for (std::size_t i = 0; i < n; ++i) {
        pred.row(i) = d.bits[aligned.frames[i].track].row(aligned.frames[i].position);
        for (int u = 0; u < kNumActionUnits; ++u) truth(i, u) = aligned.au[i][u];
      }
      return multilabel_f1(pred, truth);
    }
  }
  return {};
}

Decisions discretize(Task task, const std::vector<PredictionSeq>& smoothed, std::span<const double> thresholds) {
  Decisions d;
  for (const auto& s : smoothed) {
    switch (task) {
      case Task::VA: d.va.push_back(s.values); break;
      case Task::EXPR: d.classes.push_back(argmax_rows(s.values)); break;
      case Task::AU: d.bits.push_back(apply_thresholds(s.values, thresholds)); break;
    }
  }
  return d;
}

Matrix gather_rows(const AlignedSet& aligned, const std::vector<PredictionSeq>& seqs) {
  const Eigen::Index cols = seqs.empty() ? 0 : seqs.front().values.cols();
  Matrix out(static_cast<Eigen::Index>(aligned.size()), cols);
  for (std::size_t i = 0; i < aligned.size(); ++i)
    out.row(i) = seqs[aligned.frames[i].track].values.row(aligned.frames[i].position);
  return out;
}

BitMatrix au_truth(const AlignedSet& aligned) {
  BitMatrix truth(static_cast<Eigen::Index>(aligned.size()), kNumActionUnits);
  for (std::size_t i = 0; i < aligned.size(); ++i)
    for (int u = 0; u < kNumActionUnits; ++u) truth(i, u) = aligned.au[i][u];
  return truth;
}

// Features, labels and raw member scores for one split.
struct Split {
  Dataset dataset;
  AlignedSet aligned;
  std::vector<PredictionSeq> raw;
};

Split load_split(const std::string& features, const std::string& labels, const std::vector<fs::path>& models,
                 const PipelineConfig& config) {
  if (features.empty()) throw ConfigError("no feature file configured");
  if (labels.empty()) throw ConfigError("no label directory configured");
  Split s;
  s.dataset = load_features(features);
  s.aligned = align(s.dataset, load_labels(labels, config.task), config.task);
  s.raw = combined_scores(models, s.dataset, config);
  return s;
}

std::vector<double> resolve_thresholds(const PipelineConfig& config, const AlignedSet& aligned,
                                       const std::vector<PredictionSeq>& smoothed, const Split* validation) {
  if (config.task != Task::AU) return {};
  switch (config.post.thresholds) {
    case ThresholdMode::Fixed: return std::vector<double>(kNumActionUnits, 0.5);
    case ThresholdMode::Search:
      return search_thresholds(gather_rows(aligned, smoothed), au_truth(aligned), config.post.grid_step).thresholds;
    case ThresholdMode::Heldout: {
      if (!validation) throw ConfigError("heldout thresholds need a validation split");
      const auto val_smoothed = smooth(validation->raw, config.post.k);
      return search_thresholds(gather_rows(validation->aligned, val_smoothed), au_truth(validation->aligned),
                               config.post.grid_step)
          .thresholds;
    }
  }
  return {};
}

EvalReport evaluate_split(const PipelineConfig& config, const Split& eval, const Split* validation) {
  const auto smoothed = smooth(eval.raw, config.post.k);
  const auto thresholds = resolve_thresholds(config, eval.aligned, smoothed, validation);
  EvalReport r = score_report(config, eval.aligned, smoothed, thresholds);
  r.skipped = eval.aligned.skipped;
  return r;
}

std::optional<Split> validation_split(const PipelineConfig& config, const std::vector<fs::path>& models) {
  if (config.task != Task::AU || config.post.thresholds != ThresholdMode::Heldout) return std::nullopt;
  return load_split(config.validation->features, config.validation->labels, models, config);
}

const char* column_spec(Task task) {
  switch (task) {
    case Task::VA: return "video_id,frame,valence,arousal";
    case Task::EXPR: return "video_id,frame,p0..p7,class";
    case Task::AU: return "video_id,frame,s0..s11,y0..y11";
  }
  return "";
}

}  // namespace

EvalReport score_report(const PipelineConfig& config, const AlignedSet& aligned,
                        const std::vector<PredictionSeq>& smoothed, std::span<const double> thresholds) {
  EvalReport r;
  r.task = config.task;
  r.metrics = metrics_from_decisions(config.task, aligned, discretize(config.task, smoothed, thresholds));
  r.headline = headline_of(config.task, r.metrics);
  r.thresholds.assign(thresholds.begin(), thresholds.end());
  r.thresholds_tuned_on_eval = config.task == Task::AU && config.post.thresholds == ThresholdMode::Search;
  r.frames = aligned.size();
  r.skipped = aligned.skipped;
  r.config = config.to_json();
  return r;
}

// ---------------------------------------------------------------------------
// Members

Member classify_member(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open member file " + path.string());
  std::string first;
  std::getline(in, first);
  strip_cr(first);
  // Prediction files put a one-line JSON header with "kind" first; model files are pretty-printed JSON.
  const json header = json::parse(first, nullptr, false);
  const bool predictions = header.is_object() && header.value("kind", "") == "predictions";
  return {path, predictions};
}

std::vector<PredictionSeq> member_scores(const Member& member, const Dataset& dataset, const PipelineConfig& config) {
  std::vector<PredictionSeq> out;
  out.reserve(dataset.tracks.size());

  if (member.is_prediction_file) {
    const PredictionFile file = read_predictions(member.path);
    if (file.task != config.task)
      throw ConfigError("prediction file " + member.path.string() + " holds task " +
                        std::string(to_string(file.task)) + ", expected " + std::string(to_string(config.task)));
    std::map<std::string, const PredictionSeq*> by_id;
    for (const auto& s : file.scores) by_id[s.video_id] = &s;
    for (const auto& track : dataset.tracks) {
      auto it = by_id.find(track.video_id);
      if (it == by_id.end())
        throw AlignmentError("external member " + member.path.string() + " has no video " + track.video_id);
      const PredictionSeq& s = *it->second;
      const std::size_t n = std::min(s.frames.size(), track.frames.size());
      for (std::size_t i = 0; i <= n; ++i) {
        const bool a_end = i == track.frames.size(), b_end = i == s.frames.size();
        if (a_end && b_end) break;
        if (a_end || b_end || s.frames[i] != track.frames[i].frame_index) {
          const auto frame = a_end ? s.frames[i] : track.frames[i].frame_index;
          throw AlignmentError("external member " + member.path.string() + " misaligned: video " + track.video_id +
                               " frame " + std::to_string(frame));
        }
      }
      out.push_back(s);
    }
    return out;
  }

  const HeadModel model = load_head(member.path);
  const std::string kind = model.kind();
  const bool other_detector = kind == "softmax_2";
  const bool compatible = (config.task == Task::VA && kind == "tanh_2") ||
                          (config.task == Task::EXPR && (kind == "softmax_8" || other_detector)) ||
                          (config.task == Task::AU && kind == "sigmoid_12");
  if (!compatible)
    throw ConfigError("model " + member.path.string() + " (" + kind + ") cannot serve task " +
                      std::string(to_string(config.task)));
  if (model.input_dim != input_dim(model.selector, dataset.dim))
    throw DataError("model " + member.path.string() + " expects " + std::to_string(model.input_dim) + " inputs for " +
                    std::string(to_string(model.selector)) + " but features have D=" + std::to_string(dataset.dim));

  for (const auto& track : dataset.tracks) {
    PredictionSeq seq;
    seq.video_id = track.video_id;
    for (const auto& f : track.frames) seq.frames.push_back(f.frame_index);
    const Matrix x = feature_matrix(track, dataset.dim, model.selector);
    Matrix scores = forward(model, x);
    if (other_detector) {
      // Pretrained logits routed through the Other/non-Other gate, as one-hot class rows.
      Matrix onehot = Matrix::Zero(scores.rows(), kNumExprClasses);
      for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const auto& logits = track.frames[i].logits;
        onehot(i, adapt_pretrained_logits(logits, scores(i, 1), config.post.other_threshold)) = 1.0;
      }
      scores = std::move(onehot);
    }
    seq.values = std::move(scores);
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<PredictionSeq> combined_scores(const std::vector<fs::path>& members, const Dataset& dataset,
                                           const PipelineConfig& config) {
  std::vector<fs::path> all = members;
  if (config.post.external_member) all.emplace_back(*config.post.external_member);
  if (all.empty()) throw ConfigError("no model given");
  if (all.size() > 2) throw ConfigError("at most two blend members are supported");
  auto a = member_scores(classify_member(all[0]), dataset, config);
  if (all.size() == 1) return a;
  auto b = member_scores(classify_member(all[1]), dataset, config);
  return blend(a, b, config.post.blend_weight);
}

// ---------------------------------------------------------------------------
// Commands

TrainOutcome cmd_train(const PipelineConfig& config) {
  config.validate();
  if (config.features.empty()) throw ConfigError("no feature file configured");
  if (config.labels.empty()) throw ConfigError("no label directory configured");
  const Dataset dataset = load_features(config.features);
  const AlignedSet aligned = align(dataset, load_labels(config.labels, config.task), config.task);
  if (aligned.size() == 0) throw DataError("no aligned training frames (features and labels do not overlap)");

  TrainConfig tc = config.train;
  tc.seed = config.seed;
  if (config.member == "linear") {
    tc.hidden_layer = false;
    if (tc.l2 == 0.0) tc.l2 = 1e-3;
  }

  std::optional<Dataset> val_ds;
  std::optional<AlignedSet> val_al;
  if (config.validation) {
    val_ds = load_features(config.validation->features);
    val_al = align(*val_ds, load_labels(config.validation->labels, config.task), config.task);
    if (val_ds->dim != dataset.dim) throw DataError("validation features have a different D");
  }

  const Matrix x = feature_matrix(dataset, aligned.frames, config.selector);
  TrainOutcome outcome;
  switch (config.task) {
    case Task::VA: {
      auto targets = [](const AlignedSet& al) {
        Matrix y(static_cast<Eigen::Index>(al.size()), 2);
        for (std::size_t i = 0; i < al.size(); ++i) y.row(i) << al.va[i][0], al.va[i][1];
        return y;
      };
      const VaData train{x, targets(aligned)};
      std::optional<VaData> val;
      if (val_al) val = VaData{feature_matrix(*val_ds, val_al->frames, config.selector), targets(*val_al)};
      outcome.result = train_va_head(config.selector, train, tc, val ? &*val : nullptr);
      break;
    }
    case Task::EXPR: {
      const ClassData train{x, aligned.expr};
      if (config.member == "other_detector") {
        outcome.result = train_other_detector(config.selector, train, tc);
        break;
      }
      std::optional<ClassData> val;
      if (val_al) val = ClassData{feature_matrix(*val_ds, val_al->frames, config.selector), val_al->expr};
      outcome.result = train_classifier(config.selector, train, kNumExprClasses, tc, val ? &*val : nullptr);
      break;
    }
    case Task::AU: {
      const MultiLabelData train{x, au_truth(aligned)};
      std::optional<MultiLabelData> val;
      if (val_al) val = MultiLabelData{feature_matrix(*val_ds, val_al->frames, config.selector), au_truth(*val_al)};
      outcome.result = train_au_head(config.selector, train, tc, val ? &*val : nullptr);
      break;
    }
  }

  const std::string stem = std::string(to_string(config.task)) + "_" + config.member;
  outcome.model_path = fs::path(config.out) / ("model_" + stem + ".json");
  outcome.log_path = fs::path(config.out) / ("train_log_" + stem + ".csv");
  save_head(outcome.result.model, outcome.model_path);

  std::string log = "epoch,loss,validation_metric\n";
  for (const auto& e : outcome.result.log)
    log += std::to_string(e.epoch) + "," + format_real(e.loss) + "," +
           (e.validation_metric ? format_real(*e.validation_metric) : std::string()) + "\n";
  write_text(outcome.log_path, log);
  return outcome;
}

EvalReport cmd_evaluate(const PipelineConfig& config, const std::vector<fs::path>& models,
                        const std::vector<int>& sweep_k) {
  config.validate();
  const Split eval = load_split(config.features, config.labels, models, config);
  const auto validation = validation_split(config, models);
  const Split* val = validation ? &*validation : nullptr;

  EvalReport report = evaluate_split(config, eval, val);
  for (int k : sweep_k) {
    PipelineConfig c = config;
    c.post.k = k;
    c.validate();
    report.curve.push_back({static_cast<double>(k), evaluate_split(c, eval, val).headline});
  }
  write_text(fs::path(config.out) / ("report_" + std::string(to_string(config.task)) + ".json"),
             report.to_json().dump(2) + "\n");
  return report;
}

fs::path cmd_predict(const PipelineConfig& config, const std::vector<fs::path>& models) {
  config.validate();
  if (config.features.empty()) throw ConfigError("no feature file configured");
  const Dataset dataset = load_features(config.features);
  const auto smoothed = smooth(combined_scores(models, dataset, config), config.post.k);

  std::vector<double> thresholds;
  if (config.task == Task::AU) {
    if (config.post.thresholds == ThresholdMode::Search) {
      if (config.labels.empty()) throw ConfigError("thresholds search during predict needs labels");
      const AlignedSet aligned = align(dataset, load_labels(config.labels, config.task), config.task);
      thresholds = resolve_thresholds(config, aligned, smoothed, nullptr);
    } else {
      const auto validation = validation_split(config, models);
      thresholds = resolve_thresholds(config, AlignedSet{}, smoothed, validation ? &*validation : nullptr);
    }
  }

  const fs::path path = fs::path(config.out) / ("predictions_" + std::string(to_string(config.task)) + ".csv");
  json extra{{"k", config.post.k}, {"blend_weight", config.post.blend_weight}};
  if (config.task == Task::AU) extra["threshold_mode"] = std::string(to_string(config.post.thresholds));
  write_predictions(path, config.task, smoothed, thresholds, extra);
  return path;
}

EvalReport evaluate_predictions(const PipelineConfig& config, const fs::path& predictions) {
  const PredictionFile file = read_predictions(predictions);
  if (file.task != config.task)
    throw ConfigError("prediction file holds task " + std::string(to_string(file.task)) + ", expected " +
                      std::string(to_string(config.task)));
  if (config.labels.empty()) throw ConfigError("no label directory configured");

  // Frame skeleton of the predictions, enough for alignment.
  Dataset skeleton;
  for (const auto& s : file.scores) {
    VideoTrack t{s.video_id, {}};
    for (auto f : s.frames) t.frames.push_back(FrameFeatures{f, {}, {}, 0.0, 0.0});
    skeleton.tracks.push_back(std::move(t));
  }
  const AlignedSet aligned = align(skeleton, load_labels(config.labels, config.task), config.task);
  Decisions d;
  switch (config.task) {
    case Task::VA:
      for (const auto& s : file.scores) d.va.push_back(s.values);
      break;
    case Task::EXPR: d.classes = file.classes; break;
    case Task::AU: d.bits = file.bits; break;
  }
  EvalReport r;
  r.task = config.task;
  r.metrics = metrics_from_decisions(config.task, aligned, d);
  r.headline = headline_of(config.task, r.metrics);
  if (file.header.contains("thresholds")) r.thresholds = file.header["thresholds"].get<std::vector<double>>();
  r.thresholds_tuned_on_eval = file.header.value("threshold_mode", "") == "search";
  r.frames = aligned.size();
  r.skipped = aligned.skipped;
  r.config = config.to_json();
  return r;
}

std::vector<SweepPoint> run_sweep(const PipelineConfig& config, const std::vector<fs::path>& models,
                                  const std::string& param, const std::vector<double>& values) {
  if (param != "k" && param != "blend_weight" && param != "au_threshold_grid")
    throw ConfigError("unknown sweep parameter '" + param + "' (expected k, blend_weight or au_threshold_grid)");
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  config.validate();

  PipelineConfig base = config;
  if (param == "au_threshold_grid") {
    if (config.task != Task::AU) throw ConfigError("au_threshold_grid sweeps need the au task");
    if (base.post.thresholds == ThresholdMode::Fixed) base.post.thresholds = ThresholdMode::Search;
  }

  std::vector<SweepPoint> curve;
  if (param == "blend_weight") {
    // Member scores do not depend on the weight; load each member once.
    Split eval;
    eval.dataset = load_features(config.features);
    eval.aligned = align(eval.dataset, load_labels(config.labels, config.task), config.task);
    std::vector<fs::path> all = models;
    if (config.post.external_member) all.emplace_back(*config.post.external_member);
    if (all.size() != 2) throw ConfigError("blend_weight sweeps need exactly two members");
    PipelineConfig solo = config;
    solo.post.external_member.reset();
    const auto a = member_scores(classify_member(all[0]), eval.dataset, solo);
    const auto b = member_scores(classify_member(all[1]), eval.dataset, solo);
    std::optional<Split> val = validation_split(config, models);
    for (double w : values) {
      PipelineConfig c = base;
      c.post.blend_weight = w;
      c.validate();
      eval.raw = blend(a, b, w);
      if (val) val->raw = combined_scores(models, val->dataset, c);
      curve.push_back({w, evaluate_split(c, eval, val ? &*val : nullptr).headline});
    }
    return curve;
  }

  const Split eval = load_split(config.features, config.labels, models, base);
  const auto validation = validation_split(base, models);
  for (double v : values) {
    PipelineConfig c = base;
    if (param == "k") {
      if (v < 0 || v != std::floor(v)) throw ConfigError("k values must be non-negative integers");
      c.post.k = static_cast<int>(v);
    } else {
      c.post.grid_step = v;
    }
    c.validate();
    curve.push_back({v, evaluate_split(c, eval, validation ? &*validation : nullptr).headline});
  }
  return curve;
}

fs::path cmd_sweep(const PipelineConfig& config, const std::vector<fs::path>& models, const std::string& param,
                   const std::vector<double>& values) {
  const auto curve = run_sweep(config, models, param, values);
  const std::string column = param == "k" ? "k" : param == "blend_weight" ? "weight" : "grid_step";
  std::string csv = column + ",metric\n";
  for (const auto& p : curve)
    csv += (param == "k" ? std::to_string(static_cast<long long>(p.value)) : format_real(p.value)) + "," +
           format_real(p.metric) + "\n";
  const fs::path path = fs::path(config.out) / ("sweep_" + std::string(to_string(config.task)) + "_" + param + ".csv");
  write_text(path, csv);
  return path;
}

void cmd_synth(const SyntheticOptions& options, const fs::path& out) {
  const SyntheticData data = generate_synthetic(options);
  write_features(data.dataset, out / "features.csv");
  write_labels(data.labels, out / "labels" / std::string(to_string(options.task)));
}

// ---------------------------------------------------------------------------
// Prediction files

void write_predictions(const fs::path& path, Task task, const std::vector<PredictionSeq>& scores,
                       std::span<const double> thresholds, const json& extra_header) {
  json header{{"version", 1}, {"kind", "predictions"}, {"task", std::string(to_string(task))},
              {"columns", column_spec(task)}};
  if (task == Task::AU) {
    if (thresholds.size() != kNumActionUnits) throw ConfigError("AU predictions need 12 thresholds");
    header["thresholds"] = std::vector<double>(thresholds.begin(), thresholds.end());
  }
  if (extra_header.is_object())
    for (const auto& [k, v] : extra_header.items()) header[k] = v;

  std::string text = header.dump() + "\n";
  const int c = channels(task);
  for (const auto& s : scores) {
    s.check();
    if (s.values.cols() != c) throw DataError("prediction sequence " + s.video_id + " has the wrong channel count");
    const auto classes = task == Task::EXPR ? argmax_rows(s.values) : std::vector<int>{};
    const BitMatrix bits = task == Task::AU ? apply_thresholds(s.values, thresholds) : BitMatrix{};
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
      text += s.video_id;
      text += ',';
      text += std::to_string(s.frames[i]);
      for (int j = 0; j < c; ++j) {
        text += ',';
        text += format_real(s.values(i, j));
      }
      if (task == Task::EXPR) text += "," + std::to_string(classes[i]);
      if (task == Task::AU)
        for (int u = 0; u < kNumActionUnits; ++u) text += bits(i, u) ? ",1" : ",0";
      text += '\n';
    }
  }
  write_text(path, text);
}

PredictionFile read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prediction file " + path.string());
  const std::string source = path.string();
  std::string line;
  if (!std::getline(in, line)) throw DataError(source, 1, "empty prediction file");
  strip_cr(line);

  PredictionFile file;
  file.header = json::parse(line, nullptr, false);
  if (!file.header.is_object() || file.header.value("kind", "") != "predictions" ||
      file.header.value("version", 0) != 1)
    throw DataError(source, 1, "malformed prediction header");
  try {
    file.task = parse_task(file.header.at("task").get<std::string>());
  } catch (const std::exception& e) {
    throw DataError(source, 1, std::string("malformed prediction header: ") + e.what());
  }
  if (file.header.value("columns", "") != column_spec(file.task))
    throw DataError(source, 1, "prediction columns do not match the task");

  const int c = channels(file.task);
  const std::size_t decision_cols = file.task == Task::EXPR ? 1 : file.task == Task::AU ? kNumActionUnits : 0;
  const std::size_t expected = 2 + c + decision_cols;

  struct Rows {
    std::vector<std::int64_t> frames;
    std::vector<double> values;
    std::vector<int> classes;
    std::vector<std::uint8_t> bits;
  };
  std::map<std::string, Rows> by_video;
  std::vector<std::string_view> fields;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    split_csv(line, fields);
    if (fields.size() != expected)
      throw DataError(source, line_no, "expected " + std::to_string(expected) + " fields, got " +
                                           std::to_string(fields.size()));
    Rows& rows = by_video[std::string(fields[0])];
    auto frame = parse_int(fields[1]);
    if (!frame || *frame < 0) throw DataError(source, line_no, "bad frame index");
    if (!rows.frames.empty() && *frame <= rows.frames.back())
      throw DataError(source, line_no, "frames must be strictly increasing within a video");
    rows.frames.push_back(*frame);
    for (int j = 0; j < c; ++j) {
      auto v = parse_double(fields[2 + j]);
      if (!v) throw DataError(source, line_no, "non-numeric score");
      rows.values.push_back(*v);
    }
    if (file.task == Task::EXPR) {
      auto cls = parse_int(fields[2 + c]);
      if (!cls || *cls < 0 || *cls >= kNumExprClasses) throw DataError(source, line_no, "bad class id");
      rows.classes.push_back(static_cast<int>(*cls));
    } else if (file.task == Task::AU) {
      for (int u = 0; u < kNumActionUnits; ++u) {
        auto b = parse_int(fields[2 + c + u]);
        if (!b || (*b != 0 && *b != 1)) throw DataError(source, line_no, "AU decision must be 0 or 1");
        rows.bits.push_back(static_cast<std::uint8_t>(*b));
      }
    }
  }

  for (auto& [id, rows] : by_video) {
    const auto n = static_cast<Eigen::Index>(rows.frames.size());
    PredictionSeq seq{id, std::move(rows.frames), Eigen::Map<const Matrix>(rows.values.data(), n, c)};
    file.scores.push_back(std::move(seq));
    if (file.task == Task::EXPR) file.classes.push_back(std::move(rows.classes));
    if (file.task == Task::AU)
      file.bits.push_back(Eigen::Map<const BitMatrix>(rows.bits.data(), n, kNumActionUnits));
  }
  return file;
}

}  // namespace affect
