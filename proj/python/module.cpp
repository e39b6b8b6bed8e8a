#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "affect/metrics.hpp"
#include "affect/pipeline.hpp"

namespace py = pybind11;
using namespace affect;

namespace {

PipelineConfig config_from(const std::string& text) { return PipelineConfig::from_json(nlohmann::json::parse(text)); }

std::vector<std::filesystem::path> to_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

py::dict f1_dict(const F1Report& r) {
  py::dict d;
  d["per_class_f1"] = r.per_class_f1;
  d["macro_f1"] = r.macro_f1;
  d["accuracy"] = r.accuracy ? py::cast(*r.accuracy) : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Frame-level video affect toolkit (C++ core)";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  // metrics
  m.def("ccc", [](const std::vector<double>& x, const std::vector<double>& y) { return ccc(x, y); }, py::arg("x"),
        py::arg("y"));
  m.def(
      "mean_ccc",
      [](const std::vector<double>& pv, const std::vector<double>& pa, const std::vector<double>& tv,
         const std::vector<double>& ta) {
        const auto r = mean_ccc(pv, pa, tv, ta);
        return py::make_tuple(r.ccc_v, r.ccc_a, r.p_va);
      },
      py::arg("pred_v"), py::arg("pred_a"), py::arg("true_v"), py::arg("true_a"));
  m.def(
      "macro_f1",
      [](const std::vector<int>& pred, const std::vector<int>& truth, int n) { return f1_dict(macro_f1(pred, truth, n)); },
      py::arg("pred"), py::arg("truth"), py::arg("n_classes"));
  m.def(
      "multilabel_f1", [](const BitMatrix& pred, const BitMatrix& truth) { return f1_dict(multilabel_f1(pred, truth)); },
      py::arg("pred"), py::arg("truth"));

  // post-processing
  m.def("smooth", py::overload_cast<const Matrix&, int>(&smooth), py::arg("values"), py::arg("k"));
  m.def(
      "search_thresholds",
      [](const Matrix& scores, const BitMatrix& labels, double step) {
        auto r = search_thresholds(scores, labels, step);
        return py::make_tuple(r.thresholds, r.per_unit_f1);
      },
      py::arg("scores"), py::arg("labels"), py::arg("grid_step") = 0.05);
  m.def(
      "apply_thresholds",
      [](const Matrix& scores, const std::vector<double>& th) { return apply_thresholds(scores, th); },
      py::arg("scores"), py::arg("thresholds"));
  m.def(
      "blend",
      [](const Matrix& a, const Matrix& b, double w) {
        std::vector<std::int64_t> frames(a.rows());
        for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = static_cast<std::int64_t>(i);
        return blend(PredictionSeq{"v", frames, a}, PredictionSeq{"v", frames, b}, w).values;
      },
      py::arg("a"), py::arg("b"), py::arg("w"));

  // heads
  m.def(
      "adapt_pretrained_logits",
      [](const std::vector<double>& logits, double p, double th) { return adapt_pretrained_logits(logits, p, th); },
      py::arg("logits"), py::arg("other_prob"), py::arg("other_threshold") = 0.5);
  m.def(
      "predict",
      [](const std::string& model_path, const Matrix& inputs) { return forward(load_head(model_path), inputs); },
      py::arg("model_path"), py::arg("inputs"));

  // data
  m.def(
      "load_features",
      [](const std::string& path) {
        const Dataset ds = load_features(path);
        py::list tracks;
        for (const auto& t : ds.tracks) {
          const auto n = static_cast<Eigen::Index>(t.frames.size());
          std::vector<std::int64_t> frames(n);
          Matrix emb(n, static_cast<Eigen::Index>(ds.dim)), logits(n, kNumLogits), va(n, 2);
          for (Eigen::Index i = 0; i < n; ++i) {
            const auto& f = t.frames[i];
            frames[i] = f.frame_index;
            for (std::size_t e = 0; e < ds.dim; ++e) emb(i, e) = f.embedding[e];
            for (int l = 0; l < kNumLogits; ++l) logits(i, l) = f.logits[l];
            va(i, 0) = f.valence;
            va(i, 1) = f.arousal;
          }
          py::dict d;
          d["video_id"] = t.video_id;
          d["frames"] = frames;
          d["embeddings"] = emb;
          d["logits"] = logits;
          d["valence_arousal"] = va;
          tracks.append(d);
        }
        return py::make_tuple(ds.dim, tracks);
      },
      py::arg("path"));

  // commands; configs and reports travel as JSON text
  m.def(
      "synth",
      [](const std::string& task, int videos, int frames, double noise, std::uint64_t seed, std::size_t dim,
         const std::string& out) {
        cmd_synth({parse_task(task), videos, frames, noise, seed, dim}, out);
      },
      py::arg("task"), py::arg("videos"), py::arg("frames"), py::arg("noise"), py::arg("seed"), py::arg("dim"),
      py::arg("out"));
  m.def(
      "train", [](const std::string& config) { return cmd_train(config_from(config)).model_path.string(); },
      py::arg("config"));
  m.def(
      "evaluate",
      [](const std::string& config, const std::vector<std::string>& models, const std::vector<int>& sweep_k) {
        return cmd_evaluate(config_from(config), to_paths(models), sweep_k).to_json().dump();
      },
      py::arg("config"), py::arg("models"), py::arg("sweep_k") = std::vector<int>{});
  m.def(
      "predict_file",
      [](const std::string& config, const std::vector<std::string>& models) {
        return cmd_predict(config_from(config), to_paths(models)).string();
      },
      py::arg("config"), py::arg("models"));
  m.def(
      "sweep",
      [](const std::string& config, const std::vector<std::string>& models, const std::string& param,
         const std::vector<double>& values) {
        std::vector<std::pair<double, double>> out;
        for (const auto& p : run_sweep(config_from(config), to_paths(models), param, values))
          out.emplace_back(p.value, p.metric);
        return out;
      },
      py::arg("config"), py::arg("models"), py::arg("param"), py::arg("values"));
}
