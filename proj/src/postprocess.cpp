#include "affect/postprocess.hpp"

#include "affect/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace affect {

void PredictionSeq::check() const {
  if (static_cast<std::size_t>(values.rows()) != frames.size())
    throw DataError("prediction sequence " + video_id + ": " + std::to_string(values.rows()) + " rows for " +
                    std::to_string(frames.size()) + " frames");
}

Matrix smooth(const Matrix& values, int k) {
  if (k < 0) throw ConfigError("smoothing half-width k must be >= 0");
  if (k == 0) return values;
  const Eigen::Index rows = values.rows(), cols = values.cols();
  Matrix out(rows, cols);
  std::vector<long double> prefix(rows + 1);
  for (Eigen::Index c = 0; c < cols; ++c) {
    prefix[0] = 0.0L;
    for (Eigen::Index t = 0; t < rows; ++t) prefix[t + 1] = prefix[t] + values(t, c);
    for (Eigen::Index t = 0; t < rows; ++t) {
      const Eigen::Index lo = std::max<Eigen::Index>(0, t - k);
      const Eigen::Index hi = std::min<Eigen::Index>(rows - 1, t + k);
      out(t, c) = static_cast<double>((prefix[hi + 1] - prefix[lo]) / static_cast<long double>(hi - lo + 1));
    }
  }
  return out;
}

PredictionSeq smooth(const PredictionSeq& seq, int k) {
  seq.check();
  return {seq.video_id, seq.frames, smooth(seq.values, k)};
}

std::vector<PredictionSeq> smooth(const std::vector<PredictionSeq>& seqs, int k) {
  std::vector<PredictionSeq> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(smooth(s, k));
  return out;
}

std::vector<double> threshold_grid(double grid_step) {
  if (!(grid_step > 0.0 && grid_step <= 0.5)) throw ConfigError("threshold grid step must be in (0, 0.5]");
  std::vector<double> grid;
  for (int i = 1;; ++i) {
    const double t = i * grid_step;
    if (t >= 1.0 - 1e-9) break;
    grid.push_back(t);
  }
  return grid;
}

ThresholdSearch search_thresholds(const Matrix& scores, const BitMatrix& labels, double grid_step) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols())
    throw DataError("search_thresholds: scores and labels differ in shape");
  const auto grid = threshold_grid(grid_step);
  ThresholdSearch result;
  for (Eigen::Index u = 0; u < scores.cols(); ++u) {
    double best_f1 = -1.0, best_t = grid.front();
    for (double t : grid) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const bool p = scores(i, u) >= t, y = labels(i, u) != 0;
        tp += p && y;
        fp += p && !y;
        fn += !p && y;
      }
      const double f1 = f1_from_counts(tp, fp, fn);
      if (f1 > best_f1) {
        best_f1 = f1;
        best_t = t;
      }
    }
    result.thresholds.push_back(best_t);
    result.per_unit_f1.push_back(best_f1);
  }
  return result;
}

BitMatrix apply_thresholds(const Matrix& scores, std::span<const double> thresholds) {
  if (static_cast<std::size_t>(scores.cols()) != thresholds.size())
    throw DataError("apply_thresholds: " + std::to_string(thresholds.size()) + " thresholds for " +
                    std::to_string(scores.cols()) + " units");
  BitMatrix bits(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    for (Eigen::Index u = 0; u < scores.cols(); ++u) bits(i, u) = scores(i, u) >= thresholds[u] ? 1 : 0;
  return bits;
}

std::vector<int> argmax_rows(const Matrix& values) {
  std::vector<int> out(values.rows());
  for (Eigen::Index i = 0; i < values.rows(); ++i) values.row(i).maxCoeff(&out[i]);
  return out;
}

PredictionSeq blend(const PredictionSeq& a, const PredictionSeq& b, double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("blend weight must be in [0, 1]");
  a.check();
  b.check();
  if (a.video_id != b.video_id) throw AlignmentError("blend: video " + a.video_id + " paired with " + b.video_id);
  const std::size_t n = std::min(a.frames.size(), b.frames.size());
  for (std::size_t i = 0; i < n; ++i)
    if (a.frames[i] != b.frames[i])
      throw AlignmentError("blend: video " + a.video_id + " misaligned at frame " + std::to_string(a.frames[i]) +
                           " (other member has frame " + std::to_string(b.frames[i]) + ")");
  if (a.frames.size() != b.frames.size()) {
    const auto& longer = a.frames.size() > b.frames.size() ? a : b;
    throw AlignmentError("blend: video " + a.video_id + " misaligned at frame " + std::to_string(longer.frames[n]) +
                         " (missing from one member)");
  }
  if (a.values.cols() != b.values.cols())
    throw AlignmentError("blend: video " + a.video_id + " members differ in channel count");
  if (w == 1.0) return a;
  if (w == 0.0) return b;
  return {a.video_id, a.frames, w * a.values + (1.0 - w) * b.values};
}

std::vector<PredictionSeq> blend(const std::vector<PredictionSeq>& a, const std::vector<PredictionSeq>& b, double w) {
  if (a.size() != b.size())
    throw AlignmentError("blend: members cover " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                         " videos");
  std::vector<PredictionSeq> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(blend(a[i], b[i], w));
  return out;
}

std::vector<SweepPoint> sweep_kernel(const SeqMetric& eval, const std::vector<PredictionSeq>& seqs,
                                     std::span<const int> k_values) {
  if (k_values.empty()) throw ConfigError("sweep_kernel: no k values");
  std::vector<SweepPoint> curve;
  curve.reserve(k_values.size());
  for (int k : k_values) curve.push_back({static_cast<double>(k), eval(smooth(seqs, k))});
  return curve;
}

}  // namespace affect
