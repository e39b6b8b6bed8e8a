#pragma once

#include "affect/types.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace affect {

/// Per-frame outputs of one predictor over one video.
struct PredictionSeq {
  std::string video_id;
  std::vector<std::int64_t> frames;
  Matrix values;  // frames x channels

  void check() const;  // row count matches frame count
};

/// Centered box filter of width 2k+1; the window is truncated at the sequence
/// ends, so k = 0 is the identity.
Matrix smooth(const Matrix& values, int k);
PredictionSeq smooth(const PredictionSeq& seq, int k);
std::vector<PredictionSeq> smooth(const std::vector<PredictionSeq>& seqs, int k);

/// Candidate thresholds {step, 2 step, ...} strictly below 1.
std::vector<double> threshold_grid(double grid_step);

struct ThresholdSearch {
  std::vector<double> thresholds;
  std::vector<double> per_unit_f1;
};

/// Independently per unit, the grid threshold maximizing binary F1; ties go to
/// the smallest threshold.
ThresholdSearch search_thresholds(const Matrix& scores, const BitMatrix& labels, double grid_step = 0.05);

/// bit = score >= threshold.
BitMatrix apply_thresholds(const Matrix& scores, std::span<const double> thresholds);

/// Row-wise argmax.
std::vector<int> argmax_rows(const Matrix& values);

/// w * a + (1 - w) * b; throws AlignmentError naming the first mismatched frame.
PredictionSeq blend(const PredictionSeq& a, const PredictionSeq& b, double w);
std::vector<PredictionSeq> blend(const std::vector<PredictionSeq>& a, const std::vector<PredictionSeq>& b, double w);

using SeqMetric = std::function<double(const std::vector<PredictionSeq>&)>;

struct SweepPoint {
  double value = 0.0;
  double metric = 0.0;
};

/// Metric after smoothing with each k, in input order.
std::vector<SweepPoint> sweep_kernel(const SeqMetric& eval, const std::vector<PredictionSeq>& seqs,
                                     std::span<const int> k_values);

}  // namespace affect
