#pragma once

#include "affect/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <span>
#include <vector>

namespace affect {

struct CccResult {
  double ccc_v = 0.0;
  double ccc_a = 0.0;
  double p_va = 0.0;
};

struct F1Report {
  std::vector<double> per_class_f1;
  double macro_f1 = 0.0;
  std::optional<double> accuracy;  // unset for multi-label reports
};

/// Concordance correlation coefficient with population moments:
///   2 cov(x, y) / (var(x) + var(y) + (mean(x) - mean(y))^2)
/// A constant sequence yields 0 unless both sequences are the same constant
/// (zero denominator), which yields 1.
double ccc(std::span<const double> x, std::span<const double> y);

/// Pooled CCC for valence and arousal and their mean.
CccResult mean_ccc(std::span<const double> pred_v, std::span<const double> pred_a,
                   std::span<const double> true_v, std::span<const double> true_a);
CccResult mean_ccc(double ccc_v, double ccc_a);

/// Per-video CCC averaged over videos (debug view; the pooled figure is the reported one).
/// `groups` holds the starting offset of each video plus a final end offset.
CccResult mean_ccc_per_video(std::span<const double> pred_v, std::span<const double> pred_a,
                             std::span<const double> true_v, std::span<const double> true_a,
                             std::span<const std::size_t> groups);

/// Per-class F1 (0 when a class has no true and no predicted members), macro mean and accuracy.
F1Report macro_f1(std::span<const int> pred, std::span<const int> truth, int n_classes);

/// Binary F1 of the positive class for each column, macro mean over columns.
F1Report multilabel_f1(const BitMatrix& pred, const BitMatrix& truth);

/// Binary F1 from counts; 0 when the denominator vanishes.
double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

void to_json(nlohmann::json& j, const CccResult& r);
void to_json(nlohmann::json& j, const F1Report& r);

}  // namespace affect
