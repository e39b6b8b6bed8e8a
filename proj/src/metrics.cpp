#include "affect/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>

namespace affect {

namespace {

// Exact for constant input, where summing and dividing may not return the constant.
double mean_of(std::span<const double> x) {
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) return x[0];
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

}  // namespace

double ccc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw DataError("ccc: length mismatch (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  if (x.size() < 2) throw DataError("ccc: need at least 2 samples");

  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const double n = static_cast<double>(x.size());
  const double diff = mx - my;
  const double denom = sxx / n + syy / n + diff * diff;
  if (denom == 0.0) return 1.0;
  return std::clamp(2.0 * (sxy / n) / denom, -1.0, 1.0);
}

CccResult mean_ccc(double ccc_v, double ccc_a) { return {ccc_v, ccc_a, (ccc_v + ccc_a) / 2.0}; }

CccResult mean_ccc(std::span<const double> pred_v, std::span<const double> pred_a, std::span<const double> true_v,
                   std::span<const double> true_a) {
  return mean_ccc(ccc(pred_v, true_v), ccc(pred_a, true_a));
}

CccResult mean_ccc_per_video(std::span<const double> pred_v, std::span<const double> pred_a,
                             std::span<const double> true_v, std::span<const double> true_a,
                             std::span<const std::size_t> groups) {
  if (groups.size() < 2) throw DataError("mean_ccc_per_video: need at least one group");
  double sv = 0.0, sa = 0.0;
  for (std::size_t g = 0; g + 1 < groups.size(); ++g) {
    const auto b = groups[g], n = groups[g + 1] - groups[g];
    sv += ccc(pred_v.subspan(b, n), true_v.subspan(b, n));
    sa += ccc(pred_a.subspan(b, n), true_a.subspan(b, n));
  }
  const double count = static_cast<double>(groups.size() - 1);
  return mean_ccc(sv / count, sa / count);
}

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

F1Report macro_f1(std::span<const int> pred, std::span<const int> truth, int n_classes) {
  if (pred.size() != truth.size()) throw DataError("macro_f1: length mismatch");
  if (n_classes < 1) throw DataError("macro_f1: n_classes must be positive");
  std::vector<std::size_t> tp(n_classes), fp(n_classes), fn(n_classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], t = truth[i];
    if (p < 0 || p >= n_classes || t < 0 || t >= n_classes)
      throw DataError("macro_f1: class id out of range at index " + std::to_string(i));
    if (p == t) {
      ++tp[p];
      ++correct;
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  F1Report r;
  r.per_class_f1.resize(n_classes);
  for (int c = 0; c < n_classes; ++c) r.per_class_f1[c] = f1_from_counts(tp[c], fp[c], fn[c]);
  r.macro_f1 = std::accumulate(r.per_class_f1.begin(), r.per_class_f1.end(), 0.0) / n_classes;
  r.accuracy = pred.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pred.size());
  return r;
}

F1Report multilabel_f1(const BitMatrix& pred, const BitMatrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw DataError("multilabel_f1: shape mismatch");
  if (pred.cols() < 1) throw DataError("multilabel_f1: need at least one unit");
  F1Report r;
  r.per_class_f1.resize(pred.cols());
  for (Eigen::Index u = 0; u < pred.cols(); ++u) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const auto p = pred(i, u), t = truth(i, u);
      if (p > 1 || t > 1) throw DataError("multilabel_f1: non-binary entry at row " + std::to_string(i));
      tp += p & t;
      fp += p & (1 - t);
      fn += (1 - p) & t;
    }
    r.per_class_f1[u] = f1_from_counts(tp, fp, fn);
  }
  r.macro_f1 = std::accumulate(r.per_class_f1.begin(), r.per_class_f1.end(), 0.0) /
               static_cast<double>(r.per_class_f1.size());
  return r;
}

void to_json(nlohmann::json& j, const CccResult& r) {
  j = nlohmann::json{{"ccc_v", r.ccc_v}, {"ccc_a", r.ccc_a}, {"p_va", r.p_va}};
}

void to_json(nlohmann::json& j, const F1Report& r) {
  j = nlohmann::json{{"per_class_f1", r.per_class_f1}, {"macro_f1", r.macro_f1}};
  j["accuracy"] = r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr);
}

}  // namespace affect
