#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace affect {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using BitMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Task { VA, EXPR, AU };

inline constexpr int kNumLogits = 8;
inline constexpr int kNumExprClasses = 8;
inline constexpr int kNumActionUnits = 12;

// Challenge expression classes, in label-file id order.
inline constexpr std::string_view kExprClassNames[kNumExprClasses] = {
    "Neutral", "Anger", "Disgust", "Fear", "Happiness", "Sadness", "Surprise", "Other"};
inline constexpr int kOtherClass = 7;

// Backbone logit order.
inline constexpr std::string_view kLogitNames[kNumLogits] = {
    "Anger", "Contempt", "Disgust", "Fear", "Happiness", "Neutral", "Sadness", "Surprise"};

inline constexpr int kActionUnitIds[kNumActionUnits] = {1, 2, 4, 6, 7, 10, 12, 15, 23, 24, 25, 26};

std::string_view to_string(Task task);
Task parse_task(std::string_view name);

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
  DataError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  /// 1-based line number, 0 when the error is not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

/// Two prediction sources disagree on video or frame layout.
class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace affect
