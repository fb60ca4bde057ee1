#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sparseemg/dataset.hpp"
#include "sparseemg/matrix.hpp"

namespace sparseemg {

/// Number of non-overlapping windows per trial.
inline constexpr std::size_t kWindows = 3;

/// Per-trial windowed-RMS features. Electrode k of electrode_order owns
/// columns 3k, 3k+1, 3k+2 (windows 0, 1, 2).
struct FeatureMatrix {
  Matrix values;
  std::vector<int> labels;
  std::vector<int> electrode_order;

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t cols() const noexcept { return values.cols(); }

  /// Rows in the given order.
  FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
  /// Columns of the listed electrodes, in the listed order. Throws if an id
  /// is not part of electrode_order.
  FeatureMatrix project(std::span<const int> electrodes) const;
  /// Sorted distinct labels.
  std::vector<int> classes() const;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

double rms_window(std::span<const double> samples);

std::vector<double> extract_trial_features(const TrialRecord& trial, std::span<const int> electrodes);

FeatureMatrix build_feature_matrix(std::span<const TrialRecord> trials, std::span<const int> electrodes);

/// Per-column z-scoring fitted on training rows. Zero-variance columns keep
/// sigma = 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> sd;

  static Standardizer fit(const Matrix& rows);
  Matrix apply(const Matrix& m) const;
  FeatureMatrix apply(const FeatureMatrix& m) const;

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

/// Header `label,e<ID>_w0,e<ID>_w1,e<ID>_w2,...`.
std::string feature_matrix_csv(const FeatureMatrix& m);
void write_feature_matrix_csv(const FeatureMatrix& m, const std::filesystem::path& path);

}  // namespace sparseemg
