#include "sparseemg/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <fmt/format.h>

#include "sparseemg/error.hpp"

namespace sparseemg {

double rms_window(std::span<const double> samples) {
  if (samples.empty()) throw ValidationError("samples", "RMS of an empty window");
  double sum = 0.0;
  for (double v : samples) sum += v * v;
  return std::sqrt(sum / static_cast<double>(samples.size()));
}

namespace {

void check_electrodes(std::span<const int> electrodes, std::size_t channel_count) {
  if (electrodes.empty()) throw ValidationError("electrodes", "must be non-empty");
  for (std::size_t i = 0; i < electrodes.size(); ++i)
    if (electrodes[i] < 0 || static_cast<std::size_t>(electrodes[i]) >= channel_count)
      throw ValidationError(fmt::format("electrodes[{}]", i),
                            fmt::format("unknown electrode id {}", electrodes[i]));
}

void write_features(const TrialRecord& trial, std::span<const int> electrodes,
                    std::span<double> out) {
  const std::size_t T = trial.samples.rows();
  if (T < kWindows)
    throw ValidationError("samples", fmt::format("trial has {} samples; at least 3 required", T));
  const std::size_t window = T / kWindows;  // trailing T % 3 samples dropped
  std::vector<double> buf(window);
  for (std::size_t k = 0; k < electrodes.size(); ++k) {
    const auto c = static_cast<std::size_t>(electrodes[k]);
    for (std::size_t w = 0; w < kWindows; ++w) {
      for (std::size_t s = 0; s < window; ++s) buf[s] = trial.samples(w * window + s, c);
      out[kWindows * k + w] = rms_window(buf);
    }
  }
}

}  // namespace

std::vector<double> extract_trial_features(const TrialRecord& trial,
                                           std::span<const int> electrodes) {
  check_electrodes(electrodes, trial.samples.cols());
  std::vector<double> out(kWindows * electrodes.size());
  write_features(trial, electrodes, out);
  return out;
}

FeatureMatrix build_feature_matrix(std::span<const TrialRecord> trials,
                                   std::span<const int> electrodes) {
  if (trials.empty()) throw ValidationError("trials", "must be non-empty");
  const std::size_t channels = trials.front().samples.cols();
  check_electrodes(electrodes, channels);
  FeatureMatrix fm;
  fm.values = Matrix(trials.size(), kWindows * electrodes.size());
  fm.labels.reserve(trials.size());
  fm.electrode_order.assign(electrodes.begin(), electrodes.end());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (trials[i].samples.cols() != channels)
      throw ValidationError(fmt::format("trials[{}]", i), "channel count differs from trials[0]");
    write_features(trials[i], electrodes, fm.values.row(i));
    fm.labels.push_back(trials[i].gesture_id);
  }
  return fm;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.values = Matrix(rows.size(), cols());
  out.labels.reserve(rows.size());
  out.electrode_order = electrode_order;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = values.row(rows[i]);
    std::copy(src.begin(), src.end(), out.values.row(i).begin());
    out.labels.push_back(labels[rows[i]]);
  }
  return out;
}

FeatureMatrix FeatureMatrix::project(std::span<const int> electrodes) const {
  std::unordered_map<int, std::size_t> pos;
  for (std::size_t k = 0; k < electrode_order.size(); ++k) pos.emplace(electrode_order[k], k);
  std::vector<std::size_t> src_cols;
  for (std::size_t i = 0; i < electrodes.size(); ++i) {
    auto it = pos.find(electrodes[i]);
    if (it == pos.end())
      throw ValidationError(fmt::format("electrodes[{}]", i),
                            fmt::format("electrode {} not in feature matrix", electrodes[i]));
    for (std::size_t w = 0; w < kWindows; ++w) src_cols.push_back(kWindows * it->second + w);
  }
  FeatureMatrix out;
  out.values = Matrix(rows(), src_cols.size());
  out.labels = labels;
  out.electrode_order.assign(electrodes.begin(), electrodes.end());
  for (std::size_t r = 0; r < rows(); ++r)
    for (std::size_t j = 0; j < src_cols.size(); ++j) out.values(r, j) = values(r, src_cols[j]);
  return out;
}

std::vector<int> FeatureMatrix::classes() const {
  std::vector<int> c = labels;
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

Standardizer Standardizer::fit(const Matrix& rows) {
  if (rows.rows() == 0) throw ValidationError("fit_rows", "must be non-empty");
  const std::size_t n = rows.rows(), d = rows.cols();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.sd.assign(d, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += rows(i, j);
    const double mu = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (rows(i, j) - mu) * (rows(i, j) - mu);
    const double var = ss / static_cast<double>(n);
    s.mean[j] = mu;
    s.sd[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& m) const {
  if (m.cols() != mean.size())
    throw ValidationError("columns", fmt::format("standardizer fitted on {} columns, got {}",
                                                 mean.size(), m.cols()));
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = (m(i, j) - mean[j]) / sd[j];
  return out;
}

FeatureMatrix Standardizer::apply(const FeatureMatrix& m) const {
  return {apply(m.values), m.labels, m.electrode_order};
}

std::string feature_matrix_csv(const FeatureMatrix& m) {
  fmt::memory_buffer buf;
  auto out = std::back_inserter(buf);
  fmt::format_to(out, "label");
  for (int e : m.electrode_order)
    for (std::size_t w = 0; w < kWindows; ++w) fmt::format_to(out, ",e{}_w{}", e, w);
  buf.push_back('\n');
  for (std::size_t r = 0; r < m.rows(); ++r) {
    fmt::format_to(out, "{}", m.labels[r]);
    for (double v : m.values.row(r)) fmt::format_to(out, ",{}", v);
    buf.push_back('\n');
  }
  return fmt::to_string(buf);
}

void write_feature_matrix_csv(const FeatureMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << feature_matrix_csv(m);
}

}  // namespace sparseemg
