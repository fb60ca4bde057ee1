#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparseemg/matrix.hpp"

namespace sparseemg {

enum class GestureGroup { single_finger, multi_finger, wrist, rest };

std::string_view to_string(GestureGroup g);
GestureGroup gesture_group_from_string(std::string_view s);

struct GestureDef {
  int id = 0;
  std::string name;
  GestureGroup group = GestureGroup::rest;

  friend bool operator==(const GestureDef&, const GestureDef&) = default;
};

/// One sensing site on the flattened forearm map.
struct ElectrodeSite {
  int id = 0;
  double x_mm = 0.0;  ///< along the forearm, from the wrist
  double y_mm = 0.0;  ///< around the circumference
  std::optional<int> ring_index;
  std::optional<std::string> muscle_label;

  friend bool operator==(const ElectrodeSite&, const ElectrodeSite&) = default;
};

struct DatasetManifest {
  std::string name;
  int channel_count = 0;
  double sampling_rate_hz = 0.0;
  std::vector<GestureDef> gestures;
  std::vector<ElectrodeSite> electrodes;
  double electrode_diameter_mm = 0.0;
  double inter_electrode_spacing_mm = 0.0;
  std::vector<std::string> users;
  int sessions_per_user = 0;
  /// Relative to the manifest's directory. Placeholders: {user} {session}
  /// {gesture} {trial}.
  std::string trial_path_template;

  /// Directory the manifest was loaded from; not serialized.
  std::filesystem::path root;

  /// Throws ValidationError naming the first offending field.
  void validate() const;

  const GestureDef* find_gesture(int id) const;
  bool has_user(std::string_view user) const;

  /// Electrodes that carry ring metadata, ordered by ring_index.
  std::vector<ElectrodeSite> ring() const;

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.name == b.name && a.channel_count == b.channel_count &&
           a.sampling_rate_hz == b.sampling_rate_hz && a.gestures == b.gestures &&
           a.electrodes == b.electrodes && a.electrode_diameter_mm == b.electrode_diameter_mm &&
           a.inter_electrode_spacing_mm == b.inter_electrode_spacing_mm && a.users == b.users &&
           a.sessions_per_user == b.sessions_per_user &&
           a.trial_path_template == b.trial_path_template;
  }
};

/// One gesture repetition: T rows x channel_count columns.
struct TrialRecord {
  std::string user;
  int session = 0;
  int gesture_id = 0;
  int trial_index = 0;
  Matrix samples;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

nlohmann::json manifest_to_json(const DatasetManifest& m);
/// Parses and validates. Throws ValidationError or Error.
DatasetManifest manifest_from_json(const nlohmann::json& j);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Resolves the trial template against the manifest root.
std::filesystem::path trial_path(const DatasetManifest& m, std::string_view user, int session,
                                 int gesture_id, int trial_index);

/// Loads every trial of `user` in the given sessions. Trial indices start at
/// 0 and run contiguously until the first missing file; a (session, gesture)
/// pair without trial 0 is a missing-file error. Output is sorted by
/// (session, gesture_id, trial_index).
std::vector<TrialRecord> load_trials(const DatasetManifest& m, std::string_view user,
                                     const std::vector<int>& sessions);

/// All sessions 0..sessions_per_user-1.
std::vector<int> all_sessions(const DatasetManifest& m);

/// Plain CSV, no header, one row per sample.
Matrix read_trial_csv(const std::filesystem::path& path, int expected_columns);
void write_trial_csv(const Matrix& samples, const std::filesystem::path& path);

struct SyntheticSpec {
  int channel_count = 16;
  int gesture_count = 4;
  int users = 1;
  int trials_per_gesture = 8;
  int samples_per_trial = 300;
  std::vector<int> informative_channels;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  DatasetManifest manifest;
  /// All users' trials, sorted by (user order, session, gesture, trial).
  std::vector<TrialRecord> trials;

  std::vector<TrialRecord> trials_for(std::string_view user) const;
};

/// Amplitude level of informative channel `channel` for gesture `gesture`.
/// Levels for one channel are a seeded permutation of {0.5, 1.0, ...}.
double synthetic_level(const SyntheticSpec& spec, int channel, int gesture);

/// Each informative channel carries a +/-level square carrier (window RMS
/// exactly `level`) plus N(0, sigma) noise; the others carry only noise.
/// Electrodes sit on one ring spaced 20 mm apart at x = 100 mm.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Writes manifest.json plus one CSV per trial under `dir`.
void write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir);

}  // namespace sparseemg
