#pragma once

#include <atomic>
#include <chrono>
#include <fstream>
#include <iterator>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sparseemg/dataset.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("sparseemg-{}-{}-{}", tag, stamp, counter++);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<int> iota_ids(int n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

inline sparseemg::SyntheticSpec synthetic(int channels, std::vector<int> informative, double sigma,
                                          std::uint64_t seed, int gestures = 4, int trials = 8) {
  sparseemg::SyntheticSpec s;
  s.channel_count = channels;
  s.gesture_count = gestures;
  s.trials_per_gesture = trials;
  s.informative_channels = std::move(informative);
  s.noise_sigma = sigma;
  s.seed = seed;
  return s;
}

/// Electrodes on an 8-wide grid, 10 mm pitch; gestures 1..n; users alice and bob.
inline sparseemg::DatasetManifest grid_manifest(int electrodes, int gestures) {
  sparseemg::DatasetManifest m;
  m.name = "grid";
  m.channel_count = electrodes;
  m.sampling_rate_hz = 1000.0;
  m.electrode_diameter_mm = 10.0;
  m.inter_electrode_spacing_mm = 20.0;
  m.sessions_per_user = 2;
  m.users = {"alice", "bob"};
  m.trial_path_template = "{user}/s{session}/g{gesture}/{trial}.csv";
  for (int g = 0; g < gestures; ++g)
    m.gestures.push_back({g + 1, fmt::format("g{}", g + 1), sparseemg::GestureGroup::wrist});
  for (int e = 0; e < electrodes; ++e) {
    sparseemg::ElectrodeSite s;
    s.id = e;
    s.x_mm = 10.0 * (e % 8);
    s.y_mm = 10.0 * (e / 8);
    m.electrodes.push_back(s);
  }
  return m;
}


inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
