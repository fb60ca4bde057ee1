#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "sparseemg/dataset.hpp"
#include "sparseemg/error.hpp"
#include "sparseemg/rng.hpp"

namespace sparseemg {

namespace {

constexpr std::uint64_t kLevelStreams = 0x4C45564CULL << 32;  // "LEVL"
constexpr double kRingSpacingMm = 20.0;
constexpr double kRingDistanceMm = 100.0;

}  // namespace

void SyntheticSpec::validate() const {
  if (channel_count <= 0) throw ValidationError("channel_count", "must be positive");
  if (gesture_count <= 0) throw ValidationError("gesture_count", "must be positive");
  if (users <= 0) throw ValidationError("users", "must be positive");
  if (trials_per_gesture < 4)
    throw ValidationError("trials_per_gesture", "must be at least 4 (one per fold)");
  if (samples_per_trial < 3) throw ValidationError("samples_per_trial", "must be at least 3");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw ValidationError("noise_sigma", "must be nonnegative");
  std::set<int> seen;
  for (std::size_t i = 0; i < informative_channels.size(); ++i) {
    const int c = informative_channels[i];
    if (c < 0 || c >= channel_count || !seen.insert(c).second)
      throw ValidationError(fmt::format("informative_channels[{}]", i),
                            "must be a unique channel in 0..channel_count-1");
  }
}

double synthetic_level(const SyntheticSpec& spec, int channel, int gesture) {
  std::vector<int> order(static_cast<std::size_t>(spec.gesture_count));
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(CounterRng::derive(spec.seed, kLevelStreams + static_cast<std::uint64_t>(channel)));
  rng.shuffle(std::span<int>(order));
  return 0.5 * (1.0 + order[static_cast<std::size_t>(gesture)]);
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset ds;
  auto& m = ds.manifest;
  m.name = "synthetic";
  m.channel_count = spec.channel_count;
  m.sampling_rate_hz = 2048.0;
  m.electrode_diameter_mm = 10.0;
  m.inter_electrode_spacing_mm = kRingSpacingMm;
  m.sessions_per_user = 1;
  m.trial_path_template = "{user}/session{session}/g{gesture}_t{trial}.csv";
  for (int g = 0; g < spec.gesture_count; ++g)
    m.gestures.push_back({g, fmt::format("gesture_{}", g), GestureGroup::single_finger});
  for (int c = 0; c < spec.channel_count; ++c) {
    ElectrodeSite e;
    e.id = c;
    e.x_mm = kRingDistanceMm;
    e.y_mm = kRingSpacingMm * c;
    e.ring_index = c;
    m.electrodes.push_back(e);
  }
  for (int u = 0; u < spec.users; ++u) m.users.push_back(fmt::format("u{}", u));

  // levels[c][g], zero for non-informative channels
  std::vector<std::vector<double>> levels(static_cast<std::size_t>(spec.channel_count),
                                          std::vector<double>(static_cast<std::size_t>(spec.gesture_count), 0.0));
  for (int c : spec.informative_channels)
    for (int g = 0; g < spec.gesture_count; ++g)
      levels[static_cast<std::size_t>(c)][static_cast<std::size_t>(g)] = synthetic_level(spec, c, g);

  const auto T = static_cast<std::size_t>(spec.samples_per_trial);
  const auto C = static_cast<std::size_t>(spec.channel_count);
  for (int u = 0; u < spec.users; ++u) {
    for (int g = 0; g < spec.gesture_count; ++g) {
      for (int t = 0; t < spec.trials_per_gesture; ++t) {
        const auto stream = (static_cast<std::uint64_t>(u) * static_cast<std::uint64_t>(spec.gesture_count) +
                             static_cast<std::uint64_t>(g)) *
                                static_cast<std::uint64_t>(spec.trials_per_gesture) +
                            static_cast<std::uint64_t>(t);
        CounterRng rng(CounterRng::derive(spec.seed, stream));
        TrialRecord rec;
        rec.user = m.users[static_cast<std::size_t>(u)];
        rec.session = 0;
        rec.gesture_id = g;
        rec.trial_index = t;
        rec.samples = Matrix(T, C);
        for (std::size_t s = 0; s < T; ++s) {
          const double carrier = (s % 2 == 0) ? 1.0 : -1.0;
          for (std::size_t c = 0; c < C; ++c) {
            double v = levels[c][static_cast<std::size_t>(g)] * carrier;
            if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
            rec.samples(s, c) = v;
          }
        }
        ds.trials.push_back(std::move(rec));
      }
    }
  }
  return ds;
}

std::vector<TrialRecord> SyntheticDataset::trials_for(std::string_view user) const {
  std::vector<TrialRecord> out;
  for (const auto& t : trials)
    if (t.user == user) out.push_back(t);
  return out;
}

void write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  DatasetManifest m = ds.manifest;
  m.root = dir;
  save_manifest(m, dir / "manifest.json");
  for (const auto& t : ds.trials)
    write_trial_csv(t.samples, trial_path(m, t.user, t.session, t.gesture_id, t.trial_index));
}

}  // namespace sparseemg
