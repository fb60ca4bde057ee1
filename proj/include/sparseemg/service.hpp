#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sparseemg/classifiers.hpp"
#include "sparseemg/dataset.hpp"
#include "sparseemg/selection.hpp"
#include "sparseemg/sweep.hpp"

namespace sparseemg {

inline constexpr int kProtocolVersion = 1;

struct ServiceConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  ///< 0 picks a free port
  std::filesystem::path data_dir = "data";
  /// Defaults to <data_dir>/.models when empty.
  std::filesystem::path model_dir;
  unsigned workers = 2;
  double model_ttl_hours = 24.0;

  /// Reads SPARSEEMG_PORT, SPARSEEMG_DATA_DIR, SPARSEEMG_WORKERS and
  /// SPARSEEMG_MODEL_TTL_HOURS over the defaults above.
  static ServiceConfig from_env();
  std::filesystem::path resolved_model_dir() const;
};

/// Read-only after construction. Every subdirectory of the root holding a
/// manifest.json is registered under the manifest's name.
class DatasetRegistry {
 public:
  DatasetRegistry() = default;
  explicit DatasetRegistry(const std::filesystem::path& root);

  void add(DatasetManifest manifest);
  const DatasetManifest* find(std::string_view name) const;
  std::vector<std::string> names() const;
  nlohmann::json summaries() const;
  /// Directories skipped during the scan, with the reason.
  const std::vector<std::string>& skipped() const { return skipped_; }

 private:
  std::map<std::string, DatasetManifest, std::less<>> datasets_;
  std::vector<std::string> skipped_;
};

nlohmann::json dataset_summary(const DatasetManifest& m);

/// Content-addressed blobs on disk. The id is the 64-bit FNV-1a hash of the
/// content in hex; an entry expires `ttl` after its last put.
class ArtifactStore {
 public:
  ArtifactStore(std::filesystem::path dir, std::chrono::seconds ttl);

  std::string put(const std::string& content);
  /// Throws NotFoundError when the id is unknown, malformed or expired.
  std::string get(const std::string& id) const;
  /// Removes expired entries; returns how many.
  std::size_t purge_expired() const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& id) const;
  bool expired(const std::filesystem::path& p) const;

  std::filesystem::path dir_;
  std::chrono::seconds ttl_;
};

std::string content_id(const std::string& content);

struct SweepRequest {
  std::string dataset;
  std::string user;
  std::vector<int> gestures;
  std::vector<int> candidate_electrodes;  ///< empty = every electrode
  int max_electrodes = kDefaultMaxElectrodes;
  SelectionScheme scheme = SelectionScheme::PI;
  ClassifierKind classifier = ClassifierKind::RF;
  std::uint64_t seed = 0;
  SparsityConfig weights;

  /// Shape checks only; throws ValidationError with a field path.
  static SweepRequest from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Checks names and ids against the dataset.
  void validate_against(const DatasetManifest& m) const;
  /// Candidates with the empty default expanded, in request order.
  std::vector<int> resolved_candidates(const DatasetManifest& m) const;
};

// ---- wire messages ---------------------------------------------------------

nlohmann::json progress_message(const SweepPoint& p);
nlohmann::json result_message(const SweepResult& r, const std::string& model_id);
nlohmann::json error_message(std::string_view code, std::string_view field, std::string_view message);
nlohmann::json cancelled_message();

/// The model served for a finished sweep: the classifier trained on every
/// requested trial restricted to the chosen electrodes.
TrainedModel final_model(const SweepRequest& req, std::span<const TrialRecord> trials,
                         const SweepResult& result);

/// Runs one sweep request to completion and emits its messages in order:
/// zero or more progress events then exactly one of result, error or
/// cancelled. Never throws.
void handle_sweep(const nlohmann::json& request, const DatasetRegistry& registry,
                  ArtifactStore& store, const std::function<void(const nlohmann::json&)>& emit,
                  const std::atomic<bool>* cancel = nullptr, unsigned sweep_workers = 1);

/// HTTP + WebSocket front end. Runs its own I/O thread and a bounded job pool.
class Server {
 public:
  explicit Server(ServiceConfig config);
  Server(ServiceConfig config, DatasetRegistry registry);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving in the background.
  void start();
  void stop();
  /// Blocks until stop() is called from another thread or a signal arrives.
  void wait();
  unsigned short port() const;
  const DatasetRegistry& registry() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sparseemg
