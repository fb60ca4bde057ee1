#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "sparseemg/error.hpp"
#include "sparseemg/service.hpp"

namespace sparseemg {

namespace fs = std::filesystem;

namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

template <class T>
T parse_env(const char* name, const std::string& text) {
  std::istringstream in(text);
  T value{};
  if (!(in >> value) || !in.eof()) throw ValidationError(name, fmt::format("cannot parse '{}'", text));
  return value;
}

}  // namespace

ServiceConfig ServiceConfig::from_env() {
  ServiceConfig c;
  if (auto v = env("SPARSEEMG_PORT")) {
    const auto port = parse_env<long>("SPARSEEMG_PORT", *v);
    if (port < 0 || port > 65535) throw ValidationError("SPARSEEMG_PORT", "must be 0..65535");
    c.port = static_cast<unsigned short>(port);
  }
  if (auto v = env("SPARSEEMG_DATA_DIR")) c.data_dir = *v;
  if (auto v = env("SPARSEEMG_WORKERS")) {
    const auto workers = parse_env<long>("SPARSEEMG_WORKERS", *v);
    if (workers < 1) throw ValidationError("SPARSEEMG_WORKERS", "must be at least 1");
    c.workers = static_cast<unsigned>(workers);
  }
  if (auto v = env("SPARSEEMG_MODEL_TTL_HOURS")) {
    c.model_ttl_hours = parse_env<double>("SPARSEEMG_MODEL_TTL_HOURS", *v);
    if (!(c.model_ttl_hours >= 0.0)) throw ValidationError("SPARSEEMG_MODEL_TTL_HOURS", "must be >= 0");
  }
  return c;
}

fs::path ServiceConfig::resolved_model_dir() const {
  return model_dir.empty() ? data_dir / ".models" : model_dir;
}

DatasetRegistry::DatasetRegistry(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError(fmt::format("dataset directory {} does not exist", root.string()));
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && !entry.path().filename().string().starts_with("."))
      dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const auto manifest = dir / "manifest.json";
    if (!fs::exists(manifest)) continue;
    try {
      auto m = load_manifest(manifest);
      if (datasets_.count(m.name)) {
        skipped_.push_back(fmt::format("{}: duplicate dataset name '{}'", dir.string(), m.name));
        continue;
      }
      add(std::move(m));
    } catch (const std::exception& e) {
      skipped_.push_back(fmt::format("{}: {}", dir.string(), e.what()));
    }
  }
}

void DatasetRegistry::add(DatasetManifest manifest) {
  manifest.validate();
  auto name = manifest.name;
  datasets_.insert_or_assign(std::move(name), std::move(manifest));
}

const DatasetManifest* DatasetRegistry::find(std::string_view name) const {
  auto it = datasets_.find(name);
  return it == datasets_.end() ? nullptr : &it->second;
}

std::vector<std::string> DatasetRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, m] : datasets_) out.push_back(name);
  return out;
}

nlohmann::json dataset_summary(const DatasetManifest& m) {
  nlohmann::json gestures = nlohmann::json::array();
  for (const auto& g : m.gestures)
    gestures.push_back({{"id", g.id}, {"name", g.name}, {"group", to_string(g.group)}});
  nlohmann::json electrodes = nlohmann::json::array();
  for (const auto& e : m.electrodes) electrodes.push_back(e.id);
  return {{"name", m.name},
          {"channel_count", m.channel_count},
          {"gesture_count", m.gestures.size()},
          {"sampling_rate_hz", m.sampling_rate_hz},
          {"users", m.users},
          {"sessions_per_user", m.sessions_per_user},
          {"gestures", std::move(gestures)},
          {"electrodes", std::move(electrodes)}};
}

nlohmann::json DatasetRegistry::summaries() const {
  auto out = nlohmann::json::array();
  for (const auto& [name, m] : datasets_) out.push_back(dataset_summary(m));
  return out;
}

// ---- artifacts -------------------------------------------------------------

std::string content_id(const std::string& content) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : content) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

ArtifactStore::ArtifactStore(fs::path dir, std::chrono::seconds ttl) : dir_(std::move(dir)), ttl_(ttl) {
  fs::create_directories(dir_);
}

fs::path ArtifactStore::path_for(const std::string& id) const { return dir_ / (id + ".json"); }

bool ArtifactStore::expired(const fs::path& p) const {
  std::error_code ec;
  const auto written = fs::last_write_time(p, ec);
  if (ec) return true;
  return fs::file_time_type::clock::now() - written >= ttl_;
}

std::string ArtifactStore::put(const std::string& content) {
  purge_expired();
  const auto id = content_id(content);
  const auto path = path_for(id);
  // Write then rename so readers never see a partial file.
  const auto tmp = dir_ / fmt::format("{}.{}.tmp", id, std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary);
    out << content;
    if (!out) throw IoError(fmt::format("cannot write {}", tmp.string()));
  }
  fs::rename(tmp, path);
  return id;
}

std::string ArtifactStore::get(const std::string& id) const {
  const bool well_formed =
      id.size() == 16 && std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
      });
  if (!well_formed) throw NotFoundError(fmt::format("no model '{}'", id));
  const auto path = path_for(id);
  if (!fs::exists(path)) throw NotFoundError(fmt::format("no model '{}'", id));
  if (expired(path)) {
    std::error_code ec;
    fs::remove(path, ec);
    throw NotFoundError(fmt::format("model '{}' has expired", id));
  }
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t ArtifactStore::purge_expired() const {
  std::size_t removed = 0;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir_, ec)) {
    if (entry.path().extension() != ".json" || !expired(entry.path())) continue;
    if (fs::remove(entry.path(), ec)) ++removed;
  }
  return removed;
}

}  // namespace sparseemg
