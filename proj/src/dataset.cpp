#include "sparseemg/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "sparseemg/error.hpp"

namespace sparseemg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(GestureGroup g) {
  switch (g) {
    case GestureGroup::single_finger: return "single_finger";
    case GestureGroup::multi_finger: return "multi_finger";
    case GestureGroup::wrist: return "wrist";
    case GestureGroup::rest: return "rest";
  }
  return "rest";
}

GestureGroup gesture_group_from_string(std::string_view s) {
  if (s == "single_finger") return GestureGroup::single_finger;
  if (s == "multi_finger") return GestureGroup::multi_finger;
  if (s == "wrist") return GestureGroup::wrist;
  if (s == "rest") return GestureGroup::rest;
  throw ValidationError("group", fmt::format("unknown gesture group '{}'", s));
}

void DatasetManifest::validate() const {
  if (name.empty()) throw ValidationError("name", "must be non-empty");
  if (channel_count <= 0) throw ValidationError("channel_count", "must be positive");
  if (!(sampling_rate_hz > 0.0) || !std::isfinite(sampling_rate_hz))
    throw ValidationError("sampling_rate_hz", "must be positive");
  if (!(electrode_diameter_mm > 0.0) || !std::isfinite(electrode_diameter_mm))
    throw ValidationError("electrode_diameter_mm", "must be positive");
  if (!(inter_electrode_spacing_mm > 0.0) || !std::isfinite(inter_electrode_spacing_mm))
    throw ValidationError("inter_electrode_spacing_mm", "must be positive");
  if (sessions_per_user <= 0) throw ValidationError("sessions_per_user", "must be positive");
  if (trial_path_template.empty())
    throw ValidationError("trial_path_template", "must be non-empty");

  if (static_cast<int>(electrodes.size()) != channel_count)
    throw ValidationError("electrodes", fmt::format("lists {} electrodes but channel_count is {}",
                                                    electrodes.size(), channel_count));
  std::vector<bool> seen(electrodes.size(), false);
  std::set<int> ring_positions;
  for (std::size_t i = 0; i < electrodes.size(); ++i) {
    const auto& e = electrodes[i];
    const auto field = fmt::format("electrodes[{}]", i);
    if (e.id < 0 || e.id >= channel_count || seen[static_cast<std::size_t>(e.id)])
      throw ValidationError(field + ".id",
                            "electrode ids must be unique and cover 0..channel_count-1");
    seen[static_cast<std::size_t>(e.id)] = true;
    if (!std::isfinite(e.x_mm) || !std::isfinite(e.y_mm))
      throw ValidationError(field, "coordinates must be finite");
    if (e.ring_index && !ring_positions.insert(*e.ring_index).second)
      throw ValidationError(field + ".ring_index", "duplicate ring position");
  }

  if (gestures.empty()) throw ValidationError("gestures", "must be non-empty");
  std::set<int> gesture_ids;
  for (std::size_t i = 0; i < gestures.size(); ++i) {
    const auto field = fmt::format("gestures[{}]", i);
    if (!gesture_ids.insert(gestures[i].id).second)
      throw ValidationError(field + ".id", "duplicate gesture id");
    if (gestures[i].name.empty()) throw ValidationError(field + ".name", "must be non-empty");
  }

  if (users.empty()) throw ValidationError("users", "must be non-empty");
  std::set<std::string> user_set;
  for (std::size_t i = 0; i < users.size(); ++i)
    if (users[i].empty() || !user_set.insert(users[i]).second)
      throw ValidationError(fmt::format("users[{}]", i), "must be non-empty and unique");
}

const GestureDef* DatasetManifest::find_gesture(int id) const {
  auto it = std::find_if(gestures.begin(), gestures.end(),
                         [id](const GestureDef& g) { return g.id == id; });
  return it == gestures.end() ? nullptr : &*it;
}

bool DatasetManifest::has_user(std::string_view user) const {
  return std::find(users.begin(), users.end(), user) != users.end();
}

std::vector<ElectrodeSite> DatasetManifest::ring() const {
  std::vector<ElectrodeSite> out;
  for (const auto& e : electrodes)
    if (e.ring_index) out.push_back(e);
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return *a.ring_index < *b.ring_index; });
  return out;
}

json manifest_to_json(const DatasetManifest& m) {
  json gestures = json::array();
  for (const auto& g : m.gestures)
    gestures.push_back({{"id", g.id}, {"name", g.name}, {"group", to_string(g.group)}});
  json electrodes = json::array();
  for (const auto& e : m.electrodes) {
    json je = {{"id", e.id}, {"x_mm", e.x_mm}, {"y_mm", e.y_mm}};
    if (e.ring_index) je["ring_index"] = *e.ring_index;
    if (e.muscle_label) je["muscle_label"] = *e.muscle_label;
    electrodes.push_back(std::move(je));
  }
  return {{"name", m.name},
          {"channel_count", m.channel_count},
          {"sampling_rate_hz", m.sampling_rate_hz},
          {"gestures", std::move(gestures)},
          {"electrodes", std::move(electrodes)},
          {"electrode_diameter_mm", m.electrode_diameter_mm},
          {"inter_electrode_spacing_mm", m.inter_electrode_spacing_mm},
          {"users", m.users},
          {"sessions_per_user", m.sessions_per_user},
          {"trial_path_template", m.trial_path_template}};
}

namespace {

template <class T>
T get_field(const json& j, const std::string& key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(path, "missing field");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(path, fmt::format("wrong type ({})", e.what()));
  }
}

}  // namespace

DatasetManifest manifest_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("manifest", "must be a JSON object");
  DatasetManifest m;
  m.name = get_field<std::string>(j, "name", "name");
  m.channel_count = get_field<int>(j, "channel_count", "channel_count");
  m.sampling_rate_hz = get_field<double>(j, "sampling_rate_hz", "sampling_rate_hz");
  m.electrode_diameter_mm = get_field<double>(j, "electrode_diameter_mm", "electrode_diameter_mm");
  m.inter_electrode_spacing_mm =
      get_field<double>(j, "inter_electrode_spacing_mm", "inter_electrode_spacing_mm");
  m.users = get_field<std::vector<std::string>>(j, "users", "users");
  m.sessions_per_user = get_field<int>(j, "sessions_per_user", "sessions_per_user");
  m.trial_path_template = get_field<std::string>(j, "trial_path_template", "trial_path_template");

  const auto gestures = get_field<json>(j, "gestures", "gestures");
  if (!gestures.is_array()) throw ValidationError("gestures", "must be an array");
  for (std::size_t i = 0; i < gestures.size(); ++i) {
    const auto path = fmt::format("gestures[{}]", i);
    const auto& g = gestures[i];
    GestureDef def;
    def.id = get_field<int>(g, "id", path + ".id");
    def.name = get_field<std::string>(g, "name", path + ".name");
    try {
      def.group = gesture_group_from_string(get_field<std::string>(g, "group", path + ".group"));
    } catch (const ValidationError& e) {
      throw ValidationError(path + ".group", e.what());
    }
    m.gestures.push_back(std::move(def));
  }

  const auto electrodes = get_field<json>(j, "electrodes", "electrodes");
  if (!electrodes.is_array()) throw ValidationError("electrodes", "must be an array");
  for (std::size_t i = 0; i < electrodes.size(); ++i) {
    const auto path = fmt::format("electrodes[{}]", i);
    const auto& e = electrodes[i];
    ElectrodeSite site;
    site.id = get_field<int>(e, "id", path + ".id");
    site.x_mm = get_field<double>(e, "x_mm", path + ".x_mm");
    site.y_mm = get_field<double>(e, "y_mm", path + ".y_mm");
    if (e.contains("ring_index") && !e["ring_index"].is_null())
      site.ring_index = get_field<int>(e, "ring_index", path + ".ring_index");
    if (e.contains("muscle_label") && !e["muscle_label"].is_null())
      site.muscle_label = get_field<std::string>(e, "muscle_label", path + ".muscle_label");
    m.electrodes.push_back(std::move(site));
  }

  m.validate();
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open manifest '{}'", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(fmt::format("manifest '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  auto m = manifest_from_json(j);
  m.root = path.parent_path();
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << manifest_to_json(m).dump(2) << '\n';
}

fs::path trial_path(const DatasetManifest& m, std::string_view user, int session, int gesture_id,
                    int trial_index) {
  std::string out;
  const std::string& t = m.trial_path_template;
  for (std::size_t i = 0; i < t.size();) {
    if (t[i] == '{') {
      const auto close = t.find('}', i);
      if (close == std::string::npos)
        throw ValidationError("trial_path_template", "unterminated placeholder");
      const std::string_view key(t.data() + i + 1, close - i - 1);
      if (key == "user") out += user;
      else if (key == "session") out += std::to_string(session);
      else if (key == "gesture") out += std::to_string(gesture_id);
      else if (key == "trial") out += std::to_string(trial_index);
      else
        throw ValidationError("trial_path_template",
                              fmt::format("unknown placeholder '{{{}}}'", key));
      i = close + 1;
    } else {
      out += t[i++];
    }
  }
  return m.root / fs::path(out);
}

Matrix read_trial_csv(const fs::path& path, int expected_columns) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("missing trial file '{}'", path.string()));
  std::vector<double> values;
  std::size_t rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    int cols = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      const char* b = p;
      const char* e = comma;
      while (b < e && (*b == ' ' || *b == '\t')) ++b;
      while (e > b && (e[-1] == ' ' || e[-1] == '\t')) --e;
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || ptr != e)
        throw Error(fmt::format("{}:{}: cannot parse '{}' as a number", path.string(), line_no,
                                std::string_view(b, static_cast<std::size_t>(e - b))));
      if (!std::isfinite(v))
        throw Error(fmt::format("{}:{}: non-finite sample", path.string(), line_no));
      values.push_back(v);
      ++cols;
      p = comma + 1;
    }
    if (cols != expected_columns)
      throw Error(fmt::format("{}:{}: column-count mismatch: expected {} columns, found {}",
                              path.string(), line_no, expected_columns, cols));
    ++rows;
  }
  return Matrix(rows, static_cast<std::size_t>(expected_columns), std::move(values));
}

void write_trial_csv(const Matrix& samples, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  fmt::memory_buffer buf;
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    for (std::size_t c = 0; c < samples.cols(); ++c) {
      if (c) buf.push_back(',');
      fmt::format_to(std::back_inserter(buf), "{}", samples(r, c));
    }
    buf.push_back('\n');
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<int> all_sessions(const DatasetManifest& m) {
  std::vector<int> s(static_cast<std::size_t>(m.sessions_per_user));
  for (int i = 0; i < m.sessions_per_user; ++i) s[static_cast<std::size_t>(i)] = i;
  return s;
}

std::vector<TrialRecord> load_trials(const DatasetManifest& m, std::string_view user,
                                     const std::vector<int>& sessions) {
  if (!m.has_user(user))
    throw ValidationError("user", fmt::format("unknown user '{}'", user));
  std::vector<int> sorted_sessions = sessions;
  std::sort(sorted_sessions.begin(), sorted_sessions.end());
  sorted_sessions.erase(std::unique(sorted_sessions.begin(), sorted_sessions.end()),
                        sorted_sessions.end());
  std::vector<GestureDef> gestures = m.gestures;
  std::sort(gestures.begin(), gestures.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  std::vector<TrialRecord> out;
  for (int session : sorted_sessions) {
    if (session < 0 || session >= m.sessions_per_user)
      throw ValidationError("sessions", fmt::format("session {} out of range", session));
    for (const auto& g : gestures) {
      for (int trial = 0;; ++trial) {
        const auto path = trial_path(m, user, session, g.id, trial);
        if (!fs::exists(path)) {
          if (trial == 0)
            throw IoError(fmt::format("missing trial file '{}'", path.string()));
          break;
        }
        TrialRecord rec;
        rec.user = std::string(user);
        rec.session = session;
        rec.gesture_id = g.id;
        rec.trial_index = trial;
        rec.samples = read_trial_csv(path, m.channel_count);
        if (rec.samples.rows() < 3)
          throw Error(fmt::format("'{}': a trial needs at least 3 samples, found {}",
                                  path.string(), rec.samples.rows()));
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

}  // namespace sparseemg
