#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "sparseemg/error.hpp"
#include "sparseemg/features.hpp"
#include "sparseemg/service.hpp"

namespace sparseemg {

namespace {

using nlohmann::json;

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(key, "is required");
  return *it;
}

std::string string_field(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string() || v.get_ref<const std::string&>().empty())
    throw ValidationError(key, "must be a non-empty string");
  return v.get<std::string>();
}

std::vector<int> id_list(const json& j, const char* key, bool required) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (required) throw ValidationError(key, "is required");
    return {};
  }
  if (!it->is_array()) throw ValidationError(key, "must be an array of integers");
  std::vector<int> ids;
  std::set<int> seen;
  for (std::size_t i = 0; i < it->size(); ++i) {
    const auto& v = (*it)[i];
    const auto path = fmt::format("{}[{}]", key, i);
    if (!v.is_number_integer()) throw ValidationError(path, "must be an integer");
    const int id = v.get<int>();
    if (!seen.insert(id).second) throw ValidationError(path, fmt::format("duplicate id {}", id));
    ids.push_back(id);
  }
  return ids;
}

json envelope(std::string_view type) { return {{"v", kProtocolVersion}, {"type", type}}; }

}  // namespace

SweepRequest SweepRequest::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("request", "must be a JSON object");
  SweepRequest r;
  r.dataset = string_field(j, "dataset");
  r.user = string_field(j, "user");
  r.gestures = id_list(j, "gestures", true);
  if (r.gestures.empty()) throw ValidationError("gestures", "must not be empty");
  r.candidate_electrodes = id_list(j, "candidate_electrodes", false);

  if (auto it = j.find("max_electrodes"); it != j.end()) {
    if (!it->is_number_integer()) throw ValidationError("max_electrodes", "must be an integer");
    r.max_electrodes = it->get<int>();
  }
  if (r.max_electrodes < kMinElectrodes)
    throw ValidationError("max_electrodes", fmt::format("must be at least {}", kMinElectrodes));

  const auto& scheme = require(j, "scheme");
  if (!scheme.is_string()) throw ValidationError("scheme", "must be a string");
  r.scheme = selection_scheme_from_string(scheme.get<std::string>());
  const auto& classifier = require(j, "classifier");
  if (!classifier.is_string()) throw ValidationError("classifier", "must be a string");
  r.classifier = classifier_kind_from_string(classifier.get<std::string>());

  if (auto it = j.find("seed"); it != j.end()) {
    if (!it->is_number_integer() || (!it->is_number_unsigned() && it->get<std::int64_t>() < 0))
      throw ValidationError("seed", "must be a nonnegative integer");
    r.seed = it->get<std::uint64_t>();
  }
  if (auto it = j.find("weights"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ValidationError("weights", "must be an object {w1, w2}");
    for (const char* key : {"w1", "w2"}) {
      auto w = it->find(key);
      if (w == it->end() || !w->is_number())
        throw ValidationError(fmt::format("weights.{}", key), "must be a number");
    }
    r.weights = {(*it)["w1"].get<double>(), (*it)["w2"].get<double>()};
    r.weights.validate();
  }
  return r;
}

json SweepRequest::to_json() const {
  return {{"dataset", dataset},
          {"user", user},
          {"gestures", gestures},
          {"candidate_electrodes", candidate_electrodes},
          {"max_electrodes", max_electrodes},
          {"scheme", to_string(scheme)},
          {"classifier", to_string(classifier)},
          {"seed", seed},
          {"weights", {{"w1", weights.w1}, {"w2", weights.w2}}}};
}

void SweepRequest::validate_against(const DatasetManifest& m) const {
  if (!m.has_user(user)) throw ValidationError("user", fmt::format("unknown user '{}'", user));
  for (std::size_t i = 0; i < gestures.size(); ++i)
    if (!m.find_gesture(gestures[i]))
      throw ValidationError(fmt::format("gestures[{}]", i),
                            fmt::format("gesture {} is not in dataset '{}'", gestures[i], m.name));
  for (std::size_t i = 0; i < candidate_electrodes.size(); ++i) {
    const int id = candidate_electrodes[i];
    if (std::none_of(m.electrodes.begin(), m.electrodes.end(),
                     [&](const ElectrodeSite& e) { return e.id == id; }))
      throw ValidationError(fmt::format("candidate_electrodes[{}]", i),
                            fmt::format("electrode {} is not in dataset '{}'", id, m.name));
  }
  if (resolved_candidates(m).size() < static_cast<std::size_t>(kMinElectrodes))
    throw ValidationError("candidate_electrodes",
                          fmt::format("need at least {} electrodes", kMinElectrodes));
}

std::vector<int> SweepRequest::resolved_candidates(const DatasetManifest& m) const {
  if (!candidate_electrodes.empty()) return candidate_electrodes;
  std::vector<int> ids;
  for (const auto& e : m.electrodes) ids.push_back(e.id);
  return ids;
}

json progress_message(const SweepPoint& p) {
  auto j = envelope("progress");
  j["electrode_count"] = p.electrode_count;
  j["accuracy"] = p.accuracy;
  j["sparsity_score"] = p.sparsity_score;
  return j;
}

json result_message(const SweepResult& r, const std::string& model_id) {
  auto j = envelope("result");
  j["result"] = sweep_to_json(r);
  j["model_id"] = model_id;
  return j;
}

json error_message(std::string_view code, std::string_view field, std::string_view message) {
  auto j = envelope("error");
  j["code"] = code;
  j["field"] = field.empty() ? json(nullptr) : json(field);
  j["message"] = message;
  return j;
}

json cancelled_message() { return envelope("cancelled"); }

TrainedModel final_model(const SweepRequest& req, std::span<const TrialRecord> trials,
                         const SweepResult& result) {
  const auto kept = filter_gestures(trials, req.gestures);
  const auto features = build_feature_matrix(kept, result.chosen.electrodes);
  return train(ClassifierSpec::with_defaults(req.classifier, req.seed), features);
}

void handle_sweep(const json& request, const DatasetRegistry& registry, ArtifactStore& store,
                  const std::function<void(const json&)>& emit, const std::atomic<bool>* cancel,
                  unsigned sweep_workers) {
  try {
    const auto req = SweepRequest::from_json(request);
    const DatasetManifest* m = registry.find(req.dataset);
    if (!m) {
      emit(error_message("not_found", "dataset", fmt::format("unknown dataset '{}'", req.dataset)));
      return;
    }
    req.validate_against(*m);
    const auto trials = load_trials(*m, req.user, all_sessions(*m));
    const auto candidates = req.resolved_candidates(*m);

    SweepOptions options;
    options.workers = sweep_workers;
    options.cancel = cancel;
    options.on_progress = [&](const SweepPoint& p) { emit(progress_message(p)); };
    const auto result = run_sweep(trials, candidates, req.gestures, req.scheme,
                                  ClassifierSpec::with_defaults(req.classifier, req.seed),
                                  req.weights, req.max_electrodes, req.seed, options);
    if (cancel && cancel->load()) throw Cancelled();

    const auto model = final_model(req, trials, result);
    const auto id = store.put(model_to_json(model).dump());
    emit(result_message(result, id));
  } catch (const Cancelled&) {
    emit(cancelled_message());
  } catch (const ValidationError& e) {
    emit(error_message("validation", e.field(), e.what()));
  } catch (const NotFoundError& e) {
    emit(error_message("not_found", "", e.what()));
  } catch (const IoError& e) {
    emit(error_message("io", "", e.what()));
  } catch (const std::exception& e) {
    emit(error_message("internal", "", e.what()));
  }
}

}  // namespace sparseemg
