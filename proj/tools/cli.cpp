#include "cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "sparseemg/error.hpp"
#include "sparseemg/features.hpp"
#include "sparseemg/service.hpp"
#include "sparseemg/stencil.hpp"
#include "sparseemg/sweep.hpp"

namespace sparseemg::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  fs::path out_root = "out";
  std::string name;
  std::uint64_t seed = 0;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
};

struct DataArgs {
  std::string dataset;
  std::string user;
  std::vector<int> gestures;
  std::vector<int> candidates;
};

struct Run {
  fs::path dir;
  json config;
  std::vector<std::string> outputs;

  void write(const std::string& file, const std::string& content) {
    std::ofstream f(dir / file, std::ios::binary);
    f << content;
    if (!f) throw IoError(fmt::format("cannot write {}", (dir / file).string()));
    outputs.push_back(file);
  }
  void write_json(const std::string& file, const json& j) { write(file, j.dump(2) + "\n"); }

  // run.json goes last so it can list everything else.
  void finish(const std::string& subcommand) {
    json run = {{"subcommand", subcommand}, {"config", config}, {"outputs", outputs}};
    std::ofstream f(dir / "run.json");
    f << run.dump(2) << "\n";
  }
};

std::string default_run_name() {
  return fmt::format("{:%Y%m%dT%H%M%SZ}", fmt::gmtime(std::time(nullptr)));
}

Run open_run(const Common& c, const std::string& subcommand) {
  Run r;
  r.dir = c.out_root / subcommand / (c.name.empty() ? default_run_name() : c.name);
  fs::create_directories(r.dir);
  r.config = {{"seed", c.seed}, {"workers", c.workers}};
  return r;
}

DatasetManifest open_dataset(const std::string& path) {
  if (path.empty()) throw ValidationError("--dataset", "is required");
  fs::path p = path;
  if (fs::is_directory(p)) p /= "manifest.json";
  if (!fs::exists(p)) throw IoError(fmt::format("no manifest at {}", p.string()));
  return load_manifest(p);
}

std::string resolve_user(const DatasetManifest& m, const std::string& user) {
  if (user.empty()) return m.users.front();
  if (!m.has_user(user)) throw ValidationError("--user", fmt::format("unknown user '{}'", user));
  return user;
}

std::vector<int> resolve_candidates(const DatasetManifest& m, const std::vector<int>& candidates) {
  if (!candidates.empty()) return candidates;
  std::vector<int> ids;
  for (const auto& e : m.electrodes) ids.push_back(e.id);
  return ids;
}

void add_data_options(CLI::App* cmd, DataArgs& d, bool with_user = true) {
  cmd->add_option("--dataset", d.dataset, "Dataset directory or manifest.json")->required();
  if (with_user) cmd->add_option("--user", d.user, "User id (default: first in manifest)");
  cmd->add_option("--gestures", d.gestures, "Gesture ids (default: all)")->delimiter(',');
  cmd->add_option("--candidates", d.candidates, "Candidate electrode ids (default: all)")->delimiter(',');
}

void add_method_options(CLI::App* cmd, std::string& scheme, std::string& classifier) {
  cmd->add_option("--scheme", scheme, "Selection scheme")->check(CLI::IsMember({"MI", "PI", "RMSI"}));
  cmd->add_option("--classifier", classifier, "Classifier (also drives PI)")
      ->check(CLI::IsMember({"RF", "KNN", "LR", "NB"}));
}

ClassifierSpec spec_for(const std::string& classifier, std::uint64_t seed) {
  return ClassifierSpec::with_defaults(classifier_kind_from_string(classifier), seed);
}

json data_config(const DataArgs& d, const DatasetManifest& m, const std::string& user) {
  return {{"dataset", d.dataset},
          {"dataset_name", m.name},
          {"user", user},
          {"gestures", d.gestures},
          {"candidates", resolve_candidates(m, d.candidates)}};
}

std::vector<int> quarter_points(int channels) {
  std::vector<int> ids;
  for (int i = 0; i < 4 && i < channels; ++i) ids.push_back(static_cast<int>((i + 0.5) * channels / 4));
  return ids;
}

SyntheticSpec bench_default_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.channel_count = 16;
  s.gesture_count = 4;
  s.trials_per_gesture = 8;
  s.informative_channels = quarter_points(s.channel_count);
  s.noise_sigma = 0.05;
  s.seed = seed;
  return s;
}

ArmMeasurements read_measurements(const std::string& file, double length,
                                  const std::vector<std::string>& samples) {
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw IoError(fmt::format("cannot read {}", file));
    return measurements_from_json(json::parse(in));
  }
  ArmMeasurements arm;
  arm.forearm_length_mm = length;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto colon = samples[i].find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(samples[i]);
      arm.circumference_samples.emplace_back(std::stod(samples[i].substr(0, colon)),
                                             std::stod(samples[i].substr(colon + 1)));
    } catch (const std::invalid_argument&) {
      throw ValidationError(fmt::format("--circumference[{}]", i), "expected distance_mm:circumference_mm");
    }
  }
  arm.validate();
  return arm;
}

std::vector<int> layout_from_result(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw IoError(fmt::format("cannot read {}", file));
  auto j = json::parse(in);
  if (j.contains("result")) j = j["result"];
  if (!j.contains("chosen") || !j["chosen"].contains("electrodes"))
    throw ValidationError("--from", "file has no chosen.electrodes");
  return j["chosen"]["electrodes"].get<std::vector<int>>();
}

void print_error(std::ostream& err, std::string_view code, std::string_view field, std::string_view message) {
  json e = {{"type", "error"}, {"code", code}, {"message", message}};
  if (!field.empty()) e["field"] = field;
  err << e.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse EMG electrode layout design"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--out", common.out_root, "Output root; runs land in <out>/<subcommand>/<name>/");
  app.add_option("--name", common.name, "Run name (default: UTC timestamp)");
  app.add_option("--seed", common.seed, "Seed for every randomized step");
  app.add_option("--workers", common.workers, "Worker threads")->check(CLI::PositiveNumber);

  std::function<void()> action;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  SyntheticSpec synth_spec;
  bool informative_given = false;
  synth->add_option("--channels", synth_spec.channel_count)->check(CLI::PositiveNumber);
  synth->add_option("--gestures", synth_spec.gesture_count)->check(CLI::PositiveNumber);
  synth->add_option("--users", synth_spec.users)->check(CLI::PositiveNumber);
  synth->add_option("--trials", synth_spec.trials_per_gesture)->check(CLI::PositiveNumber);
  synth->add_option("--samples", synth_spec.samples_per_trial)->check(CLI::PositiveNumber);
  synth->add_option("--informative", synth_spec.informative_channels,
                    "Informative channel ids (default: quarter points of the ring)")
      ->delimiter(',')
      ->each([&](const std::string&) { informative_given = true; });
  synth->add_option("--sigma", synth_spec.noise_sigma)->check(CLI::NonNegativeNumber);
  synth->callback([&] {
    action = [&] {
      synth_spec.seed = common.seed;
      if (!informative_given) synth_spec.informative_channels = quarter_points(synth_spec.channel_count);
      synth_spec.validate();
      auto r = open_run(common, "synth");
      const auto ds = generate_synthetic(synth_spec);
      write_dataset(ds, r.dir);
      r.outputs.push_back("manifest.json");
      r.config["channels"] = synth_spec.channel_count;
      r.config["gestures"] = synth_spec.gesture_count;
      r.config["users"] = synth_spec.users;
      r.config["trials_per_gesture"] = synth_spec.trials_per_gesture;
      r.config["samples_per_trial"] = synth_spec.samples_per_trial;
      r.config["informative_channels"] = synth_spec.informative_channels;
      r.config["noise_sigma"] = synth_spec.noise_sigma;
      r.finish("synth");
      fmt::print(out, "synth: {} channels, {} gestures, {} trials -> {}\n", synth_spec.channel_count,
                 synth_spec.gesture_count, ds.trials.size(), r.dir.string());
    };
  });

  // rank
  auto* rank = app.add_subcommand("rank", "Rank electrodes with one selection scheme");
  DataArgs rank_data;
  std::string rank_scheme = "PI";
  std::string rank_classifier = "RF";
  add_data_options(rank, rank_data);
  add_method_options(rank, rank_scheme, rank_classifier);
  rank->callback([&] {
    action = [&] {
      const auto m = open_dataset(rank_data.dataset);
      const auto user = resolve_user(m, rank_data.user);
      const auto trials = filter_gestures(load_trials(m, user, all_sessions(m)), rank_data.gestures);
      const auto features = build_feature_matrix(trials, resolve_candidates(m, rank_data.candidates));
      RankOptions options;
      options.workers = common.workers;
      const auto ranking = rank_electrodes(selection_scheme_from_string(rank_scheme), features,
                                           spec_for(rank_classifier, common.seed),
                                           sweep_ranking_seed(common.seed), options);
      auto r = open_run(common, "rank");
      r.config.update(data_config(rank_data, m, user));
      r.config["scheme"] = rank_scheme;
      r.config["classifier"] = rank_classifier;
      r.write("ranking.csv", ranking_csv(ranking));
      r.write_json("ranking.json", ranking_to_json(ranking));
      r.finish("rank");
      fmt::print(out, "rank: {} electrodes by {}, top {} -> {}\n", ranking.ordered.size(), rank_scheme,
                 fmt::join(ranking.top(4), ","), r.dir.string());
    };
  });

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Rank then sweep layout sizes under cross-validation");
  DataArgs sweep_data;
  std::string sweep_scheme = "PI";
  std::string sweep_classifier = "RF";
  int sweep_max = kDefaultMaxElectrodes;
  double sweep_w1 = 0.5;
  add_data_options(sweep, sweep_data);
  add_method_options(sweep, sweep_scheme, sweep_classifier);
  sweep->add_option("--max", sweep_max, "Largest layout size")->check(CLI::Range(kMinElectrodes, 1 << 20));
  sweep->add_option("--w1", sweep_w1, "Accuracy weight; electrode weight is 1 - w1")
      ->check(CLI::Range(0.0, 1.0));
  sweep->callback([&] {
    action = [&] {
      const auto m = open_dataset(sweep_data.dataset);
      const auto user = resolve_user(m, sweep_data.user);
      const auto trials = load_trials(m, user, all_sessions(m));
      const auto candidates = resolve_candidates(m, sweep_data.candidates);
      const SparsityConfig weights{sweep_w1, 1.0 - sweep_w1};
      const auto spec = spec_for(sweep_classifier, common.seed);
      SweepOptions options;
      options.workers = common.workers;
      const auto scheme = selection_scheme_from_string(sweep_scheme);
      const auto result = run_sweep(trials, candidates, sweep_data.gestures, scheme, spec, weights,
                                    sweep_max, common.seed, options);
      const auto kept = filter_gestures(trials, sweep_data.gestures);
      const auto model = train(spec, build_feature_matrix(kept, result.chosen.electrodes));

      auto r = open_run(common, "sweep");
      r.config.update(data_config(sweep_data, m, user));
      r.config["scheme"] = sweep_scheme;
      r.config["classifier"] = sweep_classifier;
      r.config["max_electrodes"] = sweep_max;
      r.config["weights"] = {{"w1", weights.w1}, {"w2", weights.w2}};
      r.write("curve.csv", sweep_csv(result));
      r.write_json("result.json", sweep_to_json(result));
      r.write_json("model.json", model_to_json(model));
      r.write("layout.svg", render_electrode_map(m, result.chosen.electrodes));
      r.finish("sweep");
      fmt::print(out, "sweep: chose {} electrodes [{}] at {:.2f}% (score {:.3f}) -> {}\n",
                 result.chosen.electrode_count, fmt::join(result.chosen.electrodes, ","),
                 result.chosen.accuracy, result.chosen.sparsity_score, r.dir.string());
    };
  });

  // crossuser
  auto* crossuser = app.add_subcommand("crossuser", "Transfer one user's layout to the others");
  DataArgs cross_data;
  std::string cross_scheme = "PI";
  std::string cross_classifier = "RF";
  int cross_max = kDefaultMaxElectrodes;
  add_data_options(crossuser, cross_data, false);
  crossuser->add_option("--source", cross_data.user, "Source user (default: first in manifest)");
  add_method_options(crossuser, cross_scheme, cross_classifier);
  crossuser->add_option("--max", cross_max)->check(CLI::Range(kMinElectrodes, 1 << 20));
  crossuser->callback([&] {
    action = [&] {
      const auto m = open_dataset(cross_data.dataset);
      const auto source = resolve_user(m, cross_data.user);
      CrossUserOptions options;
      options.gestures = cross_data.gestures;
      options.candidates = cross_data.candidates;
      options.max_electrodes = cross_max;
      options.sweep.workers = common.workers;
      const auto result = cross_user_eval(m, source, selection_scheme_from_string(cross_scheme),
                                          spec_for(cross_classifier, common.seed), {},
                                          common.seed, options);
      auto r = open_run(common, "crossuser");
      r.config.update(data_config(cross_data, m, source));
      r.config["scheme"] = cross_scheme;
      r.config["classifier"] = cross_classifier;
      r.config["max_electrodes"] = cross_max;
      r.write("crossuser.csv", cross_user_csv(result));
      r.write_json("source_sweep.json", sweep_to_json(result.source_sweep));
      r.finish("crossuser");
      fmt::print(out, "crossuser: layout [{}] from {}; mean target accuracy {:.2f}% -> {}\n",
                 fmt::join(result.layout, ","), source, result.mean_target_accuracy, r.dir.string());
    };
  });

  // bandcompare
  auto* band = app.add_subcommand("bandcompare", "Equally spaced ring electrodes vs a sparse layout");
  DataArgs band_data;
  int band_k = 4;
  std::string band_scheme = "PI";
  std::string band_classifier = "RF";
  add_data_options(band, band_data);
  band->add_option("-k,--count", band_k, "Electrodes in each arm")->check(CLI::PositiveNumber);
  add_method_options(band, band_scheme, band_classifier);
  band->callback([&] {
    action = [&] {
      const auto m = open_dataset(band_data.dataset);
      const auto user = resolve_user(m, band_data.user);
      const auto trials = filter_gestures(load_trials(m, user, all_sessions(m)), band_data.gestures);
      SweepOptions options;
      options.workers = common.workers;
      const auto cmp =
          compare_band_vs_sparse(trials, m.ring(), band_k, selection_scheme_from_string(band_scheme),
                                 spec_for(band_classifier, common.seed), common.seed, options);
      auto r = open_run(common, "bandcompare");
      r.config.update(data_config(band_data, m, user));
      r.config["k"] = band_k;
      r.config["scheme"] = band_scheme;
      r.config["classifier"] = band_classifier;
      r.write("bandcompare.csv", fmt::format("arm,electrodes,accuracy\nband,{},{}\nsparse,{},{}\n",
                                             fmt::join(cmp.band_electrodes, " "), cmp.band_accuracy,
                                             fmt::join(cmp.sparse_electrodes, " "), cmp.sparse_accuracy));
      r.write_json("bandcompare.json",
                   {{"band", {{"electrodes", cmp.band_electrodes}, {"accuracy", cmp.band_accuracy}}},
                    {"sparse", {{"electrodes", cmp.sparse_electrodes}, {"accuracy", cmp.sparse_accuracy}}}});
      r.finish("bandcompare");
      fmt::print(out, "bandcompare: k={} band {:.2f}% vs sparse {:.2f}% -> {}\n", band_k, cmp.band_accuracy,
                 cmp.sparse_accuracy, r.dir.string());
    };
  });

  // stencil
  auto* stencil = app.add_subcommand("stencil", "Render a placement stencil for a layout");
  std::string stencil_dataset, stencil_from, stencil_measurements;
  std::vector<int> stencil_layout;
  double stencil_length = 0.0;
  std::vector<std::string> stencil_samples;
  stencil->add_option("--dataset", stencil_dataset, "Dataset directory or manifest.json")->required();
  auto* layout_opt = stencil->add_option("--layout", stencil_layout, "Electrode ids")->delimiter(',');
  auto* from_opt = stencil->add_option("--from", stencil_from, "sweep result.json; uses its chosen electrodes");
  layout_opt->excludes(from_opt);
  auto* file_opt = stencil->add_option("--measurements", stencil_measurements, "Arm measurements JSON");
  auto* length_opt = stencil->add_option("--length", stencil_length, "Forearm length in mm");
  auto* circ_opt = stencil->add_option("--circumference", stencil_samples, "distance:circumference pairs in mm")
                       ->delimiter(',');
  file_opt->excludes(length_opt)->excludes(circ_opt);
  length_opt->needs(circ_opt);
  stencil->callback([&] {
    action = [&] {
      const auto m = open_dataset(stencil_dataset);
      const auto layout = stencil_from.empty() ? stencil_layout : layout_from_result(stencil_from);
      if (stencil_measurements.empty() && stencil_samples.empty())
        throw ValidationError("--measurements", "give a measurements file or --length with --circumference");
      const auto arm = read_measurements(stencil_measurements, stencil_length, stencil_samples);
      const auto svg = generate_stencil(layout, m, arm);
      auto r = open_run(common, "stencil");
      r.config["dataset"] = stencil_dataset;
      r.config["layout"] = layout;
      r.config["measurements"] = measurements_to_json(arm);
      r.write("stencil.svg", svg);
      r.finish("stencil");
      fmt::print(out, "stencil: {} holes -> {}\n", layout.size(), (r.dir / "stencil.svg").string());
    };
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP/WebSocket service");
  ServiceConfig serve_config;
  serve->add_option("--address", serve_config.address, "Bind address");
  serve->add_option("--port", serve_config.port, "Port (env SPARSEEMG_PORT)");
  serve->add_option("--data-dir", serve_config.data_dir, "Dataset root (env SPARSEEMG_DATA_DIR)");
  serve->add_option("--model-dir", serve_config.model_dir, "Model directory (default <data-dir>/.models)");
  serve->add_option("--pool", serve_config.workers, "Job pool size (env SPARSEEMG_WORKERS)")
      ->check(CLI::PositiveNumber);
  serve->add_option("--ttl-hours", serve_config.model_ttl_hours, "Model TTL (env SPARSEEMG_MODEL_TTL_HOURS)")
      ->check(CLI::NonNegativeNumber);
  serve->preparse_callback([&](std::size_t) { serve_config = ServiceConfig::from_env(); });
  serve->callback([&] {
    action = [&] {
      Server server(serve_config);
      for (const auto& s : server.registry().skipped()) fmt::print(err, "skipped dataset {}\n", s);
      server.start();
      fmt::print(out, "serve: {} datasets on http://{}:{} (ws /ws)\n", server.registry().names().size(),
                 serve_config.address, server.port());
      out.flush();
      server.wait();
    };
  });

  // bench
  auto* bench = app.add_subcommand("bench", "Every scheme x classifier pair over one dataset");
  DataArgs bench_data;
  int bench_max = kDefaultMaxElectrodes;
  add_data_options(bench, bench_data);
  bench->get_option("--dataset")->required(false)->description("Dataset (default: built-in synthetic)");
  bench->add_option("--max", bench_max)->check(CLI::Range(kMinElectrodes, 1 << 20));
  bench->callback([&] {
    action = [&] {
      std::vector<TrialRecord> trials;
      std::vector<int> candidates;
      json data;
      if (bench_data.dataset.empty()) {
        const auto spec = bench_default_spec(common.seed);
        const auto ds = generate_synthetic(spec);
        trials = ds.trials_for(ds.manifest.users.front());
        candidates = resolve_candidates(ds.manifest, bench_data.candidates);
        data = {{"dataset", "synthetic-default"}, {"informative_channels", spec.informative_channels},
                {"noise_sigma", spec.noise_sigma}, {"candidates", candidates}};
      } else {
        const auto m = open_dataset(bench_data.dataset);
        const auto user = resolve_user(m, bench_data.user);
        trials = load_trials(m, user, all_sessions(m));
        candidates = resolve_candidates(m, bench_data.candidates);
        data = data_config(bench_data, m, user);
      }
      SweepOptions options;
      options.workers = common.workers;
      std::string rows = "scheme,classifier,chosen_E,chosen_accuracy,chosen_sparsity_score,best_accuracy\n";
      std::string curves = "scheme,classifier,E,accuracy,sparsity_score\n";
      json results = json::array();
      const SelectionScheme scheme_order[] = {SelectionScheme::MI, SelectionScheme::PI,
                                              SelectionScheme::RMSI};
      const ClassifierKind classifier_order[] = {ClassifierKind::RF, ClassifierKind::KNN, ClassifierKind::LR,
                                                 ClassifierKind::NB};
      double best = -1.0;
      std::string best_pair;
      for (auto scheme : scheme_order)
        for (auto kind : classifier_order) {
          const auto res = run_sweep(trials, candidates, bench_data.gestures, scheme,
                                     ClassifierSpec::with_defaults(kind, common.seed), {}, bench_max, common.seed,
                                     options);
          const double most = res.point(res.best_by_accuracy).accuracy;
          rows += fmt::format("{},{},{},{},{},{}\n", to_string(scheme), to_string(kind), res.chosen.electrode_count,
                              res.chosen.accuracy, res.chosen.sparsity_score, most);
          for (const auto& p : res.points)
            curves += fmt::format("{},{},{},{},{}\n", to_string(scheme), to_string(kind), p.electrode_count,
                                  p.accuracy, p.sparsity_score);
          results.push_back(
              {{"scheme", to_string(scheme)}, {"classifier", to_string(kind)}, {"result", sweep_to_json(res)}});
          if (res.chosen.accuracy > best) {
            best = res.chosen.accuracy;
            best_pair = fmt::format("{}+{}", to_string(scheme), to_string(kind));
          }
        }
      auto r = open_run(common, "bench");
      r.config.update(data);
      r.config["max_electrodes"] = bench_max;
      r.write("bench.csv", rows);
      r.write("curves.csv", curves);
      r.write_json("bench.json", results);
      r.finish("bench");
      fmt::print(out, "bench: 12 combinations, best chosen accuracy {:.2f}% ({}) -> {}\n", best, best_pair,
                 r.dir.string());
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    if (action) action();
    return 0;
  } catch (const ValidationError& e) {
    print_error(err, "validation", e.field(), e.what());
    return 2;
  } catch (const NotFoundError& e) {
    print_error(err, "not_found", "", e.what());
    return 1;
  } catch (const IoError& e) {
    print_error(err, "io", "", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(err, "internal", "", e.what());
    return 1;
  }
}

}  // namespace sparseemg::cli
