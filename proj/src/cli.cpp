#include "metiskit/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>

#include "metiskit/mask_opt.hpp"
#include "metiskit/rng.hpp"
#include "metiskit/route_sim.hpp"

namespace metiskit::cli {

namespace {

using nlohmann::json;

[[noreturn]] void config_fail(const std::string& path, const std::string& message) {
  throw ConfigError(path + ": " + message);
}

void check_keys(const json& obj, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) config_fail(path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (allowed.count(key) == 0) config_fail(path + "." + key, "unknown key");
  }
}

template <typename T>
T get_or(const json& obj, const std::string& path, const std::string& key,
         T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_fail(path + "." + key, "wrong type");
  }
}

json resolve_video(const json& in, const std::string& path) {
  check_keys(in, path, {"chunk_duration_s", "bitrates_kbps", "n_chunks", "jitter"});
  json out;
  out["chunk_duration_s"] = get_or(in, path, "chunk_duration_s", 4.0);
  out["bitrates_kbps"] = in.contains("bitrates_kbps")
                             ? in.at("bitrates_kbps")
                             : json{300, 750, 1200, 1850, 2850, 4300};
  out["n_chunks"] = get_or(in, path, "n_chunks", 48);
  out["jitter"] = get_or(in, path, "jitter", 0.0);
  try {
    VideoSpec::from_json(out);
  } catch (const std::exception& e) {
    config_fail(path, e.what());
  }
  return out;
}

json resolve_teacher(const json& in, const std::string& path) {
  const std::string kind = get_or<std::string>(in, path, "kind", "mpc");
  json out;
  out["kind"] = kind;
  if (kind == "mpc") {
    check_keys(in, path, {"kind", "lookahead"});
    out["lookahead"] = get_or(in, path, "lookahead", 5);
    if (out["lookahead"].get<int>() < 1) config_fail(path + ".lookahead", "must be >= 1");
  } else if (kind == "oscillator") {
    check_keys(in, path,
               {"kind", "threshold", "band", "low_rung", "mid_rung", "high_rung"});
    out["threshold"] = get_or(in, path, "threshold", 10.0);
    out["band"] = get_or(in, path, "band", 0.12);
    out["low_rung"] = get_or(in, path, "low_rung", 3);
    out["mid_rung"] = get_or(in, path, "mid_rung", 4);
    out["high_rung"] = get_or(in, path, "high_rung", 5);
  } else {
    config_fail(path + ".kind", "expected `mpc` or `oscillator`");
  }
  return out;
}

json resolve_distill(const json& in, const std::string& path,
                     const Overrides& overrides) {
  check_keys(in, path,
             {"video", "teacher", "train_traces", "eval_traces",
              "dagger_iterations", "episodes_per_iteration", "leaves",
              "resample_size", "gamma", "horizon", "n_rollouts",
              "oversample_min_freq", "agreement_stop"});
  json out;
  out["video"] = resolve_video(in.value("video", json::object()), path + ".video");
  out["teacher"] =
      resolve_teacher(in.value("teacher", json::object()), path + ".teacher");
  out["train_traces"] = in.contains("train_traces")
                            ? in.at("train_traces")
                            : json{"suite:12"};
  out["eval_traces"] =
      in.contains("eval_traces") ? in.at("eval_traces") : json{"suite:30:7"};
  for (const char* key : {"train_traces", "eval_traces"}) {
    if (!out[key].is_array() || out[key].empty()) {
      config_fail(path + "." + key, "expected a non-empty array of trace specs");
    }
    for (const auto& t : out[key]) {
      if (!t.is_string()) config_fail(path + "." + key, "trace specs are strings");
    }
  }
  out["dagger_iterations"] = get_or(in, path, "dagger_iterations", 2);
  out["episodes_per_iteration"] = get_or(in, path, "episodes_per_iteration", 12);
  out["leaves"] = overrides.leaves ? *overrides.leaves
                                   : get_or(in, path, "leaves", 200);
  out["resample_size"] = get_or(in, path, "resample_size", 0);
  out["gamma"] = get_or(in, path, "gamma", 0.99);
  out["horizon"] = get_or(in, path, "horizon", 20);
  out["n_rollouts"] = get_or(in, path, "n_rollouts", 1);
  out["oversample_min_freq"] = get_or(in, path, "oversample_min_freq", 0.0);
  out["agreement_stop"] = get_or(in, path, "agreement_stop", 0.98);

  if (out["dagger_iterations"].get<int>() < 1) {
    config_fail(path + ".dagger_iterations", "must be >= 1");
  }
  if (out["episodes_per_iteration"].get<int>() < 1) {
    config_fail(path + ".episodes_per_iteration", "must be >= 1");
  }
  if (out["leaves"].get<int>() < 1) config_fail(path + ".leaves", "must be >= 1");
  const double gamma = out["gamma"].get<double>();
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    config_fail(path + ".gamma", "must be in (0, 1]");
  }
  if (out["horizon"].get<int>() < 1) config_fail(path + ".horizon", "must be >= 1");
  if (out["n_rollouts"].get<int>() < 1) {
    config_fail(path + ".n_rollouts", "must be >= 1");
  }
  return out;
}

json resolve_explain(const json& in, const std::string& path,
                     const Overrides& overrides) {
  check_keys(in, path,
             {"topology", "demands", "lambda1", "lambda2", "steps",
              "learning_rate", "topk", "theta_seed", "theta_matrices",
              "length_penalty"});
  json out;
  out["topology"] = get_or<std::string>(in, path, "topology", "nsfnet");
  if (in.contains("demands") && in.at("demands").is_array()) {
    for (const auto& d : in.at("demands")) {
      check_keys(d, path + ".demands[]", {"src", "dst", "mbps"});
      if (!d.contains("src") || !d.contains("dst") || !d.contains("mbps")) {
        config_fail(path + ".demands[]", "demand needs src, dst, mbps");
      }
    }
    out["demands"] = in.at("demands");
  } else {
    const json d = in.value("demands", json::object());
    check_keys(d, path + ".demands", {"count", "seed"});
    out["demands"] = json{{"count", get_or(d, path + ".demands", "count", 15)},
                          {"seed", get_or(d, path + ".demands", "seed", 3)}};
    if (out["demands"]["count"].get<int>() < 1) {
      config_fail(path + ".demands.count", "must be >= 1");
    }
  }
  out["lambda1"] = overrides.lambda1 ? *overrides.lambda1
                                     : get_or(in, path, "lambda1", 0.25);
  out["lambda2"] = overrides.lambda2 ? *overrides.lambda2
                                     : get_or(in, path, "lambda2", 1.0);
  out["steps"] = get_or(in, path, "steps", 2000);
  out["learning_rate"] = get_or(in, path, "learning_rate", 0.05);
  out["topk"] = overrides.topk ? *overrides.topk : get_or(in, path, "topk", 5);
  out["theta_seed"] = get_or(in, path, "theta_seed", 11);
  out["theta_matrices"] = get_or(in, path, "theta_matrices", 5);
  out["length_penalty"] = get_or(in, path, "length_penalty", 0.3);

  if (out["steps"].get<int>() < 1) config_fail(path + ".steps", "must be >= 1");
  if (!(out["learning_rate"].get<double>() > 0)) {
    config_fail(path + ".learning_rate", "must be > 0");
  }
  if (out["topk"].get<int>() < 0) config_fail(path + ".topk", "must be >= 0");
  if (out["lambda1"].get<double>() < 0 || out["lambda2"].get<double>() < 0) {
    config_fail(path, "lambda values must be >= 0");
  }
  return out;
}

json resolve_eval(const json& in, const std::string& path,
                  const Overrides& overrides) {
  check_keys(in, path,
             {"mode", "leaves", "distill", "lambda1_values", "lambda2_values",
              "n_seeds", "explain"});
  if (!in.contains("mode")) config_fail(path + ".mode", "required");
  const auto mode = in.at("mode").get<std::string>();
  json out;
  out["mode"] = mode;
  if (mode == "leaf-sweep") {
    if (!in.contains("leaves") || !in.at("leaves").is_array() ||
        in.at("leaves").empty()) {
      config_fail(path + ".leaves", "expected a non-empty array");
    }
    out["leaves"] = in.at("leaves");
    out["distill"] = resolve_distill(in.value("distill", json::object()),
                                     path + ".distill", overrides);
  } else if (mode == "lambda-sweep") {
    out["lambda1_values"] =
        in.contains("lambda1_values") ? in.at("lambda1_values") : json{0.05, 0.25, 1.0};
    out["lambda2_values"] =
        in.contains("lambda2_values") ? in.at("lambda2_values") : json{0.2, 1.0, 5.0};
    if (!out["lambda1_values"].is_array() || !out["lambda2_values"].is_array() ||
        (out["lambda1_values"].empty() && out["lambda2_values"].empty())) {
      config_fail(path, "lambda sweep lists must be arrays, not both empty");
    }
    out["n_seeds"] = get_or(in, path, "n_seeds", 5);
    if (out["n_seeds"].get<int>() < 1) config_fail(path + ".n_seeds", "must be >= 1");
    out["explain"] = resolve_explain(in.value("explain", json::object()),
                                     path + ".explain", overrides);
  } else if (mode == "distill-compare") {
    out["distill"] = resolve_distill(in.value("distill", json::object()),
                                     path + ".distill", overrides);
    if (out["distill"]["oversample_min_freq"].get<double>() <= 0.0) {
      out["distill"]["oversample_min_freq"] = 0.01;
    }
  } else {
    config_fail(path + ".mode",
                "expected leaf-sweep, lambda-sweep or distill-compare");
  }
  return out;
}

// ---- construction from resolved config ----------------------------------

VideoSpec video_from(const json& j) { return VideoSpec::from_json(j); }

std::unique_ptr<Policy> teacher_from(const json& j, const VideoSpec& video) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "mpc") {
    return std::make_unique<MpcTeacher>(video, j.at("lookahead").get<int>());
  }
  OscillatingTeacher::Params p;
  p.buffer_threshold_s = j.at("threshold").get<double>();
  p.band_halfwidth_s = j.at("band").get<double>();
  p.low_rung = j.at("low_rung").get<int>();
  p.mid_rung = j.at("mid_rung").get<int>();
  p.high_rung = j.at("high_rung").get<int>();
  const int n = static_cast<int>(video.bitrates_kbps.size());
  if (p.low_rung < 0 || p.low_rung >= n || p.mid_rung < 0 || p.mid_rung >= n ||
      p.high_rung < 0 || p.high_rung >= n) {
    throw ConfigError("teacher: rung outside the bitrate ladder");
  }
  return std::make_unique<OscillatingTeacher>(p);
}

DistillConfig distill_config_from(const json& j, std::uint64_t seed) {
  DistillConfig c;
  c.dagger_iterations = j.at("dagger_iterations").get<int>();
  c.episodes_per_iteration = j.at("episodes_per_iteration").get<int>();
  c.max_leaves = j.at("leaves").get<int>();
  c.interim_leaves = j.at("leaves").get<int>();
  c.resample_size = j.at("resample_size").get<std::size_t>();
  c.gamma = j.at("gamma").get<double>();
  c.horizon = j.at("horizon").get<int>();
  c.n_rollouts = j.at("n_rollouts").get<int>();
  c.oversample_min_freq = j.at("oversample_min_freq").get<double>();
  c.agreement_stop = j.at("agreement_stop").get<double>();
  c.seed = seed;
  c.feature_names = abr_feature_names();
  return c;
}

Topology topology_from(const json& explain, std::uint64_t seed) {
  Topology topo;
  const auto name = explain.at("topology").get<std::string>();
  if (name == "nsfnet") {
    topo = Topology::nsfnet();
  } else {
    std::ifstream in(name);
    if (!in) throw ConfigError("topology: cannot open `" + name + "`");
    json j;
    in >> j;
    topo = Topology::from_json(j);
  }
  const json& jd = explain.at("demands");
  if (jd.is_array()) {
    for (const auto& d : jd) {
      topo.demands.push_back(Demand{d.at("src").get<int>(), d.at("dst").get<int>(),
                                    d.at("mbps").get<double>()});
    }
  } else {
    topo.demands = random_demands(
        topo, jd.at("count").get<int>(),
        Rng::mix(seed, jd.at("seed").get<std::uint64_t>()));
  }
  topo.validate();
  return topo;
}

// ---- artifact helpers -----------------------------------------------------

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_file(path, j.dump(2) + "\n");
}

std::string config_comment(const json& config) {
  return "# config=" + config.dump() + "\n";
}

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw std::runtime_error("stage " + name + ": " + e.what());
  }
}

double mean(const std::vector<double>& xs) {
  double total = 0.0;
  for (double x : xs) total += x;
  return xs.empty() ? 0.0 : total / static_cast<double>(xs.size());
}

struct DistillSetup {
  VideoSpec video;
  std::unique_ptr<Policy> teacher;
  std::vector<BandwidthTrace> train_traces;
  std::vector<BandwidthTrace> eval_traces;
  DistillConfig config;

  EnvFactory train_factory() const {
    const VideoSpec* v = &video;
    const std::vector<BandwidthTrace>* traces = &train_traces;
    return [v, traces](int episode) -> std::unique_ptr<Environment> {
      return std::make_unique<AbrEnv>(
          *v, (*traces)[static_cast<std::size_t>(episode) % traces->size()]);
    };
  }
  EnvFactory eval_factory() const {
    const VideoSpec* v = &video;
    const std::vector<BandwidthTrace>* traces = &eval_traces;
    return [v, traces](int episode) -> std::unique_ptr<Environment> {
      return std::make_unique<AbrEnv>(
          *v, (*traces)[static_cast<std::size_t>(episode) % traces->size()]);
    };
  }
};

DistillSetup distill_setup(const json& section, std::uint64_t seed) {
  DistillSetup s;
  s.video = video_from(section.at("video"));
  s.teacher = teacher_from(section.at("teacher"), s.video);
  s.train_traces = expand_traces(
      section.at("train_traces").get<std::vector<std::string>>(), seed, 0x7261);
  s.eval_traces = expand_traces(
      section.at("eval_traces").get<std::vector<std::string>>(), seed, 0xe7a1);
  s.config = distill_config_from(section, seed);
  return s;
}

}  // namespace

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file `" + path + "`");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
}

json resolve_config(const json& raw, const std::string& pipeline,
                    const Overrides& overrides) {
  static const std::set<std::string> kPipelines = {"distill", "explain-graph",
                                                   "eval"};
  if (kPipelines.count(pipeline) == 0) {
    throw ConfigError("unknown pipeline `" + pipeline + "`");
  }
  const std::string section_key =
      pipeline == "explain-graph" ? "explain" : pipeline;
  check_keys(raw, "config", {"pipeline", "seed", "out", section_key});
  if (raw.contains("pipeline")) {
    const auto declared = raw.at("pipeline").get<std::string>();
    if (declared != pipeline) {
      config_fail("config.pipeline", "config is for `" + declared +
                                         "` but the `" + pipeline +
                                         "` command was invoked");
    }
  }

  json out;
  out["pipeline"] = pipeline;
  out["seed"] = overrides.seed ? *overrides.seed
                               : get_or<std::uint64_t>(raw, "config", "seed", 1);
  out["out"] = overrides.out ? *overrides.out
                             : get_or<std::string>(raw, "config", "out", "out");

  const json section = raw.value(section_key, json::object());
  if (pipeline == "distill") {
    out[section_key] = resolve_distill(section, "config.distill", overrides);
  } else if (pipeline == "explain-graph") {
    out[section_key] = resolve_explain(section, "config.explain", overrides);
  } else {
    out[section_key] = resolve_eval(section, "config.eval", overrides);
  }
  return out;
}

std::vector<BandwidthTrace> expand_traces(const std::vector<std::string>& specs,
                                          std::uint64_t seed, std::uint64_t tag) {
  std::vector<BandwidthTrace> traces;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const std::string& spec = specs[i];
    const std::uint64_t trace_seed = Rng::mix(Rng::mix(seed, tag), i);
    if (spec.rfind("suite:", 0) == 0) {
      // suite:<count> or suite:<count>:<base_seed>
      const std::string rest = spec.substr(6);
      const auto colon = rest.find(':');
      int count = 0;
      std::uint64_t base = Rng::mix(seed, tag);
      try {
        count = std::stoi(colon == std::string::npos ? rest : rest.substr(0, colon));
        if (colon != std::string::npos) base = std::stoull(rest.substr(colon + 1));
      } catch (const std::exception&) {
        throw ConfigError("trace spec `" + spec + "`: bad suite parameters");
      }
      if (count < 1) throw ConfigError("trace spec `" + spec + "`: count must be >= 1");
      for (int k = 0; k < count; ++k) {
        const std::uint64_t s = Rng::mix(base, static_cast<std::uint64_t>(k));
        switch (k % 3) {
          case 0: {
            Rng r = Rng::stream(s, 0xf1);
            const double kbps = 500.0 + 4000.0 * r.uniform();
            traces.push_back(
                synth_trace("fixed:" + std::to_string(static_cast<int>(kbps)), s));
            break;
          }
          case 1:
            traces.push_back(synth_trace("step", s));
            break;
          default:
            traces.push_back(synth_trace("markov", s));
        }
      }
    } else if (spec.rfind("csv:", 0) == 0) {
      traces.push_back(load_trace(spec.substr(4)));
    } else {
      traces.push_back(synth_trace(spec, trace_seed));
    }
  }
  return traces;
}

void cmd_distill(const json& resolved) {
  const std::uint64_t seed = resolved.at("seed").get<std::uint64_t>();
  const std::filesystem::path out_dir = resolved.at("out").get<std::string>();
  std::filesystem::create_directories(out_dir);

  DistillSetup setup = distill_setup(resolved.at("distill"), seed);
  AbrEnv proto(setup.video, setup.train_traces.front());

  DistillResult result = stage("distill", [&] {
    return distill_policy(setup.train_factory(), proto, *setup.teacher,
                          setup.config);
  });

  const int n_eval = static_cast<int>(setup.eval_traces.size());
  TreePolicy tree_policy(result.tree);
  TreePolicy unpruned_policy(result.unpruned_tree);
  std::vector<double> teacher_scores, tree_scores, unpruned_scores;
  stage("evaluate", [&] {
    teacher_scores =
        evaluate_policy(setup.eval_factory(), *setup.teacher, n_eval, seed);
    tree_scores = evaluate_policy(setup.eval_factory(), tree_policy, n_eval, seed);
    unpruned_scores =
        evaluate_policy(setup.eval_factory(), unpruned_policy, n_eval, seed);
    return 0;
  });

  Fidelity fid = stage("fidelity", [&] {
    const int episodes = std::min(8, n_eval);
    auto states = collect_states(setup.eval_factory(), *setup.teacher, episodes,
                                 Rng::mix(seed, 0xf1de));
    return fidelity(result.tree, *setup.teacher, states);
  });

  stage("report", [&] {
    json tree_json = result.tree.to_json();
    tree_json["config"] = resolved;
    write_json(out_dir / "tree.json", tree_json);

    write_file(out_dir / "tree.dot",
               "// config=" + resolved.dump() + "\n" + result.tree.to_dot());

    write_json(out_dir / "fidelity.json",
               json{{"config", resolved},
                    {"accuracy", fid.accuracy},
                    {"rmse", fid.rmse}});

    const double teacher_mean = mean(teacher_scores);
    const double tree_mean = mean(tree_scores);
    const double unpruned_mean = mean(unpruned_scores);
    json per_trace = json::array();
    for (int i = 0; i < n_eval; ++i) {
      per_trace.push_back(
          {{"trace", setup.eval_traces[static_cast<std::size_t>(i)].name},
           {"teacher", teacher_scores[static_cast<std::size_t>(i)]},
           {"tree", tree_scores[static_cast<std::size_t>(i)]},
           {"unpruned_tree", unpruned_scores[static_cast<std::size_t>(i)]}});
    }
    write_json(
        out_dir / "reward_report.json",
        json{{"config", resolved},
             {"teacher_mean_qoe", teacher_mean},
             {"tree_mean_qoe", tree_mean},
             {"unpruned_mean_qoe", unpruned_mean},
             {"tree_vs_teacher_gap",
              teacher_mean != 0.0 ? (teacher_mean - tree_mean) / std::abs(teacher_mean)
                                  : 0.0},
             {"pruning_degradation",
              unpruned_mean != 0.0
                  ? (unpruned_mean - tree_mean) / std::abs(unpruned_mean)
                  : 0.0},
             {"tree_leaves", result.tree.leaf_count()},
             {"unpruned_leaves", result.unpruned_tree.leaf_count()},
             {"notes", result.notes},
             {"per_trace", per_trace}});
    return 0;
  });
}

void cmd_explain_graph(const json& resolved) {
  const std::uint64_t seed = resolved.at("seed").get<std::uint64_t>();
  const std::filesystem::path out_dir = resolved.at("out").get<std::string>();
  std::filesystem::create_directories(out_dir);
  const json& section = resolved.at("explain");

  Topology topo = stage("topology", [&] { return topology_from(section, seed); });

  PathChoiceOptions options;
  options.length_penalty = section.at("length_penalty").get<double>();
  const std::vector<double> theta = stage("fit-theta", [&] {
    return fit_theta(topo, section.at("theta_seed").get<std::uint64_t>(),
                     section.at("theta_matrices").get<int>(), 12, 400, 0.5,
                     options);
  });

  auto model = stage("model", [&] {
    return std::make_unique<PathChoiceModel>(topo, theta, options);
  });

  OptimizeConfig opt;
  opt.lambda1 = section.at("lambda1").get<double>();
  opt.lambda2 = section.at("lambda2").get<double>();
  opt.steps = section.at("steps").get<int>();
  opt.learning_rate = section.at("learning_rate").get<double>();
  opt.seed = seed;
  Mask mask = stage("optimize",
                    [&] { return optimize(*model, model->hypergraph(), opt); });

  stage("report", [&] {
    write_file(out_dir / "mask.csv", config_comment(resolved) + mask_to_csv(mask));
    write_file(out_dir / "loss_trace.csv",
               config_comment(resolved) + loss_trace_to_csv(mask));

    const auto ranked = rank_connections(mask, section.at("topk").get<int>());
    write_json(out_dir / "topk.json",
               json{{"config", resolved},
                    {"topk", topk_to_json(ranked, model->hypergraph())}});

    json corr;
    corr["config"] = resolved;
    try {
      corr["pearson_r"] =
          mask_traffic_correlation(mask, topo, model->chosen_routes());
    } catch (const DomainError& e) {
      corr["pearson_r"] = nullptr;
      corr["error"] = e.what();
    }
    corr["loss"] = json{{"divergence", mask.loss.divergence},
                        {"norm", mask.loss.norm},
                        {"entropy", mask.loss.entropy},
                        {"total", mask.loss.total}};
    write_json(out_dir / "correlation.json", corr);
    return 0;
  });
}

namespace {

json leaf_sweep_report(const json& resolved, std::uint64_t seed) {
  DistillSetup setup = distill_setup(resolved.at("eval").at("distill"), seed);
  AbrEnv proto(setup.video, setup.train_traces.front());

  // Shared dataset and unpruned tree; each leaf budget prunes the same tree.
  WeightedDataset collected = stage("collect", [&] {
    return collect_dataset(setup.train_factory(), *setup.teacher, nullptr,
                           setup.config);
  });
  WeightedDataset weighted = stage("advantages", [&] {
    return attach_advantages(collected, proto, *setup.teacher, setup.config);
  });
  WeightedDataset training = stage("resample", [&] {
    return resample(weighted,
                    setup.config.resample_size > 0 ? setup.config.resample_size
                                                   : weighted.samples.size(),
                    Rng::mix(seed, 0x4e5a));
  });
  DecisionTree unpruned = stage("fit", [&] {
    return fit_tree(training, std::numeric_limits<int>::max(), setup.config.mode,
                    seed);
  });

  const auto states = stage("holdout", [&] {
    return collect_states(setup.eval_factory(), *setup.teacher,
                          std::min(8, static_cast<int>(setup.eval_traces.size())),
                          Rng::mix(seed, 0xf1de));
  });

  json rows = json::array();
  for (const auto& jl : resolved.at("eval").at("leaves")) {
    const int leaves = jl.get<int>();
    DecisionTree tree = ccp_prune(unpruned, leaves);
    Fidelity fid = fidelity(tree, *setup.teacher, states);
    TreePolicy policy(tree);
    const auto scores =
        evaluate_policy(setup.eval_factory(), policy,
                        static_cast<int>(setup.eval_traces.size()), seed);
    rows.push_back(json{{"leaves", leaves},
                        {"actual_leaves", tree.leaf_count()},
                        {"accuracy", fid.accuracy},
                        {"rmse", fid.rmse},
                        {"mean_qoe", mean(scores)}});
  }
  return json{{"mode", "leaf-sweep"}, {"rows", rows}};
}

json lambda_sweep_report(const json& resolved, std::uint64_t seed) {
  const json& section = resolved.at("eval");
  const json& explain = section.at("explain");
  const int n_seeds = section.at("n_seeds").get<int>();

  PathChoiceOptions options;
  options.length_penalty = explain.at("length_penalty").get<double>();

  json rows = json::array();
  auto run = [&](const char* param, double lambda1, double lambda2, int k) {
    Topology topo = Topology::nsfnet();
    if (explain.at("topology").get<std::string>() != "nsfnet") {
      topo = topology_from(explain, seed);
      topo.demands.clear();
    }
    const int count = explain.at("demands").is_array()
                          ? static_cast<int>(explain.at("demands").size())
                          : explain.at("demands").at("count").get<int>();
    topo.demands = random_demands(
        topo, count, Rng::mix(Rng::mix(seed, 0xde3a), static_cast<std::uint64_t>(k)));
    const auto theta =
        fit_theta(topo, explain.at("theta_seed").get<std::uint64_t>(),
                  explain.at("theta_matrices").get<int>(), 12, 400, 0.5, options);
    PathChoiceModel model(topo, theta, options);
    OptimizeConfig opt;
    opt.lambda1 = lambda1;
    opt.lambda2 = lambda2;
    opt.steps = explain.at("steps").get<int>();
    opt.learning_rate = explain.at("learning_rate").get<double>();
    Mask mask = optimize(model, model.hypergraph(), opt);
    const double incidence_norm = mask_norm(mask.incidence);
    rows.push_back(json{{"param", param},
                        {"lambda1", lambda1},
                        {"lambda2", lambda2},
                        {"seed_index", k},
                        {"norm_ratio", mask.loss.norm / incidence_norm},
                        {"entropy", mask.loss.entropy},
                        {"divergence", mask.loss.divergence}});
  };

  stage("lambda-sweep", [&] {
    for (const auto& jl : section.at("lambda1_values")) {
      for (int k = 0; k < n_seeds; ++k) {
        run("lambda1", jl.get<double>(), explain.at("lambda2").get<double>(), k);
      }
    }
    for (const auto& jl : section.at("lambda2_values")) {
      for (int k = 0; k < n_seeds; ++k) {
        run("lambda2", explain.at("lambda1").get<double>(), jl.get<double>(), k);
      }
    }
    return 0;
  });
  return json{{"mode", "lambda-sweep"}, {"rows", rows}};
}

json distill_compare_report(const json& resolved, std::uint64_t seed) {
  DistillSetup setup = distill_setup(resolved.at("eval").at("distill"), seed);
  AbrEnv proto(setup.video, setup.train_traces.front());

  DistillConfig plain_config = setup.config;
  plain_config.oversample_min_freq = 0.0;
  DistillResult plain = stage("distill-plain", [&] {
    return distill_policy(setup.train_factory(), proto, *setup.teacher,
                          plain_config);
  });
  DistillResult oversampled = stage("distill-oversampled", [&] {
    return distill_policy(setup.train_factory(), proto, *setup.teacher,
                          setup.config);
  });

  const int n_eval = static_cast<int>(setup.eval_traces.size());
  TreePolicy plain_policy(plain.tree);
  TreePolicy oversampled_policy(oversampled.tree);
  const auto teacher_scores =
      evaluate_policy(setup.eval_factory(), *setup.teacher, n_eval, seed);
  const auto plain_scores =
      evaluate_policy(setup.eval_factory(), plain_policy, n_eval, seed);
  const auto oversampled_scores =
      evaluate_policy(setup.eval_factory(), oversampled_policy, n_eval, seed);

  json per_trace = json::array();
  for (int i = 0; i < n_eval; ++i) {
    per_trace.push_back(
        {{"trace", setup.eval_traces[static_cast<std::size_t>(i)].name},
         {"teacher", teacher_scores[static_cast<std::size_t>(i)]},
         {"tree", plain_scores[static_cast<std::size_t>(i)]},
         {"oversampled_tree", oversampled_scores[static_cast<std::size_t>(i)]}});
  }
  return json{{"mode", "distill-compare"},
              {"teacher_mean_qoe", mean(teacher_scores)},
              {"tree_mean_qoe", mean(plain_scores)},
              {"oversampled_mean_qoe", mean(oversampled_scores)},
              {"notes", oversampled.notes},
              {"per_trace", per_trace}};
}

}  // namespace

void cmd_eval(const json& resolved) {
  const std::uint64_t seed = resolved.at("seed").get<std::uint64_t>();
  const std::filesystem::path out_dir = resolved.at("out").get<std::string>();
  std::filesystem::create_directories(out_dir);

  const auto mode = resolved.at("eval").at("mode").get<std::string>();
  json report;
  if (mode == "leaf-sweep") {
    report = leaf_sweep_report(resolved, seed);
  } else if (mode == "lambda-sweep") {
    report = lambda_sweep_report(resolved, seed);
  } else {
    report = distill_compare_report(resolved, seed);
  }
  report["config"] = resolved;
  write_json(out_dir / "report.json", report);
}

int run_command(const std::string& command, const std::string& config_path,
                const Overrides& overrides) {
  try {
    const json raw = load_config_file(config_path);
    const json resolved = resolve_config(raw, command, overrides);
    if (command == "distill") {
      cmd_distill(resolved);
    } else if (command == "explain-graph") {
      cmd_explain_graph(resolved);
    } else {
      cmd_eval(resolved);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace metiskit::cli
