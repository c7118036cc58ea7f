#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "metiskit/abr.hpp"
#include "metiskit/cli.hpp"
#include "metiskit/distill.hpp"
#include "metiskit/hypergraph.hpp"
#include "metiskit/mask_opt.hpp"
#include "metiskit/route_sim.hpp"

namespace py = pybind11;
using namespace metiskit;

namespace {

// Matrices cross the boundary as nested lists.
std::vector<std::vector<double>> matrix_to_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) rows[r][c] = m(r, c);
  }
  return rows;
}

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Matrix();
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) {
      throw DomainError("matrix rows must have equal length");
    }
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

nlohmann::json json_from_str(const std::string& text) {
  return nlohmann::json::parse(text);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Decision-tree policy conversion and hypergraph mask explanations";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<UnsupportedStateError>(m, "UnsupportedStateError",
                                                PyExc_ValueError);
  py::register_exception<InsufficientDataError>(m, "InsufficientDataError",
                                                PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  // ---- environment layer ----
  py::class_<Action>(m, "Action")
      .def_static("discrete", &Action::discrete, py::arg("index"))
      .def_static("continuous", &Action::continuous, py::arg("value"))
      .def_readonly("index", &Action::index)
      .def_readonly("value", &Action::value)
      .def("is_discrete", &Action::is_discrete)
      .def("__repr__", [](const Action& a) {
        return a.is_discrete() ? "Action.discrete(" + std::to_string(a.index) + ")"
                               : "Action.continuous(" + std::to_string(a.value) + ")";
      });

  py::class_<TrajectoryStep>(m, "TrajectoryStep")
      .def_readonly("state", &TrajectoryStep::state)
      .def_readonly("action", &TrajectoryStep::action)
      .def_readonly("reward", &TrajectoryStep::reward);

  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("steps", &Trajectory::steps)
      .def_readonly("total_return", &Trajectory::total_return)
      .def_readonly("seed", &Trajectory::seed);

  py::class_<Environment>(m, "Environment")
      .def("reset", &Environment::reset, py::arg("seed"))
      .def("observe", &Environment::observe)
      .def("step",
           [](Environment& env, const Action& a) {
             StepOutcome out = env.step(a);
             return py::make_tuple(env.observe(), out.reward, out.done);
           })
      .def("done", &Environment::done)
      .def("action_count", &Environment::action_count)
      .def("set_state", &Environment::set_state, py::arg("state"));

  py::class_<Policy>(m, "Policy")
      .def("act", &Policy::act, py::arg("state"));

  m.def("rollout",
        [](Environment& env, const Policy& policy, int max_steps,
           std::uint64_t seed, double gamma) {
          return rollout(env, policy, max_steps, seed, gamma);
        },
        py::arg("env"), py::arg("policy"), py::arg("max_steps"), py::arg("seed"),
        py::arg("gamma") = 1.0);
  m.def("estimate_value", &estimate_value, py::arg("env"), py::arg("teacher"),
        py::arg("state"), py::arg("horizon"), py::arg("n_rollouts"),
        py::arg("gamma"), py::arg("seed") = 0);
  m.def("estimate_q", &estimate_q, py::arg("env"), py::arg("teacher"),
        py::arg("state"), py::arg("action"), py::arg("horizon"),
        py::arg("n_rollouts"), py::arg("gamma"), py::arg("seed") = 0);
  m.def("advantage_weight", &advantage_weight, py::arg("env"), py::arg("teacher"),
        py::arg("state"), py::arg("horizon"), py::arg("n_rollouts"),
        py::arg("gamma"), py::arg("seed") = 0);

  // ---- adaptive bitrate environment ----
  py::class_<VideoSpec>(m, "VideoSpec")
      .def(py::init<>())
      .def_readwrite("chunk_duration_s", &VideoSpec::chunk_duration_s)
      .def_readwrite("bitrates_kbps", &VideoSpec::bitrates_kbps)
      .def_readwrite("n_chunks", &VideoSpec::n_chunks)
      .def_readwrite("size_jitter", &VideoSpec::size_jitter)
      .def("validate", &VideoSpec::validate);

  py::class_<TracePoint>(m, "TracePoint")
      .def(py::init([](double t, double bw) { return TracePoint{t, bw}; }),
           py::arg("time_s"), py::arg("bandwidth_kbps"))
      .def_readwrite("time_s", &TracePoint::time_s)
      .def_readwrite("bandwidth_kbps", &TracePoint::bandwidth_kbps);

  py::class_<BandwidthTrace>(m, "BandwidthTrace")
      .def(py::init<>())
      .def_readwrite("name", &BandwidthTrace::name)
      .def_readwrite("samples", &BandwidthTrace::samples)
      .def("validate", &BandwidthTrace::validate)
      .def("bandwidth_at", &BandwidthTrace::bandwidth_at, py::arg("t"))
      .def("download_seconds", &BandwidthTrace::download_seconds,
           py::arg("start_s"), py::arg("kbits"));

  m.def("load_trace", &load_trace, py::arg("path"));
  m.def("synth_trace", &synth_trace, py::arg("kind"), py::arg("seed"));
  m.def("qoe", &qoe, py::arg("bitrate_kbps"), py::arg("rebuffer_s"),
        py::arg("prev_bitrate_kbps"));
  m.def("abr_feature_names", &abr_feature_names);

  py::class_<AbrEnv, Environment>(m, "AbrEnv")
      .def(py::init<VideoSpec, BandwidthTrace, double>(), py::arg("video"),
           py::arg("trace"), py::arg("buffer_cap_s") = 60.0)
      .def("buffer", &AbrEnv::buffer)
      .def("play_head", &AbrEnv::play_head)
      .def("wall_clock", &AbrEnv::wall_clock)
      .def("chunk_index", &AbrEnv::chunk_index);

  py::class_<MpcTeacher, Policy>(m, "MpcTeacher")
      .def(py::init<VideoSpec, int, double>(), py::arg("video"),
           py::arg("lookahead") = 5, py::arg("buffer_cap_s") = 60.0);

  py::class_<OscillatingTeacher::Params>(m, "OscillatingTeacherParams")
      .def(py::init<>())
      .def_readwrite("low_rung", &OscillatingTeacher::Params::low_rung)
      .def_readwrite("high_rung", &OscillatingTeacher::Params::high_rung)
      .def_readwrite("mid_rung", &OscillatingTeacher::Params::mid_rung)
      .def_readwrite("buffer_threshold_s",
                     &OscillatingTeacher::Params::buffer_threshold_s)
      .def_readwrite("band_halfwidth_s",
                     &OscillatingTeacher::Params::band_halfwidth_s);

  py::class_<OscillatingTeacher, Policy>(m, "OscillatingTeacher")
      .def(py::init<OscillatingTeacher::Params>(), py::arg("params"));

  py::class_<RandomPolicy, Policy>(m, "RandomPolicy")
      .def(py::init<int, std::uint64_t>(), py::arg("n_actions"), py::arg("seed"));

  // ---- datasets and trees ----
  py::enum_<TreeMode>(m, "TreeMode")
      .value("CLASSIFY", TreeMode::kClassify)
      .value("REGRESS", TreeMode::kRegress);

  py::class_<Sample>(m, "Sample")
      .def(py::init<>())
      .def_readwrite("state", &Sample::state)
      .def_readwrite("action", &Sample::action)
      .def_readwrite("target", &Sample::target)
      .def_readwrite("weight", &Sample::weight)
      .def_readwrite("iteration", &Sample::iteration);

  py::class_<WeightedDataset>(m, "WeightedDataset")
      .def(py::init<>())
      .def_readwrite("mode", &WeightedDataset::mode)
      .def_readwrite("n_actions", &WeightedDataset::n_actions)
      .def_readwrite("feature_names", &WeightedDataset::feature_names)
      .def_readwrite("samples", &WeightedDataset::samples)
      .def_readonly("notes", &WeightedDataset::notes)
      .def("validate", &WeightedDataset::validate)
      .def("action_frequencies", &WeightedDataset::action_frequencies)
      .def("to_csv", &WeightedDataset::to_csv);

  py::class_<DecisionTree>(m, "DecisionTree")
      .def(py::init<>())
      .def_readonly("mode", &DecisionTree::mode)
      .def_readonly("n_actions", &DecisionTree::n_actions)
      .def_readonly("feature_names", &DecisionTree::feature_names)
      .def("leaf_count", &DecisionTree::leaf_count)
      .def("predict_index", &DecisionTree::predict_index, py::arg("state"))
      .def("predict_value", &DecisionTree::predict_value, py::arg("state"))
      .def("predict", &DecisionTree::predict, py::arg("state"))
      .def("training_error", &DecisionTree::training_error)
      .def("to_json", [](const DecisionTree& t) { return t.to_json().dump(2); })
      .def_static("from_json",
                  [](const std::string& text) {
                    return DecisionTree::from_json(json_from_str(text));
                  })
      .def("to_dot", &DecisionTree::to_dot);

  py::class_<TreePolicy, Policy>(m, "TreePolicy")
      .def(py::init<const DecisionTree&>(), py::arg("tree"),
           py::keep_alive<1, 2>());

  m.def("fit_tree", &fit_tree, py::arg("dataset"), py::arg("max_leaves"),
        py::arg("mode"), py::arg("seed") = 0);
  m.def("ccp_prune", &ccp_prune, py::arg("tree"), py::arg("target_leaves"));
  m.def("resample", &resample, py::arg("dataset"), py::arg("n"), py::arg("seed"));
  m.def("oversample_actions", &oversample_actions, py::arg("dataset"),
        py::arg("min_freq"));

  py::class_<Fidelity>(m, "Fidelity")
      .def_readonly("accuracy", &Fidelity::accuracy)
      .def_readonly("rmse", &Fidelity::rmse);

  m.def("fidelity", &fidelity, py::arg("tree"), py::arg("teacher"),
        py::arg("eval_states"));

  py::class_<DistillConfig>(m, "DistillConfig")
      .def(py::init<>())
      .def_readwrite("dagger_iterations", &DistillConfig::dagger_iterations)
      .def_readwrite("episodes_per_iteration",
                     &DistillConfig::episodes_per_iteration)
      .def_readwrite("max_steps", &DistillConfig::max_steps)
      .def_readwrite("agreement_stop", &DistillConfig::agreement_stop)
      .def_readwrite("max_leaves", &DistillConfig::max_leaves)
      .def_readwrite("interim_leaves", &DistillConfig::interim_leaves)
      .def_readwrite("resample_size", &DistillConfig::resample_size)
      .def_readwrite("gamma", &DistillConfig::gamma)
      .def_readwrite("horizon", &DistillConfig::horizon)
      .def_readwrite("n_rollouts", &DistillConfig::n_rollouts)
      .def_readwrite("oversample_min_freq", &DistillConfig::oversample_min_freq)
      .def_readwrite("mode", &DistillConfig::mode)
      .def_readwrite("seed", &DistillConfig::seed)
      .def_readwrite("feature_names", &DistillConfig::feature_names);

  py::class_<DistillResult>(m, "DistillResult")
      .def_readonly("tree", &DistillResult::tree)
      .def_readonly("unpruned_tree", &DistillResult::unpruned_tree)
      .def_readonly("training_set", &DistillResult::training_set)
      .def_readonly("collected", &DistillResult::collected)
      .def_readonly("notes", &DistillResult::notes);

  // Python callers pass a video spec and trace list; episodes cycle traces.
  auto abr_factory = [](const VideoSpec& video,
                        const std::vector<BandwidthTrace>& traces) -> EnvFactory {
    if (traces.empty()) throw DomainError("need at least one trace");
    return [video, traces](int episode) -> std::unique_ptr<Environment> {
      return std::make_unique<AbrEnv>(
          video, traces[static_cast<std::size_t>(episode) % traces.size()]);
    };
  };

  m.def("collect_dataset",
        [abr_factory](const VideoSpec& video,
                      const std::vector<BandwidthTrace>& traces,
                      const Policy& teacher, const DecisionTree* student,
                      const DistillConfig& config) {
          return collect_dataset(abr_factory(video, traces), teacher, student,
                                 config);
        },
        py::arg("video"), py::arg("traces"), py::arg("teacher"),
        py::arg("student"), py::arg("config"));
  m.def("attach_advantages", &attach_advantages, py::arg("dataset"),
        py::arg("env"), py::arg("teacher"), py::arg("config"));
  m.def("distill_policy",
        [abr_factory](const VideoSpec& video,
                      const std::vector<BandwidthTrace>& traces,
                      const Policy& teacher, const DistillConfig& config) {
          AbrEnv proto(video, traces.front());
          return distill_policy(abr_factory(video, traces), proto, teacher,
                                config);
        },
        py::arg("video"), py::arg("traces"), py::arg("teacher"),
        py::arg("config"));
  m.def("evaluate_policy",
        [abr_factory](const VideoSpec& video,
                      const std::vector<BandwidthTrace>& traces,
                      const Policy& policy, int n_episodes, std::uint64_t seed) {
          return evaluate_policy(abr_factory(video, traces), policy, n_episodes,
                                 seed);
        },
        py::arg("video"), py::arg("traces"), py::arg("policy"),
        py::arg("n_episodes"), py::arg("seed"));
  m.def("collect_states",
        [abr_factory](const VideoSpec& video,
                      const std::vector<BandwidthTrace>& traces,
                      const Policy& policy, int n_episodes, std::uint64_t seed) {
          return collect_states(abr_factory(video, traces), policy, n_episodes,
                                seed);
        },
        py::arg("video"), py::arg("traces"), py::arg("policy"),
        py::arg("n_episodes"), py::arg("seed"));

  // ---- hypergraphs ----
  py::class_<Hypergraph>(m, "Hypergraph")
      .def(py::init<>())
      .def_readonly("vertex_names", &Hypergraph::vertex_names)
      .def_readonly("edge_names", &Hypergraph::edge_names)
      .def_readonly("vertex_features", &Hypergraph::vertex_features)
      .def_readonly("edge_features", &Hypergraph::edge_features)
      .def("covered_vertices", &Hypergraph::covered_vertices, py::arg("edge"))
      .def("incidence",
           [](const Hypergraph& hg) { return matrix_to_rows(hg.incidence_matrix); })
      .def("to_json", [](const Hypergraph& hg) { return hg.to_json().dump(2); })
      .def_static("from_json", [](const std::string& text) {
        return Hypergraph::from_json(json_from_str(text));
      });

  m.def("incidence",
        [](const Hypergraph& hg) { return matrix_to_rows(incidence(hg)); },
        py::arg("hypergraph"));

  py::class_<Link>(m, "Link")
      .def(py::init([](int u, int v, double cap, double load) {
             return Link{u, v, cap, load};
           }),
           py::arg("u"), py::arg("v"), py::arg("capacity_mbps"),
           py::arg("load_mbps") = 0.0)
      .def_readwrite("u", &Link::from)
      .def_readwrite("v", &Link::to)
      .def_readwrite("capacity_mbps", &Link::capacity_mbps)
      .def_readwrite("load_mbps", &Link::load_mbps);

  py::class_<Demand>(m, "Demand")
      .def(py::init([](int src, int dst, double mbps) {
             return Demand{src, dst, mbps};
           }),
           py::arg("src"), py::arg("dst"), py::arg("mbps"))
      .def_readwrite("src", &Demand::src)
      .def_readwrite("dst", &Demand::dst)
      .def_readwrite("mbps", &Demand::volume_mbps);

  py::class_<Topology>(m, "Topology")
      .def(py::init<>())
      .def_readwrite("n_nodes", &Topology::n_nodes)
      .def_readwrite("links", &Topology::links)
      .def_readwrite("demands", &Topology::demands)
      .def("validate", &Topology::validate)
      .def("link_index", &Topology::link_index, py::arg("u"), py::arg("v"))
      .def("to_json", [](const Topology& t) { return t.to_json().dump(2); })
      .def_static("from_json",
                  [](const std::string& text) {
                    return Topology::from_json(json_from_str(text));
                  })
      .def_static("nsfnet", &Topology::nsfnet);

  m.def("build_routing_hypergraph", &build_routing_hypergraph,
        py::arg("topology"), py::arg("routes"));

  py::class_<BivariateSide>(m, "BivariateSide")
      .def(py::init<>())
      .def_readwrite("names", &BivariateSide::names)
      .def_readwrite("features", &BivariateSide::features);

  m.def("build_bivariate", &build_bivariate, py::arg("resources"),
        py::arg("requests"), py::arg("assignment"));

  // ---- mask optimization ----
  py::enum_<OutputKind>(m, "OutputKind")
      .value("DISCRETE", OutputKind::kDiscrete)
      .value("CONTINUOUS", OutputKind::kContinuous);

  py::class_<ModelOutput>(m, "ModelOutput")
      .def(py::init<>())
      .def_readwrite("kind", &ModelOutput::kind)
      .def_readwrite("values", &ModelOutput::values)
      .def_readwrite("groups", &ModelOutput::groups)
      .def("validate", &ModelOutput::validate);

  py::class_<MaskableModel>(m, "MaskableModel");

  m.def("gate",
        [](const std::vector<std::vector<double>>& w_prime,
           const std::vector<std::vector<double>>& incidence) {
          return matrix_to_rows(gate(rows_to_matrix(w_prime), rows_to_matrix(incidence)));
        },
        py::arg("w_prime"), py::arg("incidence"));
  m.def("divergence", &divergence, py::arg("y_w"), py::arg("y_i"));
  m.def("mask_norm",
        [](const std::vector<std::vector<double>>& w) {
          return mask_norm(rows_to_matrix(w));
        },
        py::arg("w"));
  m.def("mask_entropy",
        [](const std::vector<std::vector<double>>& w) {
          return mask_entropy(rows_to_matrix(w));
        },
        py::arg("w"));

  py::class_<LossBreakdown>(m, "LossBreakdown")
      .def_readonly("divergence", &LossBreakdown::divergence)
      .def_readonly("norm", &LossBreakdown::norm)
      .def_readonly("entropy", &LossBreakdown::entropy)
      .def_readonly("total", &LossBreakdown::total);

  py::class_<Mask>(m, "Mask")
      .def_property_readonly("w", [](const Mask& m_) { return matrix_to_rows(m_.w); })
      .def_property_readonly("w_prime",
                             [](const Mask& m_) { return matrix_to_rows(m_.w_prime); })
      .def_property_readonly("incidence",
                             [](const Mask& m_) { return matrix_to_rows(m_.incidence); })
      .def_readonly("loss", &Mask::loss)
      .def_readonly("trace", &Mask::trace);

  py::class_<OptimizeConfig>(m, "OptimizeConfig")
      .def(py::init<>())
      .def_readwrite("lambda1", &OptimizeConfig::lambda1)
      .def_readwrite("lambda2", &OptimizeConfig::lambda2)
      .def_readwrite("steps", &OptimizeConfig::steps)
      .def_readwrite("learning_rate", &OptimizeConfig::learning_rate)
      .def_readwrite("seed", &OptimizeConfig::seed)
      .def_readwrite("fd_step", &OptimizeConfig::fd_step);

  m.def("loss",
        [](const std::vector<std::vector<double>>& w, const MaskableModel& model,
           const Hypergraph& hg, double l1, double l2) {
          return loss(rows_to_matrix(w), model, hg, l1, l2);
        },
        py::arg("w"), py::arg("model"), py::arg("hypergraph"), py::arg("lambda1"),
        py::arg("lambda2"));
  m.def("optimize",
        [](const MaskableModel& model, const Hypergraph& hg,
           const OptimizeConfig& config) { return optimize(model, hg, config); },
        py::arg("model"), py::arg("hypergraph"), py::arg("config"));

  py::class_<RankedConnection>(m, "RankedConnection")
      .def_readonly("edge", &RankedConnection::edge)
      .def_readonly("vertex", &RankedConnection::vertex)
      .def_readonly("value", &RankedConnection::value);

  m.def("rank_connections", &rank_connections, py::arg("mask"), py::arg("top_k"));
  m.def("mask_to_csv", &mask_to_csv, py::arg("mask"));

  // ---- routing system ----
  py::class_<CandidateSet>(m, "CandidateSet")
      .def_readonly("node_paths", &CandidateSet::node_paths)
      .def_readonly("link_paths", &CandidateSet::link_paths);

  m.def("candidate_paths", &candidate_paths, py::arg("topology"), py::arg("src"),
        py::arg("dst"));
  m.def("link_latency", &link_latency, py::arg("capacity_mbps"),
        py::arg("load_mbps"));
  m.def("path_latency", &path_latency, py::arg("topology"), py::arg("path"),
        py::arg("loads"));
  m.def("induced_loads", &induced_loads, py::arg("topology"), py::arg("routes"));

  py::class_<PathChoiceOptions>(m, "PathChoiceOptions")
      .def(py::init<>())
      .def_readwrite("length_penalty", &PathChoiceOptions::length_penalty);

  py::class_<PathChoiceModel, MaskableModel>(m, "PathChoiceModel")
      .def(py::init<Topology, std::vector<double>, PathChoiceOptions>(),
           py::arg("topology"), py::arg("theta"),
           py::arg("options") = PathChoiceOptions{})
      .def_property_readonly("hypergraph", &PathChoiceModel::hypergraph)
      .def_property_readonly("chosen_routes", &PathChoiceModel::chosen_routes)
      .def_property_readonly("theta", &PathChoiceModel::theta)
      .def("decisions", [](const PathChoiceModel& model,
                           const std::vector<std::vector<double>>& w) {
        auto d = model.decisions(rows_to_matrix(w));
        return py::make_tuple(d.output, d.chosen);
      });

  m.def("routing_decisions",
        [](const PathChoiceModel& model, const std::vector<std::vector<double>>& w) {
          auto d = routing_decisions(model, rows_to_matrix(w));
          return py::make_tuple(d.output, d.chosen);
        },
        py::arg("model"), py::arg("w"));
  m.def("random_demands", &random_demands, py::arg("topology"), py::arg("count"),
        py::arg("seed"));
  m.def("fit_theta", &fit_theta, py::arg("topology"), py::arg("seed"),
        py::arg("n_matrices") = 5, py::arg("demands_per_matrix") = 12,
        py::arg("steps") = 400, py::arg("learning_rate") = 0.5,
        py::arg("options") = PathChoiceOptions{});
  m.def("mask_traffic_correlation", &mask_traffic_correlation, py::arg("mask"),
        py::arg("topology"), py::arg("routes"));

  py::class_<ReroutePoint>(m, "ReroutePoint")
      .def_readonly("mask_gap", &ReroutePoint::mask_gap)
      .def_readonly("latency_gap", &ReroutePoint::latency_gap);

  py::class_<RerouteReport>(m, "RerouteReport")
      .def_readonly("points", &RerouteReport::points)
      .def_readonly("nonzero_points", &RerouteReport::nonzero_points)
      .def_readonly("quadrant_fraction", &RerouteReport::quadrant_fraction);

  m.def("reroute_indicator_eval", &reroute_indicator_eval, py::arg("model"),
        py::arg("mask"), py::arg("min_triples") = 10);

  // ---- CLI pipelines ----
  m.def("run_command",
        [](const std::string& command, const std::string& config_path) {
          return cli::run_command(command, config_path, cli::Overrides{});
        },
        py::arg("command"), py::arg("config_path"));

  m.attr("__version__") = "0.1.0";
}
