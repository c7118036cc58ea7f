#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "metiskit/cli.hpp"
#include "metiskit/tree.hpp"

using namespace metiskit;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("metiskit_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json tiny_distill_section() {
  return json{
      {"video", {{"n_chunks", 8}}},
      {"train_traces", {"fixed:2000"}},
      {"eval_traces", {"fixed:2000", "fixed:1000"}},
      {"dagger_iterations", 1},
      {"episodes_per_iteration", 2},
      {"horizon", 4},
      {"leaves", 20},
  };
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config resolution fills defaults and applies overrides") {
  json raw{{"pipeline", "distill"}};
  cli::Overrides overrides;
  overrides.leaves = 77;
  overrides.seed = 42;
  json resolved = cli::resolve_config(raw, "distill", overrides);
  CHECK(resolved["seed"] == 42);
  CHECK(resolved["distill"]["leaves"] == 77);
  CHECK(resolved["distill"]["gamma"] == doctest::Approx(0.99));
  CHECK(resolved["distill"]["video"]["bitrates_kbps"].size() == 6);
  CHECK(resolved["distill"]["teacher"]["kind"] == "mpc");
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK_THROWS_WITH_AS(
      cli::resolve_config(json{{"bogus", 1}}, "distill", {}),
      doctest::Contains("bogus"), ConfigError);
  CHECK_THROWS_WITH_AS(
      cli::resolve_config(json{{"distill", {{"leaf_count", 5}}}}, "distill", {}),
      doctest::Contains("leaf_count"), ConfigError);
  CHECK_THROWS_WITH_AS(
      cli::resolve_config(json{{"distill", {{"video", {{"fps", 30}}}}}},
                          "distill", {}),
      doctest::Contains("fps"), ConfigError);
  CHECK_THROWS_WITH_AS(
      cli::resolve_config(json{{"explain", {{"lambda3", 1.0}}}}, "explain-graph",
                          {}),
      doctest::Contains("lambda3"), ConfigError);
}

TEST_CASE("pipeline mismatches and bad values are config errors") {
  CHECK_THROWS_AS(
      cli::resolve_config(json{{"pipeline", "distill"}}, "explain-graph", {}),
      ConfigError);
  CHECK_THROWS_AS(
      cli::resolve_config(json{{"distill", {{"gamma", 1.5}}}}, "distill", {}),
      ConfigError);
  CHECK_THROWS_AS(
      cli::resolve_config(json{{"distill", {{"leaves", 0}}}}, "distill", {}),
      ConfigError);
  CHECK_THROWS_AS(
      cli::resolve_config(json{{"eval", {{"mode", "unknown"}}}}, "eval", {}),
      ConfigError);
  // Empty sweep list.
  CHECK_THROWS_AS(
      cli::resolve_config(
          json{{"eval", {{"mode", "leaf-sweep"}, {"leaves", json::array()}}}},
          "eval", {}),
      ConfigError);
}

TEST_CASE("trace spec expansion is deterministic and validated") {
  const auto a = cli::expand_traces({"suite:6:9"}, 1, 0);
  const auto b = cli::expand_traces({"suite:6:9"}, 2, 7);  // explicit base seed
  REQUIRE(a.size() == 6);
  REQUIRE(b.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].samples.size() == b[i].samples.size());
    for (std::size_t k = 0; k < a[i].samples.size(); ++k) {
      CHECK(a[i].samples[k].bandwidth_kbps == b[i].samples[k].bandwidth_kbps);
    }
  }
  CHECK_THROWS_AS(cli::expand_traces({"suite:0"}, 1, 0), ConfigError);
  CHECK_THROWS_AS(cli::expand_traces({"warble:3"}, 1, 0), DomainError);
}

TEST_CASE("cmd_distill writes the four artifacts") {
  const fs::path out = fresh_dir("distill");
  json raw{{"pipeline", "distill"},
           {"seed", 5},
           {"out", out.string()},
           {"distill", tiny_distill_section()}};
  json resolved = cli::resolve_config(raw, "distill", {});
  cli::cmd_distill(resolved);

  for (const char* name :
       {"tree.json", "tree.dot", "fidelity.json", "reward_report.json"}) {
    CHECK(fs::exists(out / name));
  }

  json tree_json = json::parse(slurp(out / "tree.json"));
  CHECK(tree_json.contains("config"));
  CHECK(tree_json["config"]["seed"] == 5);
  DecisionTree tree = DecisionTree::from_json(tree_json);
  CHECK(tree.leaf_count() <= 20);

  json report = json::parse(slurp(out / "reward_report.json"));
  CHECK(report["per_trace"].size() == 2);
  CHECK(report["config"]["distill"]["leaves"] == 20);

  const std::string dot = slurp(out / "tree.dot");
  CHECK(dot.find("// config=") == 0);
}

TEST_CASE("a leaf override of 1 produces a stump but still reports") {
  const fs::path out = fresh_dir("stump");
  json raw{{"pipeline", "distill"},
           {"out", out.string()},
           {"distill", tiny_distill_section()}};
  cli::Overrides overrides;
  overrides.leaves = 1;
  json resolved = cli::resolve_config(raw, "distill", overrides);
  cli::cmd_distill(resolved);
  DecisionTree tree = DecisionTree::from_json(json::parse(slurp(out / "tree.json")));
  CHECK(tree.leaf_count() == 1);
  CHECK(fs::exists(out / "reward_report.json"));
}

TEST_CASE("cmd_distill artifacts are byte-identical across reruns") {
  const fs::path out_a = fresh_dir("rerun_a");
  const fs::path out_b = fresh_dir("rerun_b");
  json raw{{"pipeline", "distill"}, {"seed", 9}, {"distill", tiny_distill_section()}};

  raw["out"] = out_a.string();
  cli::cmd_distill(cli::resolve_config(raw, "distill", {}));
  raw["out"] = out_b.string();
  cli::cmd_distill(cli::resolve_config(raw, "distill", {}));

  for (const char* name : {"tree.json", "fidelity.json"}) {
    // Outputs embed the out dir in the config; compare payloads without it.
    json a = json::parse(slurp(out_a / name));
    json b = json::parse(slurp(out_b / name));
    a["config"].erase("out");
    b["config"].erase("out");
    CHECK(a == b);
  }
}

TEST_CASE("cmd_explain_graph writes mask artifacts with a sorted topk") {
  const fs::path out = fresh_dir("explain");
  json raw{{"pipeline", "explain-graph"},
           {"out", out.string()},
           {"explain",
            {{"demands", {{"count", 6}, {"seed", 2}}},
             {"steps", 150},
             {"theta_matrices", 2}}}};
  json resolved = cli::resolve_config(raw, "explain-graph", {});
  cli::cmd_explain_graph(resolved);

  for (const char* name :
       {"mask.csv", "topk.json", "loss_trace.csv", "correlation.json"}) {
    CHECK(fs::exists(out / name));
  }
  json topk = json::parse(slurp(out / "topk.json"));
  REQUIRE(topk["topk"].size() == 5);
  for (std::size_t i = 1; i < topk["topk"].size(); ++i) {
    CHECK(topk["topk"][i - 1]["mask_value"].get<double>() >=
          topk["topk"][i]["mask_value"].get<double>());
  }
  const std::string mask_csv = slurp(out / "mask.csv");
  CHECK(mask_csv.find("# config=") == 0);
  CHECK(mask_csv.find("hyperedge_id,vertex_id,mask_value") != std::string::npos);

  // topk 0 keeps the other artifacts intact.
  const fs::path out0 = fresh_dir("explain0");
  cli::Overrides overrides;
  overrides.topk = 0;
  overrides.out = out0.string();
  json resolved0 = cli::resolve_config(raw, "explain-graph", overrides);
  cli::cmd_explain_graph(resolved0);
  json topk0 = json::parse(slurp(out0 / "topk.json"));
  CHECK(topk0["topk"].empty());
  CHECK(fs::exists(out0 / "correlation.json"));
}

TEST_CASE("cmd_eval leaf sweeps emit one row per budget, reruns identical") {
  const fs::path out = fresh_dir("evalsweep");
  json raw{{"pipeline", "eval"},
           {"out", out.string()},
           {"seed", 3},
           {"eval",
            {{"mode", "leaf-sweep"},
             {"leaves", {2, 6, 10}},
             {"distill", tiny_distill_section()}}}};
  json resolved = cli::resolve_config(raw, "eval", {});
  cli::cmd_eval(resolved);
  json report = json::parse(slurp(out / "report.json"));
  REQUIRE(report["rows"].size() == 3);
  CHECK(report["rows"][0]["leaves"] == 2);
  CHECK(report["rows"][2]["leaves"] == 10);
  for (const auto& row : report["rows"]) {
    CHECK(row["actual_leaves"].get<int>() <= row["leaves"].get<int>());
  }

  const fs::path out2 = fresh_dir("evalsweep2");
  raw["out"] = out2.string();
  cli::cmd_eval(cli::resolve_config(raw, "eval", {}));
  json again = json::parse(slurp(out2 / "report.json"));
  report["config"].erase("out");
  again["config"].erase("out");
  CHECK(report == again);
}

TEST_CASE("run_command maps failures to exit codes") {
  CHECK(cli::run_command("distill", "/nonexistent/config.json", {}) == 2);

  const fs::path dir = fresh_dir("exitcodes");
  const fs::path bad_json = dir / "bad.json";
  std::ofstream(bad_json) << "{ not json";
  CHECK(cli::run_command("distill", bad_json.string(), {}) == 2);

  const fs::path bad_field = dir / "field.json";
  std::ofstream(bad_field) << R"({"pipeline":"distill","distill":{"gamma":7}})";
  CHECK(cli::run_command("distill", bad_field.string(), {}) == 2);

  const fs::path runtime = dir / "runtime.json";
  std::ofstream(runtime)
      << R"({"pipeline":"distill","out":")" << (dir / "out").string()
      << R"(","distill":{"train_traces":["csv:/missing/trace.csv"]}})";
  CHECK(cli::run_command("distill", runtime.string(), {}) == 1);

  const fs::path good = dir / "good.json";
  json raw{{"pipeline", "distill"},
           {"out", (dir / "ok").string()},
           {"distill", tiny_distill_section()}};
  std::ofstream(good) << raw.dump();
  CHECK(cli::run_command("distill", good.string(), {}) == 0);
}

}  // TEST_SUITE
