#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metiskit/abr.hpp"
#include "metiskit/distill.hpp"

namespace metiskit::cli {

struct Overrides {
  std::optional<int> leaves;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<std::uint64_t> seed;
  std::optional<int> topk;
  std::optional<std::string> out;
};

// Parses, strictly validates (unknown keys rejected) and fills defaults.
// Throws ConfigError with the offending field path.
nlohmann::json resolve_config(const nlohmann::json& raw,
                              const std::string& pipeline,
                              const Overrides& overrides);

nlohmann::json load_config_file(const std::string& path);

// Expands trace spec strings ("fixed:3000", "step", "markov", "csv:<path>",
// "suite:<count>") into concrete traces. Seeds derive from (seed, tag, index).
std::vector<BandwidthTrace> expand_traces(const std::vector<std::string>& specs,
                                          std::uint64_t seed, std::uint64_t tag);

// Command entry points; return the process exit code (0 ok, 1 runtime,
// 2 config). `command` is one of distill | explain-graph | eval.
int run_command(const std::string& command, const std::string& config_path,
                const Overrides& overrides);

// Lower-level entry points used by tests; throw on failure.
void cmd_distill(const nlohmann::json& resolved);
void cmd_explain_graph(const nlohmann::json& resolved);
void cmd_eval(const nlohmann::json& resolved);

}  // namespace metiskit::cli
