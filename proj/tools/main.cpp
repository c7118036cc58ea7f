#include <string>

#include "CLI11.hpp"
#include "metiskit/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Policy-to-tree conversion and hypergraph mask explanations"};
  app.require_subcommand(1);

  struct CommandArgs {
    std::string config;
    metiskit::cli::Overrides overrides;
  };

  auto add_common = [](CLI::App* cmd, CommandArgs& args) {
    cmd->add_option("--config", args.config, "Run configuration JSON")
        ->required();
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&args](std::uint64_t v) { args.overrides.seed = v; },
        "Override the config seed");
    cmd->add_option_function<std::string>(
        "--out", [&args](const std::string& v) { args.overrides.out = v; },
        "Override the output directory");
  };

  CommandArgs distill_args;
  CLI::App* distill = app.add_subcommand("distill", "Convert a policy into a tree");
  add_common(distill, distill_args);
  distill->add_option_function<int>(
      "--leaves", [&](int v) { distill_args.overrides.leaves = v; },
      "Leaf budget for the pruned tree");

  CommandArgs explain_args;
  CLI::App* explain =
      app.add_subcommand("explain-graph", "Optimize a hypergraph mask");
  add_common(explain, explain_args);
  explain->add_option_function<double>(
      "--lambda1", [&](double v) { explain_args.overrides.lambda1 = v; },
      "Conciseness weight");
  explain->add_option_function<double>(
      "--lambda2", [&](double v) { explain_args.overrides.lambda2 = v; },
      "Determinism weight");
  explain->add_option_function<int>(
      "--topk", [&](int v) { explain_args.overrides.topk = v; },
      "Connections in the top-k report");

  CommandArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Comparison and sweep reports");
  add_common(eval, eval_args);
  eval->add_option_function<int>(
      "--leaves", [&](int v) { eval_args.overrides.leaves = v; },
      "Leaf budget override for nested distill runs");
  eval->add_option_function<double>(
      "--lambda1", [&](double v) { eval_args.overrides.lambda1 = v; },
      "Conciseness weight override");
  eval->add_option_function<double>(
      "--lambda2", [&](double v) { eval_args.overrides.lambda2 = v; },
      "Determinism weight override");

  CLI11_PARSE(app, argc, argv);

  if (distill->parsed()) {
    return metiskit::cli::run_command("distill", distill_args.config,
                                      distill_args.overrides);
  }
  if (explain->parsed()) {
    return metiskit::cli::run_command("explain-graph", explain_args.config,
                                      explain_args.overrides);
  }
  return metiskit::cli::run_command("eval", eval_args.config, eval_args.overrides);
}
