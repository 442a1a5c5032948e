// boundcf: train | boundary | explain | evaluate | run, each driven by --config.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "boundcf/errors.hpp"
#include "boundcf/pipeline.hpp"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> beta;
  std::optional<double> alpha;
  std::optional<std::string> mode;
  std::optional<std::string> norm;
  std::optional<std::string> output_dir;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)")->required();
  cmd->add_option("--seed", o.seed, "Base seed; derives the data/classifier/boundary/simulator seeds");
  cmd->add_option("--beta", o.beta, "Bisection gap threshold");
  cmd->add_option("--alpha", o.alpha, "Adversarial weight of the boundary autoencoders");
  cmd->add_option("--mode", o.mode, "Intervention mode")
      ->check(CLI::IsMember({"minimal", "constrained", "both"}));
  cmd->add_option("--norm", o.norm, "Distance normalisation for minimal mode")
      ->check(CLI::IsMember({"minmax", "literal"}));
  cmd->add_option("--output-dir", o.output_dir, "Override the config's output directory");
  cmd->add_flag("-q,--quiet", o.quiet, "Suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual explanations from an approximated decision boundary"};
  app.require_subcommand(1);
  Options opts;
  struct Stage {
    const char* name;
    const char* help;
  };
  const Stage stages[] = {
      {"train", "Train the classifier and the external simulators"},
      {"boundary", "Build the critical set from the trained classifier"},
      {"explain", "Generate counterfactual explanations for the selected cases"},
      {"evaluate", "Score the explanations and write the report"},
      {"run", "train, boundary, explain and evaluate in sequence"},
  };
  for (const auto& s : stages) add_common(app.add_subcommand(s.name, s.help), opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  namespace pl = boundcf::pipeline;
  pl::Overrides ov;
  ov.seed = opts.seed;
  ov.beta = opts.beta;
  ov.alpha = opts.alpha;
  ov.mode = opts.mode;
  ov.norm = opts.norm;
  if (opts.output_dir) ov.output_dir = std::filesystem::absolute(*opts.output_dir);

  std::ostream null_stream(nullptr);
  std::ostream& log = opts.quiet ? null_stream : std::cout;
  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const auto config = pl::load_config(opts.config, ov);
    if (cmd == "train") pl::cmd_train(config, log);
    else if (cmd == "boundary") pl::cmd_boundary(config, log);
    else if (cmd == "explain") pl::cmd_explain(config, log);
    else if (cmd == "evaluate") pl::cmd_evaluate(config, log);
    else pl::cmd_run(config, log);
    log << "outputs: " << config.run_dir().string() << "\n";
  } catch (const boundcf::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const boundcf::RuntimeFailure& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
