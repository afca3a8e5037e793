// trident <subcommand> --config PATH [--set key=value ...]

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trident/pipeline.hpp"

int main(int argc, char** argv) {
  namespace pl = trident::pipeline;
  CLI::App app{"Triangular bidword generation"};
  app.set_help_flag("-h,--help", "Show help");

  std::string command;
  std::string config;
  std::vector<std::string> overrides;
  app.add_option("command", command,
                 "gen-data | train | generate | evaluate | sweep-aq-size | ablate-beam")
      ->required();
  app.add_option("--config", config, "JSON run config")->required();
  app.add_option("--set", overrides, "Override a config value, e.g. train.lambda=0.5")
      ->allow_extra_args(false);
  app.footer(std::string("Relative output_dir values resolve against $") + pl::kOutputRootEnv +
             " when it is set.\nExit codes: 0 ok, 2 usage, 3 invalid config, "
             "4 missing checkpoint, 5 other failure.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return pl::kExitUsage;
  }
  return pl::run_command(command, config, overrides, std::cerr);
}
