#include "gdmd/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace pl = gdmd::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"graphdmd: dynamic modes of time-varying graphs"};
  app.require_subcommand(1);

  struct Args {
    std::string config;
    std::string out;
  };
  std::vector<std::pair<std::string, CLI::App*>> commands;
  std::vector<Args> args(pl::command_names().size());
  const std::vector<std::string> help{
      "simulated recovery study: PCA, ICA and GraphDMD against planted modes",
      "sliding-window correlation graphs per subject",
      "dnfc, linear or deep GraphDMD, then binning, clustering and alignment",
      "train one Koopman autoencoder per subject",
      "binning, clustering and cross-subject alignment of existing modes",
      "cross-validated elastic-net prediction of behavioral scores",
      "SVG heatmap of a matrix CSV or a mode"};
  for (std::size_t i = 0; i < pl::command_names().size(); ++i) {
    auto* sub = app.add_subcommand(pl::command_names()[i], help[i]);
    sub->add_option("--config", args[i].config, "JSON configuration file (defaults when omitted)");
    sub->add_option("--out", args[i].out, "output directory")->required();
    commands.emplace_back(pl::command_names()[i], sub);
  }
  auto* schema = app.add_subcommand("schema", "print the configuration schema");
  auto* show = app.add_subcommand("config", "print the canonical form of a configuration");
  std::string show_path;
  show->add_option("--config", show_path, "JSON configuration file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"stage", "cli"}, {"code", "Config"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  if (schema->parsed()) {
    std::cout << pl::config_schema().dump(2) << "\n";
    return 0;
  }
  if (show->parsed()) {
    try {
      auto cfg = pl::load_config(show_path);
      pl::apply_env_overrides(cfg);
      std::cout << pl::serialize(cfg);
      return 0;
    } catch (const gdmd::Error& e) {
      std::cerr << nlohmann::json{{"stage", "config"}, {"code", gdmd::to_string(e.code())}, {"message", e.what()}}.dump()
                << "\n";
      return 2;
    }
  }
  for (std::size_t i = 0; i < commands.size(); ++i)
    if (commands[i].second->parsed()) return pl::run(commands[i].first, args[i].config, args[i].out, std::cerr);
  return 2;
}
