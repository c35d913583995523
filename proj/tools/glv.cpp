#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "glv/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"glv: vortex states of the extreme type-II Ginzburg-Landau equation on a square"};
  std::string mode, config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  app.add_option("mode", mode, "solve | trace | diagram | eigen | verify")->required();
  app.add_option("--config", config, "JSON configuration file")->required();
  app.add_option("--out", out, "output directory (overrides the config)");
  app.add_option("--seed", seed, "random seed (overrides the config)");
  app.add_flag_callback("--version", [] {
    std::cout << "glv " << glv::run::kVersion << "\n";
    std::exit(0);
  }, "print the version and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const auto m = glv::run::parse_mode(mode);
    const auto cfg = glv::run::load_config(config, m, seed, out ? std::optional<std::filesystem::path>(*out) : std::nullopt);
    return glv::run::run(cfg, std::clog);
  } catch (const glv::run::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
