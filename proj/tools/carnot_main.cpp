// carnot: desk-scale verification runner for residue functionals on model
// Carnot manifolds. See README.md for the verbs, config keys and artifact
// formats.

#include <iostream>
#include <string>
#include <vector>

#include "carnot/cli_runner.hpp"

namespace {

void usage(std::ostream& os) {
  os << "usage: carnot <verb> [--config FILE] [key=value ...]\n"
     << "verbs:\n";
  for (const auto& v : carnot::cli::kVerbs) os << "  " << v << "\n";
  os << "exit codes: 0 pass, 1 tolerance failure, 2 usage/config error,\n"
     << "            3 numerical non-convergence\n";
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    usage(std::cerr);
    return 2;
  }
  const std::string verb = argv[1];
  if (verb == "--help" || verb == "-h" || verb == "help") {
    usage(std::cout);
    return 0;
  }

  std::string config_path;
  std::vector<std::string> overrides;
  for (int i = 2; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config") {
      if (i + 1 >= argc) {
        std::cerr << "error: --config needs a path\n";
        return 2;
      }
      config_path = argv[++i];
    } else if (arg.find('=') != std::string::npos) {
      overrides.push_back(arg);
    } else {
      std::cerr << "error: expected key=value, got '" << arg << "'\n";
      usage(std::cerr);
      return 2;
    }
  }

  bool known = false;
  for (const auto& v : carnot::cli::kVerbs) known = known || v == verb;
  if (!known) {
    std::cerr << "error: unknown verb '" << verb << "'\n";
    usage(std::cerr);
    return 2;
  }

  try {
    const auto cfg = carnot::ExperimentConfig::parse(config_path, overrides);
    return carnot::cli::run_verb(verb, cfg, std::cout);
  } catch (const carnot::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
