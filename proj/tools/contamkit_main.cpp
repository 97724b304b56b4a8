#include <exception>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli_support.hpp"
#include "contamkit/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "contamkit — build contaminated finetuning mixtures and run the "
      "contamination-detection battery over text corpora and token traces"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expanded help for every subcommand");

  contamkit::cli::register_data_commands(app);
  contamkit::cli::register_detect_commands(app);
  contamkit::cli::register_eal_commands(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the usage message
    return 2;
  } catch (const contamkit::Error& e) {
    nlohmann::json err = {{"code", contamkit::to_string(e.code())},
                          {"message", e.what()},
                          {"context", e.context()}};
    std::cerr << err.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json err = {{"code", "internal"}, {"message", e.what()}, {"context", ""}};
    std::cerr << err.dump() << '\n';
    return 1;
  }
  return 0;
}
