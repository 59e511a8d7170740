#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "qlsys/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Least energy solutions of coupled quasilinear elliptic systems on rectangles"};
  app.footer(qlsys::config_help());
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"certify", "sample the coefficient hypotheses of one family"},
      {"eigen", "principal Dirichlet eigenpair of the grid"},
      {"solve-scalar", "scalar ground state and level of one component"},
      {"solve-system", "least energy solution of the coupled system"},
      {"sweep", "one solve per coupling value in sweep.betas"}};
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "configuration file")->required();
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    seed_opts.push_back(sub->add_option("--seed", seed, "override solver.seed"));
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? qlsys::exit_ok : qlsys::exit_usage;
  }

  std::size_t which = 0;
  while (which < subs.size() && !subs[which]->parsed()) ++which;

  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "cannot read config " << config_path << "\n";
    return qlsys::exit_usage;
  }
  std::stringstream text;
  text << in.rdbuf();
  qlsys::RunConfig cfg;
  try {
    cfg = qlsys::parse_config(text.str());
  } catch (const qlsys::Error& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return qlsys::exit_usage;
  }
  if (seed_opts[which]->count() > 0) cfg.solver.seed = seed;
  return qlsys::run(commands[which].first, cfg, out_dir, std::cout, std::cerr);
}
