#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "backstep/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"boundary feedback design for counterconvecting transport systems"};
  app.require_subcommand(1);

  backstep::RunManifest man;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", man.config_path, "config file (JSON)");
    sub->add_option("--out", man.out_dir, "output directory");
    sub->add_option("--grid", man.grid_m, "state grid cells");
    sub->add_option("--kernel-grid", man.kernel_m, "kernel grid cells");
    sub->add_option("--tfinal", man.t_final, "simulation horizon");
    sub->add_option("--cfl", man.cfl, "CFL number");
    sub->add_option("--controller", man.controller, "boundary input")
        ->check(CLI::IsMember({"open", "backstep", "zero"}));
    sub->add_option("--ic", man.ic, "initial condition preset");
    sub->add_option("--stride", man.stride, "snapshot stride");
    sub->add_option("--seed", man.seed, "seed for random test states");
    sub->add_flag("--svg", man.svg, "also write line-plot SVGs");
  };
  add_common(app.add_subcommand("check", "validate a config and report its properties"));
  add_common(app.add_subcommand("kernels", "solve the design kernels and export them"));
  add_common(app.add_subcommand("simulate", "run the closed or open loop"));
  add_common(app.add_subcommand("verify", "kernel, transform and decay diagnostics"));
  add_common(app.add_subcommand("obstruct", "demonstrate the uncontrollable subspace"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  man.subcommand = app.get_subcommands().front()->get_name();
  return backstep::run_manifest(man, std::cout);
}
