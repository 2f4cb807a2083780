#include <iostream>

#include "CLI11.hpp"
#include "stabopt/commands.hpp"

using namespace stabopt;

int main(int argc, char** argv) {
  CLI::App app{"Stability-constrained topology optimization at finite strain"};
  app.require_subcommand(1);
  CommandOptions o;
  unsigned seed = 0;
  int workers = 1;
  double threshold = 0.5, fd_step = 1e-5;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "YAML run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out-dir", o.out_dir, "output directory (overrides output.directory)");
    sub->add_option("--seed", seed, "random seed (overrides analysis.seed)");
    sub->add_option("--workers", workers, "worker threads (overrides analysis.workers)")->check(CLI::PositiveNumber);
  };

  CLI::App* opt = app.add_subcommand("optimize", "run the optimization and export the design");
  add_common(opt);

  CLI::App* ana = app.add_subcommand("analyze", "equilibrium and eigen analysis of a density field");
  add_common(ana);
  ana->add_option("--density", o.density, "density grid CSV")->required()->check(CLI::ExistingFile);

  CLI::App* ver = app.add_subcommand("verify-sens", "check adjoint gradients against central differences");
  add_common(ver);
  ver->add_option("--density", o.density, "density grid CSV (default: seeded random field)")
      ->check(CLI::ExistingFile);
  ver->add_option("--fd-step", fd_step, "finite-difference step (overrides analysis.fd_step)");
  ver->add_option("--inject-fault", o.fault_kernel, "scale one gradient kernel (negative control)")
      ->check(CLI::IsMember({"compliance", "stiffness", "mass", "adjoint"}))
      ->group("");

  CLI::App* post = app.add_subcommand("post-buckle", "trace equilibrium paths of the thresholded design");
  add_common(post);
  post->add_option("--density", o.density, "density grid CSV")->required()->check(CLI::ExistingFile);
  post->add_option("--threshold", threshold, "solid level (overrides analysis.threshold)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  for (CLI::App* sub : {opt, ana, ver, post}) {
    if (!sub->parsed()) continue;
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--workers")) o.workers = workers;
  }
  if (post->parsed() && post->count("--threshold")) o.threshold = threshold;
  if (ver->parsed() && ver->count("--fd-step")) o.fd_step = fd_step;

  if (opt->parsed()) return cmd_optimize(o, std::cout);
  if (ana->parsed()) return cmd_analyze(o, std::cout);
  if (ver->parsed()) return cmd_verify_sens(o, std::cout);
  return cmd_post_buckle(o, std::cout);
}
