#include "ovf/runner.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

int run_with_config(ovf::bench::RunConfig cfg) {
  ovf::bench::RunSummary s = ovf::bench::run_experiment(cfg);
  std::printf("method=%s seed=%llu out=%s\n", s.method.c_str(),
              static_cast<unsigned long long>(s.seed), cfg.out_dir.c_str());
  if (std::isfinite(s.kf_loglik)) std::printf("kf_loglik=%.6f\n", s.kf_loglik);
  if (std::isfinite(s.mean_rmse)) std::printf("mean_rmse=%.6f\n", s.mean_rmse);
  if (std::isfinite(s.final_elbo)) std::printf("final_elbo=%.6f\n", s.final_elbo);
  if (std::isfinite(s.final_relbo)) std::printf("final_relbo=%.6f\n", s.final_relbo);
  if (s.aborted) {
    std::fprintf(stderr, "run aborted: %s\n", s.error.c_str());
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online variational filtering benchmark runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir, method_override;
  std::int64_t seed_override = -1;
  bool paper_scale = false;

  CLI::App* run = app.add_subcommand("run", "run one experiment from a config file");
  run->add_option("--config", config_path, "path to key=value config")->required();
  run->add_option("--seed", seed_override, "override run.seed");
  run->add_option("--out", out_dir, "override run.out_dir");
  run->add_option("--method", method_override, "override method");
  run->add_flag("--paper-scale", paper_scale, "use published budgets");

  CLI::App* oracle = app.add_subcommand("oracle", "exact references");
  CLI::App* kalman = oracle->add_subcommand("kalman", "Kalman filter oracle for a config");
  kalman->add_option("--config", config_path, "path to key=value config")->required();
  kalman->add_option("--seed", seed_override, "override run.seed");
  kalman->add_option("--out", out_dir, "override run.out_dir");

  CLI::App* reference =
      app.add_subcommand("config-reference", "print every config key with its default");

  CLI11_PARSE(app, argc, argv);

  try {
    if (reference->parsed()) {
      std::cout << ovf::bench::config_reference();
      return 0;
    }
    ovf::bench::RunConfig cfg = ovf::bench::load_config(config_path);
    if (seed_override >= 0) {
      cfg.seed = static_cast<std::uint64_t>(seed_override);
      cfg.eng.seed = cfg.seed;
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!method_override.empty())
      cfg.method = ovf::bench::method_from_name(method_override);
    if (paper_scale) cfg.paper_scale = true;
    if (kalman->parsed()) cfg.method = ovf::bench::Method::Kf;
    cfg.validate();
    return run_with_config(cfg);
  } catch (const ovf::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const ovf::Error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
