#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "transferlab/error.hpp"
#include "transferlab/pipeline.hpp"
#include "transferlab/runtime.hpp"

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kGate = 3, kCuration = 4, kAttack = 5, kFormat = 6 };

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, radii, attacks, models;
};

tl::RunConfig resolve(const Flags& f) {
  tl::RunConfig cfg;
  if (!f.config.empty()) cfg = tl::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.radii) cfg.set("radii", *f.radii);
  if (f.attacks) cfg.set("attacks", *f.attacks);
  if (f.models) cfg.set("models", *f.models);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  tl::keep_heap_mapped();
  CLI::App app{"Adversarial transferability lab"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags flags;
  app.add_option("--config", flags.config, "key=value config file or a run manifest")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "seed for data, training and attacks");
  app.add_option("--out", flags.out, "output directory");
  app.add_option("--radii", flags.radii, "comma-separated L-inf clip radii");
  app.add_option("--attacks", flags.attacks, "comma-separated attacks: fgsm,ifgsm,cw");
  app.add_option("--models", flags.models, "comma-separated roster models");
  for (auto* opt : app.get_options()) opt->configurable(false);

  auto* gen = app.add_subcommand("gen-data", "generate the training and pool datasets");
  auto* train = app.add_subcommand("train", "train and gate the networks");
  auto* curate = app.add_subcommand("curate", "keep pool images every model classifies confidently");
  auto* run = app.add_subcommand("run", "attack, postprocess, evaluate and write reports");
  auto* report = app.add_subcommand("report", "rebuild aggregate reports from the emitted CSVs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  tl::RunConfig cfg;
  try {
    cfg = resolve(flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  const tl::ProgressFn log = [](const std::string& line) { std::cerr << line << "\n"; };
  try {
    if (gen->parsed()) tl::stage_gen_data(cfg, log);
    if (train->parsed()) tl::stage_train(cfg, log);
    if (curate->parsed()) tl::stage_curate(cfg, log);
    if (run->parsed()) {
      const int failures = tl::stage_run(cfg, log);
      if (failures > 0) {
        std::cerr << "error: attacks failed on " << failures << " images\n";
        return kAttack;
      }
    }
    if (report->parsed()) tl::stage_report(cfg, log);
  } catch (const tl::GateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kGate;
  } catch (const tl::CurationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCuration;
  } catch (const tl::AttackError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAttack;
  } catch (const tl::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}
