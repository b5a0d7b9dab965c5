// speechface command-line front end: prepare-data, train-cpc,
// train-distill, train-composer, generate, evaluate. One command per
// process; every command is driven by a plain-text config file so runs
// stay archivable and diffable.

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "speechface/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissingDependency = 3;
constexpr int kExitNumerical = 4;

struct CommonArgs {
  std::string config_path;
  bool force = false;
};

void add_config_option(CLI::App* cmd, CommonArgs& args, bool with_force = true) {
  cmd->add_option("--config", args.config_path, "run configuration file")->required();
  if (with_force) {
    cmd->add_flag("--force", args.force, "re-run the stage even if the manifest marks it done");
  }
}

void report_stage(const std::string& name, bool ran) {
  if (ran) {
    std::cout << name << ": done\n";
  } else {
    std::cout << name << ": already complete, skipped (use --force to re-run)\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speech-to-talking-face pipeline"};
  app.require_subcommand(1);

  CommonArgs prep_args, cpc_args, distill_args, composer_args, gen_args, eval_args;
  std::string cpc_ckpt_override;
  std::string gen_audio, gen_out;
  std::string eval_generated, eval_reference, eval_out = "report.json";

  CLI::App* prep = app.add_subcommand("prepare-data", "synthesize or index the dataset and split");
  add_config_option(prep, prep_args);

  CLI::App* cpc = app.add_subcommand("train-cpc", "train the contrastive audio encoder");
  add_config_option(cpc, cpc_args);

  CLI::App* distill = app.add_subcommand("train-distill", "distill identity/emotion students");
  add_config_option(distill, distill_args);
  distill->add_option("--cpc", cpc_ckpt_override, "CPC checkpoint (defaults to this run's)");

  CLI::App* composer = app.add_subcommand("train-composer", "adversarial frame generator training");
  add_config_option(composer, composer_args);

  CLI::App* gen = app.add_subcommand("generate", "synthesize a talking-face clip from speech");
  add_config_option(gen, gen_args, /*with_force=*/false);
  gen->add_option("--audio", gen_audio, "raw float32 mono file or clip directory")->required();
  gen->add_option("--out", gen_out, "output frame directory")->required();

  CLI::App* eval = app.add_subcommand("evaluate", "score a generated clip against a reference");
  add_config_option(eval, eval_args, /*with_force=*/false);
  eval->add_option("--generated", eval_generated, "generated frame directory")->required();
  eval->add_option("--reference", eval_reference, "reference frame directory")->required();
  eval->add_option("--out", eval_out, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (prep->parsed()) {
      speechface::Pipeline p(speechface::parse_run_config(prep_args.config_path));
      report_stage("prepare-data", p.prepare_data(prep_args.force));
    } else if (cpc->parsed()) {
      speechface::Pipeline p(speechface::parse_run_config(cpc_args.config_path));
      report_stage("train-cpc", p.train_cpc_stage(cpc_args.force));
    } else if (distill->parsed()) {
      speechface::Pipeline p(speechface::parse_run_config(distill_args.config_path));
      if (!cpc_ckpt_override.empty()) p.override_cpc_checkpoint(cpc_ckpt_override);
      report_stage("train-distill", p.train_distill_stage(distill_args.force));
    } else if (composer->parsed()) {
      speechface::Pipeline p(speechface::parse_run_config(composer_args.config_path));
      report_stage("train-composer", p.train_composer_stage(composer_args.force));
    } else if (gen->parsed()) {
      speechface::Pipeline p(speechface::parse_run_config(gen_args.config_path));
      p.generate(gen_audio, gen_out);
      std::cout << "generate: wrote frames to " << gen_out << "\n";
    } else if (eval->parsed()) {
      speechface::Pipeline p(speechface::parse_run_config(eval_args.config_path));
      const speechface::EvalReport r = p.evaluate(eval_generated, eval_reference, eval_out);
      std::cout << "evaluate: ssim=" << r.ssim << " psnr=" << r.psnr;
      if (r.has_sync) std::cout << " sync_confidence=" << r.sync_confidence;
      std::cout << " (report: " << eval_out << ")\n";
    }
  } catch (const speechface::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const speechface::MissingDependencyError& e) {
    std::cerr << "missing dependency: " << e.what() << "\n";
    return kExitMissingDependency;
  } catch (const speechface::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
