#include "driftguard/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace dg = driftguard;

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string out = ".";
  std::string seeds;
  std::string format = "binary";
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "flat JSON config file");
  cmd->add_option("--set", a.sets, "override a config key (key=value)")->take_all();
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--seeds", a.seeds, "comma-separated seeds, e.g. 1,2,3");
  cmd->add_option("--format", a.format, "embedding file format")->check(CLI::IsMember({"binary", "csv"}));
}

dg::CommandContext context(const CommonArgs& a) {
  auto ctx = dg::make_context(a.config, a.sets, a.seeds, a.out, dg::format_from_string(a.format));
  ctx.log = &std::cerr;
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driftguard: one-class anomaly detection under domain shift"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string checkpoint;
  std::vector<std::string> inputs;

  auto* gen = app.add_subcommand("gen", "write synthetic source/target embeddings and a labels sidecar");
  auto* train = app.add_subcommand("train", "train one detector; writes checkpoint and epoch log");
  auto* eval = app.add_subcommand("eval", "score the target with a checkpoint");
  auto* sweep_ratio = app.add_subcommand("sweep-ratio", "AUC and cluster accuracy against anomaly ratio");
  auto* sweep_k = app.add_subcommand("sweep-k", "AUC against the number of clusters");
  auto* ablate = app.add_subcommand("ablate", "component, alignment and clustering ablation grid");
  auto* report = app.add_subcommand("export-report", "collect report JSON files into CSV and markdown");
  for (auto* c : {gen, train, eval, sweep_ratio, sweep_k, ablate, report}) add_common(c, common);
  eval->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required();
  report->add_option("inputs", inputs, "report files or directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const dg::CommandContext ctx = context(common);
    if (gen->parsed()) {
      dg::cmd_gen(ctx);
    } else if (train->parsed()) {
      dg::cmd_train(ctx);
    } else if (eval->parsed()) {
      const auto j = dg::cmd_eval(ctx, checkpoint);
      if (!j["auc"].is_null()) std::cout << "auc " << dg::format_number(j["auc"]["mean"].get<double>()) << "\n";
    } else if (sweep_ratio->parsed()) {
      dg::cmd_sweep_ratio(ctx);
    } else if (sweep_k->parsed()) {
      dg::cmd_sweep_k(ctx);
    } else if (ablate->parsed()) {
      dg::cmd_ablate(ctx);
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
      dg::cmd_export_report(ctx, paths);
    }
  } catch (const dg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
