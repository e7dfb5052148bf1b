// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

// moflow: data generation, teacher training, sampling, distillation,
// evaluation and plotting.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "moflow/commands.hpp"
#include "moflow/errors.hpp"

namespace {

void print_report(const moflow::EvalReport& report) { std::cout << moflow::format_table(report); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MoFlow trajectory prediction workbench"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  int workers = 0;
  app.add_option("-c,--config", config_path, "run config (JSON)");
  app.add_option("--set", overrides, "override a config value, e.g. --set sampler.T=50")->take_all();
  app.add_option("--workers", workers, "scene-level worker threads")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-data", "write synthetic splits and a manifest");
  auto* train = app.add_subcommand("train-teacher", "train the flow-matching teacher");

  std::string checkpoint;
  std::string sample_split, eval_split, plot_split;
  auto* sample = app.add_subcommand("sample", "teacher ODE sampling over a split");
  sample->add_option("--checkpoint", checkpoint, "teacher checkpoint (default <run>/teacher.ckpt)");
  sample->add_option("--split", sample_split, "dataset split")->default_val("train");

  auto* distill = app.add_subcommand("distill", "IMLE distillation of the one-step student");

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a teacher or student checkpoint");
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint")->required();
  evaluate->add_option("--split", eval_split, "dataset split (default eval.split)");

  std::string samples_path;
  std::vector<std::string> scene_ids;
  std::string plot_dir;
  auto* plot = app.add_subcommand("plot", "render sampled scenes as SVG");
  plot->add_option("--samples", samples_path, "sample dump (samples.jsonl)")->required();
  plot->add_option("--split", plot_split, "split holding the scenes")->default_val("test");
  plot->add_option("--scene-id", scene_ids, "scenes to plot (default: all in the dump)");
  plot->add_option("--out", plot_dir, "output directory (default <run>/plots)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (workers > 0) overrides.push_back("workers=" + std::to_string(workers));
    const moflow::RunConfig config = moflow::load_run_config(config_path, overrides);

    if (gen->parsed()) {
      const auto m = moflow::cmd_gen_data(config);
      std::cout << "wrote " << config.manifest_path().string() << " (T_p=" << m.T_p << ", T_f=" << m.T_f << ")\n";
    } else if (train->parsed()) {
      const auto log = moflow::cmd_train_teacher(config);
      if (!log.empty()) std::printf("final loss %.6f after %ld steps\n", log.back().loss, log.back().step);
    } else if (sample->parsed()) {
      print_report(moflow::cmd_sample(config, checkpoint, sample_split));
    } else if (distill->parsed()) {
      const auto s = moflow::cmd_distill(config);
      std::printf("chamfer to teacher: %.6f -> %.6f\n", s.chamfer_init, s.chamfer_final);
    } else if (evaluate->parsed()) {
      print_report(moflow::cmd_evaluate(config, checkpoint, eval_split.empty() ? config.eval.split : eval_split));
    } else if (plot->parsed()) {
      const auto manifest = moflow::read_manifest(config.manifest_path());
      const auto scenes =
          moflow::read_scenes(moflow::split_path(manifest, config.manifest_path(), plot_split), manifest.format());
      const std::filesystem::path out = plot_dir.empty() ? config.run_dir() / "plots" : std::filesystem::path(plot_dir);
      const auto files = moflow::cmd_plot(samples_path, scenes, scene_ids, out);
      std::cout << "wrote " << files.size() << " plot(s) to " << out.string() << "\n";
    }
  } catch (const moflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
