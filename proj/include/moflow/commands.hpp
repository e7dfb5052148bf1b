// Copyright 2026 The MoFlow Workbench Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "moflow/checkpoint.hpp"
#include "moflow/config.hpp"
#include "moflow/metrics.hpp"

namespace moflow {

// Artifacts of a run live under RunConfig::run_dir():
//   config.json, manifest.json, data/{train,val,test}.jsonl,
//   teacher.ckpt, train_log.jsonl, student.ckpt, distill_log.jsonl,
//   distill_summary.json, sample/<split>/, evaluate/<kind>-<split>/.
// Sampling and evaluation directories hold samples.jsonl, report.json,
// report.txt and timing.json. Wallclock figures only go to timing.json and
// log records, so every other file is reproducible byte for byte.

/// Writes synthetic train/val/test splits and their manifest.
DatasetManifest cmd_gen_data(const RunConfig& config);

/// Trains the teacher on the train split; writes teacher.ckpt and train_log.jsonl.
std::vector<TrainLogRecord> cmd_train_teacher(const RunConfig& config);

/// Teacher ODE sampling over a split; returns the report it writes.
EvalReport cmd_sample(const RunConfig& config, const std::filesystem::path& checkpoint, const std::string& split);

struct DistillSummary {
  double chamfer_init = 0.0;   // mean chamfer-to-teacher before training
  double chamfer_final = 0.0;  // and after
  long steps = 0;
};

/// IMLE distillation of a student from cached teacher samples on the train split.
DistillSummary cmd_distill(const RunConfig& config);

/// One-step (student) or ODE (teacher) evaluation, chosen by the checkpoint kind.
/// Refuses checkpoints whose architecture disagrees with the config.
EvalReport cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint, const std::string& split);

/// Renders one SVG per scene: past solid, predictions dotted, ground truth
/// dashed; the component with the lowest joint ADE is drawn in pink.
/// An empty id list plots every scene in the dump. Returns the files written.
std::vector<std::filesystem::path> cmd_plot(const std::filesystem::path& sample_dump, const std::vector<Scene>& scenes,
                                            const std::vector<std::string>& scene_ids,
                                            const std::filesystem::path& out_dir);

/// SVG document for one scene and its sample.
std::string render_svg(const Scene& scene, const SceneSample& sample);

/// Raises ConfigError naming each architecture field that differs.
void check_architecture(const Network& network, const RunConfig& config, const DatasetManifest& manifest);

/// Prediction callables used by sampling and evaluation. Scene noise seeds
/// derive from (root seed, scene index), so batching does not change results.
Predictor teacher_predictor(const Network& teacher, const Normalizer& norm, const SamplerConfig& sampler,
                            std::uint64_t seed);
Predictor student_predictor(const Network& student, const Normalizer& norm, std::uint64_t seed);

}  // namespace moflow
