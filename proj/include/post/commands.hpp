#pragma once

// The four pipeline commands behind the CLI: benchmark generation, training,
// score export, and evaluation. Each takes a JSON config (unknown keys
// rejected), writes its outputs under output_dir, and echoes the fully
// resolved config so a run can be reproduced from its own output directory.

#include <iosfwd>
#include <string>

#include <json.hpp>

namespace post {

// Builds a synthetic benchmark (train/test series, labels, manifest, event
// log) from a sine-mixture source or an existing labeled dataset.
void run_generate(const nlohmann::json& cfg, std::ostream& out);

// Trains a model on the manifest's training split and saves a checkpoint
// plus an epoch-by-epoch training log.
void run_train(const nlohmann::json& cfg, std::ostream& out);

// Scores the test split with a trained checkpoint and dumps score matrices
// plus the calibrated threshold.
void run_score(const nlohmann::json& cfg, std::ostream& out);

// Point-adjusted metrics, PR curves, and optional association/graph dumps.
void run_eval(const nlohmann::json& cfg, std::ostream& out);

// Parses "a.b.c=value" into a nested JSON override (value parsed as JSON
// when possible, else kept as a string).
nlohmann::json parse_override(const std::string& assignment);

// Deep-merges overrides into base (objects merge, scalars/arrays replace).
void merge_config(nlohmann::json& base, const nlohmann::json& overrides);

}  // namespace post
