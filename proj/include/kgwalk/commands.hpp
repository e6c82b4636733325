#pragma once

#include <optional>
#include <string>

#include "kgwalk/config.hpp"

namespace kgwalk::cli {

/// Loads the KG and cohort, cross-checks entity-name resolution, and prints
/// count summaries. Unresolved names are all listed before failing.
void cmd_validate(const RunConfig& cfg);

struct SynthArgs {
    int patients = 2000;
    double noise = 0.1;
    bool imbalance = true;
    std::optional<std::string> out;  // defaults to paths.cohort
};
void cmd_synth(const RunConfig& cfg, const SynthArgs& args);

enum class TrainStage { All, Embeddings, Agent };
void cmd_train(const RunConfig& cfg, TrainStage stage);

struct PredictArgs {
    std::string record_file;
    int index = 0;
    bool explain = false;
    std::string format = "json";  // or "dot"
    std::optional<double> min_edge_prob;
    int top = 10;
};
void cmd_predict(const RunConfig& cfg, const PredictArgs& args);

void cmd_eval(const RunConfig& cfg);

void cmd_sweep(const RunConfig& cfg, const std::string& axis);

}  // namespace kgwalk::cli
