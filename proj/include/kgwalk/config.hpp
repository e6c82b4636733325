#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kgwalk/agent.hpp"
#include "kgwalk/cohort.hpp"
#include "kgwalk/embeddings.hpp"
#include "kgwalk/inference.hpp"

namespace kgwalk {

/// Whole-pipeline configuration. Every field has a default; a JSON config
/// file overrides defaults, the KGWALK_SNAPSHOT_DIR environment variable
/// overrides the snapshot directory, and command-line flags override
/// everything. Unknown keys in the file are rejected.
struct RunConfig {
    std::uint64_t seed = 7;
    int workers = 1;

    struct Paths {
        std::string kg;
        std::string cohort;
        std::string snapshot_dir = "snapshots";
        std::string report_dir = "reports";
    } paths;

    struct Embeddings {
        int hidden_units = 32;  // RBM hidden count k; also the autoencoder code width
        int autoencoder_hidden = 64;
        int epochs = 100;
        double learning_rate = 1e-3;
        int cd_steps = 1;
        int batch_size = 32;
    } embeddings;

    struct Agent {
        int horizon = 2;
        double discount = 0.99;
        double entropy_weight = 0.13;
        double learning_rate = 1e-3;
        double critic_weight = 0.5;
        int episodes_per_patient = 4;
        int epochs = 20;
        int batch_size = 32;
        int hidden1 = 64;
        int hidden2 = 64;
        std::string optimizer = "adam";  // or "sgd"
    } agent;

    struct Inference {
        std::vector<int> beam_widths = {8};
        std::optional<bool> exact;  // unset: exact when horizon == 2 and m <= 100
        double min_edge_prob = 0.1;
    } inference;

    struct Eval {
        int folds = 5;
    } eval;

    /// Defaults only.
    RunConfig() = default;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_json_text(const std::string& text, const std::string& origin);

    void apply_env();  // KGWALK_SNAPSHOT_DIR
    void validate() const;

    bool use_exact_inference(int entity_count) const;
    infer::BeamConfig beam_config(int entity_count) const;
    emb::RbmConfig rbm_config() const;
    emb::AeConfig ae_config() const;
    agent::AgentConfig agent_config() const;
};

}  // namespace kgwalk
