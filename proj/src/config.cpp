#include "kgwalk/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kgwalk/errors.hpp"
#include "kgwalk/rng.hpp"

namespace kgwalk {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!known.count(it.key()))
            throw UsageError("unknown config key '" + where + it.key() + "'");
    }
}

template <typename T>
void read(const json& obj, const char* key, T& value) {
    if (obj.contains(key)) value = obj.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_json_text(buffer.str(), path);
}

RunConfig RunConfig::from_json_text(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw UsageError(origin + ": " + e.what());
    }
    if (!doc.is_object()) throw UsageError(origin + ": config root must be a JSON object");

    RunConfig cfg;
    try {
        reject_unknown(doc, {"seed", "workers", "paths", "embeddings", "agent", "inference", "eval"}, "");
        read(doc, "seed", cfg.seed);
        read(doc, "workers", cfg.workers);
        if (doc.contains("paths")) {
            const json& p = doc.at("paths");
            reject_unknown(p, {"kg", "cohort", "snapshot_dir", "report_dir"}, "paths.");
            read(p, "kg", cfg.paths.kg);
            read(p, "cohort", cfg.paths.cohort);
            read(p, "snapshot_dir", cfg.paths.snapshot_dir);
            read(p, "report_dir", cfg.paths.report_dir);
        }
        if (doc.contains("embeddings")) {
            const json& e = doc.at("embeddings");
            reject_unknown(e, {"hidden_units", "autoencoder_hidden", "epochs", "learning_rate", "cd_steps", "batch_size"},
                           "embeddings.");
            read(e, "hidden_units", cfg.embeddings.hidden_units);
            read(e, "autoencoder_hidden", cfg.embeddings.autoencoder_hidden);
            read(e, "epochs", cfg.embeddings.epochs);
            read(e, "learning_rate", cfg.embeddings.learning_rate);
            read(e, "cd_steps", cfg.embeddings.cd_steps);
            read(e, "batch_size", cfg.embeddings.batch_size);
        }
        if (doc.contains("agent")) {
            const json& a = doc.at("agent");
            reject_unknown(a,
                           {"horizon", "discount", "entropy_weight", "learning_rate", "critic_weight",
                            "episodes_per_patient", "epochs", "batch_size", "hidden1", "hidden2", "optimizer"},
                           "agent.");
            read(a, "horizon", cfg.agent.horizon);
            read(a, "discount", cfg.agent.discount);
            read(a, "entropy_weight", cfg.agent.entropy_weight);
            read(a, "learning_rate", cfg.agent.learning_rate);
            read(a, "critic_weight", cfg.agent.critic_weight);
            read(a, "episodes_per_patient", cfg.agent.episodes_per_patient);
            read(a, "epochs", cfg.agent.epochs);
            read(a, "batch_size", cfg.agent.batch_size);
            read(a, "hidden1", cfg.agent.hidden1);
            read(a, "hidden2", cfg.agent.hidden2);
            read(a, "optimizer", cfg.agent.optimizer);
        }
        if (doc.contains("inference")) {
            const json& i = doc.at("inference");
            reject_unknown(i, {"beam_widths", "exact", "min_edge_prob"}, "inference.");
            read(i, "beam_widths", cfg.inference.beam_widths);
            if (i.contains("exact")) cfg.inference.exact = i.at("exact").get<bool>();
            read(i, "min_edge_prob", cfg.inference.min_edge_prob);
        }
        if (doc.contains("eval")) {
            const json& e = doc.at("eval");
            reject_unknown(e, {"folds"}, "eval.");
            read(e, "folds", cfg.eval.folds);
        }
    } catch (const json::exception& e) {
        throw UsageError(origin + ": " + e.what());
    }
    cfg.validate();
    return cfg;
}

void RunConfig::apply_env() {
    if (const char* dir = std::getenv("KGWALK_SNAPSHOT_DIR"); dir && *dir) paths.snapshot_dir = dir;
}

void RunConfig::validate() const {
    if (workers < 1) throw UsageError("workers must be >= 1");
    if (embeddings.hidden_units < 1) throw UsageError("embeddings.hidden_units must be >= 1");
    if (embeddings.autoencoder_hidden < 1) throw UsageError("embeddings.autoencoder_hidden must be >= 1");
    if (embeddings.epochs < 0) throw UsageError("embeddings.epochs must be >= 0");
    if (!(embeddings.learning_rate > 0)) throw UsageError("embeddings.learning_rate must be > 0");
    if (embeddings.cd_steps < 1) throw UsageError("embeddings.cd_steps must be >= 1");
    if (agent.horizon < 1) throw UsageError("agent.horizon must be >= 1");
    if (!(agent.discount > 0.0 && agent.discount <= 1.0)) throw UsageError("agent.discount must lie in (0,1]");
    if (agent.entropy_weight < 0) throw UsageError("agent.entropy_weight must be >= 0");
    if (!(agent.learning_rate > 0)) throw UsageError("agent.learning_rate must be > 0");
    if (agent.critic_weight < 0) throw UsageError("agent.critic_weight must be >= 0");
    if (agent.episodes_per_patient < 1) throw UsageError("agent.episodes_per_patient must be >= 1");
    if (agent.epochs < 0) throw UsageError("agent.epochs must be >= 0");
    if (agent.hidden1 < 1 || agent.hidden2 < 1) throw UsageError("agent hidden sizes must be >= 1");
    if (agent.optimizer != "adam" && agent.optimizer != "sgd")
        throw UsageError("agent.optimizer must be 'adam' or 'sgd'");
    for (int w : inference.beam_widths) {
        if (w < 1) throw UsageError("inference.beam_widths entries must be >= 1");
    }
    if (inference.beam_widths.empty()) throw UsageError("inference.beam_widths must not be empty");
    if (!(inference.min_edge_prob >= 0.0 && inference.min_edge_prob <= 1.0))
        throw UsageError("inference.min_edge_prob must lie in [0,1]");
    if (eval.folds < 2) throw UsageError("eval.folds must be >= 2");
}

bool RunConfig::use_exact_inference(int entity_count) const {
    if (inference.exact.has_value()) return *inference.exact;
    return agent.horizon == 2 && entity_count <= 100;
}

infer::BeamConfig RunConfig::beam_config(int entity_count) const {
    infer::BeamConfig cfg;
    cfg.horizon = agent.horizon;
    cfg.widths = inference.beam_widths;
    cfg.exact = use_exact_inference(entity_count);
    return cfg;
}

emb::RbmConfig RunConfig::rbm_config() const {
    emb::RbmConfig cfg;
    cfg.hidden_units = embeddings.hidden_units;
    cfg.epochs = embeddings.epochs;
    cfg.learning_rate = embeddings.learning_rate;
    cfg.cd_steps = embeddings.cd_steps;
    cfg.batch_size = embeddings.batch_size;
    cfg.seed = rng::mix(seed, 0x5bULL);
    return cfg;
}

emb::AeConfig RunConfig::ae_config() const {
    emb::AeConfig cfg;
    cfg.hidden_dim = embeddings.autoencoder_hidden;
    cfg.code_dim = embeddings.hidden_units;  // p_e fills the entity slot of the start state
    cfg.epochs = embeddings.epochs;
    cfg.learning_rate = embeddings.learning_rate;
    cfg.batch_size = embeddings.batch_size;
    cfg.seed = rng::mix(seed, 0xaeULL);
    return cfg;
}

agent::AgentConfig RunConfig::agent_config() const {
    agent::AgentConfig cfg;
    cfg.horizon = agent.horizon;
    cfg.discount = agent.discount;
    cfg.entropy_weight = agent.entropy_weight;
    cfg.critic_weight = agent.critic_weight;
    cfg.episodes_per_patient = agent.episodes_per_patient;
    cfg.epochs = agent.epochs;
    cfg.batch_size = agent.batch_size;
    cfg.hidden1 = agent.hidden1;
    cfg.hidden2 = agent.hidden2;
    cfg.optimizer.learning_rate = agent.learning_rate;
    cfg.optimizer.adaptive = agent.optimizer == "adam";
    cfg.seed = rng::mix(seed, 0xa6ULL);
    return cfg;
}

}  // namespace kgwalk
