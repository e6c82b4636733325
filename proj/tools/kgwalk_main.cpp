#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kgwalk/commands.hpp"
#include "kgwalk/config.hpp"
#include "kgwalk/errors.hpp"

namespace {

using kgwalk::RunConfig;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> kg, cohort, snapshot_dir, report_dir;
    std::optional<int> horizon;
    std::optional<double> entropy_weight;
    std::optional<int> folds;
    std::optional<bool> exact;

    void apply(RunConfig& cfg) const {
        if (seed) cfg.seed = *seed;
        if (workers) cfg.workers = *workers;
        if (kg) cfg.paths.kg = *kg;
        if (cohort) cfg.paths.cohort = *cohort;
        if (snapshot_dir) cfg.paths.snapshot_dir = *snapshot_dir;
        if (report_dir) cfg.paths.report_dir = *report_dir;
        if (horizon) cfg.agent.horizon = *horizon;
        if (entropy_weight) cfg.agent.entropy_weight = *entropy_weight;
        if (folds) cfg.eval.folds = *folds;
        if (exact) cfg.inference.exact = *exact;
        cfg.validate();
    }
};

void add_common_options(CLI::App* cmd, std::string& config_path, Overrides& ov) {
    cmd->add_option("--config", config_path, "JSON config file; flags override its values");
    cmd->add_option("--seed", ov.seed, "RNG seed controlling every stage (default 7)");
    cmd->add_option("--workers", ov.workers,
                    "parallel workers for rollouts/gradients/prediction; 1 = serial reference (default 1)");
    cmd->add_option("--kg", ov.kg, "knowledge graph file (paths.kg)");
    cmd->add_option("--cohort", ov.cohort, "cohort file (paths.cohort)");
    cmd->add_option("--snapshot-dir", ov.snapshot_dir,
                    "snapshot directory (paths.snapshot_dir, default 'snapshots'; env KGWALK_SNAPSHOT_DIR overrides the config)");
    cmd->add_option("--report-dir", ov.report_dir, "report directory (paths.report_dir, default 'reports')");
    cmd->add_option("--horizon", ov.horizon, "walk length T (agent.horizon, default 2)");
    cmd->add_option("--alpha", ov.entropy_weight, "entropy weight (agent.entropy_weight, default 0.13)");
    cmd->add_option("--folds", ov.folds, "cross-validation folds (eval.folds, default 5)");
    cmd->add_flag("--exact,!--no-exact", ov.exact,
                  "force exact inference on/off (default: exact when horizon is 2 and the graph has <= 100 entities)");
}

RunConfig resolve_config(const std::string& config_path, const Overrides& ov) {
    RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
    cfg.apply_env();
    ov.apply(cfg);
    return cfg;
}

constexpr const char* kFooter = R"(config keys and defaults (JSON file, overridden by flags):
  seed=7  workers=1
  paths: kg, cohort, snapshot_dir=snapshots, report_dir=reports
  embeddings: hidden_units=32, autoencoder_hidden=64, epochs=100,
              learning_rate=0.001, cd_steps=1, batch_size=32
  agent: horizon=2, discount=0.99, entropy_weight=0.13, learning_rate=0.001,
         critic_weight=0.5, episodes_per_patient=4, epochs=20, batch_size=32,
         hidden1=64, hidden2=64, optimizer=adam|sgd
  inference: beam_widths=[8], exact (auto), min_edge_prob=0.1
  eval: folds=5
)";

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kgwalk: disease prediction with progression-path explanations over a knowledge graph"};
    app.require_subcommand(1);
    app.footer(kFooter);

    std::string config_path;
    Overrides ov;

    auto* validate = app.add_subcommand("validate", "load KG and cohort, cross-check names, print counts");
    add_common_options(validate, config_path, ov);

    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort with planted progression rules");
    add_common_options(synth, config_path, ov);
    kgwalk::cli::SynthArgs synth_args;
    synth->add_option("--patients", synth_args.patients, "patient count")->capture_default_str();
    synth->add_option("--noise", synth_args.noise, "spurious-label rate")->capture_default_str();
    synth->add_flag("--imbalance,!--no-imbalance", synth_args.imbalance,
                    "Zipf-imbalanced disease draws (default on)");
    synth->add_option("--out", synth_args.out, "output cohort file (defaults to paths.cohort)");

    auto* train = app.add_subcommand("train", "stage 1: RBM + autoencoder; stage 2: the walker agent");
    add_common_options(train, config_path, ov);
    std::string stage = "all";
    train->add_option("--stage", stage, "all | embeddings | agent")->capture_default_str();

    auto* predict = app.add_subcommand("predict", "rank diseases for one record; --explain exports paths");
    add_common_options(predict, config_path, ov);
    kgwalk::cli::PredictArgs predict_args;
    predict->add_option("--record", predict_args.record_file, "cohort-format file with the record")->required();
    predict->add_option("--index", predict_args.index, "record index within the file")->capture_default_str();
    predict->add_flag("--explain", predict_args.explain, "export progression paths");
    predict->add_option("--format", predict_args.format, "json | dot")->capture_default_str();
    predict->add_option("--min-edge-prob", predict_args.min_edge_prob,
                        "dot only: suppress transitions below this probability (default 0.1)");
    predict->add_option("--top", predict_args.top, "ranked diseases to print")->capture_default_str();

    auto* eval_cmd = app.add_subcommand("eval", "patient-level cross-validation with macro AUC and top-k hits");
    add_common_options(eval_cmd, config_path, ov);

    auto* sweep = app.add_subcommand("sweep", "cross-validate over a hyperparameter grid");
    add_common_options(sweep, config_path, ov);
    std::string axis = "horizon";
    sweep->add_option("--axis", axis, "horizon (T in {2,3,4,5}) | entropy (alpha in {0,0.01,0.1,1})")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);  // prints the message (or help text)
        return rc == 0 ? 0 : 1;
    }

    try {
        const RunConfig cfg = resolve_config(config_path, ov);
        if (validate->parsed()) kgwalk::cli::cmd_validate(cfg);
        if (synth->parsed()) kgwalk::cli::cmd_synth(cfg, synth_args);
        if (train->parsed()) {
            kgwalk::cli::TrainStage s;
            if (stage == "all") {
                s = kgwalk::cli::TrainStage::All;
            } else if (stage == "embeddings") {
                s = kgwalk::cli::TrainStage::Embeddings;
            } else if (stage == "agent") {
                s = kgwalk::cli::TrainStage::Agent;
            } else {
                throw kgwalk::UsageError("unknown --stage '" + stage + "'");
            }
            kgwalk::cli::cmd_train(cfg, s);
        }
        if (predict->parsed()) kgwalk::cli::cmd_predict(cfg, predict_args);
        if (eval_cmd->parsed()) kgwalk::cli::cmd_eval(cfg);
        if (sweep->parsed()) kgwalk::cli::cmd_sweep(cfg, axis);
    } catch (const kgwalk::UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const kgwalk::DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
