#include "kgwalk/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "kgwalk/agent.hpp"
#include "kgwalk/cohort.hpp"
#include "kgwalk/embeddings.hpp"
#include "kgwalk/errors.hpp"
#include "kgwalk/eval.hpp"
#include "kgwalk/inference.hpp"
#include "kgwalk/rng.hpp"
#include "kgwalk/snapshot.hpp"

namespace kgwalk::cli {

namespace fs = std::filesystem;

namespace {

KnowledgeGraph load_kg_checked(const RunConfig& cfg) {
    if (cfg.paths.kg.empty()) throw UsageError("no knowledge graph file configured (paths.kg)");
    return KnowledgeGraph::load(cfg.paths.kg);
}

std::vector<cohort::RawAdmission> load_cohort_checked(const RunConfig& cfg) {
    if (cfg.paths.cohort.empty()) throw UsageError("no cohort file configured (paths.cohort)");
    return cohort::load_admissions(cfg.paths.cohort);
}

void print_kg_summary(const KnowledgeGraph& kg, const std::string& path) {
    int diseases = 0, categories = 0, risk_factors = 0;
    for (const Entity& e : kg.entities()) {
        switch (e.kind) {
            case EntityKind::Disease: ++diseases; break;
            case EntityKind::DiseaseCategory: ++categories; break;
            case EntityKind::RiskFactor: ++risk_factors; break;
        }
    }
    std::printf("knowledge graph: %s\n", path.c_str());
    std::printf("  entities             %d (%d disease, %d disease_category, %d risk_factor)\n",
                kg.entity_count(), diseases, categories, risk_factors);
    std::printf("  domain relations     %d\n", kg.domain_relation_count());
    std::printf("  domain triplets      %zu\n", kg.domain_triplet_count());
    std::printf("  parallel edge pairs  %zu\n", kg.parallel_edge_pairs());
}

void print_cohort_summary(const cohort::Cohort& cohort, const std::string& path) {
    long label_total = 0;
    std::size_t label_max = 0;
    long link_total = 0;
    std::size_t link_max = 0;
    for (const auto& r : cohort.records()) {
        label_total += static_cast<long>(r.future_labels.size());
        label_max = std::max(label_max, r.future_labels.size());
        link_total += static_cast<long>(r.links.size());
        link_max = std::max(link_max, r.links.size());
    }
    const double n = static_cast<double>(cohort.records().size());
    std::printf("cohort: %s\n", path.c_str());
    std::printf("  patients             %d\n", cohort.patient_count());
    std::printf("  usable records       %zu\n", cohort.records().size());
    std::printf("  features in p_f      %d\n", cohort.feature_count());
    std::printf("  avg prediction labels %.3f\n", static_cast<double>(label_total) / n);
    std::printf("  max prediction labels %zu\n", label_max);
    std::printf("  avg links to KG      %.3f\n", static_cast<double>(link_total) / n);
    std::printf("  max links to KG      %zu\n", link_max);
    const auto& s = cohort.summary();
    std::printf("  excluded             %d single-admission patients, %d unlinkable records, %d label-less records\n",
                s.patients_single_admission, s.records_no_kg_link, s.records_no_labels);
    for (const auto& w : s.warnings) std::printf("  warning              %s\n", w.c_str());
}

// Snapshot file names inside the snapshot directory.
constexpr const char* kRbmSnap = "rbm.snap";
constexpr const char* kAeSnap = "autoencoder.snap";
constexpr const char* kAgentSnap = "agent.snap";
constexpr const char* kScalerSnap = "scaler.snap";
constexpr const char* kTrainLog = "train_log.tsv";

snapshot::TensorList rbm_tensors(const emb::RbmParams& rbm) {
    return {{"weights", rbm.weights},
            {"visible_bias", rbm.visible_bias},
            {"hidden_bias", rbm.hidden_bias}};
}

emb::RbmParams rbm_from_tensors(const snapshot::TensorList& t) {
    emb::RbmParams rbm;
    rbm.weights = snapshot::require(t, "weights");
    rbm.visible_bias = snapshot::require(t, "visible_bias", rbm.weights.rows(), 1).col(0);
    rbm.hidden_bias = snapshot::require(t, "hidden_bias", rbm.weights.cols(), 1).col(0);
    return rbm;
}

snapshot::TensorList ae_tensors(const emb::AutoencoderParams& ae) {
    return {{"w_hidden", ae.w_hidden},     {"w_code", ae.w_code},
            {"b_hidden", ae.b_hidden},     {"b_code", ae.b_code},
            {"b_dec_hidden", ae.b_dec_hidden}, {"b_output", ae.b_output}};
}

emb::AutoencoderParams ae_from_tensors(const snapshot::TensorList& t) {
    emb::AutoencoderParams ae;
    ae.w_hidden = snapshot::require(t, "w_hidden");
    ae.w_code = snapshot::require(t, "w_code", -1, ae.w_hidden.rows());
    ae.b_hidden = snapshot::require(t, "b_hidden", ae.w_hidden.rows(), 1).col(0);
    ae.b_code = snapshot::require(t, "b_code", ae.w_code.rows(), 1).col(0);
    ae.b_dec_hidden = snapshot::require(t, "b_dec_hidden", ae.w_hidden.rows(), 1).col(0);
    ae.b_output = snapshot::require(t, "b_output", ae.w_hidden.cols(), 1).col(0);
    return ae;
}

snapshot::TensorList scaler_tensors(const cohort::FeatureStats& s) {
    nn::Vector constant(s.constant.size());
    for (std::size_t i = 0; i < s.constant.size(); ++i) constant[static_cast<long>(i)] = s.constant[i];
    return {{"mean", s.mean}, {"stddev", s.stddev}, {"min", s.min}, {"max", s.max}, {"constant", constant}};
}

cohort::FeatureStats scaler_from_tensors(const snapshot::TensorList& t) {
    cohort::FeatureStats s;
    s.mean = snapshot::require(t, "mean");
    const long l = s.mean.rows();
    s.stddev = snapshot::require(t, "stddev", l, 1).col(0);
    s.min = snapshot::require(t, "min", l, 1).col(0);
    s.max = snapshot::require(t, "max", l, 1).col(0);
    const nn::Vector constant = snapshot::require(t, "constant", l, 1).col(0);
    s.constant.resize(static_cast<std::size_t>(l));
    for (long i = 0; i < l; ++i) s.constant[static_cast<std::size_t>(i)] = constant[i] != 0.0;
    return s;
}

std::string snap_path(const RunConfig& cfg, const char* name) {
    return (fs::path(cfg.paths.snapshot_dir) / name).string();
}

void require_snapshot(const RunConfig& cfg, const char* name, const char* hint) {
    if (!fs::exists(snap_path(cfg, name)))
        throw DataError("missing snapshot " + snap_path(cfg, name) + "; " + hint);
}

}  // namespace

void cmd_validate(const RunConfig& cfg) {
    const KnowledgeGraph kg = load_kg_checked(cfg);
    print_kg_summary(kg, cfg.paths.kg);

    const auto admissions = load_cohort_checked(cfg);

    // List every unresolved entity name before failing.
    long unresolved = 0;
    for (const auto& adm : admissions) {
        for (const auto& name : adm.conditions) {
            if (!kg.entity_id(name)) {
                std::printf("unresolved entity '%s' (patient %s admission %d)\n", name.c_str(),
                            adm.patient_id.c_str(), adm.admission_index);
                ++unresolved;
            }
        }
    }
    if (unresolved > 0)
        throw DataError(std::to_string(unresolved) + " condition name(s) do not resolve to KG entities");

    const cohort::Cohort cohort = cohort::preprocess(kg, admissions);
    print_cohort_summary(cohort, cfg.paths.cohort);
    std::printf("validate: OK\n");
}

void cmd_synth(const RunConfig& cfg, const SynthArgs& args) {
    const KnowledgeGraph kg = load_kg_checked(cfg);
    cohort::SynthConfig synth;
    synth.patients = args.patients;
    synth.noise_rate = args.noise;
    synth.imbalance = args.imbalance;
    synth.seed = cfg.seed;
    synth.rules = cohort::default_rules(kg);

    const auto admissions = cohort::generate_admissions(kg, synth);
    const std::string out = args.out.value_or(cfg.paths.cohort);
    if (out.empty()) throw UsageError("no output path; set --out or paths.cohort");
    if (!admissions.empty())
        cohort::save_admissions(out, admissions, static_cast<int>(admissions.front().features.size()));
    std::printf("synth: wrote %zu admissions for %d patients to %s\n", admissions.size(),
                args.patients, out.c_str());
}

void cmd_train(const RunConfig& cfg, TrainStage stage) {
    const KnowledgeGraph kg = load_kg_checked(cfg);
    const auto admissions = load_cohort_checked(cfg);
    const cohort::Cohort cohort = cohort::preprocess(kg, admissions);
    fs::create_directories(cfg.paths.snapshot_dir);

    std::ofstream log_out;
    auto open_log = [&](bool append) {
        log_out.open(snap_path(cfg, kTrainLog), append ? std::ios::app : std::ios::trunc);
        if (!log_out) throw DataError("cannot write " + snap_path(cfg, kTrainLog));
    };

    emb::RbmParams rbm;
    emb::AutoencoderParams ae;

    if (stage == TrainStage::All || stage == TrainStage::Embeddings) {
        std::vector<nn::Vector> characters;
        std::vector<nn::Vector> features;
        for (const auto& r : cohort.records()) {
            nn::Vector v = nn::Vector::Zero(kg.entity_count());
            for (int id : r.links) v[id] = 1.0;
            characters.push_back(std::move(v));
            features.push_back(r.features);
        }
        std::vector<emb::TrainLogEntry> rbm_log, ae_log;
        rbm = emb::rbm_train(characters, cfg.rbm_config(), &rbm_log);
        ae = emb::ae_train(features, cfg.ae_config(), &ae_log);
        snapshot::save(snap_path(cfg, kRbmSnap), rbm_tensors(rbm));
        snapshot::save(snap_path(cfg, kAeSnap), ae_tensors(ae));
        snapshot::save(snap_path(cfg, kScalerSnap), scaler_tensors(cohort.feature_stats()));
        open_log(false);
        char buf[64];
        for (const auto& e : rbm_log) {
            std::snprintf(buf, sizeof(buf), "%.9f", e.loss);
            log_out << "rbm\t" << e.epoch << "\treconstruction_ce=" << buf << "\n";
        }
        for (const auto& e : ae_log) {
            std::snprintf(buf, sizeof(buf), "%.9f", e.loss);
            log_out << "autoencoder\t" << e.epoch << "\tbce=" << buf << "\n";
        }
        std::printf("train: stage 1 done (rbm %d epochs, autoencoder %d epochs)\n",
                    cfg.embeddings.epochs, cfg.embeddings.epochs);
    }

    if (stage == TrainStage::All || stage == TrainStage::Agent) {
        if (stage == TrainStage::Agent) {
            require_snapshot(cfg, kRbmSnap, "run `kgwalk train --stage embeddings` (stage 1) first");
            require_snapshot(cfg, kAeSnap, "run `kgwalk train --stage embeddings` (stage 1) first");
            rbm = rbm_from_tensors(snapshot::load(snap_path(cfg, kRbmSnap)));
            ae = ae_from_tensors(snapshot::load(snap_path(cfg, kAeSnap)));
            open_log(true);
        }
        if (rbm.visible_units() != kg.entity_count())
            throw DataError("rbm snapshot entity count does not match the knowledge graph");

        agent::Representations reps;
        reps.entity = rbm.weights;
        reps.relation_count = kg.relation_count();

        agent::StateSpec spec;
        spec.code_dim = ae.code_dim();
        spec.embed_dim = reps.embed_dim();
        spec.relation_count = kg.relation_count();

        const agent::AgentConfig agent_cfg = cfg.agent_config();
        agent::AgentParams params(spec, agent_cfg.hidden1, agent_cfg.hidden2, kg.entity_count(),
                                  agent_cfg.seed);
        const auto codes = eval::encode_records(ae, cohort.records());
        const auto logs = agent::train_agent(params, kg, cohort.records(), codes, reps, agent_cfg,
                                             cfg.workers);
        snapshot::save(snap_path(cfg, kAgentSnap), params.to_tensors());
        char b1[64], b2[64], b3[64], b4[64];
        for (const auto& e : logs) {
            std::snprintf(b1, sizeof(b1), "%.9f", e.mean_return);
            std::snprintf(b2, sizeof(b2), "%.9f", e.mean_entropy);
            std::snprintf(b3, sizeof(b3), "%.9f", e.critic_loss);
            std::snprintf(b4, sizeof(b4), "%.9f", e.hit_rate);
            log_out << "agent\t" << e.epoch << "\tmean_return=" << b1 << "\tmean_entropy=" << b2
                    << "\tcritic_loss=" << b3 << "\thit_rate=" << b4 << "\n";
        }
        std::printf("train: stage 2 done (%d epochs, final hit rate %.3f)\n", cfg.agent.epochs,
                    logs.empty() ? 0.0 : logs.back().hit_rate);
    }
    std::printf("train: snapshots in %s\n", cfg.paths.snapshot_dir.c_str());
}

void cmd_predict(const RunConfig& cfg, const PredictArgs& args) {
    const KnowledgeGraph kg = load_kg_checked(cfg);
    require_snapshot(cfg, kRbmSnap, "run `kgwalk train` first");
    require_snapshot(cfg, kAeSnap, "run `kgwalk train` first");
    require_snapshot(cfg, kAgentSnap, "run `kgwalk train` first");
    require_snapshot(cfg, kScalerSnap, "run `kgwalk train` first");
    const emb::RbmParams rbm = rbm_from_tensors(snapshot::load(snap_path(cfg, kRbmSnap)));
    const emb::AutoencoderParams ae = ae_from_tensors(snapshot::load(snap_path(cfg, kAeSnap)));
    const agent::AgentParams params = agent::AgentParams::from_tensors(snapshot::load(snap_path(cfg, kAgentSnap)));
    const cohort::FeatureStats stats = scaler_from_tensors(snapshot::load(snap_path(cfg, kScalerSnap)));
    if (rbm.visible_units() != kg.entity_count())
        throw DataError("rbm snapshot entity count does not match the knowledge graph");

    const auto admissions = cohort::load_admissions(args.record_file);
    if (admissions.empty()) throw DataError("record file has no records: " + args.record_file);
    if (args.index < 0 || args.index >= static_cast<int>(admissions.size()))
        throw UsageError("--index out of range (file has " + std::to_string(admissions.size()) + " records)");
    const cohort::PatientRecord record = cohort::make_record(kg, stats, admissions[args.index]);

    agent::Representations reps;
    reps.entity = rbm.weights;
    reps.relation_count = kg.relation_count();

    const nn::Vector code = emb::encode_patient(ae, record.features);
    LinkedGraph graph(kg, record.links);
    const infer::PredictionResult result =
        infer::beam_predict(params, graph, reps, code, cfg.beam_config(kg.entity_count()));

    // With --explain the document owns stdout so it can be piped; the ranked
    // table stays visible on stderr.
    FILE* table = args.explain ? stderr : stdout;
    std::fprintf(table, "patient %s (admission %d): top %d predictions\n", record.patient_id.c_str(),
                 record.admission_index, args.top);
    for (auto [entity, prob] : infer::rank_diseases(kg, result, args.top)) {
        std::fprintf(table, "  %-28s %.6f\n", kg.entity(entity).name.c_str(), prob);
    }
    std::fprintf(table, "  non-disease terminal mass    %.6f\n", result.non_disease_mass);

    if (args.explain) {
        if (args.format == "json") {
            std::fputs(infer::export_paths_json(kg, result, record.patient_id).c_str(), stdout);
        } else if (args.format == "dot") {
            const double threshold = args.min_edge_prob.value_or(cfg.inference.min_edge_prob);
            std::fputs(infer::export_paths_dot(kg, result, threshold).c_str(), stdout);
        } else {
            throw UsageError("unknown --format '" + args.format + "' (expected json or dot)");
        }
    }
}

void cmd_eval(const RunConfig& cfg) {
    const KnowledgeGraph kg = load_kg_checked(cfg);
    const auto admissions = load_cohort_checked(cfg);
    cohort::Cohort cohort = cohort::preprocess(kg, admissions);
    cohort::make_folds(cohort, cfg.eval.folds, cfg.seed);

    const eval::EvalReport report = eval::cross_validate(kg, cohort, cfg, cfg.workers);
    const std::string text = eval::render_report(report, "", 0.0, false);

    fs::create_directories(cfg.paths.report_dir);
    const std::string path = (fs::path(cfg.paths.report_dir) / "eval_report.tsv").string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write report: " + path);
    out << text;
    out.close();

    std::fputs(text.c_str(), stdout);
    std::printf("eval: report written to %s\n", path.c_str());
}

void cmd_sweep(const RunConfig& cfg, const std::string& axis_name) {
    eval::SweepAxis axis;
    if (axis_name == "horizon") {
        axis = eval::SweepAxis::Horizon;
    } else if (axis_name == "entropy") {
        axis = eval::SweepAxis::Entropy;
    } else {
        throw UsageError("unknown --axis '" + axis_name + "' (expected horizon or entropy)");
    }

    const KnowledgeGraph kg = load_kg_checked(cfg);
    const auto admissions = load_cohort_checked(cfg);
    cohort::Cohort cohort = cohort::preprocess(kg, admissions);
    cohort::make_folds(cohort, cfg.eval.folds, cfg.seed);

    const auto points = eval::sweep(kg, cohort, cfg, axis, cfg.workers);
    const std::string text = eval::render_sweep(points, axis);

    fs::create_directories(cfg.paths.report_dir);
    const std::string path = (fs::path(cfg.paths.report_dir) / ("sweep_" + axis_name + ".tsv")).string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write report: " + path);
    out << text;
    out.close();

    std::fputs(text.c_str(), stdout);
    std::printf("sweep: report written to %s\n", path.c_str());
}

}  // namespace kgwalk::cli
