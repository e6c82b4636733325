#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgwalk/agent.hpp"
#include "kgwalk/kg.hpp"
#include "kgwalk/nn.hpp"

namespace kgwalk::infer {

using agent::AgentParams;
using agent::Representations;
using nn::Vector;

struct PathStep {
    int relation = -1;
    int entity = -1;
    double probability = 0.0;  // policy probability of this step
};

/// A complete walk from the patient entity; probability is the product of the
/// step probabilities.
struct Path {
    std::vector<PathStep> steps;
    double probability = 1.0;

    int terminal() const { return steps.empty() ? -1 : steps.back().entity; }
};

struct BeamConfig {
    int horizon = 2;
    std::vector<int> widths;  // top-K kept per path per step; ignored in exact mode
    bool exact = false;       // keep every action (K = infinity)

    int width_at(int step) const;
};

struct PredictionResult {
    Vector disease_probabilities;  // length = disease count, indexed by disease index
    std::vector<Path> paths;       // every surviving path, including non-disease terminals
    double non_disease_mass = 0.0; // probability mass on surviving non-disease terminals
};

/// Beam-search enumeration of walks: each retained path is expanded by its
/// top-K actions under the current policy, probabilities multiply along the
/// path, and after `horizon` steps the mass of disease-terminal paths is
/// accumulated per disease. All surviving paths are returned as explanations,
/// including multiple paths to the same disease. Deterministic: ties at the
/// beam cutoff break toward the lower entity id.
PredictionResult beam_predict(const AgentParams& params, const LinkedGraph& graph,
                              const Representations& reps, const Vector& patient_code,
                              const BeamConfig& cfg);

/// Diseases ordered by probability descending, ties by ascending entity id.
/// Returns (disease entity id, probability) pairs, at most top_k of them.
std::vector<std::pair<int, double>> rank_diseases(const KnowledgeGraph& kg,
                                                  const PredictionResult& result, int top_k);

/// Versioned JSON document listing predictions and every path with entity
/// names, relation names, step probabilities and the path probability.
std::string export_paths_json(const KnowledgeGraph& kg, const PredictionResult& result,
                              const std::string& patient_id);

/// Graphviz dot text; one edge per distinct (head, relation, tail) transition
/// labeled with its strongest observed step probability. Transitions below
/// min_edge_prob are suppressed.
std::string export_paths_dot(const KnowledgeGraph& kg, const PredictionResult& result,
                             double min_edge_prob);

/// Batch prediction over records; output[i] belongs to records[i] regardless
/// of the execution order.
std::vector<PredictionResult> predict_records(const AgentParams& params, const KnowledgeGraph& kg,
                                              std::span<const cohort::PatientRecord> records,
                                              std::span<const Vector> patient_codes,
                                              const Representations& reps, const BeamConfig& cfg,
                                              int workers);
std::vector<PredictionResult> predict_records_serial(const AgentParams& params, const KnowledgeGraph& kg,
                                                     std::span<const cohort::PatientRecord> records,
                                                     std::span<const Vector> patient_codes,
                                                     const Representations& reps, const BeamConfig& cfg);
std::vector<PredictionResult> predict_records_parallel(const AgentParams& params, const KnowledgeGraph& kg,
                                                       std::span<const cohort::PatientRecord> records,
                                                       std::span<const Vector> patient_codes,
                                                       const Representations& reps, const BeamConfig& cfg,
                                                       int workers);

}  // namespace kgwalk::infer
