#include "kgwalk/inference.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>
#include <omp.h>

#include "kgwalk/errors.hpp"

namespace kgwalk::infer {

int BeamConfig::width_at(int step) const {
    if (exact) return -1;
    if (widths.empty()) throw std::invalid_argument("beam widths empty in non-exact mode");
    if (step < static_cast<int>(widths.size())) return widths[step];
    return widths.back();
}

namespace {

struct Beam {
    std::vector<PathStep> steps;
    double probability = 1.0;
    std::optional<int> current;  // empty = at the patient entity
    std::vector<int> visited;    // entered entities, excluding current
};

}  // namespace

PredictionResult beam_predict(const AgentParams& params, const LinkedGraph& graph,
                              const Representations& reps, const Vector& patient_code,
                              const BeamConfig& cfg) {
    if (cfg.horizon < 1) throw std::invalid_argument("beam_predict: horizon must be >= 1");
    const KnowledgeGraph& kg = graph.base();
    if (params.entity_count() != kg.entity_count())
        throw DataError("agent parameters do not match the knowledge graph (entity count differs)");
    if (params.state_spec().relation_count != kg.relation_count())
        throw DataError("agent parameters do not match the knowledge graph (relation count differs)");
    if (patient_code.size() != params.state_spec().code_dim)
        throw DataError("patient code dimension does not match the agent parameters");
    const agent::StateSpec& spec = params.state_spec();

    std::vector<Beam> beams(1);
    for (int t = 0; t < cfg.horizon; ++t) {
        std::vector<Beam> next;
        next.reserve(beams.size());
        for (const Beam& beam : beams) {
            std::vector<Action> space = unique_by_tail(action_space(graph, beam.current, beam.visited));
            if (space.empty()) {
                next.push_back(beam);  // dead end; path survives as-is
                continue;
            }
            const Vector current_embedding =
                beam.current ? reps.entity_embedding(*beam.current) : patient_code;
            std::optional<agent::History> history;
            if (!beam.steps.empty()) {
                // Where the last step departed from: the patient for one-step
                // paths, otherwise the entity two steps back.
                history = agent::History{
                    beam.steps.size() >= 2
                        ? reps.entity_embedding(beam.steps[beam.steps.size() - 2].entity)
                        : patient_code,
                    beam.steps.back().relation};
            }
            const Vector state = build_state(spec, patient_code, current_embedding, history);
            const nn::Mask mask = action_mask(space, kg.entity_count());
            auto [policy, value] = agent::policy_value(params, state, mask);
            (void)value;

            // Highest probability first, ties toward the lower entity id.
            std::stable_sort(space.begin(), space.end(), [&](const Action& a, const Action& b) {
                if (policy[a.tail] != policy[b.tail]) return policy[a.tail] > policy[b.tail];
                return a.tail < b.tail;
            });
            const int width = cfg.width_at(t);
            if (width > 0 && static_cast<int>(space.size()) > width)
                space.resize(static_cast<std::size_t>(width));

            for (const Action& action : space) {
                Beam expanded = beam;
                expanded.steps.push_back(PathStep{action.relation, action.tail, policy[action.tail]});
                expanded.probability *= policy[action.tail];
                if (!expanded.current || action.tail != *expanded.current) {
                    if (expanded.current) expanded.visited.push_back(*expanded.current);
                    expanded.current = action.tail;
                }
                next.push_back(std::move(expanded));
            }
        }
        beams = std::move(next);
    }

    PredictionResult result;
    result.disease_probabilities = Vector::Zero(kg.disease_count());
    result.paths.reserve(beams.size());
    for (Beam& beam : beams) {
        const int terminal = beam.current.value_or(-1);
        if (terminal >= 0 && kg.is_disease(terminal)) {
            result.disease_probabilities[kg.disease_index(terminal)] += beam.probability;
        } else {
            result.non_disease_mass += beam.probability;
        }
        result.paths.push_back(Path{std::move(beam.steps), beam.probability});
    }
    return result;
}

std::vector<std::pair<int, double>> rank_diseases(const KnowledgeGraph& kg,
                                                  const PredictionResult& result, int top_k) {
    std::vector<std::pair<int, double>> ranked;
    ranked.reserve(kg.disease_count());
    for (int d = 0; d < kg.disease_count(); ++d) {
        ranked.emplace_back(kg.disease_entity(d), result.disease_probabilities[d]);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (top_k >= 0 && static_cast<int>(ranked.size()) > top_k) ranked.resize(top_k);
    return ranked;
}

std::string export_paths_json(const KnowledgeGraph& kg, const PredictionResult& result,
                              const std::string& patient_id) {
    nlohmann::ordered_json doc;
    doc["format"] = "kgwalk-paths";
    doc["version"] = 1;
    if (!patient_id.empty()) doc["patient"] = patient_id;
    auto predictions = nlohmann::ordered_json::array();
    for (auto [entity, prob] : rank_diseases(kg, result, -1)) {
        if (prob <= 0.0) continue;
        predictions.push_back({{"disease", kg.entity(entity).name}, {"probability", prob}});
    }
    doc["predictions"] = predictions;
    doc["non_disease_mass"] = result.non_disease_mass;

    std::vector<const Path*> order;
    order.reserve(result.paths.size());
    for (const Path& p : result.paths) order.push_back(&p);
    std::stable_sort(order.begin(), order.end(),
                     [](const Path* a, const Path* b) { return a->probability > b->probability; });

    auto paths = nlohmann::ordered_json::array();
    for (const Path* p : order) {
        nlohmann::ordered_json entry;
        entry["probability"] = p->probability;
        auto steps = nlohmann::ordered_json::array();
        for (const PathStep& s : p->steps) {
            steps.push_back({{"relation", kg.relation(s.relation).name},
                             {"entity", kg.entity(s.entity).name},
                             {"step_probability", s.probability}});
        }
        entry["steps"] = steps;
        paths.push_back(entry);
    }
    doc["paths"] = paths;
    return doc.dump(2) + "\n";
}

std::string export_paths_dot(const KnowledgeGraph& kg, const PredictionResult& result,
                             double min_edge_prob) {
    // Each transition is weighted by the strongest complete path it lies on,
    // so thresholding keeps exactly the transitions of the likely paths.
    std::map<std::tuple<std::string, int, int>, double> edges;  // (from, relation, to) -> prob
    for (const Path& path : result.paths) {
        std::string from = "patient";
        for (const PathStep& s : path.steps) {
            auto key = std::make_tuple(from, s.relation, s.entity);
            auto [it, inserted] = edges.try_emplace(key, path.probability);
            if (!inserted) it->second = std::max(it->second, path.probability);
            from = kg.entity(s.entity).name;
        }
    }

    std::ostringstream out;
    out << "digraph progression {\n";
    out << "  rankdir=LR;\n";
    out << "  \"patient\" [shape=box];\n";
    char label[64];
    for (const auto& [key, prob] : edges) {
        if (prob < min_edge_prob) continue;
        const auto& [from, relation, to] = key;
        std::snprintf(label, sizeof(label), "%.3f", prob);
        out << "  \"" << from << "\" -> \"" << kg.entity(to).name << "\" [label=\""
            << kg.relation(relation).name << " " << label << "\"];\n";
    }
    out << "}\n";
    return out.str();
}

std::vector<PredictionResult> predict_records_serial(const AgentParams& params, const KnowledgeGraph& kg,
                                                     std::span<const cohort::PatientRecord> records,
                                                     std::span<const Vector> patient_codes,
                                                     const Representations& reps, const BeamConfig& cfg) {
    std::vector<PredictionResult> out(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        LinkedGraph graph(kg, records[i].links);
        out[i] = beam_predict(params, graph, reps, patient_codes[i], cfg);
    }
    return out;
}

std::vector<PredictionResult> predict_records_parallel(const AgentParams& params, const KnowledgeGraph& kg,
                                                       std::span<const cohort::PatientRecord> records,
                                                       std::span<const Vector> patient_codes,
                                                       const Representations& reps, const BeamConfig& cfg,
                                                       int workers) {
    std::vector<PredictionResult> out(records.size());
    const int n = static_cast<int>(records.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (int i = 0; i < n; ++i) {
        LinkedGraph graph(kg, records[i].links);
        out[i] = beam_predict(params, graph, reps, patient_codes[i], cfg);
    }
    return out;
}

std::vector<PredictionResult> predict_records(const AgentParams& params, const KnowledgeGraph& kg,
                                              std::span<const cohort::PatientRecord> records,
                                              std::span<const Vector> patient_codes,
                                              const Representations& reps, const BeamConfig& cfg,
                                              int workers) {
    if (workers > 1)
        return predict_records_parallel(params, kg, records, patient_codes, reps, cfg, workers);
    return predict_records_serial(params, kg, records, patient_codes, reps, cfg);
}

}  // namespace kgwalk::infer
