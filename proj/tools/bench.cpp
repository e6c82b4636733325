// Times the data-parallel kernels against their serial reference and checks
// that both produce identical results.
//
//   kgwalk_bench [kg_file] [workers] [patients]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <omp.h>

#include "kgwalk/agent.hpp"
#include "kgwalk/cohort.hpp"
#include "kgwalk/config.hpp"
#include "kgwalk/eval.hpp"
#include "kgwalk/inference.hpp"
#include "kgwalk/kg.hpp"
#include "kgwalk/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

bool trajectories_equal(const std::vector<kgwalk::agent::Trajectory>& a,
                        const std::vector<kgwalk::agent::Trajectory>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].terminal_entity != b[i].terminal_entity) return false;
        if (a[i].steps.size() != b[i].steps.size()) return false;
        for (std::size_t t = 0; t < a[i].steps.size(); ++t) {
            if (!(a[i].steps[t].action == b[i].steps[t].action)) return false;
        }
    }
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string kg_path = argc > 1 ? argv[1] : "data/mini_kg.tsv";
    const int workers = argc > 2 ? std::atoi(argv[2]) : omp_get_max_threads();
    const int patients = argc > 3 ? std::atoi(argv[3]) : 600;

    using namespace kgwalk;
    const KnowledgeGraph kg = KnowledgeGraph::load(kg_path);

    cohort::SynthConfig synth;
    synth.patients = patients;
    synth.rules = cohort::default_rules(kg);
    synth.seed = 13;
    const cohort::Cohort data = cohort::generate_synthetic(kg, synth);
    std::printf("kg %s: %d entities; cohort: %zu records; workers %d\n", kg_path.c_str(),
                kg.entity_count(), data.records().size(), workers);

    // A briefly trained model so the policy is not uniform.
    RunConfig cfg;
    cfg.embeddings.epochs = 5;
    cfg.agent.epochs = 1;
    const eval::TrainedModels models = eval::train_pipeline(kg, data.records(), cfg, 13, workers);
    const auto codes = eval::encode_records(models.autoencoder, data.records());

    const agent::AgentConfig agent_cfg = cfg.agent_config();
    std::vector<agent::EpisodeSpec> specs;
    for (std::size_t r = 0; r < data.records().size(); ++r) {
        for (int e = 0; e < 4; ++e)
            specs.push_back({static_cast<int>(r), rng::mix(99, r, static_cast<std::uint64_t>(e))});
    }

    std::printf("%-24s %10s %10s %8s\n", "kernel", "serial ms", "omp ms", "speedup");

    auto t0 = Clock::now();
    const auto traj_s = agent::collect_episodes_serial(models.agent_params, kg, data.records(), codes,
                                                       models.representations, 2, specs);
    const double collect_serial = ms_since(t0);
    t0 = Clock::now();
    const auto traj_p = agent::collect_episodes_parallel(models.agent_params, kg, data.records(), codes,
                                                         models.representations, 2, specs, workers);
    const double collect_parallel = ms_since(t0);
    if (!trajectories_equal(traj_s, traj_p)) {
        std::fprintf(stderr, "FAIL: parallel episode collection differs from serial\n");
        return 1;
    }
    std::printf("%-24s %10.1f %10.1f %7.2fx\n", "collect_episodes", collect_serial, collect_parallel,
                collect_serial / collect_parallel);

    t0 = Clock::now();
    const auto grad_s = agent::batch_gradient_serial(models.agent_params, traj_s, agent_cfg, nullptr);
    const double grad_serial = ms_since(t0);
    t0 = Clock::now();
    const auto grad_p =
        agent::batch_gradient_parallel(models.agent_params, traj_s, agent_cfg, nullptr, workers);
    const double grad_parallel = ms_since(t0);
    for (std::size_t l = 0; l < grad_s.trunk.size(); ++l) {
        if (grad_s.trunk[l].weights != grad_p.trunk[l].weights) {
            std::fprintf(stderr, "FAIL: parallel gradient differs from serial\n");
            return 1;
        }
    }
    std::printf("%-24s %10.1f %10.1f %7.2fx\n", "batch_gradient", grad_serial, grad_parallel,
                grad_serial / grad_parallel);

    infer::BeamConfig beam;
    beam.horizon = 2;
    beam.exact = true;
    t0 = Clock::now();
    const auto pred_s = infer::predict_records_serial(models.agent_params, kg, data.records(), codes,
                                                      models.representations, beam);
    const double predict_serial = ms_since(t0);
    t0 = Clock::now();
    const auto pred_p = infer::predict_records_parallel(models.agent_params, kg, data.records(), codes,
                                                        models.representations, beam, workers);
    const double predict_parallel = ms_since(t0);
    for (std::size_t i = 0; i < pred_s.size(); ++i) {
        if (pred_s[i].disease_probabilities != pred_p[i].disease_probabilities) {
            std::fprintf(stderr, "FAIL: parallel prediction differs from serial\n");
            return 1;
        }
    }
    std::printf("%-24s %10.1f %10.1f %7.2fx\n", "predict_records", predict_serial, predict_parallel,
                predict_serial / predict_parallel);

    return 0;
}
