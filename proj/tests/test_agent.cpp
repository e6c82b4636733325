#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "kgwalk/agent.hpp"
#include "kgwalk/errors.hpp"
#include "kgwalk/rng.hpp"

using namespace kgwalk;
using agent::AgentConfig;
using agent::AgentParams;
using agent::Representations;
using agent::StateSpec;
using agent::Trajectory;
using nn::Matrix;
using nn::Vector;

namespace {

// RF1 -causes-> D1 -causes-> D2, patient linked to {RF1, D1}.
KnowledgeGraph toy_graph() {
    return KnowledgeGraph::build(
        {{"RF1", EntityKind::RiskFactor}, {"D1", EntityKind::Disease}, {"D2", EntityKind::Disease}},
        {{"RF1", "causes", "D1"}, {"D1", "causes", "D2"}});
}

Representations random_reps(rng::Engine& eng, int entities, int dim, int relations) {
    Representations reps;
    reps.entity = Matrix::Zero(entities, dim);
    for (int c = 0; c < dim; ++c)
        for (int r = 0; r < entities; ++r) reps.entity(r, c) = eng.uniform(-1.0, 1.0);
    reps.relation_count = relations;
    return reps;
}

Vector random_code(rng::Engine& eng, int dim) {
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v[i] = eng.uniform(0.0, 1.0);
    return v;
}

std::string path_key(const Trajectory& t) {
    std::string key;
    for (const auto& s : t.steps) key += std::to_string(s.action.tail) + ",";
    return key;
}

}  // namespace

TEST_CASE("build_state") {
    StateSpec spec{.code_dim = 2, .embed_dim = 2, .relation_count = 3};
    Vector pe(2);
    pe << 0.3, 0.7;

    SUBCASE("start of walk: (p_e, p_e, 0)") {
        const Vector s = agent::build_state(spec, pe, pe, std::nullopt);
        REQUIRE(s.size() == spec.length());
        CHECK(s.segment(0, 2) == pe);
        CHECK(s.segment(2, 2) == pe);
        CHECK(s.tail(5) == Vector::Zero(5));
    }
    SUBCASE("after traversing a have-edge from the patient") {
        Vector e5(2);
        e5 << -0.4, 0.9;
        // previous slot carries p_e, relation slot the have-edge one-hot
        const Vector s = agent::build_state(spec, pe, e5, agent::History{pe, 1});
        CHECK(s.segment(0, 2) == pe);
        CHECK(s.segment(2, 2) == e5);
        CHECK(s.segment(4, 2) == pe);
        Vector rel = Vector::Zero(3);
        rel[1] = 1.0;
        CHECK(s.tail(3) == rel);
    }
    SUBCASE("all zeros in, all zeros out") {
        const Vector s = agent::build_state(spec, Vector::Zero(2), Vector::Zero(2), std::nullopt);
        CHECK(s == Vector::Zero(spec.length()));
    }
    SUBCASE("dimension mismatch") {
        CHECK_THROWS_AS(agent::build_state(spec, Vector::Zero(3), Vector::Zero(2), std::nullopt),
                        std::invalid_argument);
    }
}

TEST_CASE("policy_value") {
    const KnowledgeGraph kg = toy_graph();
    StateSpec spec{.code_dim = 4, .embed_dim = 4, .relation_count = kg.relation_count()};

    SUBCASE("zero parameters give the uniform policy over the mask") {
        const AgentParams params = AgentParams::zeros(spec, 8, 8, kg.entity_count());
        auto [pi, v] = agent::policy_value(params, Vector::Zero(spec.length()), {1, 1, 0});
        CHECK(pi[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(pi[1] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(pi[2] == 0.0);
        CHECK(v == 0.0);
    }
    SUBCASE("single-action mask is deterministic; the value ignores the mask") {
        rng::Engine eng(5);
        const AgentParams params(spec, 8, 8, kg.entity_count(), 99);
        const Vector state = random_code(eng, spec.length());
        auto [pi1, v1] = agent::policy_value(params, state, {0, 1, 0});
        auto [pi2, v2] = agent::policy_value(params, state, {1, 1, 1});
        CHECK(pi1[1] == 1.0);
        CHECK(v1 == v2);
    }
    SUBCASE("probabilities sum to one and vanish off-mask across random draws") {
        rng::Engine eng(6);
        for (int trial = 0; trial < 1000; ++trial) {
            const AgentParams params(spec, 6, 6, kg.entity_count(), eng.next());
            const Vector state = random_code(eng, spec.length());
            nn::Mask mask(3, 0);
            mask[eng.below(3)] = 1;
            for (int i = 0; i < 3; ++i) {
                if (!mask[i]) mask[i] = eng.bernoulli(0.5);
            }
            auto [pi, v] = agent::policy_value(params, state, mask);
            double sum = 0.0;
            for (int i = 0; i < 3; ++i) {
                if (!mask[i]) CHECK(pi[i] == 0.0);
                sum += pi[i];
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(std::isfinite(v));
        }
    }
    SUBCASE("dead-end mask propagates the error") {
        const AgentParams params = AgentParams::zeros(spec, 4, 4, kg.entity_count());
        CHECK_THROWS_AS(agent::policy_value(params, Vector::Zero(spec.length()), {0, 0, 0}),
                        std::invalid_argument);
    }
}

TEST_CASE("rollout") {
    const KnowledgeGraph kg = toy_graph();
    rng::Engine eng(7);
    const int dim = 3;
    const Representations reps = random_reps(eng, kg.entity_count(), dim, kg.relation_count());
    StateSpec spec{.code_dim = dim, .embed_dim = dim, .relation_count = kg.relation_count()};
    const Vector pe = random_code(eng, dim);

    SUBCASE("forced walk: only link has only a self-loop continuation") {
        // Patient -> D2, and D2 has just its self-loop.
        const AgentParams params = AgentParams::zeros(spec, 4, 4, kg.entity_count());
        LinkedGraph g(kg, std::vector<int>{2});
        const Trajectory traj = agent::rollout(params, g, reps, pe, 2, 42);
        REQUIRE(traj.steps.size() == 2);
        CHECK(traj.steps[0].action == Action{kg.have_relation(), 2});
        CHECK(traj.steps[1].action == Action{kg.self_loop_relation(), 2});
        CHECK(traj.terminal_entity == 2);
        CHECK(traj.steps[0].policy[2] == 1.0);
        CHECK(!traj.truncated);
    }
    SUBCASE("same seed, same trajectory") {
        const AgentParams params(spec, 6, 6, kg.entity_count(), 3);
        LinkedGraph g(kg, std::vector<int>{0, 1});
        for (std::uint64_t seed : {1ULL, 9ULL, 77ULL}) {
            const Trajectory a = agent::rollout(params, g, reps, pe, 3, seed);
            const Trajectory b = agent::rollout(params, g, reps, pe, 3, seed);
            CHECK(path_key(a) == path_key(b));
        }
    }
    SUBCASE("sampled path frequencies match exact enumeration within 3 standard errors") {
        // Uniform policy on the toy graph, T = 2: all four paths carry 0.25.
        const AgentParams params = AgentParams::zeros(spec, 4, 4, kg.entity_count());
        LinkedGraph g(kg, std::vector<int>{0, 1});
        std::map<std::string, int> counts;
        const int n = 1000;
        for (int i = 0; i < n; ++i) {
            counts[path_key(agent::rollout(params, g, reps, pe, 2, 1000 + i))]++;
        }
        REQUIRE(counts.size() == 4);
        const double se = std::sqrt(0.25 * 0.75 / n);
        for (const auto& [key, count] : counts) {
            CHECK(std::abs(count / static_cast<double>(n) - 0.25) < 3 * se);
        }
    }
    SUBCASE("every sampled action is mask-legal and honors the exclusion rule") {
        rng::Engine seeds(8);
        for (int trial = 0; trial < 200; ++trial) {
            const AgentParams params(spec, 6, 6, kg.entity_count(), seeds.next());
            LinkedGraph g(kg, std::vector<int>{0, 1});
            const Trajectory traj = agent::rollout(params, g, reps, pe, 4, seeds.next());
            for (const auto& step : traj.steps) {
                CHECK(step.mask[step.action.tail] == 1);
            }
            // no revisits except consecutive self-loop stays
            std::vector<int> seen;
            int prev = -1;
            for (const auto& step : traj.steps) {
                const int tail = step.action.tail;
                if (tail != prev) {
                    for (int v : seen) CHECK(v != tail);
                    seen.push_back(tail);
                }
                prev = tail;
            }
        }
    }
    SUBCASE("absorption: a self-loop-only entity holds the walker") {
        const AgentParams params(spec, 6, 6, kg.entity_count(), 21);
        LinkedGraph g(kg, std::vector<int>{1});  // D1 -> D2, D2 only self-loops
        for (int i = 0; i < 200; ++i) {
            const Trajectory traj = agent::rollout(params, g, reps, pe, 5, 5000 + i);
            bool at_d2 = false;
            for (const auto& step : traj.steps) {
                if (at_d2) CHECK(step.action == Action{kg.self_loop_relation(), 2});
                if (step.action.tail == 2) at_d2 = true;
            }
        }
    }
}

TEST_CASE("terminal_reward") {
    const KnowledgeGraph kg = toy_graph();
    SUBCASE("disease in the future labels") { CHECK(agent::terminal_reward(kg, 1, {1, 2}) == 1); }
    SUBCASE("disease not in the future labels") { CHECK(agent::terminal_reward(kg, 2, {1}) == 0); }
    SUBCASE("non-disease terminal") { CHECK(agent::terminal_reward(kg, 0, {1, 2}) == -1); }
    SUBCASE("stuck walker without a terminal entity") { CHECK(agent::terminal_reward(kg, -1, {1}) == -1); }
}

TEST_CASE("step_returns") {
    Trajectory traj;
    traj.steps.resize(2);
    SUBCASE("undiscounted") {
        traj.terminal_reward = 1.0;
        CHECK(agent::step_returns(traj, 1.0) == std::vector<double>{1.0, 1.0});
    }
    SUBCASE("discounted negative reward") {
        traj.terminal_reward = -1.0;
        const auto g = agent::step_returns(traj, 0.9);
        CHECK(g[0] == doctest::Approx(-0.9).epsilon(1e-12));
        CHECK(g[1] == doctest::Approx(-1.0).epsilon(1e-12));
    }
    SUBCASE("zero reward") {
        traj.terminal_reward = 0.0;
        CHECK(agent::step_returns(traj, 0.9) == std::vector<double>{0.0, 0.0});
    }
}

TEST_CASE("update") {
    const KnowledgeGraph kg = toy_graph();
    rng::Engine eng(17);
    const int dim = 3;
    const Representations reps = random_reps(eng, kg.entity_count(), dim, kg.relation_count());
    StateSpec spec{.code_dim = dim, .embed_dim = dim, .relation_count = kg.relation_count()};
    const Vector pe = random_code(eng, dim);
    LinkedGraph g(kg, std::vector<int>{0, 1});

    SUBCASE("positive advantage raises the probability of every taken action") {
        AgentConfig cfg;
        cfg.entropy_weight = 0.0;
        cfg.critic_weight = 0.0;  // isolate the policy term
        cfg.discount = 1.0;
        cfg.optimizer = {.learning_rate = 0.01, .adaptive = false};
        AgentParams params(spec, 8, 8, kg.entity_count(), 31);
        Trajectory traj = agent::rollout(params, g, reps, pe, 2, 77);
        traj.terminal_reward = 1.0;  // G - v > 0 once v is near zero
        const auto adv = agent::advantages(params, std::span<const Trajectory>(&traj, 1), cfg.discount);
        for (const auto& a : adv[0]) REQUIRE(a > 0.0);

        std::vector<double> before;
        for (const auto& step : traj.steps) {
            auto [pi, v] = agent::policy_value(params, step.state, step.mask);
            before.push_back(pi[step.action.tail]);
        }
        nn::Optimizer opt(cfg.optimizer);
        agent::update(params, opt, std::span<const Trajectory>(&traj, 1), cfg, 1);
        for (std::size_t t = 0; t < traj.steps.size(); ++t) {
            auto [pi, v] = agent::policy_value(params, traj.steps[t].state, traj.steps[t].mask);
            CHECK(pi[traj.steps[t].action.tail] > before[t]);
        }
    }
    SUBCASE("zero advantage with zero entropy weight changes nothing") {
        AgentConfig cfg;
        cfg.entropy_weight = 0.0;
        cfg.optimizer = {.learning_rate = 0.05, .adaptive = false};
        // Zero value head: v = 0 everywhere, and a zero terminal reward gives
        // G = 0, so every advantage and the critic gradient vanish.
        AgentParams params(spec, 8, 8, kg.entity_count(), 41);
        params.value_head.weights.setZero();
        params.value_head.bias.setZero();
        Trajectory traj = agent::rollout(params, g, reps, pe, 2, 99);
        traj.terminal_reward = 0.0;

        const auto before = params.to_tensors();
        nn::Optimizer opt(cfg.optimizer);
        agent::update(params, opt, std::span<const Trajectory>(&traj, 1), cfg, 1);
        const auto after = params.to_tensors();
        for (std::size_t i = 0; i < before.size(); ++i) {
            CHECK(before[i].second == after[i].second);
        }
    }
    SUBCASE("analytic batch gradient matches finite differences of the objective") {
        AgentConfig cfg;
        cfg.entropy_weight = 0.13;
        cfg.critic_weight = 0.5;
        cfg.discount = 0.9;
        rng::Engine seeds(55);
        int done = 0;
        while (done < 5) {
            AgentParams params(spec, 5, 4, kg.entity_count(), seeds.next());
            std::vector<Trajectory> batch;
            for (int e = 0; e < 2; ++e) {
                Trajectory traj = agent::rollout(params, g, reps, pe, 2, seeds.next());
                traj.terminal_reward = agent::terminal_reward(kg, traj.terminal_entity, {1});
                batch.push_back(std::move(traj));
            }
            // Reject draws near a ReLU kink; the FD oracle needs smoothness.
            bool near_kink = false;
            for (const auto& traj : batch) {
                for (const auto& step : traj.steps) {
                    nn::Mlp::Tape tape;
                    params.trunk.forward(step.state, tape);
                    for (const auto& pre : tape.pre) {
                        for (double z : pre) {
                            if (std::abs(z) < 1e-4) near_kink = true;
                        }
                    }
                }
            }
            if (near_kink) continue;
            ++done;

            const auto fixed_adv = agent::advantages(params, batch, cfg.discount);
            const agent::AgentGrad grad = agent::batch_gradient(params, batch, cfg, nullptr, 1);

            auto refs = params.param_refs();
            const auto grefs = grad.grad_refs();
            const double h = 1e-5;
            for (std::size_t p = 0; p < refs.size(); ++p) {
                for (std::ptrdiff_t j = 0; j < refs[p].size; ++j) {
                    double& x = refs[p].data[j];
                    const double saved = x;
                    x = saved + h;
                    const double up = agent::batch_objective(params, batch, cfg, fixed_adv);
                    x = saved - h;
                    const double down = agent::batch_objective(params, batch, cfg, fixed_adv);
                    x = saved;
                    const double fd = (up - down) / (2 * h);
                    const double an = grefs[p].data[j];
                    CHECK(std::abs(an - fd) <= 1e-4 * std::max({1.0, std::abs(an), std::abs(fd)}));
                }
            }
        }
    }
}

TEST_CASE("training is bit-reproducible under a fixed seed") {
    const KnowledgeGraph kg = toy_graph();
    rng::Engine eng(61);
    const int dim = 3;
    const Representations reps = random_reps(eng, kg.entity_count(), dim, kg.relation_count());
    StateSpec spec{.code_dim = dim, .embed_dim = dim, .relation_count = kg.relation_count()};

    std::vector<cohort::PatientRecord> records(6);
    std::vector<Vector> codes;
    for (int i = 0; i < 6; ++i) {
        records[i].patient_id = "p" + std::to_string(i);
        records[i].links = i % 2 == 0 ? std::vector<int>{0} : std::vector<int>{0, 1};
        records[i].future_labels = {1};
        codes.push_back(random_code(eng, dim));
    }

    AgentConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.episodes_per_patient = 2;
    cfg.seed = 2024;

    auto run = [&]() {
        AgentParams params(spec, 6, 6, kg.entity_count(), cfg.seed);
        agent::train_agent(params, kg, records, codes, reps, cfg, 1);
        return params.to_tensors();
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second == b[i].second);
    }
}
