#include "kgwalk/agent.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "kgwalk/errors.hpp"
#include "kgwalk/rng.hpp"

namespace kgwalk::agent {

Vector build_state(const StateSpec& spec, const Vector& patient_code, const Vector& current_embedding,
                   const std::optional<History>& history) {
    if (patient_code.size() != spec.code_dim) throw std::invalid_argument("build_state: patient code dimension mismatch");
    if (current_embedding.size() != spec.embed_dim)
        throw std::invalid_argument("build_state: entity embedding dimension mismatch");
    Vector state = Vector::Zero(spec.length());
    state.segment(0, spec.code_dim) = patient_code;
    state.segment(spec.code_dim, spec.embed_dim) = current_embedding;
    if (history) {
        if (history->previous_embedding.size() != spec.embed_dim)
            throw std::invalid_argument("build_state: history embedding dimension mismatch");
        if (history->relation < 0 || history->relation >= spec.relation_count)
            throw std::invalid_argument("build_state: history relation out of range");
        state.segment(spec.code_dim + spec.embed_dim, spec.embed_dim) = history->previous_embedding;
        state[spec.code_dim + 2 * spec.embed_dim + history->relation] = 1.0;
    }
    return state;
}

AgentParams::AgentParams(const StateSpec& spec, int hidden1, int hidden2, int entity_count,
                         std::uint64_t seed)
    : spec_(spec) {
    trunk = nn::Mlp({spec.length(), hidden1, hidden2}, {nn::Activation::Relu, nn::Activation::Relu});
    policy_head = nn::DenseLayer(hidden2, entity_count);
    value_head = nn::DenseLayer(hidden2, 1);
    nn::init_fan_balanced(trunk.layers[0], rng::mix(seed, 0xa9e071ULL, 0));
    nn::init_fan_balanced(trunk.layers[1], rng::mix(seed, 0xa9e071ULL, 1));
    nn::init_fan_balanced(policy_head, rng::mix(seed, 0xa9e071ULL, 2));
    nn::init_fan_balanced(value_head, rng::mix(seed, 0xa9e071ULL, 3));
}

AgentParams AgentParams::zeros(const StateSpec& spec, int hidden1, int hidden2, int entity_count) {
    AgentParams p;
    p.spec_ = spec;
    p.trunk = nn::Mlp({spec.length(), hidden1, hidden2}, {nn::Activation::Relu, nn::Activation::Relu});
    p.policy_head = nn::DenseLayer(hidden2, entity_count);
    p.value_head = nn::DenseLayer(hidden2, 1);
    return p;
}

snapshot::TensorList AgentParams::to_tensors() const {
    snapshot::TensorList tensors;
    Matrix meta(5, 1);
    meta << spec_.code_dim, spec_.embed_dim, spec_.relation_count, trunk.layers[0].out_dim(),
        trunk.layers[1].out_dim();
    tensors.emplace_back("meta", meta);
    tensors.emplace_back("trunk0.weights", trunk.layers[0].weights);
    tensors.emplace_back("trunk0.bias", trunk.layers[0].bias);
    tensors.emplace_back("trunk1.weights", trunk.layers[1].weights);
    tensors.emplace_back("trunk1.bias", trunk.layers[1].bias);
    tensors.emplace_back("policy.weights", policy_head.weights);
    tensors.emplace_back("policy.bias", policy_head.bias);
    tensors.emplace_back("value.weights", value_head.weights);
    tensors.emplace_back("value.bias", value_head.bias);
    return tensors;
}

AgentParams AgentParams::from_tensors(const snapshot::TensorList& tensors) {
    const Matrix& meta = snapshot::require(tensors, "meta", 5, 1);
    StateSpec spec;
    spec.code_dim = static_cast<int>(meta(0, 0));
    spec.embed_dim = static_cast<int>(meta(1, 0));
    spec.relation_count = static_cast<int>(meta(2, 0));
    const int hidden1 = static_cast<int>(meta(3, 0));
    const int hidden2 = static_cast<int>(meta(4, 0));

    const Matrix& policy_w = snapshot::require(tensors, "policy.weights", hidden2, -1);
    const int entity_count = static_cast<int>(policy_w.cols());

    AgentParams p = zeros(spec, hidden1, hidden2, entity_count);
    p.trunk.layers[0].weights = snapshot::require(tensors, "trunk0.weights", spec.length(), hidden1);
    p.trunk.layers[0].bias = snapshot::require(tensors, "trunk0.bias", hidden1, 1).col(0);
    p.trunk.layers[1].weights = snapshot::require(tensors, "trunk1.weights", hidden1, hidden2);
    p.trunk.layers[1].bias = snapshot::require(tensors, "trunk1.bias", hidden2, 1).col(0);
    p.policy_head.weights = policy_w;
    p.policy_head.bias = snapshot::require(tensors, "policy.bias", entity_count, 1).col(0);
    p.value_head.weights = snapshot::require(tensors, "value.weights", hidden2, 1);
    p.value_head.bias = snapshot::require(tensors, "value.bias", 1, 1).col(0);
    return p;
}

std::vector<nn::ParamRef> AgentParams::param_refs() {
    std::vector<nn::ParamRef> refs;
    auto add = [&](const std::string& name, Matrix& m) {
        refs.push_back({name, m.data(), m.size()});
    };
    auto addv = [&](const std::string& name, Vector& v) {
        refs.push_back({name, v.data(), v.size()});
    };
    add("trunk0.weights", trunk.layers[0].weights);
    addv("trunk0.bias", trunk.layers[0].bias);
    add("trunk1.weights", trunk.layers[1].weights);
    addv("trunk1.bias", trunk.layers[1].bias);
    add("policy.weights", policy_head.weights);
    addv("policy.bias", policy_head.bias);
    add("value.weights", value_head.weights);
    addv("value.bias", value_head.bias);
    return refs;
}

AgentGrad AgentGrad::zeros_like(const AgentParams& params) {
    AgentGrad g;
    g.trunk = params.trunk.zero_grads();
    g.policy_head = nn::DenseGrad::zeros_like(params.policy_head);
    g.value_head = nn::DenseGrad::zeros_like(params.value_head);
    return g;
}

AgentGrad& AgentGrad::operator+=(const AgentGrad& other) {
    for (std::size_t i = 0; i < trunk.size(); ++i) trunk[i] += other.trunk[i];
    policy_head += other.policy_head;
    value_head += other.value_head;
    return *this;
}

void AgentGrad::zero() {
    for (auto& g : trunk) g.zero();
    policy_head.zero();
    value_head.zero();
}

void AgentGrad::scale(double factor) {
    for (auto& g : trunk) {
        g.weights *= factor;
        g.bias *= factor;
    }
    policy_head.weights *= factor;
    policy_head.bias *= factor;
    value_head.weights *= factor;
    value_head.bias *= factor;
}

std::vector<nn::GradRef> AgentGrad::grad_refs() const {
    std::vector<nn::GradRef> refs;
    auto add = [&](const Matrix& m) { refs.push_back({m.data(), m.size()}); };
    auto addv = [&](const Vector& v) { refs.push_back({v.data(), v.size()}); };
    add(trunk[0].weights);
    addv(trunk[0].bias);
    add(trunk[1].weights);
    addv(trunk[1].bias);
    add(policy_head.weights);
    addv(policy_head.bias);
    add(value_head.weights);
    addv(value_head.bias);
    return refs;
}

std::pair<Vector, double> policy_value(const AgentParams& params, const Vector& state, const Mask& mask) {
    const Vector x = params.trunk.forward(state);
    const Vector logits = nn::affine(params.policy_head, x);
    const double value = nn::affine(params.value_head, x)[0];
    return {nn::masked_softmax(logits, mask), value};
}

namespace {

// Samples a tail entity from the policy restricted to the action list.
Action sample_action(const std::vector<Action>& space, const Vector& policy, rng::Engine& eng) {
    const double u = eng.uniform();
    double acc = 0.0;
    for (const Action& a : space) {
        acc += policy[a.tail];
        if (u < acc) return a;
    }
    return space.back();
}

}  // namespace

Trajectory rollout(const AgentParams& params, const LinkedGraph& graph, const Representations& reps,
                   const Vector& patient_code, int horizon, std::uint64_t seed) {
    if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
    const KnowledgeGraph& kg = graph.base();
    const StateSpec& spec = params.state_spec();
    rng::Engine eng(seed);

    Trajectory traj;
    std::optional<int> current;
    std::vector<int> visited;
    std::optional<History> history;

    for (int t = 0; t < horizon; ++t) {
        const Vector current_embedding = current ? reps.entity_embedding(*current) : patient_code;
        const Vector state = build_state(spec, patient_code, current_embedding, history);
        std::vector<Action> space = unique_by_tail(action_space(graph, current, visited));
        if (space.empty()) {
            traj.truncated = true;
            break;
        }
        const Mask mask = action_mask(space, kg.entity_count());
        auto [policy, value] = policy_value(params, state, mask);
        const Action action = sample_action(space, policy, eng);

        traj.steps.push_back(TrajectoryStep{state, mask, action, policy, value});

        history = History{current_embedding, action.relation};
        if (!current || action.tail != *current) {
            if (current) visited.push_back(*current);
            current = action.tail;
        }
    }
    traj.terminal_entity = current.value_or(-1);
    return traj;
}

int terminal_reward(const KnowledgeGraph& kg, int terminal_entity, const std::vector<int>& future_labels) {
    if (terminal_entity < 0 || !kg.is_disease(terminal_entity)) return -1;
    const bool occurs = std::find(future_labels.begin(), future_labels.end(), terminal_entity) !=
                        future_labels.end();
    return occurs ? 1 : 0;
}

std::vector<double> step_returns(const Trajectory& traj, double discount) {
    const int steps = static_cast<int>(traj.steps.size());
    std::vector<double> g(steps);
    for (int t = 0; t < steps; ++t) {
        g[t] = std::pow(discount, static_cast<double>(steps - 1 - t)) * traj.terminal_reward;
    }
    return g;
}

std::vector<std::vector<double>> advantages(const AgentParams& params,
                                            std::span<const Trajectory> batch, double discount) {
    std::vector<std::vector<double>> out;
    out.reserve(batch.size());
    for (const Trajectory& traj : batch) {
        std::vector<double> adv = step_returns(traj, discount);
        for (std::size_t t = 0; t < traj.steps.size(); ++t) {
            const Vector x = params.trunk.forward(traj.steps[t].state);
            adv[t] -= nn::affine(params.value_head, x)[0];
        }
        out.push_back(std::move(adv));
    }
    return out;
}

double batch_objective(const AgentParams& params, std::span<const Trajectory> batch,
                       const AgentConfig& cfg, const std::vector<std::vector<double>>& fixed_advantages) {
    if (batch.empty()) throw std::invalid_argument("batch_objective: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Trajectory& traj = batch[i];
        const std::vector<double> returns = step_returns(traj, cfg.discount);
        for (std::size_t t = 0; t < traj.steps.size(); ++t) {
            const TrajectoryStep& step = traj.steps[t];
            const Vector x = params.trunk.forward(step.state);
            const Vector logits = nn::affine(params.policy_head, x);
            const Vector logp = nn::masked_log_softmax(logits, step.mask);
            const double v = nn::affine(params.value_head, x)[0];
            Vector probs = Vector::Zero(logits.size());
            for (int j = 0; j < logits.size(); ++j) {
                if (step.mask[j]) probs[j] = std::exp(logp[j]);
            }
            total += logp[step.action.tail] * fixed_advantages[i][t];
            total += cfg.entropy_weight * nn::entropy(probs);
            total -= cfg.critic_weight * (returns[t] - v) * (returns[t] - v);
        }
    }
    return total / static_cast<double>(batch.size());
}

namespace {

// Per-trajectory gradient of the training objective, un-normalized,
// accumulated into a caller-owned (pre-zeroed) buffer.
void trajectory_gradient(const AgentParams& params, const Trajectory& traj, const AgentConfig& cfg,
                         AgentGrad& grad, UpdateDiagnostics& diag) {
    const std::vector<double> returns = step_returns(traj, cfg.discount);
    if (!returns.empty()) diag.mean_return += returns.front();
    diag.mean_reward += traj.terminal_reward;
    diag.hit_rate += traj.terminal_reward > 0.5 ? 1.0 : 0.0;
    ++diag.episodes;

    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const TrajectoryStep& step = traj.steps[t];
        nn::Mlp::Tape tape;
        const Vector x = params.trunk.forward(step.state, tape);
        const Vector logits = nn::affine(params.policy_head, x);
        const Vector logp = nn::masked_log_softmax(logits, step.mask);
        const double v = nn::affine(params.value_head, x)[0];

        Vector probs = Vector::Zero(logits.size());
        for (int j = 0; j < logits.size(); ++j) {
            if (step.mask[j]) probs[j] = std::exp(logp[j]);
        }
        const double ent = nn::entropy(probs);
        const double advantage = returns[t] - v;

        diag.mean_entropy += ent;
        diag.critic_loss += advantage * advantage;
        ++diag.steps;

        // d/dlogits of [advantage * logp(action) + entropy_weight * H].
        // The advantage is a constant here; no gradient flows into the
        // baseline through the policy term.
        Vector dlogits = -advantage * probs;
        dlogits[step.action.tail] += advantage;
        if (cfg.entropy_weight != 0.0) {
            for (int j = 0; j < logits.size(); ++j) {
                if (step.mask[j] && probs[j] > 0.0)
                    dlogits[j] -= cfg.entropy_weight * probs[j] * (logp[j] + ent);
            }
        }
        // d/dv of [-critic_weight * (G - v)^2].
        Vector dvalue(1);
        dvalue[0] = 2.0 * cfg.critic_weight * advantage;

        Vector dx = nn::affine_backward(params.policy_head, x, dlogits, grad.policy_head);
        dx += nn::affine_backward(params.value_head, x, dvalue, grad.value_head);
        params.trunk.backward(tape, dx, grad.trunk);
    }
}

// Per-trajectory partials are reduced in index order in both the serial and
// the OpenMP path, so the two produce identical bits.
UpdateDiagnostics reduce_diagnostics(std::span<const UpdateDiagnostics> parts) {
    UpdateDiagnostics diag;
    for (const UpdateDiagnostics& p : parts) {
        diag.mean_return += p.mean_return;
        diag.mean_reward += p.mean_reward;
        diag.hit_rate += p.hit_rate;
        diag.mean_entropy += p.mean_entropy;
        diag.critic_loss += p.critic_loss;
        diag.episodes += p.episodes;
        diag.steps += p.steps;
    }
    if (diag.episodes > 0) {
        diag.mean_return /= static_cast<double>(diag.episodes);
        diag.mean_reward /= static_cast<double>(diag.episodes);
        diag.hit_rate /= static_cast<double>(diag.episodes);
    }
    if (diag.steps > 0) {
        diag.mean_entropy /= static_cast<double>(diag.steps);
        diag.critic_loss /= static_cast<double>(diag.steps);
    }
    return diag;
}

}  // namespace

AgentGrad batch_gradient_serial(const AgentParams& params, std::span<const Trajectory> batch,
                                const AgentConfig& cfg, UpdateDiagnostics* diagnostics) {
    if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    AgentGrad total = AgentGrad::zeros_like(params);
    AgentGrad slot = AgentGrad::zeros_like(params);
    std::vector<UpdateDiagnostics> diags(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        slot.zero();
        trajectory_gradient(params, batch[i], cfg, slot, diags[i]);
        total += slot;
    }
    total.scale(1.0 / static_cast<double>(batch.size()));
    if (diagnostics) *diagnostics = reduce_diagnostics(diags);
    return total;
}

AgentGrad batch_gradient_parallel(const AgentParams& params, std::span<const Trajectory> batch,
                                  const AgentConfig& cfg, UpdateDiagnostics* diagnostics, int workers) {
    if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
    const int n = static_cast<int>(batch.size());
    // Per-trajectory gradients land in a bounded block of reusable slots and
    // are reduced in index order, so the sum associates exactly as in the
    // serial path no matter how iterations were scheduled.
    const int block = std::min(n, 4 * std::max(1, workers) * 8);
    std::vector<AgentGrad> slots(static_cast<std::size_t>(block), AgentGrad::zeros_like(params));
    std::vector<UpdateDiagnostics> diags(batch.size());
    AgentGrad total = AgentGrad::zeros_like(params);
    for (int start = 0; start < n; start += block) {
        const int end = std::min(n, start + block);
#pragma omp parallel for schedule(dynamic) num_threads(workers)
        for (int i = start; i < end; ++i) {
            slots[i - start].zero();
            trajectory_gradient(params, batch[i], cfg, slots[i - start], diags[i]);
        }
        for (int i = start; i < end; ++i) total += slots[i - start];
    }
    total.scale(1.0 / static_cast<double>(n));
    if (diagnostics) *diagnostics = reduce_diagnostics(diags);
    return total;
}

AgentGrad batch_gradient(const AgentParams& params, std::span<const Trajectory> batch,
                         const AgentConfig& cfg, UpdateDiagnostics* diagnostics, int workers) {
    if (workers > 1) return batch_gradient_parallel(params, batch, cfg, diagnostics, workers);
    return batch_gradient_serial(params, batch, cfg, diagnostics);
}

UpdateDiagnostics update(AgentParams& params, nn::Optimizer& optimizer,
                         std::span<const Trajectory> batch, const AgentConfig& cfg, int workers) {
    UpdateDiagnostics diag;
    const AgentGrad grad = batch_gradient(params, batch, cfg, &diag, workers);
    auto refs = params.param_refs();
    optimizer.apply(refs, grad.grad_refs(), nn::StepDirection::Ascend);
    return diag;
}

namespace {

Trajectory run_episode(const AgentParams& params, const KnowledgeGraph& kg,
                       const cohort::PatientRecord& record, const Vector& code,
                       const Representations& reps, int horizon, const EpisodeSpec& spec) {
    LinkedGraph graph(kg, record.links);
    Trajectory traj = rollout(params, graph, reps, code, horizon, spec.seed);
    traj.record_index = spec.record;
    traj.terminal_reward = terminal_reward(kg, traj.terminal_entity, record.future_labels);
    return traj;
}

}  // namespace

std::vector<Trajectory> collect_episodes_serial(const AgentParams& params, const KnowledgeGraph& kg,
                                                std::span<const cohort::PatientRecord> records,
                                                std::span<const Vector> patient_codes,
                                                const Representations& reps, int horizon,
                                                std::span<const EpisodeSpec> specs) {
    std::vector<Trajectory> out(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const EpisodeSpec& spec = specs[i];
        out[i] = run_episode(params, kg, records[spec.record], patient_codes[spec.record], reps, horizon, spec);
    }
    return out;
}

std::vector<Trajectory> collect_episodes_parallel(const AgentParams& params, const KnowledgeGraph& kg,
                                                  std::span<const cohort::PatientRecord> records,
                                                  std::span<const Vector> patient_codes,
                                                  const Representations& reps, int horizon,
                                                  std::span<const EpisodeSpec> specs, int workers) {
    std::vector<Trajectory> out(specs.size());
    const int n = static_cast<int>(specs.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (int i = 0; i < n; ++i) {
        const EpisodeSpec& spec = specs[i];
        out[i] = run_episode(params, kg, records[spec.record], patient_codes[spec.record], reps, horizon, spec);
    }
    return out;
}

std::vector<Trajectory> collect_episodes(const AgentParams& params, const KnowledgeGraph& kg,
                                         std::span<const cohort::PatientRecord> records,
                                         std::span<const Vector> patient_codes,
                                         const Representations& reps, int horizon,
                                         std::span<const EpisodeSpec> specs, int workers) {
    if (workers > 1)
        return collect_episodes_parallel(params, kg, records, patient_codes, reps, horizon, specs, workers);
    return collect_episodes_serial(params, kg, records, patient_codes, reps, horizon, specs);
}

std::vector<EpochLog> train_agent(AgentParams& params, const KnowledgeGraph& kg,
                                  std::span<const cohort::PatientRecord> records,
                                  std::span<const Vector> patient_codes, const Representations& reps,
                                  const AgentConfig& cfg, int workers) {
    if (records.empty()) throw DataError("train_agent: no training records");
    nn::Optimizer optimizer(cfg.optimizer);
    rng::Engine shuffler(rng::mix(cfg.seed, 0x50f1eULL));
    std::vector<int> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    std::vector<EpochLog> logs;
    const int batch_records = std::max(1, cfg.batch_size);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffler.shuffle(order);
        UpdateDiagnostics epoch_diag;
        for (std::size_t start = 0; start < order.size(); start += batch_records) {
            const std::size_t end = std::min(order.size(), start + batch_records);
            std::vector<EpisodeSpec> specs;
            specs.reserve((end - start) * cfg.episodes_per_patient);
            for (std::size_t pos = start; pos < end; ++pos) {
                for (int e = 0; e < cfg.episodes_per_patient; ++e) {
                    specs.push_back(EpisodeSpec{
                        order[pos], rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch),
                                             static_cast<std::uint64_t>(pos), static_cast<std::uint64_t>(e))});
                }
            }
            auto batch = collect_episodes(params, kg, records, patient_codes, reps, cfg.horizon, specs, workers);
            UpdateDiagnostics diag = update(params, optimizer, batch, cfg, workers);
            epoch_diag.mean_return += diag.mean_return * static_cast<double>(diag.episodes);
            epoch_diag.mean_entropy += diag.mean_entropy * static_cast<double>(diag.steps);
            epoch_diag.critic_loss += diag.critic_loss * static_cast<double>(diag.steps);
            epoch_diag.hit_rate += diag.hit_rate * static_cast<double>(diag.episodes);
            epoch_diag.episodes += diag.episodes;
            epoch_diag.steps += diag.steps;
        }
        EpochLog log;
        log.epoch = epoch;
        if (epoch_diag.episodes > 0) {
            log.mean_return = epoch_diag.mean_return / static_cast<double>(epoch_diag.episodes);
            log.hit_rate = epoch_diag.hit_rate / static_cast<double>(epoch_diag.episodes);
        }
        if (epoch_diag.steps > 0) {
            log.mean_entropy = epoch_diag.mean_entropy / static_cast<double>(epoch_diag.steps);
            log.critic_loss = epoch_diag.critic_loss / static_cast<double>(epoch_diag.steps);
        }
        logs.push_back(log);
    }
    return logs;
}

}  // namespace kgwalk::agent
