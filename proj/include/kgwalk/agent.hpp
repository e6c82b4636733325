#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "kgwalk/cohort.hpp"
#include "kgwalk/embeddings.hpp"
#include "kgwalk/kg.hpp"
#include "kgwalk/nn.hpp"
#include "kgwalk/snapshot.hpp"

namespace kgwalk::agent {

using nn::Mask;
using nn::Matrix;
using nn::Vector;

/// Frozen embedding tables the walker reads: entity embeddings are the RBM
/// weight rows, relations are one-hot over relation-type ids. Never mutated
/// by agent training.
struct Representations {
    Matrix entity;           // entity_count x embed_dim
    int relation_count = 0;

    int embed_dim() const { return static_cast<int>(entity.cols()); }
    Vector entity_embedding(int id) const { return entity.row(id).transpose(); }
};

/// State layout: [patient code | current embedding | previous embedding |
/// relation one-hot]. The patient code doubles as the start entity embedding,
/// which forces code_dim == embed_dim.
struct StateSpec {
    int code_dim = 0;
    int embed_dim = 0;
    int relation_count = 0;

    int length() const { return code_dim + 2 * embed_dim + relation_count; }
};

/// One-step history: the embedding of where the walker came from and the
/// relation it traversed.
struct History {
    Vector previous_embedding;
    int relation = -1;
};

/// Start of walk (no history): (p_e, p_e, 0). After a step the current slot
/// holds the reached entity and the history slots the step taken.
Vector build_state(const StateSpec& spec, const Vector& patient_code, const Vector& current_embedding,
                   const std::optional<History>& history);

struct AgentConfig {
    int horizon = 2;
    double discount = 0.99;
    double entropy_weight = 0.13;
    double critic_weight = 0.5;
    int episodes_per_patient = 4;
    int epochs = 20;
    int batch_size = 32;
    int hidden1 = 64;
    int hidden2 = 64;
    nn::OptimizerConfig optimizer;
    std::uint64_t seed = 7;
};

/// Two ReLU trunk layers shared by a policy head (one logit per entity) and a
/// scalar value head.
class AgentParams {
public:
    AgentParams() = default;

    /// Fan-balanced random init.
    AgentParams(const StateSpec& spec, int hidden1, int hidden2, int entity_count, std::uint64_t seed);

    /// All-zero parameters: the policy is uniform over any mask. Used as the
    /// untrained reference.
    static AgentParams zeros(const StateSpec& spec, int hidden1, int hidden2, int entity_count);

    snapshot::TensorList to_tensors() const;
    static AgentParams from_tensors(const snapshot::TensorList& tensors);

    std::vector<nn::ParamRef> param_refs();

    const StateSpec& state_spec() const { return spec_; }
    int entity_count() const { return policy_head.out_dim(); }

    nn::Mlp trunk;
    nn::DenseLayer policy_head;
    nn::DenseLayer value_head;

private:
    StateSpec spec_;
};

struct AgentGrad {
    std::vector<nn::DenseGrad> trunk;
    nn::DenseGrad policy_head;
    nn::DenseGrad value_head;

    static AgentGrad zeros_like(const AgentParams& params);
    AgentGrad& operator+=(const AgentGrad& other);
    void zero();
    void scale(double factor);
    std::vector<nn::GradRef> grad_refs() const;
};

/// Policy distribution over entities (masked softmax of the policy logits)
/// and the state value. Throws on an all-zero mask.
std::pair<Vector, double> policy_value(const AgentParams& params, const Vector& state, const Mask& mask);

struct TrajectoryStep {
    Vector state;
    Mask mask;
    Action action;
    Vector policy;
    double value = 0.0;
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    int terminal_entity = -1;
    double terminal_reward = 0.0;
    bool truncated = false;  // dead end before the horizon
    int record_index = -1;
};

/// Samples one walk of `horizon` steps from the patient entity, with
/// visited-entity exclusion and self-loops always available. A dead end
/// terminates the trajectory early and flags it.
Trajectory rollout(const AgentParams& params, const LinkedGraph& graph, const Representations& reps,
                   const Vector& patient_code, int horizon, std::uint64_t seed);

/// +1: terminal is a disease in the future labels; 0: a disease that is not;
/// -1: anything else.
int terminal_reward(const KnowledgeGraph& kg, int terminal_entity, const std::vector<int>& future_labels);

/// Discounted returns G_t = discount^(T-1-t) * R_T; intermediate rewards are
/// zero.
std::vector<double> step_returns(const Trajectory& traj, double discount);

/// G_t - v(s_t) per step under the given parameters.
std::vector<std::vector<double>> advantages(const AgentParams& params,
                                            std::span<const Trajectory> batch, double discount);

/// Scalar training objective with externally fixed advantages: the
/// advantage-weighted log-probability of taken actions, plus the entropy
/// bonus, minus the weighted critic squared error; averaged over
/// trajectories. Matches batch_gradient's analytic gradient.
double batch_objective(const AgentParams& params, std::span<const Trajectory> batch,
                       const AgentConfig& cfg, const std::vector<std::vector<double>>& fixed_advantages);

struct UpdateDiagnostics {
    double mean_return = 0.0;   // mean G_0
    double mean_reward = 0.0;   // mean terminal reward
    double mean_entropy = 0.0;  // mean per-step policy entropy
    double critic_loss = 0.0;   // mean squared advantage
    double hit_rate = 0.0;      // fraction of episodes with reward +1
    long episodes = 0;
    long steps = 0;
};

/// Gradient of batch_objective at the current parameters (advantages frozen
/// at their current values, so no gradient flows through the baseline in the
/// policy term). workers > 1 computes per-trajectory gradients in parallel;
/// the reduction order is fixed, so results are identical to the serial path.
AgentGrad batch_gradient(const AgentParams& params, std::span<const Trajectory> batch,
                         const AgentConfig& cfg, UpdateDiagnostics* diagnostics, int workers);

AgentGrad batch_gradient_serial(const AgentParams& params, std::span<const Trajectory> batch,
                                const AgentConfig& cfg, UpdateDiagnostics* diagnostics);
AgentGrad batch_gradient_parallel(const AgentParams& params, std::span<const Trajectory> batch,
                                  const AgentConfig& cfg, UpdateDiagnostics* diagnostics, int workers);

/// One optimizer step on a trajectory batch; ascends the objective. Returns
/// the batch diagnostics. Throws NumericError when the gradient is not
/// finite.
UpdateDiagnostics update(AgentParams& params, nn::Optimizer& optimizer,
                         std::span<const Trajectory> batch, const AgentConfig& cfg, int workers);

struct EpisodeSpec {
    int record = -1;  // index into the records span
    std::uint64_t seed = 0;
};

/// Runs one episode per spec; output[i] corresponds to specs[i], so results
/// are independent of the execution order. Terminal rewards are evaluated
/// against each record's future labels.
std::vector<Trajectory> collect_episodes(const AgentParams& params, const KnowledgeGraph& kg,
                                         std::span<const cohort::PatientRecord> records,
                                         std::span<const Vector> patient_codes,
                                         const Representations& reps, int horizon,
                                         std::span<const EpisodeSpec> specs, int workers);

std::vector<Trajectory> collect_episodes_serial(const AgentParams& params, const KnowledgeGraph& kg,
                                                std::span<const cohort::PatientRecord> records,
                                                std::span<const Vector> patient_codes,
                                                const Representations& reps, int horizon,
                                                std::span<const EpisodeSpec> specs);
std::vector<Trajectory> collect_episodes_parallel(const AgentParams& params, const KnowledgeGraph& kg,
                                                  std::span<const cohort::PatientRecord> records,
                                                  std::span<const Vector> patient_codes,
                                                  const Representations& reps, int horizon,
                                                  std::span<const EpisodeSpec> specs, int workers);

struct EpochLog {
    int epoch = 0;
    double mean_return = 0.0;
    double mean_entropy = 0.0;
    double critic_loss = 0.0;
    double hit_rate = 0.0;
};

/// Full training loop: per epoch, shuffles records, then per minibatch
/// collects episodes_per_patient episodes per record and applies one update.
/// Deterministic for a fixed seed at any worker count.
std::vector<EpochLog> train_agent(AgentParams& params, const KnowledgeGraph& kg,
                                  std::span<const cohort::PatientRecord> records,
                                  std::span<const Vector> patient_codes, const Representations& reps,
                                  const AgentConfig& cfg, int workers);

}  // namespace kgwalk::agent
