#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "kgwalk/agent.hpp"
#include "kgwalk/cohort.hpp"
#include "kgwalk/config.hpp"
#include "kgwalk/embeddings.hpp"
#include "kgwalk/inference.hpp"
#include "kgwalk/kg.hpp"

namespace kgwalk::eval {

/// Per-record disease scores next to the true next-admission labels.
struct ScoreMatrix {
    nn::Matrix scores;                    // records x diseases
    std::vector<std::vector<int>> labels;  // disease indices per record, ascending

    int record_count() const { return static_cast<int>(scores.rows()); }
    int disease_count() const { return static_cast<int>(scores.cols()); }
};

ScoreMatrix make_score_matrix(const KnowledgeGraph& kg,
                              std::span<const cohort::PatientRecord> records,
                              std::span<const infer::PredictionResult> predictions);

struct AucResult {
    double macro_auc = 0.0;
    int evaluated = 0;  // diseases with both positives and negatives
    int skipped = 0;    // single-class diseases excluded from the mean
};

/// Unweighted mean of per-disease ROC AUCs, midrank tie convention. Throws
/// DataError when no disease has both classes.
AucResult macro_auc(const ScoreMatrix& scores);

/// Mean over records of |top-k predictions intersected with true labels|;
/// score ties break toward the lower disease id.
double topk_hit(const ScoreMatrix& scores, int k);

// ---------------------------------------------------------------------------
// Training pipeline shared by the train command and cross-validation.
// ---------------------------------------------------------------------------

struct TrainedModels {
    emb::RbmParams rbm;
    emb::AutoencoderParams autoencoder;
    agent::AgentParams agent_params;
    agent::Representations representations;
    std::vector<emb::TrainLogEntry> rbm_log;
    std::vector<emb::TrainLogEntry> ae_log;
    std::vector<agent::EpochLog> agent_log;
};

/// Stage 1 (RBM + autoencoder on the training records) then stage 2 (the
/// actor-critic walker). Representations are frozen before agent training.
TrainedModels train_pipeline(const KnowledgeGraph& kg,
                             std::span<const cohort::PatientRecord> records, const RunConfig& cfg,
                             std::uint64_t seed, int workers);

/// Patient codes for a record span under a trained autoencoder.
std::vector<nn::Vector> encode_records(const emb::AutoencoderParams& ae,
                                       std::span<const cohort::PatientRecord> records);

struct FoldMetrics {
    int fold = -1;
    double macro_auc = 0.0;
    int auc_evaluated = 0;
    int auc_skipped = 0;
    std::map<int, double> topk;  // k -> hit count
    double final_entropy = 0.0;  // mean policy entropy in the last training epoch
    int test_records = 0;
};

struct EvalReport {
    std::vector<FoldMetrics> folds;
    std::vector<int> top_ks;

    double mean_auc() const;
    double std_auc() const;
    double mean_topk(int k) const;
    double std_topk(int k) const;
    double mean_final_entropy() const;
};

/// Five-fold style cross-validation: per fold, train the full pipeline on the
/// other folds and score this fold. Fold assignments must be present.
EvalReport cross_validate(const KnowledgeGraph& kg, const cohort::Cohort& cohort,
                          const RunConfig& cfg, int workers);

enum class SweepAxis { Horizon, Entropy };

struct SweepPoint {
    double value = 0.0;
    EvalReport report;
};

/// One cross-validation per grid value; the default grids follow the horizon
/// {2,3,4,5} and entropy-weight {0, 0.01, 0.1, 1} studies.
std::vector<SweepPoint> sweep(const KnowledgeGraph& kg, const cohort::Cohort& cohort,
                              const RunConfig& cfg, SweepAxis axis, int workers);
std::vector<SweepPoint> sweep(const KnowledgeGraph& kg, const cohort::Cohort& cohort,
                              const RunConfig& cfg, SweepAxis axis, std::span<const double> grid,
                              int workers);

std::vector<double> default_grid(SweepAxis axis);

/// Deterministic TSV rendering of a report (one row per fold plus mean/std
/// aggregate rows). axis_label/value columns are '-' for plain evaluations.
std::string render_report(const EvalReport& report, const std::string& axis_label, double axis_value,
                          bool with_axis);
std::string render_sweep(const std::vector<SweepPoint>& points, SweepAxis axis);

}  // namespace kgwalk::eval
