#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kgwalk/kg.hpp"
#include "kgwalk/nn.hpp"

namespace kgwalk::cohort {

using nn::Vector;

/// One hospitalization as it appears in a cohort file: condition names plus
/// raw feature values. A NaN feature is treated as missing.
struct RawAdmission {
    std::string patient_id;
    int admission_index = 0;
    std::vector<std::string> conditions;
    std::vector<double> features;
};

/// A training/evaluation record: one admission with the diseases of the same
/// patient's next admission as labels. Prediction-only records may have empty
/// labels.
struct PatientRecord {
    std::string patient_id;
    int admission_index = 0;
    std::vector<std::uint8_t> characters;  // p_c, length = entity count
    std::vector<int> links;                // ascending entity ids where p_c = 1
    Vector features;                       // scaled to [0,1]
    std::vector<int> future_labels;        // ascending disease entity ids
    int fold = -1;
};

/// Per-column statistics captured at preprocessing time. The z-scored view of
/// a feature is (raw - mean) / stddev; the model pipeline consumes the
/// min-max scaled view. Constant columns scale to 0.5.
struct FeatureStats {
    Vector mean, stddev, min, max;
    std::vector<std::uint8_t> constant;
};

struct PreprocessSummary {
    int patients_in = 0;
    int patients_single_admission = 0;
    int records_no_kg_link = 0;
    int records_no_labels = 0;
    int values_imputed = 0;
    std::vector<std::string> warnings;
};

class Cohort {
public:
    Cohort(int entity_count, int feature_count, std::vector<PatientRecord> records, FeatureStats stats,
           PreprocessSummary summary);

    const std::vector<PatientRecord>& records() const { return records_; }
    std::vector<PatientRecord>& records() { return records_; }
    int entity_count() const { return entity_count_; }
    int feature_count() const { return feature_count_; }
    const FeatureStats& feature_stats() const { return stats_; }
    const PreprocessSummary& summary() const { return summary_; }

    int patient_count() const;
    int fold_count() const;
    bool has_folds() const { return fold_count() > 0; }

    /// Label occurrences per disease index (length = disease count).
    std::vector<long> label_histogram(const KnowledgeGraph& kg) const;

private:
    int entity_count_;
    int feature_count_;
    std::vector<PatientRecord> records_;
    FeatureStats stats_;
    PreprocessSummary summary_;
};

// ---------------------------------------------------------------------------
// Synthetic cohort generation with planted progression rules.
// ---------------------------------------------------------------------------

/// When the source entity is among a patient's current conditions, the target
/// disease joins the next admission's diagnoses with the given probability.
struct Rule {
    int source_entity = -1;
    int target_disease = -1;
    double probability = 0.0;
};

struct SynthConfig {
    int patients = 2000;
    std::vector<Rule> rules;
    bool imbalance = true;        // Zipf-weighted disease draws; uniform otherwise
    double noise_rate = 0.1;      // chance of one spurious disease label per step
    std::uint64_t seed = 7;
    double disease_persistence = 0.9;
    double risk_factor_persistence = 0.95;
    int min_admissions = 2;
    int max_admissions = 4;
    int noise_feature_count = 4;           // pure-noise feature columns
    std::vector<int> force_initial;        // entity ids present in every initial admission
};

/// One rule per domain edge that ends on a disease; probability decays with
/// the target's popularity rank so planted signal spans common and rare
/// diseases.
std::vector<Rule> default_rules(const KnowledgeGraph& kg);

/// Validates rules (entities exist, target is a disease, the graph holds a
/// path of length <= 2 from source to target) and grows per-patient admission
/// chains where each admission's diagnoses become the next one's conditions.
std::vector<RawAdmission> generate_admissions(const KnowledgeGraph& kg, const SynthConfig& cfg);

/// Simplified preprocessing contract: excludes single-admission patients and
/// unlinkable admissions, mean-imputes missing features, records z-score
/// stats, min-max scales features to [0,1], and derives each record's labels
/// from the next admission's disease conditions.
Cohort preprocess(const KnowledgeGraph& kg, const std::vector<RawAdmission>& admissions);

/// generate_admissions followed by preprocess.
Cohort generate_synthetic(const KnowledgeGraph& kg, const SynthConfig& cfg);

/// Patient-level fold assignment; fold sizes differ by at most one patient.
/// Throws DataError when there are fewer distinct patients than folds.
void make_folds(Cohort& cohort, int folds, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Cohort file format (UTF-8, line oriented, versioned):
//   cohort<TAB>1
//   features<TAB><count>
//   record<TAB>patient<TAB>admission<TAB>cond1,cond2<TAB>f1,f2,...
// Comments start with '#'. An empty feature field denotes a missing value.
// ---------------------------------------------------------------------------

void save_admissions(const std::string& path, const std::vector<RawAdmission>& admissions,
                     int feature_count);
std::vector<RawAdmission> load_admissions(const std::string& path, int* feature_count = nullptr);

/// Applies stored stats to a raw feature vector: mean-imputes NaNs, min-max
/// scales, clamps to [0,1]. Used when scoring records outside the training
/// cohort.
Vector apply_feature_stats(const FeatureStats& stats, const std::vector<double>& raw);

/// Builds a prediction-only record (labels optional) against a graph.
PatientRecord make_record(const KnowledgeGraph& kg, const FeatureStats& stats, const RawAdmission& adm);

}  // namespace kgwalk::cohort
