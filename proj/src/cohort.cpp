#include "kgwalk/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "kgwalk/errors.hpp"
#include "kgwalk/rng.hpp"

namespace kgwalk::cohort {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = text.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(text.substr(start));
            return out;
        }
        out.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out.push_back(sep);
        out += parts[i];
    }
    return out;
}

}  // namespace

Cohort::Cohort(int entity_count, int feature_count, std::vector<PatientRecord> records,
               FeatureStats stats, PreprocessSummary summary)
    : entity_count_(entity_count),
      feature_count_(feature_count),
      records_(std::move(records)),
      stats_(std::move(stats)),
      summary_(std::move(summary)) {}

int Cohort::patient_count() const {
    std::set<std::string> ids;
    for (const auto& r : records_) ids.insert(r.patient_id);
    return static_cast<int>(ids.size());
}

int Cohort::fold_count() const {
    int max_fold = -1;
    for (const auto& r : records_) max_fold = std::max(max_fold, r.fold);
    return max_fold + 1;
}

std::vector<long> Cohort::label_histogram(const KnowledgeGraph& kg) const {
    std::vector<long> counts(kg.disease_count(), 0);
    for (const auto& r : records_) {
        for (int label : r.future_labels) ++counts[kg.disease_index(label)];
    }
    return counts;
}

std::vector<Rule> default_rules(const KnowledgeGraph& kg) {
    // Popularity rank = disease index (file order); earlier diseases are the
    // common ones in the shipped graph.
    std::vector<Rule> rules;
    for (const Triplet& t : kg.triplets()) {
        if (kg.relation(t.relation).origin != RelationOrigin::Domain) continue;
        if (!kg.is_disease(t.tail)) continue;
        const double rank = static_cast<double>(kg.disease_index(t.tail));
        const double p = 0.55 / (1.0 + 0.15 * rank);
        rules.push_back(Rule{t.head, t.tail, std::max(0.12, p)});
    }
    return rules;
}

namespace {

void validate_rules(const KnowledgeGraph& kg, const std::vector<Rule>& rules) {
    for (const Rule& rule : rules) {
        if (rule.source_entity < 0 || rule.source_entity >= kg.entity_count())
            throw DataError("synthetic rule source entity out of range");
        if (!kg.is_disease(rule.target_disease))
            throw DataError("synthetic rule target '" +
                            (rule.target_disease >= 0 && rule.target_disease < kg.entity_count()
                                 ? kg.entity(rule.target_disease).name
                                 : std::string("<invalid>")) +
                            "' is not a disease entity");
        if (!(rule.probability >= 0.0 && rule.probability <= 1.0))
            throw DataError("synthetic rule probability outside [0,1]");
        // Reachability within two domain steps.
        bool reachable = false;
        for (const Action& a : kg.outgoing(rule.source_entity)) {
            if (a.tail == rule.target_disease && a.tail != rule.source_entity) reachable = true;
        }
        if (!reachable) {
            for (const Action& a : kg.outgoing(rule.source_entity)) {
                if (a.tail == rule.source_entity) continue;
                for (const Action& b : kg.outgoing(a.tail)) {
                    if (b.tail == rule.target_disease) reachable = true;
                }
            }
        }
        if (!reachable)
            throw DataError("synthetic rule " + kg.entity(rule.source_entity).name + " -> " +
                            kg.entity(rule.target_disease).name +
                            " has no KG path of length <= 2");
    }
}

std::vector<double> disease_weights(const KnowledgeGraph& kg, bool imbalance) {
    std::vector<double> w(kg.disease_count(), 1.0);
    if (imbalance) {
        for (int i = 0; i < kg.disease_count(); ++i) w[i] = 1.0 / std::pow(i + 1.0, 1.4);
    }
    return w;
}

}  // namespace

std::vector<RawAdmission> generate_admissions(const KnowledgeGraph& kg, const SynthConfig& cfg) {
    if (cfg.patients < 1) throw std::invalid_argument("synthetic cohort needs at least one patient");
    if (cfg.min_admissions < 2 || cfg.max_admissions < cfg.min_admissions)
        throw std::invalid_argument("admission range must satisfy 2 <= min <= max");
    validate_rules(kg, cfg.rules);
    for (int id : cfg.force_initial) {
        if (id < 0 || id >= kg.entity_count()) throw DataError("force_initial entity out of range");
    }

    std::vector<int> risk_factors;
    for (const Entity& e : kg.entities()) {
        if (e.kind == EntityKind::RiskFactor) risk_factors.push_back(e.id);
    }
    const std::vector<double> weights = disease_weights(kg, cfg.imbalance);
    const int feature_count = static_cast<int>(risk_factors.size()) + cfg.noise_feature_count;

    rng::Engine eng(rng::mix(cfg.seed, 0xc0401aULL));
    std::vector<RawAdmission> admissions;

    for (int p = 0; p < cfg.patients; ++p) {
        char id_buf[32];
        std::snprintf(id_buf, sizeof(id_buf), "p%06d", p);
        const int n_adm = static_cast<int>(
            eng.between(static_cast<std::size_t>(cfg.min_admissions), static_cast<std::size_t>(cfg.max_admissions)));

        std::set<int> current(cfg.force_initial.begin(), cfg.force_initial.end());
        if (!risk_factors.empty()) {
            const std::size_t n_rf = eng.below(3);  // 0..2 risk factors
            for (std::size_t i = 0; i < n_rf; ++i) current.insert(risk_factors[eng.below(risk_factors.size())]);
        }
        const std::size_t n_dis = eng.between(1, 3);
        for (std::size_t i = 0; i < n_dis; ++i) current.insert(kg.disease_entity(static_cast<int>(eng.weighted(weights))));

        for (int adm = 0; adm < n_adm; ++adm) {
            RawAdmission record;
            record.patient_id = id_buf;
            record.admission_index = adm;
            for (int id : current) record.conditions.push_back(kg.entity(id).name);
            // Risk-factor indicator features carry the weak signal; the rest is noise.
            record.features.reserve(feature_count);
            for (int rf : risk_factors) {
                const bool present = current.count(rf) > 0;
                record.features.push_back(present ? eng.uniform(0.55, 0.95) : eng.uniform(0.05, 0.45));
            }
            for (int i = 0; i < cfg.noise_feature_count; ++i) record.features.push_back(eng.uniform(0.0, 1.0));
            admissions.push_back(std::move(record));

            if (adm == n_adm - 1) break;

            // Next admission: chronic diseases persist, planted rules fire,
            // noise adds a spurious disease.
            std::set<int> labels;
            for (int id : current) {
                if (kg.is_disease(id) && eng.bernoulli(cfg.disease_persistence)) labels.insert(id);
            }
            for (const Rule& rule : cfg.rules) {
                if (current.count(rule.source_entity) && eng.bernoulli(rule.probability))
                    labels.insert(rule.target_disease);
            }
            if (eng.bernoulli(cfg.noise_rate))
                labels.insert(kg.disease_entity(static_cast<int>(eng.weighted(weights))));
            if (labels.empty())
                labels.insert(kg.disease_entity(static_cast<int>(eng.weighted(weights))));

            std::set<int> next(labels);
            for (int id : current) {
                if (!kg.is_disease(id) && eng.bernoulli(cfg.risk_factor_persistence)) next.insert(id);
            }
            current = std::move(next);
        }
    }
    return admissions;
}

Cohort preprocess(const KnowledgeGraph& kg, const std::vector<RawAdmission>& admissions) {
    if (admissions.empty()) throw DataError("preprocess: no admissions");
    const int l = static_cast<int>(admissions.front().features.size());
    for (const auto& adm : admissions) {
        if (static_cast<int>(adm.features.size()) != l)
            throw DataError("preprocess: inconsistent feature count for patient " + adm.patient_id);
    }

    PreprocessSummary summary;

    // Group by patient in first-appearance order, sorted by admission index.
    std::vector<std::string> patient_order;
    std::map<std::string, std::vector<const RawAdmission*>> by_patient;
    for (const auto& adm : admissions) {
        auto [it, inserted] = by_patient.try_emplace(adm.patient_id);
        if (inserted) patient_order.push_back(adm.patient_id);
        it->second.push_back(&adm);
    }
    summary.patients_in = static_cast<int>(patient_order.size());
    for (auto& [id, list] : by_patient) {
        std::stable_sort(list.begin(), list.end(), [](const RawAdmission* a, const RawAdmission* b) {
            return a->admission_index < b->admission_index;
        });
    }

    // Column means over non-missing values for imputation, plus z-score stats.
    Vector mean = Vector::Zero(l), m2 = Vector::Zero(l);
    std::vector<long> seen(l, 0);
    for (const auto& adm : admissions) {
        for (int j = 0; j < l; ++j) {
            const double v = adm.features[j];
            if (std::isnan(v)) continue;
            ++seen[j];
            const double delta = v - mean[j];
            mean[j] += delta / static_cast<double>(seen[j]);
            m2[j] += delta * (v - mean[j]);
        }
    }
    for (int j = 0; j < l; ++j) {
        if (seen[j] == 0) throw DataError("preprocess: feature column " + std::to_string(j) + " is entirely missing");
    }

    FeatureStats stats;
    stats.mean = mean;
    stats.stddev = Vector::Zero(l);
    stats.min = Vector::Constant(l, std::numeric_limits<double>::infinity());
    stats.max = Vector::Constant(l, -std::numeric_limits<double>::infinity());
    stats.constant.assign(l, 0);
    for (int j = 0; j < l; ++j)
        stats.stddev[j] = seen[j] > 1 ? std::sqrt(m2[j] / static_cast<double>(seen[j] - 1)) : 0.0;

    // Imputed raw matrix drives min/max.
    std::vector<std::vector<double>> imputed(admissions.size(), std::vector<double>(l));
    for (std::size_t i = 0; i < admissions.size(); ++i) {
        for (int j = 0; j < l; ++j) {
            double v = admissions[i].features[j];
            if (std::isnan(v)) {
                v = mean[j];
                ++summary.values_imputed;
            }
            if (!std::isfinite(v)) throw DataError("preprocess: non-finite feature value");
            imputed[i][j] = v;
            stats.min[j] = std::min(stats.min[j], v);
            stats.max[j] = std::max(stats.max[j], v);
        }
    }
    for (int j = 0; j < l; ++j) {
        if (stats.max[j] - stats.min[j] <= 0.0) {
            stats.constant[j] = 1;
            summary.warnings.push_back("feature column " + std::to_string(j) +
                                       " has zero variance; scaled to constant 0.5");
        }
    }

    std::map<const RawAdmission*, std::size_t> adm_index;
    for (std::size_t i = 0; i < admissions.size(); ++i) adm_index[&admissions[i]] = i;

    auto resolve_conditions = [&](const RawAdmission& adm) {
        std::vector<int> ids;
        for (const std::string& name : adm.conditions) {
            auto id = kg.entity_id(name);
            if (!id)
                throw DataError("patient " + adm.patient_id + " admission " +
                                std::to_string(adm.admission_index) + " names unknown entity '" + name + "'");
            ids.push_back(*id);
        }
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    };

    std::vector<PatientRecord> records;
    for (const std::string& pid : patient_order) {
        const auto& list = by_patient[pid];
        if (list.size() < 2) {
            ++summary.patients_single_admission;
            continue;
        }
        for (std::size_t t = 0; t + 1 < list.size(); ++t) {
            const RawAdmission& adm = *list[t];
            std::vector<int> links = resolve_conditions(adm);
            if (links.empty()) {
                ++summary.records_no_kg_link;
                continue;
            }
            std::vector<int> labels;
            for (int id : resolve_conditions(*list[t + 1])) {
                if (kg.is_disease(id)) labels.push_back(id);
            }
            if (labels.empty()) {
                ++summary.records_no_labels;
                continue;
            }
            PatientRecord rec;
            rec.patient_id = pid;
            rec.admission_index = adm.admission_index;
            rec.characters.assign(kg.entity_count(), 0);
            for (int id : links) rec.characters[id] = 1;
            rec.links = std::move(links);
            const auto& raw = imputed[adm_index[&adm]];
            rec.features = Vector::Zero(l);
            for (int j = 0; j < l; ++j) {
                rec.features[j] = stats.constant[j]
                                      ? 0.5
                                      : (raw[j] - stats.min[j]) / (stats.max[j] - stats.min[j]);
            }
            rec.future_labels = std::move(labels);
            records.push_back(std::move(rec));
        }
    }
    if (records.empty()) throw DataError("preprocess: no usable records after exclusions");

    return Cohort(kg.entity_count(), l, std::move(records), std::move(stats), std::move(summary));
}

Cohort generate_synthetic(const KnowledgeGraph& kg, const SynthConfig& cfg) {
    return preprocess(kg, generate_admissions(kg, cfg));
}

void make_folds(Cohort& cohort, int folds, std::uint64_t seed) {
    if (folds < 1) throw std::invalid_argument("fold count must be >= 1");
    std::vector<std::string> patients;
    std::set<std::string> seen;
    for (const auto& r : cohort.records()) {
        if (seen.insert(r.patient_id).second) patients.push_back(r.patient_id);
    }
    if (static_cast<int>(patients.size()) < folds)
        throw DataError("cross-validation needs at least " + std::to_string(folds) +
                        " distinct patients, have " + std::to_string(patients.size()));
    rng::Engine eng(rng::mix(seed, 0xf01d5ULL));
    eng.shuffle(patients);
    std::map<std::string, int> fold_of;
    for (std::size_t i = 0; i < patients.size(); ++i) fold_of[patients[i]] = static_cast<int>(i % folds);
    for (auto& r : cohort.records()) r.fold = fold_of[r.patient_id];
}

void save_admissions(const std::string& path, const std::vector<RawAdmission>& admissions,
                     int feature_count) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write cohort file: " + path);
    out << "cohort\t1\n";
    out << "features\t" << feature_count << "\n";
    char buf[64];
    for (const auto& adm : admissions) {
        out << "record\t" << adm.patient_id << '\t' << adm.admission_index << '\t'
            << join(adm.conditions, ',') << '\t';
        for (std::size_t j = 0; j < adm.features.size(); ++j) {
            if (j) out << ',';
            if (std::isnan(adm.features[j])) continue;  // empty field = missing
            std::snprintf(buf, sizeof(buf), "%.17g", adm.features[j]);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw DataError("failed writing cohort file: " + path);
}

std::vector<RawAdmission> load_admissions(const std::string& path, int* feature_count) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open cohort file: " + path);
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw DataError(path + ":" + std::to_string(line_no) + ": " + msg);
    };

    bool saw_version = false;
    int l = -1;
    std::vector<RawAdmission> admissions;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line, '\t');
        if (fields[0] == "cohort") {
            if (fields.size() != 2 || fields[1] != "1") fail("unsupported cohort format version");
            saw_version = true;
        } else if (fields[0] == "features") {
            if (fields.size() != 2) fail("features record needs a count");
            l = std::stoi(fields[1]);
            if (l < 0) fail("negative feature count");
        } else if (fields[0] == "record") {
            if (!saw_version) fail("record before cohort version header");
            if (l < 0) fail("record before features header");
            if (fields.size() != 5) fail("record needs 5 fields: record<TAB>patient<TAB>admission<TAB>conditions<TAB>features");
            RawAdmission adm;
            adm.patient_id = fields[1];
            try {
                adm.admission_index = std::stoi(fields[2]);
            } catch (const std::exception&) {
                fail("admission index is not an integer");
            }
            if (!fields[3].empty()) adm.conditions = split(fields[3], ',');
            if (!fields[4].empty() || l > 0) {
                auto raw = split(fields[4], ',');
                if (static_cast<int>(raw.size()) != l) fail("expected " + std::to_string(l) + " feature values");
                for (const std::string& f : raw) {
                    if (f.empty()) {
                        adm.features.push_back(std::numeric_limits<double>::quiet_NaN());
                    } else {
                        try {
                            adm.features.push_back(std::stod(f));
                        } catch (const std::exception&) {
                            fail("feature value '" + f + "' is not a number");
                        }
                    }
                }
            }
            admissions.push_back(std::move(adm));
        } else {
            fail("unknown record type '" + fields[0] + "'");
        }
    }
    if (!saw_version) throw DataError(path + ": missing cohort version header");
    if (feature_count) *feature_count = l;
    return admissions;
}

Vector apply_feature_stats(const FeatureStats& stats, const std::vector<double>& raw) {
    const int l = static_cast<int>(stats.mean.size());
    if (static_cast<int>(raw.size()) != l) throw DataError("record feature count does not match training cohort");
    Vector out = Vector::Zero(l);
    for (int j = 0; j < l; ++j) {
        double v = std::isnan(raw[j]) ? stats.mean[j] : raw[j];
        if (stats.constant[j]) {
            out[j] = 0.5;
        } else {
            v = (v - stats.min[j]) / (stats.max[j] - stats.min[j]);
            out[j] = std::clamp(v, 0.0, 1.0);
        }
    }
    return out;
}

PatientRecord make_record(const KnowledgeGraph& kg, const FeatureStats& stats, const RawAdmission& adm) {
    PatientRecord rec;
    rec.patient_id = adm.patient_id;
    rec.admission_index = adm.admission_index;
    rec.characters.assign(kg.entity_count(), 0);
    for (const std::string& name : adm.conditions) {
        auto id = kg.entity_id(name);
        if (!id) throw DataError("record names unknown entity '" + name + "'");
        rec.characters[*id] = 1;
    }
    for (int i = 0; i < kg.entity_count(); ++i) {
        if (rec.characters[i]) rec.links.push_back(i);
    }
    if (rec.links.empty()) throw DataError("record has no connection to KG");
    rec.features = apply_feature_stats(stats, adm.features);
    return rec;
}

}  // namespace kgwalk::cohort
