#include "kgwalk/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "kgwalk/errors.hpp"
#include "kgwalk/rng.hpp"

namespace kgwalk::eval {

ScoreMatrix make_score_matrix(const KnowledgeGraph& kg,
                              std::span<const cohort::PatientRecord> records,
                              std::span<const infer::PredictionResult> predictions) {
    if (records.size() != predictions.size())
        throw std::invalid_argument("make_score_matrix: record/prediction count mismatch");
    ScoreMatrix m;
    m.scores = nn::Matrix::Zero(static_cast<long>(records.size()), kg.disease_count());
    m.labels.resize(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        m.scores.row(static_cast<long>(i)) = predictions[i].disease_probabilities.transpose();
        for (int label : records[i].future_labels) m.labels[i].push_back(kg.disease_index(label));
        std::sort(m.labels[i].begin(), m.labels[i].end());
    }
    return m;
}

namespace {

// Midrank AUC over one disease column; empty optional when single-class.
std::optional<double> column_auc(const ScoreMatrix& m, int disease) {
    const int n = m.record_count();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return m.scores(a, disease) < m.scores(b, disease); });

    std::vector<char> positive(n, 0);
    long n_pos = 0;
    for (int r = 0; r < n; ++r) {
        if (std::binary_search(m.labels[r].begin(), m.labels[r].end(), disease)) {
            positive[r] = 1;
            ++n_pos;
        }
    }
    const long n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    // Midranks over tied score groups (1-based ranks).
    double rank_sum_pos = 0.0;
    int i = 0;
    while (i < n) {
        int j = i;
        while (j < n && m.scores(order[j], disease) == m.scores(order[i], disease)) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (int t = i; t < j; ++t) {
            if (positive[order[t]]) rank_sum_pos += midrank;
        }
        i = j;
    }
    const double auc = (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
                       (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    return auc;
}

}  // namespace

AucResult macro_auc(const ScoreMatrix& scores) {
    AucResult result;
    double total = 0.0;
    for (int d = 0; d < scores.disease_count(); ++d) {
        if (auto auc = column_auc(scores, d)) {
            total += *auc;
            ++result.evaluated;
        } else {
            ++result.skipped;
        }
    }
    if (result.evaluated == 0)
        throw DataError("macro_auc: no disease has both positive and negative examples");
    result.macro_auc = total / static_cast<double>(result.evaluated);
    return result;
}

double topk_hit(const ScoreMatrix& scores, int k) {
    if (k < 1) throw std::invalid_argument("topk_hit: k must be >= 1");
    const int d = scores.disease_count();
    const int kk = std::min(k, d);
    double total = 0.0;
    std::vector<int> order(d);
    for (int r = 0; r < scores.record_count(); ++r) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (scores.scores(r, a) != scores.scores(r, b)) return scores.scores(r, a) > scores.scores(r, b);
            return a < b;
        });
        int hits = 0;
        for (int i = 0; i < kk; ++i) {
            if (std::binary_search(scores.labels[r].begin(), scores.labels[r].end(), order[i])) ++hits;
        }
        total += hits;
    }
    return scores.record_count() > 0 ? total / static_cast<double>(scores.record_count()) : 0.0;
}

std::vector<nn::Vector> encode_records(const emb::AutoencoderParams& ae,
                                       std::span<const cohort::PatientRecord> records) {
    std::vector<nn::Vector> codes;
    codes.reserve(records.size());
    for (const auto& r : records) codes.push_back(emb::encode_patient(ae, r.features));
    return codes;
}

TrainedModels train_pipeline(const KnowledgeGraph& kg,
                             std::span<const cohort::PatientRecord> records, const RunConfig& cfg,
                             std::uint64_t seed, int workers) {
    if (records.empty()) throw DataError("train_pipeline: no training records");
    TrainedModels models;

    std::vector<nn::Vector> characters;
    std::vector<nn::Vector> features;
    characters.reserve(records.size());
    features.reserve(records.size());
    for (const auto& r : records) {
        nn::Vector v = nn::Vector::Zero(kg.entity_count());
        for (int id : r.links) v[id] = 1.0;
        characters.push_back(std::move(v));
        features.push_back(r.features);
    }

    emb::RbmConfig rbm_cfg = cfg.rbm_config();
    rbm_cfg.seed = rng::mix(seed, 0x5bULL);
    models.rbm = emb::rbm_train(characters, rbm_cfg, &models.rbm_log);

    emb::AeConfig ae_cfg = cfg.ae_config();
    ae_cfg.seed = rng::mix(seed, 0xaeULL);
    models.autoencoder = emb::ae_train(features, ae_cfg, &models.ae_log);

    models.representations.entity = models.rbm.weights;
    models.representations.relation_count = kg.relation_count();

    agent::StateSpec spec;
    spec.code_dim = models.autoencoder.code_dim();
    spec.embed_dim = models.representations.embed_dim();
    spec.relation_count = kg.relation_count();

    agent::AgentConfig agent_cfg = cfg.agent_config();
    agent_cfg.seed = rng::mix(seed, 0xa6ULL);
    models.agent_params =
        agent::AgentParams(spec, agent_cfg.hidden1, agent_cfg.hidden2, kg.entity_count(), agent_cfg.seed);

    const std::vector<nn::Vector> codes = encode_records(models.autoencoder, records);
    models.agent_log =
        agent::train_agent(models.agent_params, kg, records, codes, models.representations, agent_cfg, workers);
    return models;
}

namespace {

FoldMetrics evaluate_fold(const KnowledgeGraph& kg, const cohort::Cohort& cohort, const RunConfig& cfg,
                          int fold, int workers, const std::vector<int>& top_ks) {
    std::vector<cohort::PatientRecord> train_records;
    std::vector<cohort::PatientRecord> test_records;
    for (const auto& r : cohort.records()) {
        (r.fold == fold ? test_records : train_records).push_back(r);
    }
    if (train_records.empty() || test_records.empty())
        throw DataError("fold " + std::to_string(fold) + " leaves an empty train or test side");

    // The same derived seed for every fold: structurally identical folds then
    // train identically.
    TrainedModels models = train_pipeline(kg, train_records, cfg, rng::mix(cfg.seed, 0xcfULL), workers);

    const std::vector<nn::Vector> codes = encode_records(models.autoencoder, test_records);
    const infer::BeamConfig beam = cfg.beam_config(kg.entity_count());
    const auto predictions = infer::predict_records(models.agent_params, kg, test_records, codes,
                                                    models.representations, beam, workers);
    const ScoreMatrix scores = make_score_matrix(kg, test_records, predictions);

    FoldMetrics metrics;
    metrics.fold = fold;
    const AucResult auc = macro_auc(scores);
    metrics.macro_auc = auc.macro_auc;
    metrics.auc_evaluated = auc.evaluated;
    metrics.auc_skipped = auc.skipped;
    for (int k : top_ks) metrics.topk[k] = topk_hit(scores, k);
    metrics.final_entropy = models.agent_log.empty() ? 0.0 : models.agent_log.back().mean_entropy;
    metrics.test_records = static_cast<int>(test_records.size());
    return metrics;
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double mu = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - mu) * (x - mu);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

double EvalReport::mean_auc() const {
    std::vector<double> xs;
    for (const auto& f : folds) xs.push_back(f.macro_auc);
    return mean_of(xs);
}

double EvalReport::std_auc() const {
    std::vector<double> xs;
    for (const auto& f : folds) xs.push_back(f.macro_auc);
    return std_of(xs);
}

double EvalReport::mean_topk(int k) const {
    std::vector<double> xs;
    for (const auto& f : folds) xs.push_back(f.topk.at(k));
    return mean_of(xs);
}

double EvalReport::std_topk(int k) const {
    std::vector<double> xs;
    for (const auto& f : folds) xs.push_back(f.topk.at(k));
    return std_of(xs);
}

double EvalReport::mean_final_entropy() const {
    std::vector<double> xs;
    for (const auto& f : folds) xs.push_back(f.final_entropy);
    return mean_of(xs);
}

EvalReport cross_validate(const KnowledgeGraph& kg, const cohort::Cohort& cohort,
                          const RunConfig& cfg, int workers) {
    if (!cohort.has_folds()) throw DataError("cross_validate: cohort has no fold assignments");
    EvalReport report;
    report.top_ks = {1, 3, 5, 10};
    const int folds = cohort.fold_count();
    for (int f = 0; f < folds; ++f) {
        try {
            report.folds.push_back(evaluate_fold(kg, cohort, cfg, f, workers, report.top_ks));
        } catch (const std::exception& e) {
            throw DataError("fold " + std::to_string(f) + " failed: " + e.what());
        }
    }
    return report;
}

std::vector<double> default_grid(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Horizon: return {2, 3, 4, 5};
        case SweepAxis::Entropy: return {0.0, 0.01, 0.1, 1.0};
    }
    throw std::invalid_argument("unknown sweep axis");
}

std::vector<SweepPoint> sweep(const KnowledgeGraph& kg, const cohort::Cohort& cohort,
                              const RunConfig& cfg, SweepAxis axis, std::span<const double> grid,
                              int workers) {
    std::vector<SweepPoint> points;
    for (double value : grid) {
        RunConfig point_cfg = cfg;
        if (axis == SweepAxis::Horizon) {
            point_cfg.agent.horizon = static_cast<int>(value);
        } else {
            point_cfg.agent.entropy_weight = value;
        }
        points.push_back(SweepPoint{value, cross_validate(kg, cohort, point_cfg, workers)});
    }
    return points;
}

std::vector<SweepPoint> sweep(const KnowledgeGraph& kg, const cohort::Cohort& cohort,
                              const RunConfig& cfg, SweepAxis axis, int workers) {
    const std::vector<double> grid = default_grid(axis);
    return sweep(kg, cohort, cfg, axis, grid, workers);
}

namespace {

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void render_rows(std::ostringstream& out, const EvalReport& report, const std::string& axis_label,
                 double axis_value, bool with_axis) {
    auto axis_cols = [&](bool aggregate) -> std::string {
        if (!with_axis) return "-\t-\t";
        return axis_label + "\t" + (aggregate ? fmt(axis_value) : fmt(axis_value)) + "\t";
    };
    for (const auto& f : report.folds) {
        out << "row\t" << axis_cols(false) << f.fold << '\t' << fmt(f.macro_auc) << '\t'
            << f.auc_evaluated << '\t' << f.auc_skipped;
        for (int k : report.top_ks) out << '\t' << fmt(f.topk.at(k));
        out << '\t' << fmt(f.final_entropy) << '\t' << f.test_records << '\n';
    }
    out << "mean\t" << axis_cols(true) << '-' << '\t' << fmt(report.mean_auc()) << "\t-\t-";
    for (int k : report.top_ks) out << '\t' << fmt(report.mean_topk(k));
    out << '\t' << fmt(report.mean_final_entropy()) << "\t-\n";
    out << "std\t" << axis_cols(true) << '-' << '\t' << fmt(report.std_auc()) << "\t-\t-";
    for (int k : report.top_ks) out << '\t' << fmt(report.std_topk(k));
    out << "\t-\t-\n";
}

void render_header(std::ostringstream& out, const std::vector<int>& top_ks) {
    out << "# kgwalk eval report\n";
    out << "columns\taxis\tvalue\tfold\tmacro_auc\tauc_evaluated\tauc_skipped";
    for (int k : top_ks) out << "\ttop" << k << "_hit";
    out << "\tfinal_entropy\ttest_records\n";
}

}  // namespace

std::string render_report(const EvalReport& report, const std::string& axis_label, double axis_value,
                          bool with_axis) {
    std::ostringstream out;
    render_header(out, report.top_ks);
    render_rows(out, report, axis_label, axis_value, with_axis);
    return out.str();
}

std::string render_sweep(const std::vector<SweepPoint>& points, SweepAxis axis) {
    std::ostringstream out;
    const std::string label = axis == SweepAxis::Horizon ? "horizon" : "entropy_weight";
    if (points.empty()) return out.str();
    render_header(out, points.front().report.top_ks);
    for (const auto& point : points) render_rows(out, point.report, label, point.value, true);
    return out.str();
}

}  // namespace kgwalk::eval
