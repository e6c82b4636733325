#include "kgwalk/embeddings.hpp"

#include <cmath>

#include "kgwalk/errors.hpp"
#include "kgwalk/rng.hpp"

namespace kgwalk::emb {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Vector sigmoid_vec(const Vector& z) {
    return z.unaryExpr([](double v) { return sigmoid(v); });
}

double softplus(double z) {
    // log(1 + e^z) without overflow.
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// BCE of sigmoid(z) against target t, stable for extreme z.
double bce_from_pre(const Vector& pre, const Vector& target) {
    double loss = 0.0;
    for (int i = 0; i < pre.size(); ++i) {
        loss += target[i] * softplus(-pre[i]) + (1.0 - target[i]) * softplus(pre[i]);
    }
    return loss;
}

void check_unit_interval(const Vector& v, const char* what) {
    for (int i = 0; i < v.size(); ++i) {
        if (!(v[i] >= 0.0 && v[i] <= 1.0))
            throw DataError(std::string(what) +
                            " must lie in [0,1]; scale features before training (element " +
                            std::to_string(i) + " = " + std::to_string(v[i]) + ")");
    }
}

}  // namespace

Vector hidden_mean(const RbmParams& rbm, const Vector& visible) {
    if (visible.size() != rbm.weights.rows()) throw std::invalid_argument("hidden_mean: visible size mismatch");
    return sigmoid_vec(rbm.hidden_bias + rbm.weights.transpose() * visible);
}

Vector visible_mean(const RbmParams& rbm, const Vector& hidden) {
    if (hidden.size() != rbm.weights.cols()) throw std::invalid_argument("visible_mean: hidden size mismatch");
    return sigmoid_vec(rbm.visible_bias + rbm.weights * hidden);
}

RbmStats cd_statistics(const RbmParams& rbm, const Vector& v0, const Vector& h0_sample, int cd_steps) {
    if (cd_steps < 1) throw std::invalid_argument("cd_statistics: cd_steps must be >= 1");
    const Vector ph0 = hidden_mean(rbm, v0);
    Vector h = h0_sample;
    Vector v = visible_mean(rbm, h);
    for (int step = 1; step < cd_steps; ++step) {
        h = hidden_mean(rbm, v);  // probabilities drive further steps
        v = visible_mean(rbm, h);
    }
    const Vector ph_end = hidden_mean(rbm, v);
    RbmStats stats;
    stats.weights = v0 * ph0.transpose() - v * ph_end.transpose();
    stats.visible_bias = v0 - v;
    stats.hidden_bias = ph0 - ph_end;
    return stats;
}

RbmParams rbm_train(const std::vector<Vector>& characters, const RbmConfig& cfg,
                    std::vector<TrainLogEntry>* log) {
    if (characters.empty()) throw DataError("rbm_train: empty training set");
    if (cfg.hidden_units < 1) throw std::invalid_argument("rbm_train: hidden_units must be >= 1");
    const int m = static_cast<int>(characters.front().size());
    for (const Vector& v : characters) {
        if (static_cast<int>(v.size()) != m) throw std::invalid_argument("rbm_train: inconsistent sample length");
        for (int i = 0; i < v.size(); ++i) {
            if (v[i] != 0.0 && v[i] != 1.0) throw DataError("rbm_train: character vectors must be binary");
        }
    }

    rng::Engine eng(rng::mix(cfg.seed, 0x5bde60e9ULL));
    RbmParams rbm;
    rbm.weights = Matrix::Zero(m, cfg.hidden_units);
    const double bound = std::sqrt(6.0 / static_cast<double>(m + cfg.hidden_units));
    for (int c = 0; c < rbm.weights.cols(); ++c) {
        for (int r = 0; r < rbm.weights.rows(); ++r) rbm.weights(r, c) = eng.uniform(-bound, bound);
    }
    rbm.visible_bias = Vector::Zero(m);
    rbm.hidden_bias = Vector::Zero(cfg.hidden_units);

    std::vector<std::size_t> order(characters.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const int batch = std::max(1, cfg.batch_size);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        eng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            Matrix dw = Matrix::Zero(m, cfg.hidden_units);
            Vector da = Vector::Zero(m);
            Vector db = Vector::Zero(cfg.hidden_units);
            for (std::size_t idx = start; idx < end; ++idx) {
                const Vector& v0 = characters[order[idx]];
                const Vector ph0 = hidden_mean(rbm, v0);
                Vector h0(cfg.hidden_units);
                for (int j = 0; j < cfg.hidden_units; ++j) h0[j] = eng.bernoulli(ph0[j]) ? 1.0 : 0.0;
                RbmStats stats = cd_statistics(rbm, v0, h0, cfg.cd_steps);
                dw += stats.weights;
                da += stats.visible_bias;
                db += stats.hidden_bias;
            }
            const double scale = cfg.learning_rate / static_cast<double>(end - start);
            rbm.weights += scale * dw;
            rbm.visible_bias += scale * da;
            rbm.hidden_bias += scale * db;
        }
        if (log) log->push_back({epoch, reconstruction_cross_entropy(rbm, characters)});
    }
    return rbm;
}

Vector entity_embedding(const RbmParams& rbm, int entity) {
    if (entity < 0 || entity >= rbm.visible_units()) throw std::invalid_argument("entity_embedding: id out of range");
    return rbm.weights.row(entity).transpose();
}

double reconstruction_cross_entropy(const RbmParams& rbm, const std::vector<Vector>& characters) {
    double total = 0.0;
    for (const Vector& v : characters) {
        const Vector pre = rbm.visible_bias + rbm.weights * hidden_mean(rbm, v);
        total += bce_from_pre(pre, v);
    }
    return total / static_cast<double>(characters.size());
}

namespace {

struct AePass {
    Vector z_h, a_h;    // encoder hidden
    Vector z_c, code;   // encoder code
    Vector z_dh, a_dh;  // decoder hidden
    Vector z_out;       // output preactivation (reconstruction = sigmoid)
};

AePass ae_forward(const AutoencoderParams& ae, const Vector& x) {
    AePass p;
    p.z_h = ae.w_hidden * x + ae.b_hidden;
    p.a_h = sigmoid_vec(p.z_h);
    p.z_c = ae.w_code * p.a_h + ae.b_code;
    p.code = sigmoid_vec(p.z_c);
    p.z_dh = ae.w_code.transpose() * p.code + ae.b_dec_hidden;
    p.a_dh = sigmoid_vec(p.z_dh);
    p.z_out = ae.w_hidden.transpose() * p.a_dh + ae.b_output;
    return p;
}

void check_ae_input(const AutoencoderParams& ae, const Vector& x) {
    if (x.size() != ae.input_dim()) throw std::invalid_argument("autoencoder: feature length mismatch");
    check_unit_interval(x, "autoencoder features");
}

}  // namespace

Vector encode_patient(const AutoencoderParams& ae, const Vector& features) {
    check_ae_input(ae, features);
    return sigmoid_vec(ae.w_code * sigmoid_vec(ae.w_hidden * features + ae.b_hidden) + ae.b_code);
}

Vector reconstruct(const AutoencoderParams& ae, const Vector& features) {
    check_ae_input(ae, features);
    return sigmoid_vec(ae_forward(ae, features).z_out);
}

double ae_loss(const AutoencoderParams& ae, const Vector& features) {
    check_ae_input(ae, features);
    return bce_from_pre(ae_forward(ae, features).z_out, features);
}

AeGrad ae_gradient(const AutoencoderParams& ae, const Vector& x) {
    check_ae_input(ae, x);
    const AePass p = ae_forward(ae, x);

    AeGrad g;
    g.w_hidden = Matrix::Zero(ae.hidden_dim(), ae.input_dim());
    g.w_code = Matrix::Zero(ae.code_dim(), ae.hidden_dim());

    // dL/dz_out for BCE through the output sigmoid.
    const Vector d_zout = sigmoid_vec(p.z_out) - x;
    g.b_output = d_zout;

    // Decoder output layer reuses w_hidden transposed: z_out = w_hidden^T a_dh + b_output.
    g.w_hidden = p.a_dh * d_zout.transpose();
    Vector d_adh = ae.w_hidden * d_zout;
    Vector d_zdh = d_adh.cwiseProduct(p.a_dh.cwiseProduct(Vector::Ones(p.a_dh.size()) - p.a_dh));
    g.b_dec_hidden = d_zdh;

    // Decoder hidden layer uses w_code^T: z_dh = w_code^T code + b_dec_hidden.
    g.w_code = p.code * d_zdh.transpose();
    Vector d_code = ae.w_code * d_zdh;
    Vector d_zc = d_code.cwiseProduct(p.code.cwiseProduct(Vector::Ones(p.code.size()) - p.code));
    g.b_code = d_zc;

    // Encoder code layer: z_c = w_code a_h + b_code.
    g.w_code += d_zc * p.a_h.transpose();
    Vector d_ah = ae.w_code.transpose() * d_zc;
    Vector d_zh = d_ah.cwiseProduct(p.a_h.cwiseProduct(Vector::Ones(p.a_h.size()) - p.a_h));
    g.b_hidden = d_zh;

    // Encoder hidden layer: z_h = w_hidden x + b_hidden.
    g.w_hidden += d_zh * x.transpose();

    return g;
}

AutoencoderParams ae_train(const std::vector<Vector>& features, const AeConfig& cfg,
                           std::vector<TrainLogEntry>* log) {
    if (features.empty()) throw DataError("ae_train: empty training set");
    const int l = static_cast<int>(features.front().size());
    for (const Vector& f : features) {
        if (static_cast<int>(f.size()) != l) throw std::invalid_argument("ae_train: inconsistent feature length");
        check_unit_interval(f, "autoencoder features");
    }

    AutoencoderParams ae;
    ae.w_hidden = Matrix::Zero(cfg.hidden_dim, l);
    ae.w_code = Matrix::Zero(cfg.code_dim, cfg.hidden_dim);
    rng::Engine eng(rng::mix(cfg.seed, 0xae5eedULL));
    const double bound_h = std::sqrt(6.0 / static_cast<double>(l + cfg.hidden_dim));
    for (int c = 0; c < ae.w_hidden.cols(); ++c)
        for (int r = 0; r < ae.w_hidden.rows(); ++r) ae.w_hidden(r, c) = eng.uniform(-bound_h, bound_h);
    const double bound_c = std::sqrt(6.0 / static_cast<double>(cfg.hidden_dim + cfg.code_dim));
    for (int c = 0; c < ae.w_code.cols(); ++c)
        for (int r = 0; r < ae.w_code.rows(); ++r) ae.w_code(r, c) = eng.uniform(-bound_c, bound_c);
    ae.b_hidden = Vector::Zero(cfg.hidden_dim);
    ae.b_code = Vector::Zero(cfg.code_dim);
    ae.b_dec_hidden = Vector::Zero(cfg.hidden_dim);
    ae.b_output = Vector::Zero(l);

    std::vector<std::size_t> order(features.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const int batch = std::max(1, cfg.batch_size);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        eng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            AeGrad sum;
            sum.w_hidden = Matrix::Zero(cfg.hidden_dim, l);
            sum.w_code = Matrix::Zero(cfg.code_dim, cfg.hidden_dim);
            sum.b_hidden = Vector::Zero(cfg.hidden_dim);
            sum.b_code = Vector::Zero(cfg.code_dim);
            sum.b_dec_hidden = Vector::Zero(cfg.hidden_dim);
            sum.b_output = Vector::Zero(l);
            for (std::size_t idx = start; idx < end; ++idx) {
                AeGrad g = ae_gradient(ae, features[order[idx]]);
                sum.w_hidden += g.w_hidden;
                sum.w_code += g.w_code;
                sum.b_hidden += g.b_hidden;
                sum.b_code += g.b_code;
                sum.b_dec_hidden += g.b_dec_hidden;
                sum.b_output += g.b_output;
            }
            const double scale = cfg.learning_rate / static_cast<double>(end - start);
            ae.w_hidden -= scale * sum.w_hidden;
            ae.w_code -= scale * sum.w_code;
            ae.b_hidden -= scale * sum.b_hidden;
            ae.b_code -= scale * sum.b_code;
            ae.b_dec_hidden -= scale * sum.b_dec_hidden;
            ae.b_output -= scale * sum.b_output;
        }
        if (log) {
            double total = 0.0;
            for (const Vector& f : features) total += ae_loss(ae, f);
            log->push_back({epoch, total / static_cast<double>(features.size())});
        }
    }
    return ae;
}

Vector relation_one_hot(int relation_id, int relation_count) {
    if (relation_id < 0 || relation_id >= relation_count)
        throw std::invalid_argument("relation_one_hot: id out of range");
    Vector v = Vector::Zero(relation_count);
    v[relation_id] = 1.0;
    return v;
}

}  // namespace kgwalk::emb
