#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kgwalk/embeddings.hpp"
#include "kgwalk/errors.hpp"
#include "kgwalk/rng.hpp"

using namespace kgwalk;
using emb::Matrix;
using emb::Vector;

namespace {

// Exhaustive conditional oracles straight from the Boltzmann weights
// exp(a'v + b'h + v'Wh), enumerating every hidden (or visible) state.
Vector hidden_mean_oracle(const emb::RbmParams& rbm, const Vector& v) {
    const int k = rbm.hidden_units();
    Vector numerator = Vector::Zero(k);
    double denominator = 0.0;
    for (int bits = 0; bits < (1 << k); ++bits) {
        Vector h(k);
        for (int j = 0; j < k; ++j) h[j] = (bits >> j) & 1;
        const double w = std::exp(rbm.hidden_bias.dot(h) + v.dot(rbm.weights * h));
        numerator += w * h;
        denominator += w;
    }
    return numerator / denominator;
}

Vector visible_mean_oracle(const emb::RbmParams& rbm, const Vector& h) {
    const int m = rbm.visible_units();
    Vector numerator = Vector::Zero(m);
    double denominator = 0.0;
    for (int bits = 0; bits < (1 << m); ++bits) {
        Vector v(m);
        for (int i = 0; i < m; ++i) v[i] = (bits >> i) & 1;
        const double w = std::exp(rbm.visible_bias.dot(v) + v.dot(rbm.weights * h));
        numerator += w * v;
        denominator += w;
    }
    return numerator / denominator;
}

emb::RbmParams random_rbm(rng::Engine& eng, int m, int k) {
    emb::RbmParams rbm;
    rbm.weights = Matrix::Zero(m, k);
    for (int c = 0; c < k; ++c)
        for (int r = 0; r < m; ++r) rbm.weights(r, c) = eng.uniform(-1.0, 1.0);
    rbm.visible_bias = Vector::Zero(m);
    rbm.hidden_bias = Vector::Zero(k);
    for (int i = 0; i < m; ++i) rbm.visible_bias[i] = eng.uniform(-0.5, 0.5);
    for (int j = 0; j < k; ++j) rbm.hidden_bias[j] = eng.uniform(-0.5, 0.5);
    return rbm;
}

double cosine(const Vector& a, const Vector& b) { return a.dot(b) / (a.norm() * b.norm()); }

}  // namespace

TEST_CASE("rbm conditionals match the exhaustive enumeration oracle") {
    rng::Engine eng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 3 + static_cast<int>(eng.below(4));  // <= 6
        const int k = 1 + static_cast<int>(eng.below(3));  // <= 3
        const emb::RbmParams rbm = random_rbm(eng, m, k);
        Vector v(m);
        for (int i = 0; i < m; ++i) v[i] = eng.bernoulli(0.5) ? 1.0 : 0.0;
        Vector h(k);
        for (int j = 0; j < k; ++j) h[j] = eng.bernoulli(0.5) ? 1.0 : 0.0;

        const Vector ph = emb::hidden_mean(rbm, v);
        const Vector ph_oracle = hidden_mean_oracle(rbm, v);
        for (int j = 0; j < k; ++j) CHECK(ph[j] == doctest::Approx(ph_oracle[j]).epsilon(1e-8));

        const Vector pv = emb::visible_mean(rbm, h);
        const Vector pv_oracle = visible_mean_oracle(rbm, h);
        for (int i = 0; i < m; ++i) CHECK(pv[i] == doctest::Approx(pv_oracle[i]).epsilon(1e-8));

        // Full CD-1 statistic with the sampled hidden state frozen.
        const emb::RbmStats stats = emb::cd_statistics(rbm, v, h, 1);
        const Vector v1 = visible_mean_oracle(rbm, h);
        const Vector ph1 = hidden_mean_oracle(rbm, v1);
        const Matrix dw = v * ph_oracle.transpose() - v1 * ph1.transpose();
        for (int r = 0; r < m; ++r) {
            for (int c = 0; c < k; ++c) CHECK(stats.weights(r, c) == doctest::Approx(dw(r, c)).epsilon(1e-8));
        }
        for (int i = 0; i < m; ++i)
            CHECK(stats.visible_bias[i] == doctest::Approx((v - v1)[i]).epsilon(1e-8));
        for (int j = 0; j < k; ++j)
            CHECK(stats.hidden_bias[j] == doctest::Approx((ph_oracle - ph1)[j]).epsilon(1e-8));
    }
}

TEST_CASE("rbm training") {
    SUBCASE("empty training set") {
        CHECK_THROWS_AS(emb::rbm_train({}, emb::RbmConfig{}), DataError);
    }
    SUBCASE("weight shape follows the config") {
        std::vector<Vector> data(10, Vector::Zero(8));
        data[1][3] = 1.0;
        emb::RbmConfig cfg;
        cfg.hidden_units = 4;
        cfg.epochs = 1;
        const auto rbm = emb::rbm_train(data, cfg);
        CHECK(rbm.weights.rows() == 8);
        CHECK(rbm.weights.cols() == 4);
    }
    SUBCASE("co-occurring entities end up with closer embedding rows") {
        // Entities 0 and 1 always fire together; entity 7 is independent.
        rng::Engine eng(99);
        std::vector<Vector> data;
        long both = 0, first_only = 0;
        for (int i = 0; i < 200; ++i) {
            Vector v = Vector::Zero(8);
            const bool pair_on = eng.bernoulli(0.5);
            v[0] = v[1] = pair_on ? 1.0 : 0.0;
            v[7] = eng.bernoulli(0.5) ? 1.0 : 0.0;
            for (int j = 2; j < 7; ++j) v[j] = eng.bernoulli(0.2) ? 1.0 : 0.0;
            both += v[0] == 1.0 && v[1] == 1.0;
            first_only += v[0] == 1.0 && v[1] == 0.0;
            data.push_back(std::move(v));
        }
        // Empirical co-occurrence confirms the planted structure.
        CHECK(both > 0);
        CHECK(first_only == 0);

        emb::RbmConfig cfg;
        cfg.hidden_units = 4;
        cfg.epochs = 120;
        cfg.learning_rate = 0.05;
        cfg.seed = 5;
        const auto rbm = emb::rbm_train(data, cfg);
        const Vector e0 = emb::entity_embedding(rbm, 0);
        const Vector e1 = emb::entity_embedding(rbm, 1);
        const Vector e7 = emb::entity_embedding(rbm, 7);
        CHECK(cosine(e0, e1) > cosine(e0, e7));
    }
    SUBCASE("reconstruction cross-entropy falls over training") {
        rng::Engine eng(123);
        std::vector<Vector> data;
        for (int i = 0; i < 120; ++i) {
            Vector v = Vector::Zero(10);
            const bool block = eng.bernoulli(0.5);
            for (int j = 0; j < 10; ++j) {
                const double p = (block == (j < 5)) ? 0.8 : 0.1;
                v[j] = eng.bernoulli(p) ? 1.0 : 0.0;
            }
            data.push_back(std::move(v));
        }
        emb::RbmConfig cfg;
        cfg.hidden_units = 6;
        cfg.epochs = 50;
        cfg.learning_rate = 0.05;
        cfg.seed = 3;
        std::vector<emb::TrainLogEntry> log;
        emb::rbm_train(data, cfg, &log);
        REQUIRE(log.size() == 50);
        CHECK(log.back().loss < log.front().loss);
    }
    SUBCASE("non-binary characters are rejected") {
        std::vector<Vector> data(1, Vector::Constant(4, 0.5));
        CHECK_THROWS_AS(emb::rbm_train(data, emb::RbmConfig{}), DataError);
    }
}

TEST_CASE("entity_embedding is a row projection") {
    emb::RbmParams rbm;
    rbm.weights = Matrix::Identity(4, 4);
    rbm.visible_bias = Vector::Zero(4);
    rbm.hidden_bias = Vector::Zero(4);
    const Vector row = emb::entity_embedding(rbm, 2);
    CHECK(row == Vector::Unit(4, 2));
    CHECK(row.size() == 4);
    CHECK_THROWS_AS(emb::entity_embedding(rbm, 4), std::invalid_argument);
    CHECK_THROWS_AS(emb::entity_embedding(rbm, -1), std::invalid_argument);
}

TEST_CASE("autoencoder") {
    SUBCASE("loss falls over training and the code width follows the config") {
        rng::Engine eng(17);
        std::vector<Vector> data;
        for (int i = 0; i < 60; ++i) {
            Vector f(33);
            const double base = eng.uniform(0.2, 0.8);
            for (int j = 0; j < 33; ++j) f[j] = std::clamp(base + eng.uniform(-0.1, 0.1), 0.0, 1.0);
            data.push_back(std::move(f));
        }
        emb::AeConfig cfg;
        cfg.hidden_dim = 16;
        cfg.code_dim = 8;
        cfg.epochs = 40;
        cfg.learning_rate = 0.05;
        cfg.seed = 2;
        std::vector<emb::TrainLogEntry> log;
        const auto ae = emb::ae_train(data, cfg, &log);
        CHECK(emb::encode_patient(ae, data[0]).size() == 8);
        REQUIRE(log.size() == 40);
        CHECK(log.back().loss < log.front().loss);
    }
    SUBCASE("constant dataset: the decoder converges toward the constant") {
        std::vector<Vector> data(20, Vector::Constant(6, 0.3));
        emb::AeConfig cfg;
        cfg.hidden_dim = 8;
        cfg.code_dim = 4;
        cfg.epochs = 1500;
        cfg.learning_rate = 0.2;
        cfg.seed = 4;
        const auto ae = emb::ae_train(data, cfg);
        const Vector out = emb::reconstruct(ae, data[0]);
        for (int j = 0; j < 6; ++j) CHECK(out[j] == doctest::Approx(0.3).epsilon(0.08));
    }
    SUBCASE("features outside the unit interval are rejected with a hint") {
        std::vector<Vector> data(1, Vector::Constant(4, 1.5));
        CHECK_THROWS_WITH_AS(emb::ae_train(data, emb::AeConfig{}),
                             doctest::Contains("scale features"), DataError);
    }
    SUBCASE("encoding is deterministic and validates lengths") {
        emb::AeConfig cfg;
        cfg.hidden_dim = 5;
        cfg.code_dim = 3;
        cfg.epochs = 1;
        std::vector<Vector> data(4, Vector::Constant(7, 0.5));
        const auto ae = emb::ae_train(data, cfg);
        CHECK(emb::encode_patient(ae, data[0]) == emb::encode_patient(ae, data[1]));
        CHECK_THROWS_AS(emb::encode_patient(ae, Vector::Constant(6, 0.5)), std::invalid_argument);
    }
    SUBCASE("a single memorized vector reconstructs within 0.05 elementwise") {
        rng::Engine eng(31);
        Vector target(5);
        for (int j = 0; j < 5; ++j) target[j] = eng.uniform(0.15, 0.85);
        std::vector<Vector> data(1, target);
        emb::AeConfig cfg;
        cfg.hidden_dim = 16;
        cfg.code_dim = 8;
        cfg.epochs = 4000;
        cfg.learning_rate = 0.3;
        cfg.seed = 6;
        const auto ae = emb::ae_train(data, cfg);
        const Vector out = emb::reconstruct(ae, target);
        for (int j = 0; j < 5; ++j) CHECK(std::abs(out[j] - target[j]) < 0.05);
    }
    SUBCASE("analytic BCE gradient matches central finite differences") {
        rng::Engine eng(41);
        for (int trial = 0; trial < 5; ++trial) {
            emb::AutoencoderParams ae;
            const int l = 4, dh = 3, dc = 2;
            ae.w_hidden = Matrix::Zero(dh, l);
            ae.w_code = Matrix::Zero(dc, dh);
            for (int c = 0; c < l; ++c)
                for (int r = 0; r < dh; ++r) ae.w_hidden(r, c) = eng.uniform(-1.0, 1.0);
            for (int c = 0; c < dh; ++c)
                for (int r = 0; r < dc; ++r) ae.w_code(r, c) = eng.uniform(-1.0, 1.0);
            ae.b_hidden = Vector::Zero(dh);
            ae.b_code = Vector::Zero(dc);
            ae.b_dec_hidden = Vector::Zero(dh);
            ae.b_output = Vector::Zero(l);
            for (int j = 0; j < dh; ++j) ae.b_hidden[j] = eng.uniform(-0.5, 0.5);
            for (int j = 0; j < dc; ++j) ae.b_code[j] = eng.uniform(-0.5, 0.5);

            Vector x(l);
            for (int j = 0; j < l; ++j) x[j] = eng.uniform(0.1, 0.9);
            const emb::AeGrad grad = emb::ae_gradient(ae, x);

            const double h = 1e-5;
            auto check_fd = [&](double& param, double analytic) {
                const double saved = param;
                param = saved + h;
                const double up = emb::ae_loss(ae, x);
                param = saved - h;
                const double down = emb::ae_loss(ae, x);
                param = saved;
                const double fd = (up - down) / (2 * h);
                CHECK(std::abs(analytic - fd) <= 1e-4 * std::max({1.0, std::abs(analytic), std::abs(fd)}));
            };
            for (int c = 0; c < l; ++c)
                for (int r = 0; r < dh; ++r) check_fd(ae.w_hidden(r, c), grad.w_hidden(r, c));
            for (int c = 0; c < dh; ++c)
                for (int r = 0; r < dc; ++r) check_fd(ae.w_code(r, c), grad.w_code(r, c));
            for (int j = 0; j < dh; ++j) check_fd(ae.b_hidden[j], grad.b_hidden[j]);
            for (int j = 0; j < dc; ++j) check_fd(ae.b_code[j], grad.b_code[j]);
            for (int j = 0; j < dh; ++j) check_fd(ae.b_dec_hidden[j], grad.b_dec_hidden[j]);
            for (int j = 0; j < l; ++j) check_fd(ae.b_output[j], grad.b_output[j]);
        }
    }
}

TEST_CASE("relation one-hot") {
    CHECK(emb::relation_one_hot(0, 3) == Vector::Unit(3, 0));
    CHECK(emb::relation_one_hot(2, 3) == Vector::Unit(3, 2));
    CHECK_THROWS_AS(emb::relation_one_hot(3, 3), std::invalid_argument);
}
