#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgwalk/nn.hpp"

namespace kgwalk::emb {

using nn::Matrix;
using nn::Vector;

struct TrainLogEntry {
    int epoch = 0;
    double loss = 0.0;
};

// ---------------------------------------------------------------------------
// Restricted Boltzmann machine over binary patient character vectors.
// Row i of the trained weight matrix is the embedding of entity i.
// ---------------------------------------------------------------------------

struct RbmParams {
    Matrix weights;       // visible x hidden
    Vector visible_bias;  // visible
    Vector hidden_bias;   // hidden

    int visible_units() const { return static_cast<int>(weights.rows()); }
    int hidden_units() const { return static_cast<int>(weights.cols()); }
};

struct RbmConfig {
    int hidden_units = 32;
    int epochs = 100;
    double learning_rate = 1e-3;
    int cd_steps = 1;
    int batch_size = 32;
    std::uint64_t seed = 1;
};

/// p(h_j = 1 | v), factorized: sigmoid(hidden_bias + W^T v).
Vector hidden_mean(const RbmParams& rbm, const Vector& visible);

/// p(v_i = 1 | h), factorized: sigmoid(visible_bias + W h).
Vector visible_mean(const RbmParams& rbm, const Vector& hidden);

struct RbmStats {
    Matrix weights;  // positive minus negative phase, shaped like W
    Vector visible_bias;
    Vector hidden_bias;
};

/// Contrastive-divergence statistics for one sample, deterministic given the
/// sampled hidden state h0: the Gibbs chain is driven by h0 while the
/// gradient uses hidden probabilities.
RbmStats cd_statistics(const RbmParams& rbm, const Vector& v0, const Vector& h0_sample, int cd_steps = 1);

/// Trains by minibatch CD, ascending the approximate likelihood gradient.
/// The log records per-epoch mean reconstruction cross-entropy. Throws
/// DataError on an empty training set.
RbmParams rbm_train(const std::vector<Vector>& characters, const RbmConfig& cfg,
                    std::vector<TrainLogEntry>* log = nullptr);

/// Row i of the trained weight matrix.
Vector entity_embedding(const RbmParams& rbm, int entity);

/// Mean reconstruction cross-entropy of the mean-field pass v -> h -> v'.
double reconstruction_cross_entropy(const RbmParams& rbm, const std::vector<Vector>& characters);

// ---------------------------------------------------------------------------
// Two-layer autoencoder with tied decoder weights, trained on patient
// feature vectors scaled to [0,1]. The code is the patient representation.
// ---------------------------------------------------------------------------

struct AutoencoderParams {
    Matrix w_hidden;      // hidden x input, first encoder layer
    Matrix w_code;        // code x hidden, second encoder layer
    Vector b_hidden;      // hidden
    Vector b_code;        // code
    Vector b_dec_hidden;  // hidden (decoder uses w_code^T, w_hidden^T)
    Vector b_output;      // input

    int input_dim() const { return static_cast<int>(w_hidden.cols()); }
    int hidden_dim() const { return static_cast<int>(w_hidden.rows()); }
    int code_dim() const { return static_cast<int>(w_code.rows()); }
};

struct AeConfig {
    int hidden_dim = 64;
    int code_dim = 32;
    int epochs = 100;
    double learning_rate = 1e-3;
    int batch_size = 32;
    std::uint64_t seed = 1;
};

struct AeGrad {
    Matrix w_hidden;
    Matrix w_code;
    Vector b_hidden;
    Vector b_code;
    Vector b_dec_hidden;
    Vector b_output;
};

/// Sigmoid encoder: code = f(w_code f(w_hidden x + b_hidden) + b_code).
/// Throws on input length mismatch or values outside [0,1].
Vector encode_patient(const AutoencoderParams& ae, const Vector& features);

/// Full pass: encode then decode through the transposed weights.
Vector reconstruct(const AutoencoderParams& ae, const Vector& features);

/// Binary cross-entropy of one reconstruction, computed stably from
/// preactivations.
double ae_loss(const AutoencoderParams& ae, const Vector& features);

/// Exact BCE gradient for one sample; tied weights accumulate both the
/// encoder-side and decoder-side contributions.
AeGrad ae_gradient(const AutoencoderParams& ae, const Vector& features);

/// Minibatch gradient descent on BCE. The log records per-epoch mean loss.
/// Throws DataError on an empty set or features outside [0,1].
AutoencoderParams ae_train(const std::vector<Vector>& features, const AeConfig& cfg,
                           std::vector<TrainLogEntry>* log = nullptr);

// ---------------------------------------------------------------------------
// Relations are one-hot over relation-type ids.
// ---------------------------------------------------------------------------

Vector relation_one_hot(int relation_id, int relation_count);

}  // namespace kgwalk::emb
