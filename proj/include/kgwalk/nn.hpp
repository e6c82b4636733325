#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace kgwalk::nn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Mask = std::vector<std::uint8_t>;

enum class Activation { Identity, Relu, Sigmoid };

/// One affine layer computing y = W^T x + b, with W shaped (in_dim, out_dim).
struct DenseLayer {
    Matrix weights;
    Vector bias;

    DenseLayer() = default;
    DenseLayer(int in_dim, int out_dim) : weights(Matrix::Zero(in_dim, out_dim)), bias(Vector::Zero(out_dim)) {}

    int in_dim() const { return static_cast<int>(weights.rows()); }
    int out_dim() const { return static_cast<int>(weights.cols()); }
};

/// Gradient buffer shaped like a DenseLayer.
struct DenseGrad {
    Matrix weights;
    Vector bias;

    static DenseGrad zeros_like(const DenseLayer& layer) {
        return DenseGrad{Matrix::Zero(layer.weights.rows(), layer.weights.cols()),
                         Vector::Zero(layer.bias.size())};
    }
    void zero() {
        weights.setZero();
        bias.setZero();
    }
    DenseGrad& operator+=(const DenseGrad& other) {
        weights += other.weights;
        bias += other.bias;
        return *this;
    }
};

Vector affine(const DenseLayer& layer, const Vector& x);
Vector activate(Activation act, const Vector& z);
Vector affine_relu(const DenseLayer& layer, const Vector& x);

/// Softmax restricted to entries with mask = 1. Off-mask probabilities are
/// exactly zero (their logits are pushed to -inf); on-mask entries are the
/// max-stabilized softmax of the surviving logits. Throws on an all-zero mask.
Vector masked_softmax(const Vector& logits, const Mask& mask);

/// Log-probabilities matching masked_softmax on-mask; off-mask entries are
/// set to -inf.
Vector masked_log_softmax(const Vector& logits, const Mask& mask);

/// Shannon entropy over the strictly positive entries of a probability vector.
double entropy(const Vector& probs);

/// dL/dy -> dL/dx for y = W^T x + b; accumulates parameter gradients into g.
Vector affine_backward(const DenseLayer& layer, const Vector& x, const Vector& dy, DenseGrad& g);

/// dL/dy -> dL/dz given preactivation z, for y = max(0, z).
Vector relu_backward(const Vector& pre, const Vector& dy);

/// dL/dy -> dL/dz given output y = sigmoid(z).
Vector sigmoid_backward(const Vector& out, const Vector& dy);

/// A stack of dense layers with per-layer activations, plus a tape recording
/// one forward pass so the exact gradient can be pushed back through it.
class Mlp {
public:
    Mlp() = default;

    /// dims = {in, h1, ..., out}; acts has dims.size()-1 entries.
    Mlp(const std::vector<int>& dims, std::vector<Activation> acts);

    struct Tape {
        std::vector<Vector> inputs;  // layer inputs x_l
        std::vector<Vector> pre;     // preactivations z_l
        bool recorded = false;
    };

    Vector forward(const Vector& x) const;
    Vector forward(const Vector& x, Tape& tape) const;

    /// Backpropagates dL/d(output) through the recorded pass, accumulating
    /// into grads (one DenseGrad per layer) and returning dL/d(input).
    /// Throws if the tape has no recorded forward pass.
    Vector backward(const Tape& tape, Vector dout, std::vector<DenseGrad>& grads) const;

    std::vector<DenseGrad> zero_grads() const;

    int in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    int out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

    std::vector<DenseLayer> layers;
    std::vector<Activation> activations;
};

/// Fan-balanced uniform init in +-sqrt(6/(in+out)); biases zero.
void init_fan_balanced(DenseLayer& layer, std::uint64_t seed);

enum class StepDirection { Ascend, Descend };

struct OptimizerConfig {
    double learning_rate = 1e-3;
    bool adaptive = true;  // moment-corrected step; plain gradient step when false
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Flat views used to enumerate a model's parameters for the optimizer;
/// Eigen matrices expose contiguous storage.
struct ParamRef {
    std::string name;
    double* data = nullptr;
    std::ptrdiff_t size = 0;
};
struct GradRef {
    const double* data = nullptr;
    std::ptrdiff_t size = 0;
};

/// Gradient-based updater. apply() takes one step over every parameter:
/// plain p <- p -+ lr*g, or the bias-corrected adaptive step when enabled.
/// Moment state is keyed by position in the parameter list, which must not
/// change between calls. Throws NumericError naming the parameter on a
/// non-finite gradient.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
        if (!(cfg.learning_rate > 0)) throw std::invalid_argument("learning rate must be > 0");
    }

    void apply(std::span<const ParamRef> params, std::span<const GradRef> grads, StepDirection direction);

    long long steps() const { return step_; }

private:
    OptimizerConfig cfg_;
    long long step_ = 0;
    std::vector<std::vector<double>> first_;
    std::vector<std::vector<double>> second_;
};

}  // namespace kgwalk::nn
