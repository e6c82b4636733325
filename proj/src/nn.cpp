#include "kgwalk/nn.hpp"

#include <cmath>
#include <limits>

#include "kgwalk/errors.hpp"
#include "kgwalk/rng.hpp"

namespace kgwalk::nn {

Vector affine(const DenseLayer& layer, const Vector& x) {
    if (x.size() != layer.weights.rows()) throw std::invalid_argument("affine: input dimension mismatch");
    return layer.weights.transpose() * x + layer.bias;
}

Vector activate(Activation act, const Vector& z) {
    switch (act) {
        case Activation::Identity: return z;
        case Activation::Relu: return z.cwiseMax(0.0);
        case Activation::Sigmoid: return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    }
    throw std::invalid_argument("unknown activation");
}

Vector affine_relu(const DenseLayer& layer, const Vector& x) {
    return activate(Activation::Relu, affine(layer, x));
}

namespace {

// Max over surviving logits; throws when the mask is empty.
double masked_max(const Vector& logits, const Mask& mask) {
    if (static_cast<int>(mask.size()) != logits.size())
        throw std::invalid_argument("masked_softmax: mask length mismatch");
    double zmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < logits.size(); ++i) {
        if (mask[i] && logits[i] > zmax) zmax = logits[i];
    }
    if (zmax == -std::numeric_limits<double>::infinity())
        throw std::invalid_argument("masked_softmax: mask has no surviving entry");
    return zmax;
}

}  // namespace

Vector masked_softmax(const Vector& logits, const Mask& mask) {
    const double zmax = masked_max(logits, mask);
    Vector probs = Vector::Zero(logits.size());
    double sum = 0.0;
    for (int i = 0; i < logits.size(); ++i) {
        if (mask[i]) {
            probs[i] = std::exp(logits[i] - zmax);
            sum += probs[i];
        }
    }
    probs /= sum;
    return probs;
}

Vector masked_log_softmax(const Vector& logits, const Mask& mask) {
    const double zmax = masked_max(logits, mask);
    double sum = 0.0;
    for (int i = 0; i < logits.size(); ++i) {
        if (mask[i]) sum += std::exp(logits[i] - zmax);
    }
    const double lse = zmax + std::log(sum);
    Vector logp = Vector::Constant(logits.size(), -std::numeric_limits<double>::infinity());
    for (int i = 0; i < logits.size(); ++i) {
        if (mask[i]) logp[i] = logits[i] - lse;
    }
    return logp;
}

double entropy(const Vector& probs) {
    double h = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
        if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
    }
    return h;
}

Vector affine_backward(const DenseLayer& layer, const Vector& x, const Vector& dy, DenseGrad& g) {
    if (dy.size() != layer.weights.cols()) throw std::invalid_argument("affine_backward: gradient dimension mismatch");
    if (x.size() != layer.weights.rows()) throw std::invalid_argument("affine_backward: input dimension mismatch");
    g.weights.noalias() += x * dy.transpose();
    g.bias += dy;
    return layer.weights * dy;
}

Vector relu_backward(const Vector& pre, const Vector& dy) {
    Vector dz = dy;
    for (int i = 0; i < pre.size(); ++i) {
        if (pre[i] <= 0.0) dz[i] = 0.0;
    }
    return dz;
}

Vector sigmoid_backward(const Vector& out, const Vector& dy) {
    return dy.cwiseProduct(out.cwiseProduct(Vector::Ones(out.size()) - out));
}

Mlp::Mlp(const std::vector<int>& dims, std::vector<Activation> acts) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1)
        throw std::invalid_argument("Mlp: dims/activations mismatch");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) layers.emplace_back(dims[l], dims[l + 1]);
    activations = std::move(acts);
}

Vector Mlp::forward(const Vector& x) const {
    Vector h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) h = activate(activations[l], affine(layers[l], h));
    return h;
}

Vector Mlp::forward(const Vector& x, Tape& tape) const {
    tape.inputs.clear();
    tape.pre.clear();
    Vector h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        tape.inputs.push_back(h);
        Vector z = affine(layers[l], h);
        tape.pre.push_back(z);
        h = activate(activations[l], z);
    }
    tape.recorded = true;
    return h;
}

Vector Mlp::backward(const Tape& tape, Vector dout, std::vector<DenseGrad>& grads) const {
    if (!tape.recorded) throw std::invalid_argument("Mlp::backward called without a recorded forward pass");
    if (grads.size() != layers.size()) throw std::invalid_argument("Mlp::backward: gradient buffer mismatch");
    for (std::size_t i = layers.size(); i-- > 0;) {
        Vector dz;
        switch (activations[i]) {
            case Activation::Identity: dz = std::move(dout); break;
            case Activation::Relu: dz = relu_backward(tape.pre[i], dout); break;
            case Activation::Sigmoid: dz = sigmoid_backward(activate(Activation::Sigmoid, tape.pre[i]), dout); break;
        }
        dout = affine_backward(layers[i], tape.inputs[i], dz, grads[i]);
    }
    return dout;
}

std::vector<DenseGrad> Mlp::zero_grads() const {
    std::vector<DenseGrad> grads;
    grads.reserve(layers.size());
    for (const auto& layer : layers) grads.push_back(DenseGrad::zeros_like(layer));
    return grads;
}

void init_fan_balanced(DenseLayer& layer, std::uint64_t seed) {
    rng::Engine eng(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
    for (int c = 0; c < layer.weights.cols(); ++c) {
        for (int r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = eng.uniform(-bound, bound);
    }
    layer.bias.setZero();
}

void Optimizer::apply(std::span<const ParamRef> params, std::span<const GradRef> grads,
                      StepDirection direction) {
    if (params.size() != grads.size()) throw std::invalid_argument("optimizer: parameter/gradient count mismatch");
    if (first_.empty() && cfg_.adaptive) {
        first_.resize(params.size());
        second_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            first_[i].assign(static_cast<std::size_t>(params[i].size), 0.0);
            second_[i].assign(static_cast<std::size_t>(params[i].size), 0.0);
        }
    }
    ++step_;
    const double sign = direction == StepDirection::Ascend ? 1.0 : -1.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size != grads[i].size) throw std::invalid_argument("optimizer: shape mismatch for " + params[i].name);
        double* p = params[i].data;
        const double* g = grads[i].data;
        const std::ptrdiff_t n = params[i].size;
        for (std::ptrdiff_t j = 0; j < n; ++j) {
            if (!std::isfinite(g[j]))
                throw NumericError("non-finite gradient in parameter '" + params[i].name + "'");
        }
        if (!cfg_.adaptive) {
            for (std::ptrdiff_t j = 0; j < n; ++j) p[j] += sign * cfg_.learning_rate * g[j];
            continue;
        }
        auto& m = first_[i];
        auto& v = second_[i];
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (std::ptrdiff_t j = 0; j < n; ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            p[j] += sign * cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }
}

}  // namespace kgwalk::nn
