#include "aciec/nn.hpp"

#include <cmath>

namespace aciec::nn {

void DenseLayer::resize(size_t in, size_t out) {
    in_dim = in;
    out_dim = out;
    weights.assign(in * out, 0.0);
    bias.assign(out, 0.0);
    grad_weights.assign(in * out, 0.0);
    grad_bias.assign(out, 0.0);
}

void DenseLayer::init(std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (double& w : weights) w = dist(rng);
    for (double& b : bias) b = 0.0;
}

std::vector<double> DenseLayer::forward(const std::vector<double>& x) const {
    if (x.size() != in_dim) throw DataError("DenseLayer: input dim mismatch");
    std::vector<double> y(out_dim);
    for (size_t o = 0; o < out_dim; ++o) {
        double acc = bias[o];
        const double* row = weights.data() + o * in_dim;
        for (size_t i = 0; i < in_dim; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
    return y;
}

std::vector<double> DenseLayer::backward(const std::vector<double>& x,
                                         const std::vector<double>& grad_out) {
    if (x.size() != in_dim || grad_out.size() != out_dim)
        throw DataError("DenseLayer: backward shape mismatch");
    std::vector<double> grad_in(in_dim, 0.0);
    for (size_t o = 0; o < out_dim; ++o) {
        const double g = grad_out[o];
        grad_bias[o] += g;
        double* grow = grad_weights.data() + o * in_dim;
        const double* wrow = weights.data() + o * in_dim;
        for (size_t i = 0; i < in_dim; ++i) {
            grow[i] += g * x[i];
            grad_in[i] += g * wrow[i];
        }
    }
    return grad_in;
}

void DenseLayer::zero_grad() {
    std::fill(grad_weights.begin(), grad_weights.end(), 0.0);
    std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
}

void DenseLayer::step(double lr) {
    for (size_t i = 0; i < weights.size(); ++i) weights[i] -= lr * grad_weights[i];
    for (size_t i = 0; i < bias.size(); ++i) bias[i] -= lr * grad_bias[i];
}

std::vector<double> tanh_forward(const std::vector<double>& x) {
    std::vector<double> y(x.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    return y;
}

std::vector<double> tanh_backward(const std::vector<double>& y,
                                  const std::vector<double>& grad_out) {
    std::vector<double> g(y.size());
    for (size_t i = 0; i < y.size(); ++i) g[i] = grad_out[i] * (1.0 - y[i] * y[i]);
    return g;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace aciec::nn
