#pragma once

#include <random>
#include <vector>

#include "aciec/errors.hpp"

namespace aciec::nn {

// Fully connected layer with accumulated gradients and plain SGD steps.
struct DenseLayer {
    size_t in_dim = 0;
    size_t out_dim = 0;
    std::vector<double> weights;  // out_dim x in_dim, row-major
    std::vector<double> bias;
    std::vector<double> grad_weights;
    std::vector<double> grad_bias;

    DenseLayer() = default;
    DenseLayer(size_t in, size_t out) { resize(in, out); }

    void resize(size_t in, size_t out);
    void init(std::mt19937_64& rng, double scale);

    std::vector<double> forward(const std::vector<double>& x) const;
    // Accumulates parameter grads; returns dL/dx.
    std::vector<double> backward(const std::vector<double>& x,
                                 const std::vector<double>& grad_out);

    void zero_grad();
    void step(double lr);
};

std::vector<double> tanh_forward(const std::vector<double>& x);
std::vector<double> tanh_backward(const std::vector<double>& y,
                                  const std::vector<double>& grad_out);

bool all_finite(const std::vector<double>& v);

}  // namespace aciec::nn
