#pragma once

// Shared test oracles: naive reference implementations and finite
// differences, kept independent of the library's computation paths.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "aciec/contrastive.hpp"

namespace testutil {

using aciec::anp::LabeledEmbeddingBatch;
using aciec::anp::LabelView;
using aciec::encoders::EmbeddingVector;

inline double naive_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Literal double-loop transcription of the supervised contrastive loss,
// with no shared code or numerical tricks.
inline double naive_supcon_loss(const LabeledEmbeddingBatch& batch, LabelView view,
                                double tau) {
    const size_t n = batch.size();
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        std::vector<size_t> positives;
        for (size_t j = 0; j < n; ++j)
            if (j != i && batch.same_label(i, j, view)) positives.push_back(j);
        if (positives.empty()) continue;
        double anchor_term = 0.0;
        for (size_t mu : positives) {
            double denom = 0.0;
            for (size_t eta = 0; eta < n; ++eta)
                if (eta != i)
                    denom += std::exp(naive_cosine(batch.embeddings[i].values,
                                                   batch.embeddings[eta].values) /
                                      tau);
            anchor_term += std::log(std::exp(naive_cosine(batch.embeddings[i].values,
                                                          batch.embeddings[mu].values) /
                                             tau) /
                                    denom);
        }
        total += -anchor_term / static_cast<double>(positives.size());
    }
    return total;
}

// Naive InfoNCE of one anchor-positive pair vs negatives over raw scores.
inline double naive_pair_loss(double s_pos, const std::vector<double>& s_negs, double tau) {
    double denom = std::exp(s_pos / tau);
    for (double s : s_negs) denom += std::exp(s / tau);
    return -std::log(std::exp(s_pos / tau) / denom);
}

// Central finite differences of f over a flat parameter vector.
inline std::vector<double> finite_differences(
    std::vector<double> params, const std::function<double(const std::vector<double>&)>& f,
    double step = 1e-5) {
    std::vector<double> grad(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        const double orig = params[i];
        params[i] = orig + step;
        const double fp = f(params);
        params[i] = orig - step;
        const double fm = f(params);
        params[i] = orig;
        grad[i] = (fp - fm) / (2.0 * step);
    }
    return grad;
}

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

inline EmbeddingVector random_unit_vector(size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    EmbeddingVector v;
    v.values.resize(dim);
    double norm = 0;
    for (double& x : v.values) {
        x = gauss(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v.values) x /= norm;
    return v;
}

// Batch with random unit embeddings and labels drawn from a small pool of
// noun/adjective combinations.
inline LabeledEmbeddingBatch random_batch(size_t size, size_t dim, size_t n_nouns,
                                          size_t n_adjs, std::mt19937_64& rng) {
    LabeledEmbeddingBatch batch;
    std::uniform_int_distribution<size_t> noun_dist(0, n_nouns - 1);
    std::uniform_int_distribution<size_t> adj_dist(0, n_adjs - 1);
    for (size_t i = 0; i < size; ++i) {
        batch.embeddings.push_back(random_unit_vector(dim, rng));
        batch.anp_labels.push_back({"adj" + std::to_string(adj_dist(rng)),
                                    "noun" + std::to_string(noun_dist(rng))});
    }
    return batch;
}

}  // namespace testutil
