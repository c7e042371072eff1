#include "aciec/contrastive.hpp"

#include <algorithm>
#include <cmath>

namespace aciec::anp {

void LossConfig::validate() const {
    if (tau <= 0) throw DataError("LossConfig: tau must be positive");
    if (lambda_mix < 0) throw DataError("LossConfig: lambda_mix must be non-negative");
    if (anp_threshold < -1 || anp_threshold > 1)
        throw DataError("LossConfig: anp_threshold out of [-1, 1]");
    if (k_chains < 1) throw DataError("LossConfig: k_chains must be >= 1");
    if (k_concepts < 2) throw DataError("LossConfig: k_concepts must be >= 2");
}

static void check_batch(const LabeledEmbeddingBatch& batch, double tau) {
    if (batch.size() < 2) throw DataError("contrastive loss: batch smaller than 2");
    if (batch.anp_labels.size() != batch.size())
        throw DataError("contrastive loss: label/embedding length mismatch");
    if (tau <= 0) throw DataError("contrastive loss: tau must be positive");
}

// Pairwise cosine score matrix; diagonal left at 0 (never read).
static std::vector<std::vector<double>> score_matrix(const LabeledEmbeddingBatch& batch) {
    const size_t n = batch.size();
    std::vector<std::vector<double>> s(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            s[i][j] = encoders::cosine_similarity(batch.embeddings[i], batch.embeddings[j]);
            s[j][i] = s[i][j];
        }
    return s;
}

ContrastiveResult supervised_contrastive_loss(const LabeledEmbeddingBatch& batch,
                                              LabelView view, double tau) {
    check_batch(batch, tau);
    const size_t n = batch.size();
    const auto s = score_matrix(batch);

    ContrastiveResult result;
    result.per_anchor.assign(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        std::vector<size_t> positives;
        for (size_t j = 0; j < n; ++j)
            if (j != i && batch.same_label(i, j, view)) positives.push_back(j);
        if (positives.empty()) continue;

        double max_s = -2.0;
        for (size_t j = 0; j < n; ++j)
            if (j != i) max_s = std::max(max_s, s[i][j]);
        double z = 0.0;
        for (size_t j = 0; j < n; ++j)
            if (j != i) z += std::exp((s[i][j] - max_s) / tau);
        const double log_z = std::log(z) + max_s / tau;

        double term = 0.0;
        for (size_t mu : positives) term += s[i][mu] / tau - log_z;
        result.per_anchor[i] = -term / static_cast<double>(positives.size());
        result.loss += result.per_anchor[i];
    }
    return result;
}

GradientSet supervised_contrastive_grad(const LabeledEmbeddingBatch& batch,
                                        LabelView view, double tau) {
    check_batch(batch, tau);
    const size_t n = batch.size();
    const auto s = score_matrix(batch);

    // dL/ds[i][j] for anchor i, other j
    std::vector<std::vector<double>> g(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
        std::vector<char> is_pos(n, 0);
        size_t n_pos = 0;
        for (size_t j = 0; j < n; ++j)
            if (j != i && batch.same_label(i, j, view)) {
                is_pos[j] = 1;
                ++n_pos;
            }
        if (n_pos == 0) continue;

        double max_s = -2.0;
        for (size_t j = 0; j < n; ++j)
            if (j != i) max_s = std::max(max_s, s[i][j]);
        double z = 0.0;
        for (size_t j = 0; j < n; ++j)
            if (j != i) z += std::exp((s[i][j] - max_s) / tau);
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double p = std::exp((s[i][j] - max_s) / tau) / z;
            g[i][j] = (p - (is_pos[j] ? 1.0 / n_pos : 0.0)) / tau;
        }
    }

    // Chain through cosine: dcos(u,w)/dw = u/(|u||w|) - cos * w/|w|^2.
    std::vector<double> norms(n);
    for (size_t i = 0; i < n; ++i) {
        double nn = 0;
        for (double x : batch.embeddings[i].values) nn += x * x;
        norms[i] = std::sqrt(nn);
    }
    const size_t d = batch.embeddings[0].dim();
    GradientSet grads(n, std::vector<double>(d, 0.0));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double w = g[i][j] + g[j][i];  // s is symmetric
            if (w == 0.0) continue;
            const double inv = 1.0 / (norms[i] * norms[j]);
            const double ci = s[i][j] / (norms[i] * norms[i]);
            for (size_t k = 0; k < d; ++k)
                grads[i][k] += w * (batch.embeddings[j].values[k] * inv -
                                    ci * batch.embeddings[i].values[k]);
        }
    return grads;
}

double hierarchical_loss(const LabeledEmbeddingBatch& batch, double tau) {
    return 0.5 * (supervised_contrastive_loss(batch, LabelView::Noun, tau).loss +
                  supervised_contrastive_loss(batch, LabelView::Anp, tau).loss);
}

GradientSet hierarchical_grad(const LabeledEmbeddingBatch& batch, double tau) {
    auto gn = supervised_contrastive_grad(batch, LabelView::Noun, tau);
    auto ga = supervised_contrastive_grad(batch, LabelView::Anp, tau);
    for (size_t i = 0; i < gn.size(); ++i)
        for (size_t k = 0; k < gn[i].size(); ++k)
            gn[i][k] = 0.5 * (gn[i][k] + ga[i][k]);
    return gn;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0;
    for (size_t i = 0; i < logits.size(); ++i) z += p[i] = std::exp(logits[i] - m);
    for (double& x : p) x /= z;
    return p;
}

static void check_logits(const std::vector<std::vector<double>>& logits,
                         const std::vector<int>& targets) {
    if (logits.empty() || logits.size() != targets.size())
        throw DataError("cross_entropy: logit/target shape mismatch");
    const size_t c = logits[0].size();
    for (size_t i = 0; i < logits.size(); ++i) {
        if (logits[i].size() != c) throw DataError("cross_entropy: ragged logits");
        if (targets[i] < 0 || static_cast<size_t>(targets[i]) >= c)
            throw DataError("cross_entropy: target out of range");
    }
}

double cross_entropy(const std::vector<std::vector<double>>& logits,
                     const std::vector<int>& targets) {
    check_logits(logits, targets);
    double loss = 0;
    for (size_t i = 0; i < logits.size(); ++i) {
        const double m = *std::max_element(logits[i].begin(), logits[i].end());
        double z = 0;
        for (double x : logits[i]) z += std::exp(x - m);
        loss += std::log(z) + m - logits[i][targets[i]];
    }
    return loss / static_cast<double>(logits.size());
}

GradientSet cross_entropy_grad(const std::vector<std::vector<double>>& logits,
                               const std::vector<int>& targets) {
    check_logits(logits, targets);
    const double inv_n = 1.0 / static_cast<double>(logits.size());
    GradientSet grads(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        grads[i] = softmax(logits[i]);
        grads[i][targets[i]] -= 1.0;
        for (double& x : grads[i]) x *= inv_n;
    }
    return grads;
}

double detector_loss(const LabeledEmbeddingBatch& batch,
                     const std::vector<std::vector<double>>& logits,
                     const std::vector<int>& targets, double tau) {
    if (logits.size() != batch.size())
        throw DataError("detector_loss: logit count != batch size");
    return cross_entropy(logits, targets) + hierarchical_loss(batch, tau);
}

DetectorLossResult detector_loss_grads(const LabeledEmbeddingBatch& batch,
                                       const std::vector<std::vector<double>>& logits,
                                       const std::vector<int>& targets, double tau) {
    if (logits.size() != batch.size())
        throw DataError("detector_loss: logit count != batch size");
    DetectorLossResult r;
    r.ce = cross_entropy(logits, targets);
    r.con = hierarchical_loss(batch, tau);
    r.loss = r.ce + r.con;
    r.embedding_grads = hierarchical_grad(batch, tau);
    r.logit_grads = cross_entropy_grad(logits, targets);
    return r;
}

}  // namespace aciec::anp
