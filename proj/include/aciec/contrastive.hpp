#pragma once

#include <string>
#include <vector>

#include "aciec/core.hpp"
#include "aciec/encoders.hpp"

namespace aciec::anp {

enum class LabelView { Noun, Anp };

// Scalar hyperparameters shared by the detector and classifier objectives.
struct LossConfig {
    double tau = 0.07;          // contrastive temperature
    double lambda_mix = 1.0;    // CE/contrastive balance in the classifier loss
    double anp_threshold = 0.95;
    int k_chains = 5;
    int k_concepts = 2;

    void validate() const;
};

struct LabeledEmbeddingBatch {
    std::vector<encoders::EmbeddingVector> embeddings;
    std::vector<core::ANPLabel> anp_labels;

    size_t size() const { return embeddings.size(); }
    const std::string& noun_of(size_t i) const { return anp_labels[i].noun; }
    bool same_label(size_t i, size_t j, LabelView view) const {
        return view == LabelView::Noun ? anp_labels[i].noun == anp_labels[j].noun
                                       : anp_labels[i] == anp_labels[j];
    }
};

using GradientSet = std::vector<std::vector<double>>;  // one vector per embedding

struct ContrastiveResult {
    double loss = 0.0;
    std::vector<double> per_anchor;
};

// Supervised contrastive loss with cosine scores. Summed over anchors;
// anchors with no positive under the view contribute 0.
ContrastiveResult supervised_contrastive_loss(const LabeledEmbeddingBatch& batch,
                                              LabelView view, double tau);
GradientSet supervised_contrastive_grad(const LabeledEmbeddingBatch& batch,
                                        LabelView view, double tau);

// 0.5 * (noun-level + ANP-level).
double hierarchical_loss(const LabeledEmbeddingBatch& batch, double tau);
GradientSet hierarchical_grad(const LabeledEmbeddingBatch& batch, double tau);

// Mean softmax cross-entropy over the batch.
double cross_entropy(const std::vector<std::vector<double>>& logits,
                     const std::vector<int>& targets);
GradientSet cross_entropy_grad(const std::vector<std::vector<double>>& logits,
                               const std::vector<int>& targets);

struct DetectorLossResult {
    double loss = 0.0;
    double ce = 0.0;
    double con = 0.0;
    GradientSet embedding_grads;
    GradientSet logit_grads;
};

// CE + hierarchical contrastive term; grads w.r.t. embeddings and logits.
double detector_loss(const LabeledEmbeddingBatch& batch,
                     const std::vector<std::vector<double>>& logits,
                     const std::vector<int>& targets, double tau);
DetectorLossResult detector_loss_grads(const LabeledEmbeddingBatch& batch,
                                       const std::vector<std::vector<double>>& logits,
                                       const std::vector<int>& targets, double tau);

std::vector<double> softmax(const std::vector<double>& logits);

}  // namespace aciec::anp
