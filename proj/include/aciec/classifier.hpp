#pragma once

#include <random>
#include <string>
#include <vector>

#include "aciec/captioning.hpp"
#include "aciec/contrastive.hpp"
#include "aciec/detector.hpp"
#include "aciec/nn.hpp"

namespace aciec::classifier {

// "[CLS] ANP [SEP] DES" token sequence.
struct FusionTemplate {
    std::vector<std::string> tokens;

    std::string text() const;
};

FusionTemplate build_template(const core::ANPLabel& anp, const std::string& caption);

class FusionEncoder {
  public:
    virtual ~FusionEncoder() = default;
    virtual encoders::EmbeddingVector embed(const FusionTemplate& t) const = 0;
    virtual size_t out_dim() const = 0;
};

// Desk-scale trainable encoder: hashed token embedding table, mean pooling,
// one dense-tanh projection. The projection output is the [CLS]
// representation h_cls.
class BagFusionEncoder : public FusionEncoder {
  public:
    BagFusionEncoder() = default;
    BagFusionEncoder(size_t vocab, size_t token_dim, size_t hidden_dim);

    void init(std::mt19937_64& rng);

    encoders::EmbeddingVector embed(const FusionTemplate& t) const override;
    size_t out_dim() const override { return proj.out_dim; }

    struct Cache {
        std::vector<size_t> rows;       // table rows of the template's tokens
        std::vector<double> pooled;     // mean of token embeddings
        std::vector<double> hidden;     // post-tanh h_cls
    };
    Cache embed_cached(const FusionTemplate& t) const;
    void backward(const Cache& cache, const std::vector<double>& grad_hidden);

    void zero_grad();
    void step(double lr);

    size_t vocab = 0;
    size_t token_dim = 0;
    std::vector<double> table;       // vocab x token_dim
    std::vector<double> grad_table;
    nn::DenseLayer proj;
};

struct ConceptSentencePair {
    core::ANPLabel anp;
    std::string sentence;
};

struct ContrastivePack {
    ConceptSentencePair anchor;     // (rank-1 concept, caption)
    ConceptSentencePair positive;   // (rank-2 concept, same caption)
    std::vector<ConceptSentencePair> negatives;  // other-class pairs
};

struct PackSource {
    anp::ConceptPrediction prediction;
    std::string caption;
    int emotion_class = -1;
};

ContrastivePack build_contrastive_pack(const PackSource& item,
                                       const std::vector<PackSource>& others,
                                       size_t n_negatives, std::mt19937_64& rng);

// InfoNCE over cosine scores (anchor/positive vs anchor/negative pairs).
double semantic_contrastive_value(const encoders::EmbeddingVector& anchor,
                                  const encoders::EmbeddingVector& positive,
                                  const std::vector<encoders::EmbeddingVector>& negatives,
                                  double tau);

struct PairLossGrads {
    double loss = 0.0;
    std::vector<double> d_anchor;
    std::vector<double> d_positive;
    std::vector<std::vector<double>> d_negatives;
};

PairLossGrads semantic_contrastive_grads(
    const encoders::EmbeddingVector& anchor, const encoders::EmbeddingVector& positive,
    const std::vector<encoders::EmbeddingVector>& negatives, double tau);

double semantic_contrastive_loss(const ContrastivePack& pack, const FusionEncoder& encoder,
                                 double tau);

double total_loss(double ce, double con, double lambda_mix);

enum class SamplingMode { ImageLevel, ClassLevel };

struct ClassifierModel {
    core::EmotionTaxonomy taxonomy;
    BagFusionEncoder encoder;
    nn::DenseLayer head;
    anp::LossConfig loss_config;
};

std::vector<double> classify(const ClassifierModel& model, const core::ANPLabel& anp,
                             const std::string& caption);

struct ClassifierTrainConfig {
    anp::LossConfig loss;
    int epochs = 50;
    size_t batch_size = 64;
    double learning_rate = 0.001;
    size_t vocab = 512;
    size_t token_dim = 32;
    size_t hidden_dim = 32;
    size_t n_negatives = 0;  // 0 means all other-class records in the batch
    SamplingMode sampling = SamplingMode::ImageLevel;
    bool ce_only = false;    // skip the contrastive term entirely
    uint64_t seed = 0;
};

struct ClassifierEpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainedClassifier {
    ClassifierModel model;
    std::vector<ClassifierEpochLog> log;
};

struct ClassifierExample {
    std::string id;
    anp::ConceptPrediction prediction;
    std::string caption;
    int emotion_class = -1;
};

TrainedClassifier train_classifier(const std::vector<ClassifierExample>& train_examples,
                                   const std::vector<ClassifierExample>& val_examples,
                                   const core::EmotionTaxonomy& taxonomy,
                                   const ClassifierTrainConfig& config);

void save_classifier(const TrainedClassifier& clf, const std::string& path);
TrainedClassifier load_classifier(const std::string& path);

}  // namespace aciec::classifier
