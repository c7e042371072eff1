#pragma once

#include <map>
#include <string>
#include <vector>

#include "aciec/contrastive.hpp"
#include "aciec/core.hpp"
#include "aciec/nn.hpp"
#include "aciec/sampler.hpp"

namespace aciec::anp {

struct ConceptPrediction {
    std::vector<std::pair<core::ANPLabel, double>> ranked;  // descending probability
};

// Small trainable encoder (dense-tanh-dense) plus a linear head over the ANP
// class list. Operates on precomputed record features or pooled pixels.
struct DetectorModel {
    std::vector<core::ANPLabel> classes;
    size_t input_dim = 0;
    nn::DenseLayer backbone1;
    nn::DenseLayer backbone2;
    nn::DenseLayer head;
    LossConfig loss_config;

    encoders::EmbeddingVector embed(const std::vector<double>& features) const;
    std::vector<double> head_logits(const encoders::EmbeddingVector& e) const;
    int class_index(const core::ANPLabel& label) const;  // -1 when unknown
};

// Record features for the detector: the precomputed vector when present,
// otherwise pixels pooled to an 8x8 luma grid in [0, 1].
std::vector<double> detector_features(const core::ImageRecord& record, size_t expected_dim);

struct DetectorTrainConfig {
    LossConfig loss;
    int epochs = 30;
    size_t batch_size = 64;
    double learning_rate = 0.001;
    size_t hidden_dim = 32;
    size_t embed_dim = 16;
    uint64_t seed = 0;
};

struct EpochLogEntry {
    int epoch = 0;
    double train_loss = 0.0;  // summed detector loss over the epoch's batches
    double val_ce = 0.0;
};

struct TrainedDetector {
    DetectorModel model;
    std::vector<EpochLogEntry> log;
};

TrainedDetector train_detector(const std::vector<core::ImageRecord>& train_records,
                               const std::vector<core::ImageRecord>& val_records,
                               const core::LabelHierarchy& hierarchy,
                               const DetectorTrainConfig& config);

ConceptPrediction predict_topk_anps(const DetectorModel& model,
                                    const std::vector<double>& features, size_t k);
ConceptPrediction predict_topk_anps(const DetectorModel& model,
                                    const core::ImageRecord& record, size_t k);

void save_detector(const TrainedDetector& detector, const std::string& path);
TrainedDetector load_detector(const std::string& path);

}  // namespace aciec::anp
