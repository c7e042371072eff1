#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aciec/classifier.hpp"
#include "aciec/core.hpp"
#include "aciec/detector.hpp"
#include "aciec/encoders.hpp"
#include "aciec/routing.hpp"

namespace aciec::harness {

struct RouteParams {
    size_t min_chars = 8;
    double min_confidence = 0.8;
    bool fallback_to_visual = false;
};

struct PipelineConfig {
    uint64_t seed = 0;
    std::string taxonomy = "binary";
    std::string taxonomy_file;  // overrides `taxonomy` when set
    std::string detector_ckpt;
    std::string classifier_ckpt;
    encoders::EncoderConfig encoder;
    captioning::ChatConfig chat;
    routing::OcrConfig ocr;
    anp::LossConfig loss;
    RouteParams route;
    classifier::SamplingMode sampling = classifier::SamplingMode::ImageLevel;
    size_t n_negatives = 0;
    double caption_merge_threshold = 0.9;

    // training knobs
    int epochs = 30;
    size_t batch_size = 64;
    double learning_rate = 0.001;
    size_t hidden_dim = 32;
    size_t embed_dim = 16;
    size_t vocab = 512;
    size_t token_dim = 32;
};

// Reads JSON (.json) or a flat TOML subset: [section] headers and
// key = value lines with string/number/bool values.
PipelineConfig load_config(const std::string& path);
PipelineConfig config_from_json(const nlohmann::json& j);

struct PipelineContext {
    core::EmotionTaxonomy taxonomy;
    anp::TrainedDetector detector;
    classifier::TrainedClassifier clf;
    std::unique_ptr<captioning::ChatClient> chat;
    std::unique_ptr<routing::OcrClient> ocr;
    PipelineConfig config;
};

PipelineContext load_pipeline(const PipelineConfig& config);

struct PipelineTrace {
    routing::Route route = routing::Route::VisualPath;
    std::string route_reason;
    routing::OcrResult ocr;
    std::vector<std::pair<std::string, double>> ranked_anps;  // canonical text
    std::string caption;
    std::vector<double> probabilities;
    int predicted_class = -1;

    nlohmann::json to_json() const;
};

PipelineTrace run_pipeline(const core::ImageRecord& record, PipelineContext& ctx);

struct EvalReport {
    double top1_accuracy = 0.0;
    std::vector<std::vector<size_t>> confusion_matrix;  // [truth][predicted]
    std::vector<double> per_class_accuracy;
    size_t text_path_count = 0;
    size_t visual_path_count = 0;
    size_t evaluated = 0;
    std::vector<std::string> failures;

    nlohmann::json to_json() const;
};

EvalReport evaluate(const std::vector<core::ImageRecord>& test_records,
                    PipelineContext& ctx);

// TSV with a JSON header line; one row per record: id, emotion label, h_cls.
void export_features(const std::vector<core::ImageRecord>& records,
                     const classifier::ClassifierModel& model, const std::string& out_path);

struct SynthSpec {
    size_t nouns = 2;
    size_t adjectives_per_noun = 2;
    size_t images_per_anp = 10;
    size_t classes = 2;
    double separability = 0.9;
    size_t feature_dim = 32;
    size_t text_images = 0;  // extra records routed through the text path
    std::string taxonomy = "binary";
};

struct SynthOutput {
    std::vector<core::ImageRecord> records;
    core::EmotionTaxonomy taxonomy;
    nlohmann::json chat_fixture;
    nlohmann::json ocr_fixture;
};

// Deterministic toy dataset with planted ANP structure, class-separable
// features and captions, plus matching mock-client fixtures.
SynthOutput synth_dataset(const SynthSpec& spec, uint64_t seed);

void write_synth(const SynthOutput& out, const std::string& dir);

}  // namespace aciec::harness
