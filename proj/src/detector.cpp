#include "aciec/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace aciec::anp {

encoders::EmbeddingVector DetectorModel::embed(const std::vector<double>& features) const {
    auto h = nn::tanh_forward(backbone1.forward(features));
    return encoders::EmbeddingVector{backbone2.forward(h)};
}

std::vector<double> DetectorModel::head_logits(const encoders::EmbeddingVector& e) const {
    return head.forward(e.values);
}

int DetectorModel::class_index(const core::ANPLabel& label) const {
    auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || !(*it == label)) return -1;
    return static_cast<int>(it - classes.begin());
}

std::vector<double> detector_features(const core::ImageRecord& record, size_t expected_dim) {
    if (!record.features.empty()) {
        if (expected_dim && record.features.size() != expected_dim)
            throw DataError("record '" + record.id + "': feature dim " +
                            std::to_string(record.features.size()) + ", model expects " +
                            std::to_string(expected_dim));
        return record.features;
    }
    std::mt19937_64 rng(0);  // augment off, rng unused
    core::Image img = core::preprocess_image(record, false, rng);
    // 8x8 mean-luma pooling
    const int grid = 8, cell = 224 / grid;
    std::vector<double> pooled(grid * grid, 0.0);
    for (int gy = 0; gy < grid; ++gy)
        for (int gx = 0; gx < grid; ++gx) {
            double sum = 0;
            for (int y = gy * cell; y < (gy + 1) * cell; ++y)
                for (int x = gx * cell; x < (gx + 1) * cell; ++x) {
                    const uint8_t* px = &img.data[(y * 224 + x) * img.channels];
                    double luma = 0;
                    for (int c = 0; c < img.channels; ++c) luma += px[c];
                    sum += luma / img.channels;
                }
            pooled[gy * grid + gx] = sum / (cell * cell * 255.0);
        }
    if (expected_dim && pooled.size() != expected_dim)
        throw DataError("record '" + record.id + "': pooled pixel features have dim 64, model expects " +
                        std::to_string(expected_dim));
    return pooled;
}

namespace {

struct ForwardCache {
    std::vector<double> features;
    std::vector<double> hidden;  // post-tanh
    encoders::EmbeddingVector embedding;
    std::vector<double> logits;
};

ForwardCache forward_record(const DetectorModel& model, const std::vector<double>& features) {
    ForwardCache c;
    c.features = features;
    c.hidden = nn::tanh_forward(model.backbone1.forward(features));
    c.embedding = encoders::EmbeddingVector{model.backbone2.forward(c.hidden)};
    c.logits = model.head.forward(c.embedding.values);
    return c;
}

double validation_ce(const DetectorModel& model,
                     const std::vector<core::ImageRecord>& records) {
    if (records.empty()) return 0.0;
    std::vector<std::vector<double>> logits;
    std::vector<int> targets;
    for (const auto& r : records) {
        int cls = model.class_index(*r.anp_label);
        if (cls < 0) continue;  // unseen label, skipped in validation
        logits.push_back(model.head_logits(model.embed(detector_features(r, model.input_dim))));
        targets.push_back(cls);
    }
    if (logits.empty()) return 0.0;
    return cross_entropy(logits, targets);
}

}  // namespace

TrainedDetector train_detector(const std::vector<core::ImageRecord>& train_records,
                               const std::vector<core::ImageRecord>& val_records,
                               const core::LabelHierarchy& hierarchy,
                               const DetectorTrainConfig& config) {
    config.loss.validate();
    if (train_records.empty()) throw DataError("train_detector: empty training set");
    for (const auto& r : train_records)
        if (!r.anp_label)
            throw DataError("train_detector: record '" + r.id + "' has no ANP label");

    std::map<std::string, const core::ImageRecord*> by_id;
    for (const auto& r : train_records) by_id[r.id] = &r;

    TrainedDetector out;
    DetectorModel& model = out.model;
    model.classes = hierarchy.class_list();
    model.loss_config = config.loss;
    model.input_dim = detector_features(train_records.front(), 0).size();

    std::mt19937_64 rng(config.seed);
    model.backbone1.resize(model.input_dim, config.hidden_dim);
    model.backbone2.resize(config.hidden_dim, config.embed_dim);
    model.head.resize(config.embed_dim, model.classes.size());
    model.backbone1.init(rng, 1.0 / std::sqrt(static_cast<double>(model.input_dim)));
    model.backbone2.init(rng, 1.0 / std::sqrt(static_cast<double>(config.hidden_dim)));
    model.head.init(rng, 1.0 / std::sqrt(static_cast<double>(config.embed_dim)));

    DetectorModel best = model;
    double best_val = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        EpochState state;
        double epoch_loss = 0.0;
        size_t batch_index = 0;
        while (true) {
            std::vector<BatchTriple> triples;
            try {
                triples = sample_hierarchical_batch(train_records, hierarchy,
                                                    config.batch_size, rng, state);
            } catch (const EpochExhausted&) {
                break;
            }
            auto ids = flatten_triples(triples);
            if (ids.size() < 2) continue;

            LabeledEmbeddingBatch batch;
            std::vector<ForwardCache> caches;
            std::vector<std::vector<double>> logits;
            std::vector<int> targets;
            for (const auto& id : ids) {
                const auto* rec = by_id.at(id);
                auto cache = forward_record(model, detector_features(*rec, model.input_dim));
                batch.embeddings.push_back(cache.embedding);
                batch.anp_labels.push_back(*rec->anp_label);
                logits.push_back(cache.logits);
                targets.push_back(model.class_index(*rec->anp_label));
                caches.push_back(std::move(cache));
            }

            auto grads = detector_loss_grads(batch, logits, targets, config.loss.tau);
            if (!std::isfinite(grads.loss))
                throw DataError("train_detector: loss diverged at epoch " +
                                std::to_string(epoch) + ", batch " +
                                std::to_string(batch_index));
            epoch_loss += grads.loss;

            model.backbone1.zero_grad();
            model.backbone2.zero_grad();
            model.head.zero_grad();
            for (size_t i = 0; i < ids.size(); ++i) {
                auto d_embed = model.head.backward(caches[i].embedding.values,
                                                   grads.logit_grads[i]);
                for (size_t k = 0; k < d_embed.size(); ++k)
                    d_embed[k] += grads.embedding_grads[i][k];
                auto d_hidden = model.backbone2.backward(caches[i].hidden, d_embed);
                model.backbone1.backward(caches[i].features,
                                         nn::tanh_backward(caches[i].hidden, d_hidden));
            }
            model.backbone1.step(config.learning_rate);
            model.backbone2.step(config.learning_rate);
            model.head.step(config.learning_rate);
            ++batch_index;
        }

        double val_ce = validation_ce(model, val_records);
        out.log.push_back({epoch, epoch_loss, val_ce});
        if (val_records.empty() || val_ce < best_val) {
            best_val = val_ce;
            best = model;
        }
    }

    out.model = best;
    return out;
}

ConceptPrediction predict_topk_anps(const DetectorModel& model,
                                    const std::vector<double>& features, size_t k) {
    if (k < 2 || k > model.classes.size())
        throw DataError("predict_topk_anps: k out of range [2, " +
                        std::to_string(model.classes.size()) + "]");
    auto probs = softmax(model.head_logits(model.embed(features)));
    std::vector<size_t> order(probs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    // ties broken by ascending class index
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return probs[a] > probs[b]; });
    ConceptPrediction pred;
    for (size_t i = 0; i < k; ++i)
        pred.ranked.emplace_back(model.classes[order[i]], probs[order[i]]);
    return pred;
}

ConceptPrediction predict_topk_anps(const DetectorModel& model,
                                    const core::ImageRecord& record, size_t k) {
    return predict_topk_anps(model, detector_features(record, model.input_dim), k);
}

namespace {

json layer_to_json(const nn::DenseLayer& l) {
    return json{{"in", l.in_dim}, {"out", l.out_dim}, {"w", l.weights}, {"b", l.bias}};
}

nn::DenseLayer layer_from_json(const json& j) {
    nn::DenseLayer l(j.at("in").get<size_t>(), j.at("out").get<size_t>());
    l.weights = j.at("w").get<std::vector<double>>();
    l.bias = j.at("b").get<std::vector<double>>();
    if (l.weights.size() != l.in_dim * l.out_dim || l.bias.size() != l.out_dim)
        throw DataError("checkpoint: layer shape mismatch");
    return l;
}

}  // namespace

void save_detector(const TrainedDetector& detector, const std::string& path) {
    json j;
    j["format"] = "aciec-detector";
    j["version"] = 1;
    const auto& m = detector.model;
    j["input_dim"] = m.input_dim;
    j["classes"] = json::array();
    for (const auto& c : m.classes) j["classes"].push_back({{"adj", c.adjective}, {"noun", c.noun}});
    j["config"] = {{"tau", m.loss_config.tau},
                   {"lambda_mix", m.loss_config.lambda_mix},
                   {"anp_threshold", m.loss_config.anp_threshold},
                   {"k_chains", m.loss_config.k_chains},
                   {"k_concepts", m.loss_config.k_concepts}};
    j["backbone1"] = layer_to_json(m.backbone1);
    j["backbone2"] = layer_to_json(m.backbone2);
    j["head"] = layer_to_json(m.head);
    j["log"] = json::array();
    for (const auto& e : detector.log)
        j["log"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_ce", e.val_ce}});
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << j.dump() << "\n";
}

TrainedDetector load_detector(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    json j = json::parse(in);
    if (j.value("format", "") != "aciec-detector")
        throw DataError("not a detector checkpoint: " + path);
    TrainedDetector d;
    auto& m = d.model;
    m.input_dim = j.at("input_dim").get<size_t>();
    for (const auto& c : j.at("classes"))
        m.classes.push_back({c.at("adj").get<std::string>(), c.at("noun").get<std::string>()});
    const auto& cfg = j.at("config");
    m.loss_config.tau = cfg.at("tau").get<double>();
    m.loss_config.lambda_mix = cfg.at("lambda_mix").get<double>();
    m.loss_config.anp_threshold = cfg.at("anp_threshold").get<double>();
    m.loss_config.k_chains = cfg.at("k_chains").get<int>();
    m.loss_config.k_concepts = cfg.at("k_concepts").get<int>();
    m.backbone1 = layer_from_json(j.at("backbone1"));
    m.backbone2 = layer_from_json(j.at("backbone2"));
    m.head = layer_from_json(j.at("head"));
    for (const auto& e : j.value("log", json::array()))
        d.log.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                         e.at("val_ce").get<double>()});
    if (m.head.out_dim != m.classes.size())
        throw DataError("checkpoint: head width does not match class list");
    return d;
}

}  // namespace aciec::anp
