#include "aciec/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace aciec::classifier {

std::string FusionTemplate::text() const {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += " ";
        out += t;
    }
    return out;
}

FusionTemplate build_template(const core::ANPLabel& anp, const std::string& caption) {
    if (caption.empty()) throw DataError("build_template: empty caption");
    FusionTemplate t;
    t.tokens.push_back("[CLS]");
    t.tokens.push_back(anp.adjective);
    t.tokens.push_back(anp.noun);
    t.tokens.push_back("[SEP]");
    std::istringstream ss(caption);
    std::string word;
    while (ss >> word) t.tokens.push_back(word);
    return t;
}

BagFusionEncoder::BagFusionEncoder(size_t vocab_, size_t token_dim_, size_t hidden_dim)
    : vocab(vocab_), token_dim(token_dim_) {
    table.assign(vocab * token_dim, 0.0);
    grad_table.assign(vocab * token_dim, 0.0);
    proj.resize(token_dim, hidden_dim);
}

void BagFusionEncoder::init(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (double& x : table) x = dist(rng);
    proj.init(rng, 1.0 / std::sqrt(static_cast<double>(token_dim)));
}

BagFusionEncoder::Cache BagFusionEncoder::embed_cached(const FusionTemplate& t) const {
    if (t.tokens.empty()) throw DataError("fusion encoder: empty template");
    Cache c;
    c.rows.reserve(t.tokens.size());
    c.pooled.assign(token_dim, 0.0);
    for (const auto& token : t.tokens) {
        size_t row = std::hash<std::string>{}(token) % vocab;
        c.rows.push_back(row);
        const double* emb = table.data() + row * token_dim;
        for (size_t k = 0; k < token_dim; ++k) c.pooled[k] += emb[k];
    }
    const double inv = 1.0 / static_cast<double>(c.rows.size());
    for (double& x : c.pooled) x *= inv;
    c.hidden = nn::tanh_forward(proj.forward(c.pooled));
    return c;
}

encoders::EmbeddingVector BagFusionEncoder::embed(const FusionTemplate& t) const {
    return encoders::EmbeddingVector{embed_cached(t).hidden};
}

void BagFusionEncoder::backward(const Cache& cache, const std::vector<double>& grad_hidden) {
    auto d_pre = nn::tanh_backward(cache.hidden, grad_hidden);
    auto d_pooled = proj.backward(cache.pooled, d_pre);
    const double inv = 1.0 / static_cast<double>(cache.rows.size());
    for (size_t row : cache.rows) {
        double* g = grad_table.data() + row * token_dim;
        for (size_t k = 0; k < token_dim; ++k) g[k] += d_pooled[k] * inv;
    }
}

void BagFusionEncoder::zero_grad() {
    std::fill(grad_table.begin(), grad_table.end(), 0.0);
    proj.zero_grad();
}

void BagFusionEncoder::step(double lr) {
    for (size_t i = 0; i < table.size(); ++i) table[i] -= lr * grad_table[i];
    proj.step(lr);
}

ContrastivePack build_contrastive_pack(const PackSource& item,
                                       const std::vector<PackSource>& others,
                                       size_t n_negatives, std::mt19937_64& rng) {
    if (item.prediction.ranked.size() < 2)
        throw DataError("build_contrastive_pack: need at least 2 ranked concepts");
    if (item.caption.empty()) throw DataError("build_contrastive_pack: empty caption");

    ContrastivePack pack;
    pack.anchor = {item.prediction.ranked[0].first, item.caption};
    pack.positive = {item.prediction.ranked[1].first, item.caption};

    std::vector<const PackSource*> candidates;
    for (const auto& other : others)
        if (other.emotion_class != item.emotion_class) candidates.push_back(&other);
    if (candidates.empty()) throw DataError("build_contrastive_pack: no negatives available");

    if (n_negatives == 0 || n_negatives >= candidates.size()) {
        for (const auto* c : candidates)
            pack.negatives.push_back(ConceptSentencePair{c->prediction.ranked.at(0).first, c->caption});
    } else {
        std::vector<size_t> idx(candidates.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        for (size_t i = 0; i < n_negatives; ++i) {
            const auto* c = candidates[idx[i]];
            pack.negatives.push_back(ConceptSentencePair{c->prediction.ranked.at(0).first, c->caption});
        }
    }
    return pack;
}

double semantic_contrastive_value(const encoders::EmbeddingVector& anchor,
                                  const encoders::EmbeddingVector& positive,
                                  const std::vector<encoders::EmbeddingVector>& negatives,
                                  double tau) {
    if (tau <= 0) throw DataError("semantic_contrastive_loss: tau must be positive");
    if (negatives.empty())
        throw DataError("semantic_contrastive_loss: empty negative set");
    const double s_pos = encoders::cosine_similarity(anchor, positive) / tau;
    double max_s = s_pos;
    std::vector<double> s_negs(negatives.size());
    for (size_t i = 0; i < negatives.size(); ++i) {
        s_negs[i] = encoders::cosine_similarity(anchor, negatives[i]) / tau;
        max_s = std::max(max_s, s_negs[i]);
    }
    double denom = std::exp(s_pos - max_s);
    for (double s : s_negs) denom += std::exp(s - max_s);
    return -(s_pos - max_s) + std::log(denom);
}

namespace {

// dcos(u,w)/du = w/(|u||w|) - cos * u/|u|^2
void add_cosine_grad(const encoders::EmbeddingVector& u, const encoders::EmbeddingVector& w,
                     double cos_uw, double weight, std::vector<double>& d_u) {
    double nu = 0, nw = 0;
    for (double x : u.values) nu += x * x;
    for (double x : w.values) nw += x * x;
    nu = std::sqrt(nu);
    nw = std::sqrt(nw);
    const double inv = 1.0 / (nu * nw);
    const double self = cos_uw / (nu * nu);
    for (size_t k = 0; k < u.values.size(); ++k)
        d_u[k] += weight * (w.values[k] * inv - self * u.values[k]);
}

}  // namespace

PairLossGrads semantic_contrastive_grads(
    const encoders::EmbeddingVector& anchor, const encoders::EmbeddingVector& positive,
    const std::vector<encoders::EmbeddingVector>& negatives, double tau) {
    PairLossGrads out;
    out.loss = semantic_contrastive_value(anchor, positive, negatives, tau);

    const double c_pos = encoders::cosine_similarity(anchor, positive);
    std::vector<double> c_negs(negatives.size());
    double max_s = c_pos / tau;
    for (size_t i = 0; i < negatives.size(); ++i) {
        c_negs[i] = encoders::cosine_similarity(anchor, negatives[i]);
        max_s = std::max(max_s, c_negs[i] / tau);
    }
    double denom = std::exp(c_pos / tau - max_s);
    for (double c : c_negs) denom += std::exp(c / tau - max_s);
    const double p_pos = std::exp(c_pos / tau - max_s) / denom;

    const size_t d = anchor.dim();
    out.d_anchor.assign(d, 0.0);
    out.d_positive.assign(d, 0.0);
    out.d_negatives.assign(negatives.size(), std::vector<double>(d, 0.0));

    const double g_pos = (p_pos - 1.0) / tau;  // dL/d s_pos
    add_cosine_grad(anchor, positive, c_pos, g_pos, out.d_anchor);
    add_cosine_grad(positive, anchor, c_pos, g_pos, out.d_positive);
    for (size_t i = 0; i < negatives.size(); ++i) {
        const double p_n = std::exp(c_negs[i] / tau - max_s) / denom;
        const double g_n = p_n / tau;
        add_cosine_grad(anchor, negatives[i], c_negs[i], g_n, out.d_anchor);
        add_cosine_grad(negatives[i], anchor, c_negs[i], g_n, out.d_negatives[i]);
    }
    return out;
}

double semantic_contrastive_loss(const ContrastivePack& pack, const FusionEncoder& encoder,
                                 double tau) {
    auto z1 = encoder.embed(build_template(pack.anchor.anp, pack.anchor.sentence));
    auto z2 = encoder.embed(build_template(pack.positive.anp, pack.positive.sentence));
    std::vector<encoders::EmbeddingVector> z_negs;
    for (const auto& n : pack.negatives)
        z_negs.push_back(encoder.embed(build_template(n.anp, n.sentence)));
    return semantic_contrastive_value(z1, z2, z_negs, tau);
}

double total_loss(double ce, double con, double lambda_mix) {
    if (lambda_mix < 0) throw DataError("total_loss: lambda_mix must be non-negative");
    return ce + lambda_mix * con;
}

std::vector<double> classify(const ClassifierModel& model, const core::ANPLabel& anp,
                             const std::string& caption) {
    if (model.head.out_dim != model.taxonomy.classes.size())
        throw DataError("classify: head width does not match taxonomy size");
    auto h = model.encoder.embed(build_template(anp, caption));
    return anp::softmax(model.head.forward(h.values));
}

namespace {

void check_example(const ClassifierExample& ex, const core::EmotionTaxonomy& taxonomy) {
    if (ex.prediction.ranked.size() < 2)
        throw DataError("train_classifier: record '" + ex.id +
                        "' has fewer than 2 ranked concepts");
    if (ex.caption.empty())
        throw DataError("train_classifier: record '" + ex.id + "' has no caption");
    if (ex.emotion_class < 0 ||
        static_cast<size_t>(ex.emotion_class) >= taxonomy.classes.size())
        throw DataError("train_classifier: record '" + ex.id +
                        "' has an invalid emotion label");
}

double validation_accuracy(const ClassifierModel& model,
                           const std::vector<ClassifierExample>& examples) {
    if (examples.empty()) return 0.0;
    size_t correct = 0;
    for (const auto& ex : examples) {
        auto probs = classify(model, ex.prediction.ranked[0].first, ex.caption);
        size_t argmax = std::max_element(probs.begin(), probs.end()) - probs.begin();
        if (static_cast<int>(argmax) == ex.emotion_class) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace

TrainedClassifier train_classifier(const std::vector<ClassifierExample>& train_examples,
                                   const std::vector<ClassifierExample>& val_examples,
                                   const core::EmotionTaxonomy& taxonomy,
                                   const ClassifierTrainConfig& config) {
    config.loss.validate();
    if (train_examples.empty()) throw DataError("train_classifier: empty training set");
    std::set<int> classes_present;
    for (const auto& ex : train_examples) {
        check_example(ex, taxonomy);
        classes_present.insert(ex.emotion_class);
    }
    if (classes_present.size() < 2)
        throw DataError("train_classifier: fewer than 2 classes in the training set");

    TrainedClassifier out;
    ClassifierModel& model = out.model;
    model.taxonomy = taxonomy;
    model.loss_config = config.loss;
    model.encoder = BagFusionEncoder(config.vocab, config.token_dim, config.hidden_dim);
    model.head.resize(config.hidden_dim, taxonomy.classes.size());

    std::mt19937_64 rng(config.seed);
    model.encoder.init(rng);
    model.head.init(rng, 1.0 / std::sqrt(static_cast<double>(config.hidden_dim)));

    const bool use_contrastive = !config.ce_only && config.loss.lambda_mix > 0;

    ClassifierModel best = model;
    double best_acc = -1.0;

    std::vector<size_t> order(train_examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;

        for (size_t start = 0; start < order.size(); start += config.batch_size) {
            const size_t end = std::min(start + config.batch_size, order.size());
            std::vector<const ClassifierExample*> batch;
            for (size_t i = start; i < end; ++i) batch.push_back(&train_examples[order[i]]);

            model.encoder.zero_grad();
            model.head.zero_grad();

            // CE over anchor templates
            std::vector<BagFusionEncoder::Cache> anchor_caches;
            std::vector<std::vector<double>> logits;
            std::vector<int> targets;
            for (const auto* ex : batch) {
                auto cache = model.encoder.embed_cached(
                    build_template(ex->prediction.ranked[0].first, ex->caption));
                logits.push_back(model.head.forward(cache.hidden));
                targets.push_back(ex->emotion_class);
                anchor_caches.push_back(std::move(cache));
            }
            const double ce = anp::cross_entropy(logits, targets);
            auto logit_grads = anp::cross_entropy_grad(logits, targets);

            std::vector<std::vector<double>> d_hidden(batch.size());
            for (size_t i = 0; i < batch.size(); ++i)
                d_hidden[i] = model.head.backward(anchor_caches[i].hidden, logit_grads[i]);

            // Contrastive term, mean over anchors with a usable pack
            double con_sum = 0.0;
            size_t con_count = 0;
            struct PackWork {
                size_t anchor_idx;
                BagFusionEncoder::Cache positive_cache;
                std::vector<BagFusionEncoder::Cache> negative_caches;
                PairLossGrads grads;
            };
            std::vector<PackWork> works;
            if (use_contrastive) {
                for (size_t i = 0; i < batch.size(); ++i) {
                    const auto* ex = batch[i];

                    FusionTemplate positive_template;
                    if (config.sampling == SamplingMode::ImageLevel) {
                        positive_template =
                            build_template(ex->prediction.ranked[1].first, ex->caption);
                    } else {
                        // class-level variant: positive from another same-class image
                        std::vector<size_t> same;
                        for (size_t j = 0; j < batch.size(); ++j)
                            if (j != i && batch[j]->emotion_class == ex->emotion_class)
                                same.push_back(j);
                        if (same.empty()) continue;
                        std::uniform_int_distribution<size_t> dist(0, same.size() - 1);
                        const auto* peer = batch[same[dist(rng)]];
                        positive_template =
                            build_template(peer->prediction.ranked[0].first, peer->caption);
                    }

                    std::vector<size_t> neg_idx;
                    for (size_t j = 0; j < batch.size(); ++j)
                        if (batch[j]->emotion_class != ex->emotion_class) neg_idx.push_back(j);
                    if (neg_idx.empty()) continue;
                    if (config.n_negatives > 0 && neg_idx.size() > config.n_negatives) {
                        std::shuffle(neg_idx.begin(), neg_idx.end(), rng);
                        neg_idx.resize(config.n_negatives);
                    }

                    PackWork work;
                    work.anchor_idx = i;
                    work.positive_cache = model.encoder.embed_cached(positive_template);
                    std::vector<encoders::EmbeddingVector> z_negs;
                    for (size_t j : neg_idx) {
                        auto cache = model.encoder.embed_cached(build_template(
                            batch[j]->prediction.ranked[0].first, batch[j]->caption));
                        z_negs.push_back(encoders::EmbeddingVector{cache.hidden});
                        work.negative_caches.push_back(std::move(cache));
                    }
                    work.grads = semantic_contrastive_grads(
                        encoders::EmbeddingVector{anchor_caches[i].hidden},
                        encoders::EmbeddingVector{work.positive_cache.hidden}, z_negs,
                        config.loss.tau);
                    con_sum += work.grads.loss;
                    works.push_back(std::move(work));
                }
            }
            const double con = works.empty() ? 0.0 : con_sum / works.size();
            con_count = works.size();

            const double batch_loss =
                total_loss(ce, con, use_contrastive ? config.loss.lambda_mix : 0.0);
            if (!std::isfinite(batch_loss))
                throw DataError("train_classifier: loss diverged at epoch " +
                                std::to_string(epoch));
            epoch_loss += batch_loss;

            // Backprop contrastive grads scaled by lambda / n_packs
            if (con_count > 0) {
                const double scale = config.loss.lambda_mix / static_cast<double>(con_count);
                for (auto& work : works) {
                    auto& dh = d_hidden[work.anchor_idx];
                    for (size_t k = 0; k < dh.size(); ++k)
                        dh[k] += scale * work.grads.d_anchor[k];
                    std::vector<double> dp(work.grads.d_positive);
                    for (double& x : dp) x *= scale;
                    model.encoder.backward(work.positive_cache, dp);
                    for (size_t n = 0; n < work.negative_caches.size(); ++n) {
                        std::vector<double> dn(work.grads.d_negatives[n]);
                        for (double& x : dn) x *= scale;
                        model.encoder.backward(work.negative_caches[n], dn);
                    }
                }
            }
            for (size_t i = 0; i < batch.size(); ++i)
                model.encoder.backward(anchor_caches[i], d_hidden[i]);

            model.encoder.step(config.learning_rate);
            model.head.step(config.learning_rate);
        }

        const double val_acc = validation_accuracy(model, val_examples);
        out.log.push_back({epoch, epoch_loss, val_acc});
        if (val_examples.empty() || val_acc > best_acc) {
            best_acc = val_acc;
            best = model;
        }
    }

    out.model = best;
    return out;
}

namespace {

json layer_to_json(const nn::DenseLayer& l) {
    return json{{"in", l.in_dim}, {"out", l.out_dim}, {"w", l.weights}, {"b", l.bias}};
}

nn::DenseLayer layer_from_json(const json& j) {
    nn::DenseLayer l(j.at("in").get<size_t>(), j.at("out").get<size_t>());
    l.weights = j.at("w").get<std::vector<double>>();
    l.bias = j.at("b").get<std::vector<double>>();
    return l;
}

}  // namespace

void save_classifier(const TrainedClassifier& clf, const std::string& path) {
    const auto& m = clf.model;
    json j;
    j["format"] = "aciec-classifier";
    j["version"] = 1;
    j["taxonomy"] = {{"name", m.taxonomy.name}, {"classes", m.taxonomy.classes}};
    j["config"] = {{"tau", m.loss_config.tau},
                   {"lambda_mix", m.loss_config.lambda_mix},
                   {"anp_threshold", m.loss_config.anp_threshold},
                   {"k_chains", m.loss_config.k_chains},
                   {"k_concepts", m.loss_config.k_concepts}};
    j["encoder"] = {{"vocab", m.encoder.vocab},
                    {"token_dim", m.encoder.token_dim},
                    {"table", m.encoder.table},
                    {"proj", layer_to_json(m.encoder.proj)}};
    j["head"] = layer_to_json(m.head);
    j["log"] = json::array();
    for (const auto& e : clf.log)
        j["log"].push_back({{"epoch", e.epoch},
                            {"train_loss", e.train_loss},
                            {"val_accuracy", e.val_accuracy}});
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << j.dump() << "\n";
}

TrainedClassifier load_classifier(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    json j = json::parse(in);
    if (j.value("format", "") != "aciec-classifier")
        throw DataError("not a classifier checkpoint: " + path);
    TrainedClassifier clf;
    auto& m = clf.model;
    m.taxonomy.name = j.at("taxonomy").at("name").get<std::string>();
    m.taxonomy.classes = j.at("taxonomy").at("classes").get<std::vector<std::string>>();
    const auto& cfg = j.at("config");
    m.loss_config.tau = cfg.at("tau").get<double>();
    m.loss_config.lambda_mix = cfg.at("lambda_mix").get<double>();
    m.loss_config.anp_threshold = cfg.at("anp_threshold").get<double>();
    m.loss_config.k_chains = cfg.at("k_chains").get<int>();
    m.loss_config.k_concepts = cfg.at("k_concepts").get<int>();
    const auto& enc = j.at("encoder");
    m.encoder = BagFusionEncoder(enc.at("vocab").get<size_t>(),
                                 enc.at("token_dim").get<size_t>(), 1);
    m.encoder.table = enc.at("table").get<std::vector<double>>();
    m.encoder.proj = layer_from_json(enc.at("proj"));
    m.head = layer_from_json(j.at("head"));
    for (const auto& e : j.value("log", json::array()))
        clf.log.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                           e.at("val_accuracy").get<double>()});
    if (m.head.out_dim != m.taxonomy.classes.size())
        throw DataError("checkpoint: head width does not match taxonomy");
    return clf;
}

}  // namespace aciec::classifier
