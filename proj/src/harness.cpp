#include "aciec/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using nlohmann::json;

namespace aciec::harness {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Flat TOML subset: [section] headers, key = value, '#' comments,
// string/number/bool values.
json toml_subset_to_json(std::istream& in, const std::string& path) {
    json root = json::object();
    json* section = &root;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            // keep '#' inside quoted strings
            bool in_str = false;
            size_t cut = std::string::npos;
            for (size_t i = 0; i < line.size(); ++i) {
                if (line[i] == '"') in_str = !in_str;
                if (line[i] == '#' && !in_str) {
                    cut = i;
                    break;
                }
            }
            if (cut != std::string::npos) line = line.substr(0, cut);
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw UsageError(path + ":" + std::to_string(lineno) + ": malformed section");
            std::string name = trim(line.substr(1, line.size() - 2));
            section = &root[name];
            if (section->is_null()) *section = json::object();
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
            (*section)[key] = val.substr(1, val.size() - 2);
        else if (val == "true" || val == "false")
            (*section)[key] = (val == "true");
        else {
            try {
                if (val.find_first_of(".eE") != std::string::npos)
                    (*section)[key] = std::stod(val);
                else
                    (*section)[key] = std::stoll(val);
            } catch (const std::exception&) {
                throw UsageError(path + ":" + std::to_string(lineno) +
                                 ": cannot parse value '" + val + "'");
            }
        }
    }
    return root;
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (j.contains(key) && !j[key].is_null()) return j[key].get<T>();
    return fallback;
}

}  // namespace

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    c.seed = get_or<uint64_t>(j, "seed", c.seed);
    c.taxonomy = get_or<std::string>(j, "taxonomy", c.taxonomy);
    c.taxonomy_file = get_or<std::string>(j, "taxonomy_file", c.taxonomy_file);
    c.detector_ckpt = get_or<std::string>(j, "detector_ckpt", c.detector_ckpt);
    c.classifier_ckpt = get_or<std::string>(j, "classifier_ckpt", c.classifier_ckpt);

    if (j.contains("encoder")) {
        const auto& e = j["encoder"];
        c.encoder.kind = get_or<std::string>(e, "kind", c.encoder.kind);
        c.encoder.dim = get_or<size_t>(e, "dim", c.encoder.dim);
        c.encoder.endpoint = get_or<std::string>(e, "endpoint", "");
        c.encoder.cache_dir = get_or<std::string>(e, "cache_dir", "");
        c.encoder.fixture = get_or<std::string>(e, "fixture", "");
    }
    if (j.contains("chat")) {
        const auto& e = j["chat"];
        c.chat.kind = get_or<std::string>(e, "kind", c.chat.kind);
        c.chat.endpoint = get_or<std::string>(e, "endpoint", "");
        c.chat.model_name = get_or<std::string>(e, "model_name", "");
        c.chat.temperature = get_or<double>(e, "temperature", c.chat.temperature);
        c.chat.cache_dir = get_or<std::string>(e, "cache_dir", "");
        c.chat.fixture = get_or<std::string>(e, "fixture", "");
    }
    if (j.contains("ocr")) {
        const auto& e = j["ocr"];
        c.ocr.kind = get_or<std::string>(e, "kind", c.ocr.kind);
        c.ocr.fixture = get_or<std::string>(e, "fixture", "");
    }
    if (j.contains("loss")) {
        const auto& e = j["loss"];
        c.loss.tau = get_or<double>(e, "tau", c.loss.tau);
        c.loss.lambda_mix = get_or<double>(e, "lambda_mix", c.loss.lambda_mix);
        c.loss.anp_threshold = get_or<double>(e, "anp_threshold", c.loss.anp_threshold);
        c.loss.k_chains = get_or<int>(e, "k_chains", c.loss.k_chains);
        c.loss.k_concepts = get_or<int>(e, "k_concepts", c.loss.k_concepts);
    }
    if (j.contains("route")) {
        const auto& e = j["route"];
        c.route.min_chars = get_or<size_t>(e, "min_chars", c.route.min_chars);
        c.route.min_confidence = get_or<double>(e, "min_confidence", c.route.min_confidence);
        c.route.fallback_to_visual =
            get_or<bool>(e, "fallback_to_visual", c.route.fallback_to_visual);
    }
    if (j.contains("classifier")) {
        const auto& e = j["classifier"];
        std::string mode = get_or<std::string>(e, "sampling", "image_level");
        if (mode == "image_level")
            c.sampling = classifier::SamplingMode::ImageLevel;
        else if (mode == "class_level")
            c.sampling = classifier::SamplingMode::ClassLevel;
        else
            throw UsageError("classifier.sampling must be image_level or class_level");
        c.n_negatives = get_or<size_t>(e, "n_negatives", c.n_negatives);
        c.caption_merge_threshold =
            get_or<double>(e, "caption_merge_threshold", c.caption_merge_threshold);
    }
    if (j.contains("train")) {
        const auto& e = j["train"];
        c.epochs = get_or<int>(e, "epochs", c.epochs);
        c.batch_size = get_or<size_t>(e, "batch_size", c.batch_size);
        c.learning_rate = get_or<double>(e, "learning_rate", c.learning_rate);
        c.hidden_dim = get_or<size_t>(e, "hidden_dim", c.hidden_dim);
        c.embed_dim = get_or<size_t>(e, "embed_dim", c.embed_dim);
        c.vocab = get_or<size_t>(e, "vocab", c.vocab);
        c.token_dim = get_or<size_t>(e, "token_dim", c.token_dim);
    }
    c.loss.validate();
    return c;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config: " + path);
    json j;
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".toml") {
        j = toml_subset_to_json(in, path);
    } else {
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw UsageError("config parse error in " + path + ": " + e.what());
        }
    }
    return config_from_json(j);
}

PipelineContext load_pipeline(const PipelineConfig& config) {
    PipelineContext ctx;
    ctx.config = config;
    ctx.taxonomy = config.taxonomy_file.empty()
                       ? core::EmotionTaxonomy::by_name(config.taxonomy)
                       : core::load_taxonomy(config.taxonomy_file);
    if (config.detector_ckpt.empty())
        throw UsageError("pipeline needs detector_ckpt");
    if (config.classifier_ckpt.empty())
        throw UsageError("pipeline needs classifier_ckpt");
    ctx.detector = anp::load_detector(config.detector_ckpt);
    ctx.clf = classifier::load_classifier(config.classifier_ckpt);
    ctx.chat = captioning::make_chat_client(config.chat);
    ctx.ocr = routing::make_ocr_client(config.ocr);
    return ctx;
}

json PipelineTrace::to_json() const {
    json j;
    j["route"] = route == routing::Route::TextPath ? "text_path" : "visual_path";
    j["route_reason"] = route_reason;
    j["ocr"] = {{"text", ocr.text},
                {"mean_confidence", ocr.mean_confidence},
                {"region_count", ocr.region_count}};
    j["anps"] = json::array();
    for (const auto& [anp, p] : ranked_anps) j["anps"].push_back({{"anp", anp}, {"p", p}});
    j["caption"] = caption;
    j["probabilities"] = probabilities;
    j["predicted_class"] = predicted_class;
    return j;
}

namespace {

template <typename F>
auto stage(const std::string& name, const std::string& id, F&& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        throw ClientError("stage '" + name + "' failed for record '" + id + "': " + e.what());
    }
}

}  // namespace

PipelineTrace run_pipeline(const core::ImageRecord& record, PipelineContext& ctx) {
    PipelineTrace trace;
    trace.ocr = stage("ocr", record.id,
                      [&] { return routing::detect_embedded_text(record, *ctx.ocr); });
    auto decision = routing::decide_route(trace.ocr, ctx.config.route.min_chars,
                                          ctx.config.route.min_confidence);
    trace.route = decision.route;
    trace.route_reason = decision.reason;

    if (trace.route == routing::Route::TextPath) {
        try {
            trace.predicted_class =
                routing::zero_shot_text_emotion(*ctx.chat, trace.ocr.text, ctx.taxonomy);
            return trace;
        } catch (const std::exception& e) {
            if (!ctx.config.route.fallback_to_visual)
                throw ClientError("stage 'zero_shot' failed for record '" + record.id +
                                  "': " + e.what());
            trace.route = routing::Route::VisualPath;
            trace.route_reason += "; zero-shot failed, falling back to visual path";
        }
    }

    auto pred = stage("detector", record.id, [&] {
        return anp::predict_topk_anps(ctx.detector.model, record,
                                      static_cast<size_t>(ctx.config.loss.k_concepts));
    });
    for (const auto& [anp, p] : pred.ranked) trace.ranked_anps.emplace_back(anp.text(), p);

    auto caption = stage("caption", record.id, [&] {
        std::string prompt =
            captioning::build_eacot_prompt(ctx.taxonomy) + "\nIMAGE: " + record.id;
        auto chains =
            captioning::generate_chains(*ctx.chat, prompt, ctx.config.loss.k_chains);
        return captioning::aggregate_self_consistency(
            chains, captioning::exact_match_similarity, ctx.config.caption_merge_threshold);
    });
    trace.caption = caption.text;

    trace.probabilities = stage("classify", record.id, [&] {
        return classifier::classify(ctx.clf.model, pred.ranked[0].first, caption.text);
    });
    trace.predicted_class = static_cast<int>(
        std::max_element(trace.probabilities.begin(), trace.probabilities.end()) -
        trace.probabilities.begin());
    return trace;
}

json EvalReport::to_json() const {
    json j;
    j["top1_accuracy"] = top1_accuracy;
    j["confusion_matrix"] = confusion_matrix;
    j["per_class_accuracy"] = per_class_accuracy;
    j["route_counts"] = {{"text_path", text_path_count}, {"visual_path", visual_path_count}};
    j["evaluated"] = evaluated;
    j["failures"] = failures;
    return j;
}

EvalReport evaluate(const std::vector<core::ImageRecord>& test_records,
                    PipelineContext& ctx) {
    if (test_records.empty()) throw DataError("evaluate: empty test set");
    const size_t n_classes = ctx.taxonomy.classes.size();
    EvalReport report;
    report.confusion_matrix.assign(n_classes, std::vector<size_t>(n_classes, 0));

    for (const auto& record : test_records) {
        if (!record.emotion_label)
            throw DataError("evaluate: record '" + record.id + "' has no emotion label");
        try {
            auto trace = run_pipeline(record, ctx);
            report.confusion_matrix[*record.emotion_label][trace.predicted_class] += 1;
            if (trace.route == routing::Route::TextPath)
                ++report.text_path_count;
            else
                ++report.visual_path_count;
            ++report.evaluated;
        } catch (const std::exception& e) {
            report.failures.push_back(e.what());
        }
    }

    size_t correct = 0;
    report.per_class_accuracy.assign(n_classes, 0.0);
    for (size_t c = 0; c < n_classes; ++c) {
        size_t row = 0;
        for (size_t p = 0; p < n_classes; ++p) row += report.confusion_matrix[c][p];
        correct += report.confusion_matrix[c][c];
        report.per_class_accuracy[c] =
            row ? static_cast<double>(report.confusion_matrix[c][c]) / row : 0.0;
    }
    report.top1_accuracy =
        report.evaluated ? static_cast<double>(correct) / report.evaluated : 0.0;
    return report;
}

void export_features(const std::vector<core::ImageRecord>& records,
                     const classifier::ClassifierModel& model, const std::string& out_path) {
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write feature file: " + out_path);
    json header{{"dim", model.encoder.out_dim()},
                {"count", records.size()},
                {"taxonomy", model.taxonomy.name}};
    out << header.dump() << "\n";
    for (const auto& record : records) {
        if (!record.anp_label)
            throw DataError("export_features: record '" + record.id + "' has no ANP label");
        if (!record.caption)
            throw DataError("export_features: record '" + record.id + "' has no caption");
        auto h = model.encoder.embed(
            classifier::build_template(*record.anp_label, *record.caption));
        out << record.id << "\t" << (record.emotion_label ? *record.emotion_label : -1);
        char buf[32];
        for (double v : h.values) {
            std::snprintf(buf, sizeof buf, "%.9g", v);
            out << "\t" << buf;
        }
        out << "\n";
    }
}

namespace {

const std::vector<std::string> kNouns = {"cat",   "dog",   "sky",   "road",
                                        "tree",  "face",  "beach", "house",
                                        "river", "storm", "field", "bird"};
const std::vector<std::string> kAdjectives = {"happy",  "sad",   "ugly",  "cute",
                                              "bright", "dark",  "calm",  "angry",
                                              "gentle", "wild",  "quiet", "fierce"};

std::string synth_noun(size_t i) {
    std::string base = kNouns[i % kNouns.size()];
    return i < kNouns.size() ? base : base + std::to_string(i / kNouns.size());
}

std::string synth_adjective(size_t j) {
    std::string base = kAdjectives[j % kAdjectives.size()];
    return j < kAdjectives.size() ? base : base + std::to_string(j / kAdjectives.size());
}

std::string wire_response(const std::string& adjective, const std::string& noun,
                          const std::string& caption) {
    std::ostringstream ss;
    ss << "SCENE: a " << noun << " scene\n"
       << "OBJECTS: " << noun << "\n"
       << "EXPRESSIONS:\n"
       << "ACTIONS: looking " << adjective << "\n"
       << "RELATIONS: the " << noun << " dominates the frame\n"
       << "SCENE_INTERACTION: the " << noun << " blends with its surroundings\n"
       << "CAPTION: " << caption << "\n";
    return ss.str();
}

}  // namespace

SynthOutput synth_dataset(const SynthSpec& spec, uint64_t seed) {
    if (spec.nouns == 0 || spec.adjectives_per_noun == 0 || spec.images_per_anp == 0 ||
        spec.classes == 0 || spec.feature_dim == 0)
        throw DataError("synth_dataset: all counts must be positive");

    SynthOutput out;
    out.taxonomy = core::EmotionTaxonomy::by_name(spec.taxonomy);
    if (spec.classes > out.taxonomy.classes.size())
        throw DataError("synth_dataset: more classes than the taxonomy provides");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double noise_scale = std::max(0.0, 1.0 - spec.separability);

    out.chat_fixture = json{{"rules", json::array()}, {"default", json::array()}};
    out.ocr_fixture = json{{"images", json::object()}};

    size_t anp_index = 0;
    size_t image_index = 0;
    for (size_t ni = 0; ni < spec.nouns; ++ni) {
        const std::string noun = synth_noun(ni);
        for (size_t ai = 0; ai < spec.adjectives_per_noun; ++ai, ++anp_index) {
            const std::string adjective = synth_adjective(ai);
            const size_t cls = anp_index % spec.classes;
            const std::string& cls_name = out.taxonomy.classes[cls];

            // planted unit center per ANP
            std::vector<double> center(spec.feature_dim);
            double norm = 0;
            for (double& x : center) {
                x = gauss(rng);
                norm += x * x;
            }
            norm = std::sqrt(norm);
            for (double& x : center) x /= norm;

            for (size_t k = 0; k < spec.images_per_anp; ++k, ++image_index) {
                char idbuf[16];
                std::snprintf(idbuf, sizeof idbuf, "img_%04zu", image_index);
                core::ImageRecord r;
                r.id = idbuf;
                r.anp_label = core::ANPLabel{adjective, noun};
                r.emotion_label = static_cast<int>(cls);
                r.features.resize(spec.feature_dim);
                for (size_t d = 0; d < spec.feature_dim; ++d)
                    r.features[d] = center[d] + noise_scale * gauss(rng);
                const std::string caption = "A " + adjective + " " + noun +
                                            " scene that feels " + cls_name + ".";
                r.caption = caption;
                out.records.push_back(r);

                out.chat_fixture["rules"].push_back(
                    {{"match", "IMAGE: " + r.id},
                     {"responses", {wire_response(adjective, noun, caption)}}});
            }
        }
    }

    for (size_t t = 0; t < spec.text_images; ++t, ++image_index) {
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "txt_%04zu", image_index);
        const size_t cls = t % spec.classes;
        const std::string& cls_name = out.taxonomy.classes[cls];
        core::ImageRecord r;
        r.id = idbuf;
        r.emotion_label = static_cast<int>(cls);
        r.embedded_text = "feeling truly " + cls_name + " today";
        r.features.resize(spec.feature_dim);
        for (size_t d = 0; d < spec.feature_dim; ++d) r.features[d] = gauss(rng);
        out.records.push_back(r);

        out.ocr_fixture["images"][r.id] =
            json::array({{{"text", *r.embedded_text}, {"confidence", 0.95}}});
        out.chat_fixture["rules"].push_back(
            {{"match", "Text: \"" + *r.embedded_text + "\""}, {"responses", {cls_name}}});
    }

    return out;
}

void write_synth(const SynthOutput& out, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const auto base = std::filesystem::path(dir);
    core::save_jsonl(out.records, (base / "data.jsonl").string());
    std::ofstream chat(base / "chat_fixture.json");
    chat << out.chat_fixture.dump(2) << "\n";
    std::ofstream ocr(base / "ocr_fixture.json");
    ocr << out.ocr_fixture.dump(2) << "\n";
    std::ofstream tax(base / "taxonomy.json");
    tax << json{{"name", out.taxonomy.name}, {"classes", out.taxonomy.classes}}.dump(2)
        << "\n";
}

}  // namespace aciec::harness
