#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "aciec/harness.hpp"

using nlohmann::json;
using namespace aciec;

namespace {

harness::PipelineConfig load_config_opt(const std::string& path) {
    return path.empty() ? harness::PipelineConfig{} : harness::load_config(path);
}

std::map<std::string, core::ImageRecord> index_by_id(
    const std::vector<core::ImageRecord>& records) {
    std::map<std::string, core::ImageRecord> m;
    for (const auto& r : records) m[r.id] = r;
    return m;
}

std::vector<core::ImageRecord> select_ids(const std::vector<core::ImageRecord>& records,
                                          const std::vector<std::string>& ids) {
    auto by_id = index_by_id(records);
    std::vector<core::ImageRecord> out;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("split references unknown id '" + id + "'");
        out.push_back(it->second);
    }
    return out;
}

// Visual-path training records: labeled, caption-bearing, not text-embedded.
std::vector<core::ImageRecord> visual_training_records(
    const std::vector<core::ImageRecord>& records) {
    std::vector<core::ImageRecord> out;
    for (const auto& r : records)
        if (r.anp_label && !r.embedded_text) out.push_back(r);
    return out;
}

core::ImageRecord resolve_record(const std::string& image, const std::string& record_id,
                                 const std::string& data_path) {
    if (!record_id.empty()) {
        if (data_path.empty())
            throw UsageError("--record requires --data <jsonl>");
        auto records = core::load_jsonl(data_path);
        auto by_id = index_by_id(records);
        auto it = by_id.find(record_id);
        if (it == by_id.end()) throw DataError("unknown record id '" + record_id + "'");
        return it->second;
    }
    if (image.empty()) throw UsageError("need --image <path> or --record <id>");
    core::ImageRecord r;
    r.id = image;
    r.path = image;
    return r;
}

std::vector<classifier::ClassifierExample> make_examples(
    const std::vector<core::ImageRecord>& records, const anp::DetectorModel& detector,
    int k_concepts) {
    std::vector<classifier::ClassifierExample> out;
    for (const auto& r : records) {
        if (!r.emotion_label)
            throw DataError("record '" + r.id + "' has no emotion label");
        if (!r.caption)
            throw DataError("record '" + r.id + "' has no caption");
        classifier::ClassifierExample ex;
        ex.id = r.id;
        ex.prediction =
            anp::predict_topk_anps(detector, r, static_cast<size_t>(k_concepts));
        ex.caption = *r.caption;
        ex.emotion_class = *r.emotion_label;
        out.push_back(std::move(ex));
    }
    return out;
}

void write_or_print(const std::string& out_path, const std::string& text) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write: " + out_path);
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ACIEC image emotion classification pipeline"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_path, ckpt_path, image_path, record_id;
    uint64_t seed = 0;
    bool seed_set = false;
    app.add_option("--config", config_path, "config file (JSON or TOML)")->each([](auto) {});
    app.add_flag_callback("--version", [] { std::cout << "aciec 1.0\n"; std::exit(0); });

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "RNG seed (overrides config)")
            ->each([&](const std::string&) { seed_set = true; });
    };

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic toy dataset");
    harness::SynthSpec spec;
    synth->add_option("--out", out_path, "output directory")->required();
    synth->add_option("--nouns", spec.nouns);
    synth->add_option("--adjectives", spec.adjectives_per_noun);
    synth->add_option("--images", spec.images_per_anp);
    synth->add_option("--classes", spec.classes);
    synth->add_option("--separability", spec.separability);
    synth->add_option("--feature-dim", spec.feature_dim);
    synth->add_option("--text-images", spec.text_images);
    synth->add_option("--taxonomy", spec.taxonomy);
    add_seed(synth);

    // filter
    auto* filter = app.add_subcommand("filter", "drop records dissimilar to their noun prompt");
    filter->add_option("--data", data_path)->required();
    filter->add_option("--out", out_path, "retained records (jsonl)")->required();
    std::string removed_path;
    double threshold = -2.0;  // sentinel: use config default
    filter->add_option("--removed", removed_path, "removed records (jsonl)");
    filter->add_option("--threshold", threshold);

    // train-detector
    auto* train_det = app.add_subcommand("train-detector", "train the ANP detector");
    train_det->add_option("--data", data_path)->required();
    train_det->add_option("--out", out_path, "checkpoint path")->required();
    add_seed(train_det);

    // predict-anps
    auto* predict = app.add_subcommand("predict-anps", "top-k ANP prediction");
    predict->add_option("--ckpt", ckpt_path)->required();
    predict->add_option("--image", image_path);
    predict->add_option("--record", record_id);
    predict->add_option("--data", data_path);
    int top_k = 2;
    predict->add_option("--k", top_k);

    // caption
    auto* caption = app.add_subcommand("caption", "EA-CoT caption with self-consistency");
    caption->add_option("--image", image_path);
    caption->add_option("--record", record_id);
    caption->add_option("--data", data_path);
    caption->add_option("--out", out_path, "output json (stdout when omitted)");
    int k_chains_opt = 0;  // 0: use config
    caption->add_option("--k", k_chains_opt);

    // route
    auto* route = app.add_subcommand("route", "text-path / visual-path decision");
    route->add_option("--image", image_path);
    route->add_option("--record", record_id);
    route->add_option("--data", data_path);

    // train-classifier
    auto* train_clf = app.add_subcommand("train-classifier", "train the fusion classifier");
    train_clf->add_option("--data", data_path)->required();
    train_clf->add_option("--out", out_path, "checkpoint path")->required();
    std::string detector_ckpt;
    train_clf->add_option("--detector-ckpt", detector_ckpt, "ANP detector checkpoint")
        ->required();
    add_seed(train_clf);

    // classify
    auto* classify_cmd = app.add_subcommand("classify", "classify an (ANP, caption) pair");
    classify_cmd->add_option("--ckpt", ckpt_path)->required();
    std::string anp_text, caption_text;
    classify_cmd->add_option("--anp", anp_text, "e.g. \"cute dog\"")->required();
    classify_cmd->add_option("--caption", caption_text)->required();

    // run
    auto* run = app.add_subcommand("run", "full pipeline on one image");
    run->add_option("--image", image_path);
    run->add_option("--record", record_id);
    run->add_option("--data", data_path);
    run->add_option("--out", out_path, "trace json (stdout when omitted)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate the pipeline on a labeled set");
    eval_cmd->add_option("--data", data_path)->required();
    eval_cmd->add_option("--out", out_path, "report json (stdout when omitted)");

    // export-features
    auto* export_cmd = app.add_subcommand("export-features", "write h_cls vectors as TSV");
    export_cmd->add_option("--data", data_path)->required();
    export_cmd->add_option("--ckpt", ckpt_path, "classifier checkpoint")->required();
    export_cmd->add_option("--out", out_path)->required();

    // let global flags (--config) appear after the verb too
    for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        auto config = load_config_opt(config_path);
        if (seed_set) config.seed = seed;

        if (*synth) {
            auto out = harness::synth_dataset(spec, config.seed);
            harness::write_synth(out, out_path);
            std::cout << "wrote " << out.records.size() << " records to " << out_path << "\n";
        } else if (*filter) {
            auto records = core::load_jsonl(data_path);
            auto client = encoders::make_encoder_client(config.encoder);
            double th = threshold < -1.0 ? config.loss.anp_threshold : threshold;
            // only ANP-labeled records can be scored against a noun prompt;
            // text-path records pass through untouched
            std::vector<core::ImageRecord> labeled;
            for (const auto& r : records)
                if (r.anp_label) labeled.push_back(r);
            auto result = encoders::filter_dataset(labeled, *client, th);
            std::set<std::string> removed_ids;
            for (const auto& r : result.removed) removed_ids.insert(r.id);
            std::vector<core::ImageRecord> retained;
            for (const auto& r : records)
                if (!removed_ids.count(r.id)) retained.push_back(r);
            core::save_jsonl(retained, out_path);
            if (!removed_path.empty()) core::save_jsonl(result.removed, removed_path);
            std::cout << "retained " << retained.size() << ", removed "
                      << result.removed.size() << "\n";
        } else if (*train_det) {
            auto records = visual_training_records(core::load_jsonl(data_path));
            if (records.empty()) throw DataError("no labeled visual records in " + data_path);
            std::set<core::ANPLabel> labels;
            for (const auto& r : records) labels.insert(*r.anp_label);
            auto hierarchy = core::build_hierarchy(labels);
            auto split = core::split_dataset(records, 0.80, 0.05, 0.15, config.seed);
            anp::DetectorTrainConfig tc;
            tc.loss = config.loss;
            tc.epochs = config.epochs;
            tc.batch_size = config.batch_size;
            tc.learning_rate = config.learning_rate;
            tc.hidden_dim = config.hidden_dim;
            tc.embed_dim = config.embed_dim;
            tc.seed = config.seed;
            auto trained = anp::train_detector(select_ids(records, split.train),
                                               select_ids(records, split.validation),
                                               hierarchy, tc);
            anp::save_detector(trained, out_path);
            std::cout << "trained detector over " << trained.model.classes.size()
                      << " ANP classes; checkpoint: " << out_path << "\n";
        } else if (*predict) {
            auto detector = anp::load_detector(ckpt_path);
            auto record = resolve_record(image_path, record_id, data_path);
            auto pred = anp::predict_topk_anps(detector.model, record,
                                               static_cast<size_t>(top_k));
            for (const auto& [anp, p] : pred.ranked)
                std::printf("%-30s %.6f\n", anp.text().c_str(), p);
        } else if (*caption) {
            auto record = resolve_record(image_path, record_id, data_path);
            auto taxonomy = config.taxonomy_file.empty()
                                ? core::EmotionTaxonomy::by_name(config.taxonomy)
                                : core::load_taxonomy(config.taxonomy_file);
            auto chat = captioning::make_chat_client(config.chat);
            int k = k_chains_opt > 0 ? k_chains_opt : config.loss.k_chains;
            std::string prompt =
                captioning::build_eacot_prompt(taxonomy) + "\nIMAGE: " + record.id;
            auto chains = captioning::generate_chains(*chat, prompt, k);
            auto result = captioning::aggregate_self_consistency(
                chains, captioning::exact_match_similarity,
                config.caption_merge_threshold);
            json j{{"caption", result.text},
                   {"votes", result.source_chain_indices},
                   {"k", k}};
            write_or_print(out_path, j.dump(2) + "\n");
        } else if (*route) {
            auto record = resolve_record(image_path, record_id, data_path);
            auto ocr = routing::make_ocr_client(config.ocr);
            auto result = routing::detect_embedded_text(record, *ocr);
            auto decision = routing::decide_route(result, config.route.min_chars,
                                                  config.route.min_confidence);
            if (decision.route == routing::Route::TextPath) {
                auto taxonomy = core::EmotionTaxonomy::by_name(config.taxonomy);
                auto chat = captioning::make_chat_client(config.chat);
                int cls = routing::zero_shot_text_emotion(*chat, result.text, taxonomy);
                std::cout << "TEXT_PATH (" << decision.reason << ") -> "
                          << taxonomy.classes[cls] << "\n";
            } else {
                std::cout << "VISUAL_PATH (" << decision.reason << ")\n";
            }
        } else if (*train_clf) {
            auto all = core::load_jsonl(data_path);
            auto records = visual_training_records(all);
            if (records.empty()) throw DataError("no labeled visual records in " + data_path);
            auto detector = anp::load_detector(detector_ckpt);
            auto taxonomy = config.taxonomy_file.empty()
                                ? core::EmotionTaxonomy::by_name(config.taxonomy)
                                : core::load_taxonomy(config.taxonomy_file);
            auto split = core::split_dataset(records, 0.80, 0.05, 0.15, config.seed);
            classifier::ClassifierTrainConfig tc;
            tc.loss = config.loss;
            tc.epochs = config.epochs;
            tc.batch_size = config.batch_size;
            tc.learning_rate = config.learning_rate;
            tc.vocab = config.vocab;
            tc.token_dim = config.token_dim;
            tc.hidden_dim = config.hidden_dim;
            tc.n_negatives = config.n_negatives;
            tc.sampling = config.sampling;
            tc.seed = config.seed;
            auto trained = classifier::train_classifier(
                make_examples(select_ids(records, split.train), detector.model,
                              config.loss.k_concepts),
                make_examples(select_ids(records, split.validation), detector.model,
                              config.loss.k_concepts),
                taxonomy, tc);
            classifier::save_classifier(trained, out_path);
            double last_acc = trained.log.empty() ? 0.0 : trained.log.back().val_accuracy;
            std::cout << "trained classifier; final val accuracy " << last_acc
                      << "; checkpoint: " << out_path << "\n";
        } else if (*classify_cmd) {
            auto clf = classifier::load_classifier(ckpt_path);
            auto probs = classifier::classify(clf.model, core::parse_anp(anp_text),
                                              caption_text);
            for (size_t i = 0; i < probs.size(); ++i)
                std::printf("%-14s %.6f\n", clf.model.taxonomy.classes[i].c_str(),
                            probs[i]);
        } else if (*run) {
            auto record = resolve_record(image_path, record_id, data_path);
            auto ctx = harness::load_pipeline(config);
            auto trace = harness::run_pipeline(record, ctx);
            json j = trace.to_json();
            j["record"] = record.id;
            if (trace.predicted_class >= 0)
                j["predicted_label"] = ctx.taxonomy.classes[trace.predicted_class];
            write_or_print(out_path, j.dump(2) + "\n");
        } else if (*eval_cmd) {
            auto records = core::load_jsonl(data_path);
            auto ctx = harness::load_pipeline(config);
            auto report = harness::evaluate(records, ctx);
            write_or_print(out_path, report.to_json().dump(2) + "\n");
        } else if (*export_cmd) {
            auto all = core::load_jsonl(data_path);
            std::vector<core::ImageRecord> records;
            for (const auto& r : all)
                if (r.anp_label && r.caption) records.push_back(r);
            if (records.empty())
                throw DataError("no records with both an ANP label and a caption in " +
                                data_path);
            auto clf = classifier::load_classifier(ckpt_path);
            harness::export_features(records, clf.model, out_path);
            std::cout << "wrote " << records.size() << " feature rows to " << out_path
                      << " (skipped " << all.size() - records.size() << ")\n";
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const ClientError& e) {
        std::cerr << "client/stage error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
