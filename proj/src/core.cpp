#include "aciec/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace aciec::core {

ANPLabel parse_anp(const std::string& text) {
    auto pos = text.find(' ');
    if (pos == std::string::npos || pos == 0 || pos + 1 >= text.size())
        throw DataError("malformed ANP text: '" + text + "'");
    ANPLabel label{text.substr(0, pos), text.substr(pos + 1)};
    if (label.noun.find(' ') != std::string::npos)
        throw DataError("malformed ANP text: '" + text + "'");
    return label;
}

std::set<ANPLabel> LabelHierarchy::flatten() const {
    std::set<ANPLabel> out;
    for (const auto& [noun, anps] : groups) out.insert(anps.begin(), anps.end());
    return out;
}

std::vector<ANPLabel> LabelHierarchy::class_list() const {
    auto flat = flatten();
    return {flat.begin(), flat.end()};
}

LabelHierarchy build_hierarchy(const std::set<ANPLabel>& labels) {
    if (labels.empty()) throw DataError("empty hierarchy");
    LabelHierarchy h;
    for (const auto& label : labels) {
        if (label.adjective.empty() || label.noun.empty())
            throw DataError("ANP label with empty field");
        h.groups[label.noun].insert(label);
    }
    return h;
}

int EmotionTaxonomy::index_of(const std::string& cls) const {
    auto it = std::find(classes.begin(), classes.end(), cls);
    return it == classes.end() ? -1 : static_cast<int>(it - classes.begin());
}

EmotionTaxonomy EmotionTaxonomy::fi8() {
    return {"fi8", {"amusement", "anger", "awe", "contentment",
                    "disgust", "excitement", "fear", "sadness"}};
}

EmotionTaxonomy EmotionTaxonomy::emotion_roi6() {
    return {"emotion_roi6", {"surprise", "joy", "disgust", "fear", "sadness", "anger"}};
}

EmotionTaxonomy EmotionTaxonomy::binary() {
    return {"binary", {"positive", "negative"}};
}

EmotionTaxonomy EmotionTaxonomy::by_name(const std::string& name) {
    if (name == "fi8") return fi8();
    if (name == "emotion_roi6") return emotion_roi6();
    if (name == "binary") return binary();
    throw DataError("unknown taxonomy: " + name);
}

DatasetSplit split_dataset(const std::vector<ImageRecord>& records,
                           double train_ratio, double val_ratio, double test_ratio,
                           uint64_t seed) {
    if (records.empty()) throw DataError("split_dataset: empty record list");
    if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0)
        throw DataError("split_dataset: negative ratio");
    double sum = train_ratio + val_ratio + test_ratio;
    if (std::abs(sum - 1.0) > 1e-9)
        throw DataError("split_dataset: ratios sum to " + std::to_string(sum));

    std::vector<std::string> ids;
    ids.reserve(records.size());
    for (const auto& r : records) ids.push_back(r.id);
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);

    const size_t n = ids.size();
    const size_t n_train = static_cast<size_t>(std::floor(n * train_ratio));
    const size_t n_val = static_cast<size_t>(std::floor(n * val_ratio));

    DatasetSplit split;
    split.train.assign(ids.begin(), ids.begin() + n_train);
    split.validation.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    split.test.assign(ids.begin() + n_train + n_val, ids.end());
    return split;
}

Image load_pixels(const ImageRecord& record) {
    cv::Mat mat = cv::imread(record.path, cv::IMREAD_UNCHANGED);
    if (mat.empty())
        throw DataError("cannot decode pixel source for record '" + record.id +
                        "' at '" + record.path + "'");
    if (mat.depth() != CV_8U) mat.convertTo(mat, CV_8U);
    Image img;
    img.width = mat.cols;
    img.height = mat.rows;
    img.channels = mat.channels();
    img.data.assign(mat.data, mat.data + mat.total() * mat.channels());
    return img;
}

static cv::Mat to_mat(const Image& img) {
    cv::Mat mat(img.height, img.width, CV_8UC(img.channels));
    std::copy(img.data.begin(), img.data.end(), mat.data);
    return mat;
}

Image preprocess_image(const Image& pixels, bool augment, std::mt19937_64& rng) {
    if (pixels.width <= 0 || pixels.height <= 0 || pixels.data.empty())
        throw DataError("preprocess_image: empty pixel buffer");
    cv::Mat mat = to_mat(pixels);

    if (augment && pixels.width != pixels.height) {
        std::bernoulli_distribution coin(0.5);
        if (pixels.width > pixels.height) {
            int keep = pixels.width - pixels.width / 10;
            int x0 = coin(rng) ? pixels.width - keep : 0;
            mat = mat(cv::Rect(x0, 0, keep, pixels.height)).clone();
        } else {
            int keep = pixels.height - pixels.height / 10;
            int y0 = coin(rng) ? pixels.height - keep : 0;
            mat = mat(cv::Rect(0, y0, pixels.width, keep)).clone();
        }
    }

    cv::Mat resized;
    cv::resize(mat, resized, cv::Size(224, 224), 0, 0, cv::INTER_AREA);

    Image out;
    out.width = 224;
    out.height = 224;
    out.channels = pixels.channels;
    out.data.assign(resized.data, resized.data + resized.total() * resized.channels());
    return out;
}

Image preprocess_image(const ImageRecord& record, bool augment, std::mt19937_64& rng) {
    return preprocess_image(load_pixels(record), augment, rng);
}

static json record_to_json(const ImageRecord& r) {
    json j;
    j["id"] = r.id;
    j["path"] = r.path;
    if (r.anp_label)
        j["anp"] = {{"adj", r.anp_label->adjective}, {"noun", r.anp_label->noun}};
    else
        j["anp"] = nullptr;
    j["emotion"] = r.emotion_label ? json(*r.emotion_label) : json(nullptr);
    j["embedded_text"] = r.embedded_text ? json(*r.embedded_text) : json(nullptr);
    if (!r.features.empty()) j["features"] = r.features;
    if (r.caption) j["caption"] = *r.caption;
    return j;
}

static ImageRecord record_from_json(const json& j) {
    ImageRecord r;
    r.id = j.at("id").get<std::string>();
    r.path = j.value("path", std::string());
    if (j.contains("anp") && !j["anp"].is_null())
        r.anp_label = ANPLabel{j["anp"].at("adj").get<std::string>(),
                               j["anp"].at("noun").get<std::string>()};
    if (j.contains("emotion") && !j["emotion"].is_null())
        r.emotion_label = j["emotion"].get<int>();
    if (j.contains("embedded_text") && !j["embedded_text"].is_null())
        r.embedded_text = j["embedded_text"].get<std::string>();
    if (j.contains("features") && !j["features"].is_null())
        r.features = j["features"].get<std::vector<double>>();
    if (j.contains("caption") && !j["caption"].is_null())
        r.caption = j["caption"].get<std::string>();
    return r;
}

std::vector<ImageRecord> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset: " + path);
    std::vector<ImageRecord> records;
    std::set<std::string> seen;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        auto r = record_from_json(j);
        if (!seen.insert(r.id).second)
            throw DataError("duplicate record id '" + r.id + "' in " + path);
        records.push_back(std::move(r));
    }
    return records;
}

void save_jsonl(const std::vector<ImageRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset: " + path);
    for (const auto& r : records) out << record_to_json(r).dump() << "\n";
}

DatasetSplit load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split file: " + path);
    json j = json::parse(in);
    DatasetSplit s;
    s.train = j.at("train").get<std::vector<std::string>>();
    s.validation = j.at("validation").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
}

void save_split(const DatasetSplit& split, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write split file: " + path);
    json j{{"train", split.train}, {"validation", split.validation}, {"test", split.test}};
    out << j.dump(2) << "\n";
}

EmotionTaxonomy load_taxonomy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open taxonomy: " + path);
    json j = json::parse(in);
    EmotionTaxonomy t;
    t.name = j.at("name").get<std::string>();
    t.classes = j.at("classes").get<std::vector<std::string>>();
    if (t.classes.empty()) throw DataError("taxonomy with no classes: " + path);
    std::set<std::string> uniq(t.classes.begin(), t.classes.end());
    if (uniq.size() != t.classes.size())
        throw DataError("taxonomy with duplicate classes: " + path);
    return t;
}

}  // namespace aciec::core
