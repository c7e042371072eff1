#include "aciec/routing.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace aciec::routing {

std::vector<std::pair<std::string, double>> MockOcrClient::recognize(
    const core::ImageRecord& record) {
    if (auto it = table_.find(record.id); it != table_.end()) return it->second;
    return {};
}

void MockOcrClient::set_regions(const std::string& record_id,
                                std::vector<std::pair<std::string, double>> regions) {
    table_[record_id] = std::move(regions);
}

// Fixture: {"images": {id: [{"text": str, "confidence": num}]}}
void MockOcrClient::load_fixture(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open OCR fixture: " + path);
    json j = json::parse(in);
    for (auto& [id, regions] : j.at("images").items()) {
        std::vector<std::pair<std::string, double>> parsed;
        for (const auto& r : regions)
            parsed.emplace_back(r.at("text").get<std::string>(),
                                r.at("confidence").get<double>());
        table_[id] = std::move(parsed);
    }
}

std::unique_ptr<OcrClient> make_ocr_client(const OcrConfig& cfg) {
    if (cfg.kind == "mock") {
        auto client = std::make_unique<MockOcrClient>();
        if (!cfg.fixture.empty()) client->load_fixture(cfg.fixture);
        return client;
    }
    throw UsageError("unknown OCR client kind: " + cfg.kind);
}

OcrResult detect_embedded_text(const core::ImageRecord& record, OcrClient& ocr) {
    std::vector<std::pair<std::string, double>> regions;
    try {
        regions = ocr.recognize(record);
    } catch (const std::exception& e) {
        throw ClientError("OCR failed on record '" + record.id + "': " + e.what());
    }
    OcrResult result;
    result.region_count = regions.size();
    double conf_sum = 0.0;
    for (const auto& [text, conf] : regions) {
        if (!result.text.empty()) result.text += " ";
        result.text += text;
        conf_sum += conf;
    }
    result.mean_confidence =
        regions.empty() ? 0.0 : conf_sum / static_cast<double>(regions.size());
    return result;
}

RouteDecision decide_route(const OcrResult& ocr, size_t min_chars, double min_confidence) {
    if (min_chars < 1) throw DataError("decide_route: min_chars must be >= 1");
    if (min_confidence < 0 || min_confidence > 1)
        throw DataError("decide_route: min_confidence out of [0, 1]");

    size_t chars = static_cast<size_t>(std::count_if(
        ocr.text.begin(), ocr.text.end(),
        [](unsigned char c) { return !std::isspace(c); }));

    RouteDecision d;
    if (chars >= min_chars && ocr.mean_confidence >= min_confidence) {
        d.route = Route::TextPath;
        d.reason = "embedded text: " + std::to_string(chars) + " chars at confidence " +
                   std::to_string(ocr.mean_confidence);
    } else {
        d.route = Route::VisualPath;
        d.reason = chars < min_chars
                       ? "too little text (" + std::to_string(chars) + " < " +
                             std::to_string(min_chars) + " chars)"
                       : "OCR confidence " + std::to_string(ocr.mean_confidence) +
                             " below " + std::to_string(min_confidence);
    }
    return d;
}

std::string zero_shot_emotion_prompt(const std::string& text,
                                     const core::EmotionTaxonomy& taxonomy) {
    std::string prompt =
        "The following text was extracted from an image. Which emotion does it convey? "
        "Answer with exactly one of: ";
    for (size_t i = 0; i < taxonomy.classes.size(); ++i)
        prompt += (i ? ", " : "") + taxonomy.classes[i];
    prompt += ".\nText: \"" + text + "\"";
    return prompt;
}

int zero_shot_text_emotion(captioning::ChatClient& client, const std::string& text,
                           const core::EmotionTaxonomy& taxonomy) {
    if (text.empty()) throw DataError("zero_shot_text_emotion: empty text");
    std::string reply = client.generate(zero_shot_emotion_prompt(text, taxonomy), 0);

    std::string norm;
    for (char c : reply)
        norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    size_t a = norm.find_first_not_of(" \t\r\n.");
    size_t b = norm.find_last_not_of(" \t\r\n.");
    norm = a == std::string::npos ? "" : norm.substr(a, b - a + 1);

    int idx = taxonomy.index_of(norm);
    if (idx < 0)
        throw ClientError("unparseable emotion reply: '" + reply + "'");
    return idx;
}

}  // namespace aciec::routing
