#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "aciec/captioning.hpp"
#include "aciec/core.hpp"

namespace aciec::routing {

struct OcrResult {
    std::string text;
    double mean_confidence = 0.0;
    size_t region_count = 0;
};

enum class Route { TextPath, VisualPath };

struct RouteDecision {
    Route route = Route::VisualPath;
    std::string reason;
};

class OcrClient {
  public:
    virtual ~OcrClient() = default;
    // Recognized regions in reading order, with per-region confidence.
    virtual std::vector<std::pair<std::string, double>> recognize(
        const core::ImageRecord& record) = 0;
};

// Fixture-driven OCR: maps record id -> regions. Unknown ids yield no text.
class MockOcrClient : public OcrClient {
  public:
    std::vector<std::pair<std::string, double>> recognize(
        const core::ImageRecord& record) override;

    void set_regions(const std::string& record_id,
                     std::vector<std::pair<std::string, double>> regions);
    void load_fixture(const std::string& path);

  private:
    std::map<std::string, std::vector<std::pair<std::string, double>>> table_;
};

struct OcrConfig {
    std::string kind = "mock";  // only "mock" is built in
    std::string fixture;
};

std::unique_ptr<OcrClient> make_ocr_client(const OcrConfig& cfg);

OcrResult detect_embedded_text(const core::ImageRecord& record, OcrClient& ocr);

// TEXT_PATH iff non-whitespace character count >= min_chars and mean
// confidence >= min_confidence.
RouteDecision decide_route(const OcrResult& ocr, size_t min_chars, double min_confidence);

std::string zero_shot_emotion_prompt(const std::string& text,
                                     const core::EmotionTaxonomy& taxonomy);

// Class index of the chat reply; throws on a reply matching no class.
int zero_shot_text_emotion(captioning::ChatClient& client, const std::string& text,
                           const core::EmotionTaxonomy& taxonomy);

}  // namespace aciec::routing
